//! Simulation and analysis of a cascaded transfer-cavity laser lock, with an
//! eight-level Bloch model of the 40Ca+ excitation spectrum used to check it.

pub mod analysis;
pub mod chainsim;
pub mod angular;
pub mod bloch;
pub mod constants;
pub mod discriminator;
pub mod error;
pub mod fit;
pub mod io;
pub mod noise;
pub mod optics;
pub mod servo;
pub mod trace;

pub use error::{Error, Result};
