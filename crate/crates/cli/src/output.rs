//! Run directories: every file is staged in memory, written under a temporary
//! name and renamed into place; the manifest goes last, so a directory holds
//! a manifest only if the run completed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::{Failure, Outcome};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.json";
/// Relative `--out` paths are resolved against this directory when set.
pub const OUTPUT_ROOT_ENV: &str = "TRANSLOCK_OUTPUT_ROOT";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub arguments: Vec<String>,
    /// SHA-256 of `config.json`, the configuration actually used.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub wall_clock_seconds: f64,
    pub lock_loss: bool,
    pub warnings: Vec<String>,
    pub summary: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    /// Checks that the manifest describes the files next to it.
    pub fn validate(&self, dir: &Path) -> Outcome<()> {
        let bad = |m: String| Err(Failure::runtime(format!("manifest in {}: {m}", dir.display())));
        if self.tool != env!("CARGO_BIN_NAME") {
            return bad(format!("written by {:?}", self.tool));
        }
        if self.outputs.iter().any(|f| f.path == MANIFEST) {
            return bad("lists itself as an output".into());
        }
        for f in &self.outputs {
            let bytes = match fs::read(dir.join(&f.path)) {
                Ok(b) => b,
                Err(e) => return bad(format!("{}: {e}", f.path)),
            };
            if bytes.len() as u64 != f.bytes || sha256_hex(&bytes) != f.sha256 {
                return bad(format!("{} does not match its recorded hash", f.path));
            }
        }
        match self.outputs.iter().find(|f| f.path == CONFIG) {
            Some(c) if c.sha256 == self.config_hash => Ok(()),
            Some(_) => bad("config hash differs from config.json".into()),
            None => bad("config.json is not among the outputs".into()),
        }
    }

    pub fn read(dir: &Path) -> Outcome<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST))
            .map_err(|e| Failure::usage(format!("no readable manifest in {}: {e}", dir.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::runtime(format!("malformed manifest in {}: {e}", dir.display())))
    }
}

pub fn resolve(out: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if out.is_relative() && !root.is_empty() => Path::new(&root).join(out),
        _ => out.to_path_buf(),
    }
}

fn is_plain_relative(path: &str) -> bool {
    !path.is_empty() && Path::new(path).components().all(|c| matches!(c, Component::Normal(_)))
}

/// Files of one run, written together by [`RunDir::commit`].
pub struct RunDir {
    dir: PathBuf,
    force: bool,
    files: BTreeMap<String, Vec<u8>>,
}

impl RunDir {
    /// Refuses up front (before any work is done) when the directory already
    /// holds a run and `force` is off.
    pub fn prepare(out: &Path, force: bool) -> Outcome<Self> {
        let dir = resolve(out);
        if !force && dir.join(MANIFEST).exists() {
            return Err(Failure::usage(format!(
                "{} already holds a run; pass --force to replace it",
                dir.display()
            )));
        }
        if dir.exists() && !dir.is_dir() {
            return Err(Failure::usage(format!("{} is not a directory", dir.display())));
        }
        Ok(Self { dir, force, files: BTreeMap::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        let name = name.into();
        debug_assert!(is_plain_relative(&name) && name != MANIFEST, "bad output name {name}");
        self.files.insert(name, bytes);
    }

    pub fn commit(self, mut manifest: RunManifest) -> Outcome<RunManifest> {
        let existing: Vec<&String> = self.files.keys().filter(|n| self.dir.join(n).exists()).collect();
        if !self.force {
            if self.dir.join(MANIFEST).exists() {
                return Err(Failure::usage(format!("{} already holds a run; pass --force", self.dir.display())));
            }
            if let Some(n) = existing.first() {
                return Err(Failure::usage(format!(
                    "{} exists; pass --force to overwrite",
                    self.dir.join(n).display()
                )));
            }
        }
        let previous = if self.force { RunManifest::read(&self.dir).ok() } else { None };
        fs::create_dir_all(&self.dir)?;
        let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
        let stage = |name: &str, bytes: &[u8], staged: &mut Vec<(PathBuf, PathBuf)>| -> std::io::Result<()> {
            let target = self.dir.join(name);
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent)?;
            }
            let file_name = target.file_name().unwrap_or_default().to_string_lossy();
            let temp = target.with_file_name(format!(".{file_name}.partial-{}", std::process::id()));
            fs::write(&temp, bytes)?;
            staged.push((temp, target));
            Ok(())
        };
        let mut records = Vec::new();
        for (name, bytes) in &self.files {
            if let Err(e) = stage(name, bytes, &mut staged) {
                for (temp, _) in &staged {
                    let _ = fs::remove_file(temp);
                }
                return Err(Failure::runtime(format!("writing {name}: {e}")));
            }
            records.push(FileRecord { path: name.clone(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        }
        // A replaced run loses its manifest before anything else changes.
        if self.force {
            let _ = fs::remove_file(self.dir.join(MANIFEST));
        }
        for (temp, target) in &staged {
            fs::rename(temp, target)?;
        }
        if let Some(old) = previous {
            for f in old.outputs.iter().filter(|f| is_plain_relative(&f.path) && !self.files.contains_key(&f.path)) {
                let _ = fs::remove_file(self.dir.join(&f.path));
            }
        }
        manifest.outputs = records;
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| Failure::runtime(e.to_string()))?;
        bytes.push(b'\n');
        let temp = self.dir.join(format!(".{MANIFEST}.partial-{}", std::process::id()));
        fs::write(&temp, bytes)?;
        fs::rename(&temp, self.dir.join(MANIFEST))?;
        Ok(manifest)
    }
}

/// Writes one standalone file atomically.
pub fn write_file(path: &Path, bytes: &[u8], force: bool) -> Outcome<()> {
    if path.exists() && !force {
        return Err(Failure::usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let file_name = path.file_name().ok_or_else(|| Failure::usage("output path has no file name"))?;
    let temp = path.with_file_name(format!(".{}.partial-{}", file_name.to_string_lossy(), std::process::id()));
    fs::write(&temp, bytes)?;
    fs::rename(&temp, path)?;
    Ok(())
}
