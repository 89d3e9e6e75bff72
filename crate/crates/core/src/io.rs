//! CSV tables with `name [unit]` headers and 17-significant-digit numbers.
//!
//! Lines starting with `#` carry `key=value` metadata. Writing then reading a
//! table reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::{BufReader, Read, Write};

use crate::analysis::{AllanResult, PsdResult};
use crate::bloch::SpectrumScan;
use crate::error::{Error, Result};
use crate::trace::FrequencyTrace;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

impl Column {
    pub fn new(name: &str, unit: &str) -> Self {
        Self { name: name.into(), unit: unit.into() }
    }

    fn header(&self) -> String {
        format!("{} [{}]", self.name, self.unit)
    }

    fn parse(header: &str) -> Result<Self> {
        let h = header.trim();
        match (h.rfind('['), h.ends_with(']')) {
            (Some(open), true) => Ok(Self::new(h[..open].trim(), &h[open + 1..h.len() - 1])),
            _ => Err(Error::Parse(format!("column header {h:?} lacks a [unit]"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub metadata: BTreeMap<String, String>,
    pub columns: Vec<Column>,
    /// Column-major values.
    pub values: Vec<Vec<f64>>,
}

/// 17 significant digits, enough to round-trip any f64.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

impl Table {
    pub fn new(columns: Vec<Column>, values: Vec<Vec<f64>>) -> Result<Self> {
        if columns.len() != values.len() {
            return Err(Error::Domain("one value vector is needed per column".into()));
        }
        if let Some(n) = values.first().map(Vec::len) {
            if values.iter().any(|v| v.len() != n) {
                return Err(Error::Domain("columns differ in length".into()));
            }
        }
        Ok(Self { metadata: BTreeMap::new(), columns, values })
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.into(), value.to_string());
        self
    }

    pub fn rows(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .map(|k| self.values[k].as_slice())
            .ok_or_else(|| Error::Parse(format!("no column named {name:?}")))
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}={v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(self.columns.iter().map(Column::header)).map_err(csv_err)?;
        for r in 0..self.rows() {
            w.write_record(self.values.iter().map(|c| format_number(c[r]))).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(buf)
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut text = String::new();
        BufReader::new(input).read_to_string(&mut text)?;
        let mut metadata = BTreeMap::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim();
            if let Some((k, v)) = body.split_once('=') {
                metadata.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let columns = reader
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .iter()
            .map(Column::parse)
            .collect::<Result<Vec<_>>>()?;
        if columns.is_empty() {
            return Err(Error::Parse("table has no columns".into()));
        }
        let mut values = vec![Vec::new(); columns.len()];
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            if record.len() != columns.len() {
                return Err(Error::Parse(format!("row {} has {} fields, expected {}", line + 1, record.len(), columns.len())));
            }
            for (k, field) in record.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: {field:?} is not a number", line + 1)))?;
                values[k].push(v);
            }
        }
        Ok(Self { metadata, columns, values })
    }
}

/// Traces sharing one sample interval, preceded by a time column.
pub fn traces_to_table(traces: &[&FrequencyTrace]) -> Result<Table> {
    let first = traces.first().ok_or_else(|| Error::Domain("no traces to tabulate".into()))?;
    let dt = first.sample_interval;
    if traces.iter().any(|t| t.sample_interval != dt || t.len() != first.len()) {
        return Err(Error::Domain("traces differ in sampling".into()));
    }
    let mut columns = vec![Column::new("time", "s")];
    let mut values = vec![(0..first.len()).map(|k| first.time(k)).collect()];
    for t in traces {
        columns.push(Column::new(&t.label, &t.unit));
        values.push(t.samples.clone());
    }
    let averaged = traces.iter().all(|t| t.averaged_per_sample);
    Ok(Table::new(columns, values)?.with_meta("sample_interval", format_number(dt)).with_meta("averaged_per_sample", averaged))
}

/// Recovers one trace from a table written by [`traces_to_table`], or from a
/// plain table with a uniform `time [s]` column.
pub fn table_to_trace(table: &Table, name: &str) -> Result<FrequencyTrace> {
    let k = table
        .columns
        .iter()
        .position(|c| c.name == name)
        .ok_or_else(|| Error::Parse(format!("no column named {name:?}")))?;
    let time = table.column("time")?;
    let dt = match table.metadata.get("sample_interval") {
        Some(s) => s.parse::<f64>().map_err(|_| Error::Parse(format!("bad sample_interval {s:?}")))?,
        None if time.len() >= 2 => time[1] - time[0],
        None => return Err(Error::Parse("cannot infer the sample interval from fewer than two rows".into())),
    };
    if !(dt > 0.0) {
        return Err(Error::Parse("time column must increase".into()));
    }
    if let Some(j) = time.iter().enumerate().position(|(j, &t)| (t - time[0] - j as f64 * dt).abs() > 1e-6 * dt) {
        return Err(Error::Parse(format!("time column is not uniformly sampled at row {}", j + 1)));
    }
    let mut trace = FrequencyTrace::new(name, &table.columns[k].unit, dt, table.values[k].clone());
    trace.averaged_per_sample = table.metadata.get("averaged_per_sample").is_some_and(|v| v == "true");
    Ok(trace)
}

/// Reads the first non-time column, or `name` when given.
pub fn read_trace<R: Read>(input: R, name: Option<&str>) -> Result<FrequencyTrace> {
    let table = Table::read(input)?;
    let name = match name {
        Some(n) => n.to_string(),
        None => table
            .columns
            .iter()
            .find(|c| c.name != "time")
            .map(|c| c.name.clone())
            .ok_or_else(|| Error::Parse("table has no data column".into()))?,
    };
    let trace = table_to_trace(&table, &name)?;
    trace.validate()?;
    Ok(trace)
}

pub fn allan_to_table(result: &AllanResult) -> Result<Table> {
    Ok(Table::new(
        vec![Column::new("tau", "s"), Column::new("sigma_y_squared", "1"), Column::new("n_pairs", "1")],
        vec![
            result.points.iter().map(|p| p.tau).collect(),
            result.points.iter().map(|p| p.sigma_y_squared).collect(),
            result.points.iter().map(|p| p.n_pairs as f64).collect(),
        ],
    )?
    .with_meta("carrier_frequency", format_number(result.carrier_frequency))
    .with_meta("estimator", format!("{:?}", result.estimator)))
}

pub fn psd_to_table(result: &PsdResult, unit: &str) -> Result<Table> {
    Ok(Table::new(
        vec![Column::new("frequency", "Hz"), Column::new("power", &format!("{unit}^2")), Column::new("level", "dB")],
        vec![result.frequencies.clone(), result.power.clone(), result.level_db.clone()],
    )?
    .with_meta("resolution", format_number(result.resolution))
    .with_meta("segments", result.segments))
}

/// Spectrum with the detuning in Hz (not rad/s).
pub fn spectrum_to_table(scan: &SpectrumScan) -> Result<Table> {
    Ok(Table::new(
        vec![Column::new("detuning_866", "Hz"), Column::new("counts", "counts"), Column::new("model", "counts")],
        vec![scan.detuning_866.iter().map(|d| d / TAU).collect(), scan.counts.clone(), scan.model.clone()],
    )?
    .with_meta("scale", format_number(scan.scale))
    .with_meta("background", format_number(scan.background))
    .with_meta("shot_noise", scan.shot_noise))
}

/// Measured or synthetic spectrum: needs `detuning_866 [Hz]` and `counts`.
pub fn table_to_spectrum(table: &Table) -> Result<SpectrumScan> {
    let det = table.column("detuning_866")?;
    let counts = table.column("counts")?.to_vec();
    if det.is_empty() {
        return Err(Error::Parse("spectrum has no rows".into()));
    }
    if let Some(k) = det.iter().position(|d| !d.is_finite()) {
        return Err(Error::Parse(format!("non-finite detuning at row {}", k + 1)));
    }
    let model = table.column("model").map(<[f64]>::to_vec).unwrap_or_else(|_| counts.clone());
    let meta = |k: &str| table.metadata.get(k).and_then(|v| v.parse::<f64>().ok()).unwrap_or(f64::NAN);
    Ok(SpectrumScan {
        detuning_866: det.iter().map(|d| d * TAU).collect(),
        gaps: counts.iter().enumerate().filter(|(_, c)| c.is_nan()).map(|(k, _)| k).collect(),
        counts,
        model,
        shot_noise: table.metadata.get("shot_noise").is_some_and(|v| v == "true"),
        scale: meta("scale"),
        background: meta("background"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_and_metadata() {
        let t = traces_to_table(&[&FrequencyTrace::new("out_of_loop", "Hz", 1e-5, vec![1.0, -2.5])]).unwrap();
        let text = String::from_utf8(t.to_bytes().unwrap()).unwrap();
        assert!(text.contains("time [s],out_of_loop [Hz]"), "{text}");
        assert!(text.starts_with("# averaged_per_sample=false\n# sample_interval=1.0000000000000001e-5\n"), "{text}");
    }

    #[test]
    fn malformed_input_is_a_parse_error() {
        assert!(matches!(Table::read("a [s]\n1\nx\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(Table::read("a\n1\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(Table::read("a [s],b [Hz]\n1\n".as_bytes()), Err(Error::Parse(_))));
    }

    #[test]
    fn plain_tables_infer_the_interval() {
        let t = Table::read("time [s],x [Hz]\n0,1\n0.5,2\n1.0,3\n".as_bytes()).unwrap();
        let tr = table_to_trace(&t, "x").unwrap();
        assert_eq!(tr.sample_interval, 0.5);
        assert_eq!(tr.samples, vec![1.0, 2.0, 3.0]);
        let bad = Table::read("time [s],x [Hz]\n0,1\n0.5,2\n2.0,3\n".as_bytes()).unwrap();
        assert!(table_to_trace(&bad, "x").is_err());
    }

    proptest! {
        #[test]
        fn traces_round_trip_bit_for_bit(
            samples in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..50),
            dt in 1e-9f64..1e3,
            averaged in any::<bool>(),
        ) {
            let mut trace = FrequencyTrace::new("x", "Hz", dt, samples);
            trace.averaged_per_sample = averaged;
            let table = traces_to_table(&[&trace]).unwrap();
            let back = read_trace(table.to_bytes().unwrap().as_slice(), Some("x")).unwrap();
            prop_assert_eq!(back.sample_interval.to_bits(), dt.to_bits());
            prop_assert_eq!(back.averaged_per_sample, averaged);
            for (a, b) in back.samples.iter().zip(&trace.samples) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
