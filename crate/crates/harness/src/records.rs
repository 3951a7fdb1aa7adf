//! Result rows and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::HarnessError;

pub const CSV_HEADER: [&str; 11] = [
    "suite",
    "seed",
    "realization",
    "snr_db",
    "lambda",
    "esr",
    "probing_power",
    "qos_violations",
    "initial_loss",
    "final_loss",
    "seconds",
];

/// One optimization run at one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRecord {
    pub suite: String,
    pub seed: u64,
    pub realization: usize,
    /// SNR in dB, or transmit power in dBm for surface suites.
    pub snr_db: f64,
    pub lambda: f64,
    /// Sum rate at the buffered iterate, bits/s/Hz.
    pub esr: f64,
    pub probing_power: Option<f64>,
    pub qos_violations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub seconds: f64,
    /// Per-user allocated rates; not part of the CSV.
    pub allocated: Vec<f64>,
}

/// 17 significant digits, enough to round-trip any `f64`.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, s: &str) -> Result<f64, HarnessError> {
    s.parse().map_err(|_| HarnessError::Parse(format!("column {field}: `{s}` is not a number")))
}

pub fn write_records<W: Write>(records: &[ResultRecord], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.suite.clone(),
            r.seed.to_string(),
            r.realization.to_string(),
            fmt_f64(r.snr_db),
            fmt_f64(r.lambda),
            fmt_f64(r.esr),
            r.probing_power.map(fmt_f64).unwrap_or_default(),
            r.qos_violations.to_string(),
            fmt_f64(r.initial_loss),
            fmt_f64(r.final_loss),
            fmt_f64(r.seconds),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::Io { path: "<csv>".into(), source: e })?;
    Ok(())
}

pub fn write_csv(records: &[ResultRecord], path: &Path) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io { path: dir.to_path_buf(), source: e })?;
    }
    let file = std::fs::File::create(path).map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
    write_records(records, std::io::BufWriter::new(file))
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<ResultRecord>, HarnessError> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(HarnessError::Parse(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("");
        let int = |i: usize| {
            get(i).parse::<u64>().map_err(|_| HarnessError::Parse(format!("column {}: `{}`", CSV_HEADER[i], get(i))))
        };
        let float = |i: usize| parse_f64(CSV_HEADER[i], get(i));
        out.push(ResultRecord {
            suite: get(0).to_string(),
            seed: int(1)?,
            realization: int(2)? as usize,
            snr_db: float(3)?,
            lambda: float(4)?,
            esr: float(5)?,
            probing_power: if get(6).is_empty() { None } else { Some(float(6)?) },
            qos_violations: int(7)? as usize,
            initial_loss: float(8)?,
            final_loss: float(9)?,
            seconds: float(10)?,
            allocated: Vec::new(),
        });
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRecord>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
    read_records(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: usize) -> ResultRecord {
        ResultRecord {
            suite: "isac".into(),
            seed: u64::MAX - i as u64,
            realization: i,
            snr_db: 20.0,
            lambda: 1e-5 * (i as f64 + 1.0) / 3.0,
            esr: std::f64::consts::PI * 1e7,
            probing_power: if i % 2 == 0 { Some(0.1 + 0.2) } else { None },
            qos_violations: i,
            initial_loss: -f64::MIN_POSITIVE,
            final_loss: -12.345678901234567,
            seconds: 0.0,
            allocated: Vec::new(),
        }
    }

    #[test]
    fn empty_list_writes_header_only() {
        let mut buf = Vec::new();
        write_records(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), CSV_HEADER.join(",") + "\n");
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let recs: Vec<_> = (0..5).map(record).collect();
        let mut buf = Vec::new();
        write_records(&recs, &mut buf).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back.len(), recs.len());
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a, b);
            assert_eq!(a.final_loss.to_bits(), b.final_loss.to_bits());
            assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
        }
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(read_records("a,b\n1,2\n".as_bytes()).is_err());
    }
}
