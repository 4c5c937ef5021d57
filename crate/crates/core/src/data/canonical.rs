//! Canonical aligned CSV: `timestamp,aggregate,<appliance…>,valid`.
//!
//! Timestamps are unix seconds; values use the shortest decimal form that
//! round-trips to the same `f64`, so files are bit-exact across runs.

use std::fmt::Write as _;
use std::path::Path;

use super::series::{AlignedHousehold, PowerSeries};
use crate::error::{Error, Result};

pub fn to_canonical_csv(h: &AlignedHousehold) -> String {
    let mut out = String::new();
    out.push_str("timestamp,aggregate");
    for (name, _) in &h.appliances {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",valid\n");
    let agg = &h.aggregate;
    for i in 0..agg.len() {
        let valid = agg.valid[i] && h.appliances.iter().all(|(_, s)| s.valid[i]);
        let _ = write!(out, "{},{}", agg.timestamp(i), agg.values[i]);
        for (_, s) in &h.appliances {
            let _ = write!(out, ",{}", s.values[i]);
        }
        let _ = writeln!(out, ",{}", u8::from(valid));
    }
    out
}

pub fn write_canonical_csv(h: &AlignedHousehold, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, to_canonical_csv(h)).map_err(|e| Error::io(path, e))
}

pub fn read_canonical_csv(path: impl AsRef<Path>) -> Result<AlignedHousehold> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_canonical_csv(&text).map_err(|e| match e {
        Error::Ingest { line, message, .. } => Error::Ingest {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

pub fn parse_canonical_csv(text: &str) -> Result<AlignedHousehold> {
    let err = |line: usize, message: String| Error::Ingest {
        path: Default::default(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 3 || cols[0] != "timestamp" || cols[1] != "aggregate" || cols[cols.len() - 1] != "valid" {
        return Err(err(1, "expected header timestamp,aggregate,<appliances…>,valid".into()));
    }
    let names: Vec<String> = cols[2..cols.len() - 1].iter().map(|s| s.to_string()).collect();
    let mut stamps = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len() + 1];
    let mut valid = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| err(line, e.to_string()))?;
        let t: i64 = rec[0]
            .parse()
            .map_err(|_| err(line, format!("bad timestamp `{}`", &rec[0])))?;
        stamps.push(t);
        for (k, col) in columns.iter_mut().enumerate() {
            let v: f64 = rec[k + 1]
                .parse()
                .map_err(|_| err(line, format!("bad value `{}`", &rec[k + 1])))?;
            col.push(v);
        }
        valid.push(match &rec[rec.len() - 1] {
            "1" => true,
            "0" => false,
            other => return Err(err(line, format!("valid flag must be 0 or 1, got `{other}`"))),
        });
    }
    if stamps.is_empty() {
        return Err(err(2, "file holds no samples".into()));
    }
    let period = if stamps.len() > 1 {
        stamps[1] - stamps[0]
    } else {
        super::series::MINUTE
    };
    if period <= 0 {
        return Err(err(3, "timestamps must increase".into()));
    }
    for (i, w) in stamps.windows(2).enumerate() {
        if w[1] - w[0] != period {
            return Err(err(i + 3, "timestamps are not uniformly spaced".into()));
        }
    }
    let mut columns = columns.into_iter();
    let aggregate = PowerSeries::new(stamps[0], period, columns.next().unwrap(), valid.clone())?;
    let appliances = names
        .into_iter()
        .zip(columns)
        .map(|(n, values)| Ok((n, PowerSeries::new(stamps[0], period, values, valid.clone())?)))
        .collect::<Result<_>>()?;
    Ok(AlignedHousehold { aggregate, appliances })
}

/// One value column of a `timestamp,...` CSV as a series. Empty fields are
/// invalid samples, and a `valid` column (0/1), when present, masks every
/// value column. Without `column`, the first value column is used.
pub fn parse_series_column(text: &str, column: Option<&str>) -> Result<PowerSeries> {
    let err = |line: usize, message: String| Error::Ingest {
        path: Default::default(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if header.get(0) != Some("timestamp") {
        return Err(err(1, "first column must be `timestamp`".into()));
    }
    let valid_col = header.iter().position(|h| h == "valid");
    let col = match column {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .filter(|&i| i > 0)
            .ok_or_else(|| err(1, format!("no column `{name}`")))?,
        None => (1..header.len())
            .find(|&i| Some(i) != valid_col)
            .ok_or_else(|| err(1, "no value column".into()))?,
    };
    let (mut stamps, mut values, mut valid) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| err(line, e.to_string()))?;
        let t: i64 = rec[0]
            .parse()
            .map_err(|_| err(line, format!("bad timestamp `{}`", &rec[0])))?;
        let field = rec[col].trim();
        let (v, ok) = if field.is_empty() {
            (0.0, false)
        } else {
            let v: f64 = field.parse().map_err(|_| err(line, format!("bad value `{field}`")))?;
            (v, v.is_finite())
        };
        let mask = match valid_col.map(|c| &rec[c]) {
            None | Some("1") => true,
            Some("0") => false,
            Some(other) => return Err(err(line, format!("valid flag must be 0 or 1, got `{other}`"))),
        };
        stamps.push(t);
        values.push(if ok && mask { v } else { 0.0 });
        valid.push(ok && mask);
    }
    if stamps.is_empty() {
        return Err(err(2, "file holds no samples".into()));
    }
    let period = if stamps.len() > 1 {
        stamps[1] - stamps[0]
    } else {
        super::series::MINUTE
    };
    if period <= 0 || stamps.windows(2).any(|w| w[1] - w[0] != period) {
        return Err(err(2, "timestamps are not uniformly increasing".into()));
    }
    PowerSeries::new(stamps[0], period, values, valid)
}

pub fn read_series_column(path: impl AsRef<Path>, column: Option<&str>) -> Result<PowerSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_series_column(&text, column).map_err(|e| match e {
        Error::Ingest { line, message, .. } => Error::Ingest {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}
