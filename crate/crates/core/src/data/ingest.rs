//! Meter-file parsing and one-minute resampling.
//!
//! Two layouts are understood: REFIT-style CSV (`Time,Unix,Aggregate,
//! Appliance1..ApplianceK[,Issues]`) and channel-per-file text with
//! whitespace-separated `unix_seconds watts` lines as used by UK-DALE and
//! REDD.

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::series::{align, AlignedHousehold, PowerSeries, MINUTE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeterFormat {
    RefitCsv,
    ChannelDat,
}

/// Readings of one channel, sorted by timestamp with unique timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct RawChannel {
    pub name: String,
    pub readings: Vec<(i64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedMeter {
    pub channels: Vec<RawChannel>,
    pub malformed: usize,
    pub warnings: Vec<String>,
}

/// Warnings recorded per file before further malformed lines are only counted.
const MAX_WARNINGS: usize = 20;

pub fn parse_meter_file(path: impl AsRef<Path>, format: MeterFormat) -> Result<ParsedMeter> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "channel".into());
    parse_meter_str(&text, format, &name).map_err(|e| match e {
        Error::Ingest { line, message, .. } => Error::Ingest {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

/// Parses file contents; `channel_name` names the single channel of a
/// channel-per-file input.
pub fn parse_meter_str(text: &str, format: MeterFormat, channel_name: &str) -> Result<ParsedMeter> {
    let mut parsed = match format {
        MeterFormat::RefitCsv => parse_refit(text)?,
        MeterFormat::ChannelDat => parse_channel(text, channel_name),
    };
    if parsed.channels.iter().all(|c| c.readings.is_empty()) {
        let msg = "input holds no readings".to_string();
        warn!("{msg}");
        parsed.warnings.push(msg);
    }
    for c in &mut parsed.channels {
        sort_and_dedup(&mut c.readings);
    }
    Ok(parsed)
}

/// Sorts by timestamp; for repeated timestamps the last reading in file
/// order wins.
fn sort_and_dedup(readings: &mut Vec<(i64, f64)>) {
    readings.sort_by_key(|r| r.0);
    let mut out: Vec<(i64, f64)> = Vec::with_capacity(readings.len());
    for &(t, v) in readings.iter() {
        match out.last_mut() {
            Some(last) if last.0 == t => last.1 = v,
            _ => out.push((t, v)),
        }
    }
    *readings = out;
}

fn note(parsed: &mut ParsedMeter, line: usize, what: &str) {
    parsed.malformed += 1;
    if parsed.warnings.len() < MAX_WARNINGS {
        parsed.warnings.push(format!("line {line}: {what}"));
    }
}

fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(t) = s.parse::<i64>() {
        return Some(t);
    }
    let f = s.parse::<f64>().ok()?;
    f.is_finite().then(|| f.floor() as i64)
}

fn parse_watts(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_channel(text: &str, name: &str) -> ParsedMeter {
    let mut parsed = ParsedMeter {
        channels: Vec::new(),
        malformed: 0,
        warnings: Vec::new(),
    };
    let mut readings = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(t), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
            note(&mut parsed, i + 1, "expected `unix_seconds watts`");
            continue;
        };
        match (parse_timestamp(t), parse_watts(v)) {
            (Some(t), Some(v)) => readings.push((t, v)),
            _ => note(&mut parsed, i + 1, "unparsable timestamp or value"),
        }
    }
    parsed.channels.push(RawChannel {
        name: name.to_string(),
        readings,
    });
    parsed
}

fn parse_refit(text: &str) -> Result<ParsedMeter> {
    let mut parsed = ParsedMeter {
        channels: Vec::new(),
        malformed: 0,
        warnings: Vec::new(),
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((hline, header)) = lines.next() else {
        return Ok(parsed);
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let bad_header = |msg: String| Error::Ingest {
        path: Default::default(),
        line: hline + 1,
        message: msg,
    };
    if cols.len() < 3 || cols[0] != "Time" || cols[1] != "Unix" || cols[2] != "Aggregate" {
        return Err(bad_header(format!(
            "unknown header `{header}`; expected Time,Unix,Aggregate,Appliance1..."
        )));
    }
    let mut value_cols = vec![2usize];
    let mut names = vec!["aggregate".to_string()];
    for (j, c) in cols.iter().enumerate().skip(3) {
        if *c == "Issues" && j == cols.len() - 1 {
            continue;
        }
        let expected = format!("Appliance{}", j - 2);
        if *c != expected {
            return Err(bad_header(format!("column {} is `{c}`, expected `{expected}`", j + 1)));
        }
        value_cols.push(j);
        names.push(c.to_string());
    }
    let mut readings: Vec<Vec<(i64, f64)>> = vec![Vec::new(); names.len()];
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            note(
                &mut parsed,
                i + 1,
                &format!("expected {} fields, found {}", cols.len(), fields.len()),
            );
            continue;
        }
        let Some(t) = parse_timestamp(fields[1]) else {
            note(&mut parsed, i + 1, "unparsable Unix timestamp");
            continue;
        };
        let values: Option<Vec<f64>> = value_cols.iter().map(|&j| parse_watts(fields[j])).collect();
        match values {
            Some(vs) => {
                for (k, v) in vs.into_iter().enumerate() {
                    readings[k].push((t, v));
                }
            }
            None => note(&mut parsed, i + 1, "unparsable power value"),
        }
    }
    parsed.channels = names
        .into_iter()
        .zip(readings)
        .map(|(name, readings)| RawChannel { name, readings })
        .collect();
    Ok(parsed)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ResampleStats {
    pub clamped_negative: usize,
    pub empty_minutes: usize,
}

fn minute_floor(t: i64) -> i64 {
    t.div_euclid(MINUTE) * MINUTE
}

/// Averages sorted readings into one-minute buckets `[m, m+60)`.
///
/// Buckets without readings are invalid; negative readings count as 0 W.
pub fn resample_1min(readings: &[(i64, f64)]) -> (PowerSeries, ResampleStats) {
    let (Some(first), Some(last)) = (readings.first(), readings.last()) else {
        return (PowerSeries::from_values(0, Vec::new()), ResampleStats::default());
    };
    let start = minute_floor(first.0);
    let n = ((minute_floor(last.0) - start) / MINUTE + 1) as usize;
    resample_onto(readings, start, n)
}

/// Resamples onto the grid of `n` minutes starting at `start`; readings
/// outside it are ignored.
pub fn resample_onto(readings: &[(i64, f64)], start: i64, n: usize) -> (PowerSeries, ResampleStats) {
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    // a bucket of identical readings takes that reading, not sum/count
    let mut uniform: Vec<Option<f64>> = vec![None; n];
    let mut stats = ResampleStats::default();
    for &(t, v) in readings {
        if t < start {
            continue;
        }
        let k = ((t - start) / MINUTE) as usize;
        if k >= n {
            continue;
        }
        let v = if v < 0.0 {
            stats.clamped_negative += 1;
            0.0
        } else {
            v
        };
        uniform[k] = match (counts[k], uniform[k]) {
            (0, _) => Some(v),
            (_, Some(u)) if u == v => Some(u),
            _ => None,
        };
        sums[k] += v;
        counts[k] += 1;
    }
    let mut values = vec![0.0; n];
    let mut valid = vec![false; n];
    for k in 0..n {
        if counts[k] > 0 {
            values[k] = uniform[k].unwrap_or(sums[k] / counts[k] as f64);
            valid[k] = true;
        } else {
            stats.empty_minutes += 1;
        }
    }
    if stats.clamped_negative > 0 {
        warn!("clamped {} negative readings to 0 W", stats.clamped_negative);
    }
    (
        PowerSeries {
            start,
            period: MINUTE,
            values,
            valid,
        },
        stats,
    )
}

/// Resamples raw channels to one minute and aligns them on the aggregate.
pub fn household_from_channels(
    aggregate: &RawChannel,
    appliances: &[(String, &RawChannel)],
) -> Result<AlignedHousehold> {
    if aggregate.readings.is_empty() {
        return Err(Error::Alignment("aggregate channel has no readings".into()));
    }
    let (agg, _) = resample_1min(&aggregate.readings);
    let mut apps = Vec::with_capacity(appliances.len());
    for (name, ch) in appliances {
        if ch.readings.is_empty() {
            return Err(Error::Alignment(format!("channel {name} has no readings")));
        }
        apps.push((name.clone(), resample_1min(&ch.readings).0));
    }
    align(agg, apps)
}
