//! Stride-1 sliding windows over maximal contiguous valid runs.

use serde::{Deserialize, Serialize};

use super::norm::NormStats;
use super::series::AlignedHousehold;
use crate::error::{Error, Result};

/// Which sample of a window is the regression target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Centre sample `t + (W−1)/2`; requires odd `W`.
    Midpoint,
    /// Last sample `t + W − 1`.
    Endpoint,
}

impl TargetMode {
    pub fn offset(self, width: usize) -> usize {
        match self {
            TargetMode::Midpoint => (width - 1) / 2,
            TargetMode::Endpoint => width - 1,
        }
    }
}

/// Regression target channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    /// The aggregate itself (the self-supervised pretext task).
    Aggregate,
    Appliance(String),
}

/// `N × W` normalized aggregate windows and their `N` normalized targets.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowBatch {
    /// Row-major `[N, width]`.
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub width: usize,
    pub mode: TargetMode,
    /// Sample index of each window's first element in its source series.
    pub offsets: Vec<usize>,
}

impl WindowBatch {
    /// Window set from raw rows; offsets are the row indices.
    pub fn from_parts(inputs: Vec<f64>, targets: Vec<f64>, width: usize) -> Result<Self> {
        if width == 0 || inputs.len() != targets.len() * width {
            return Err(Error::Usage("inputs do not form one row per target".into()));
        }
        let offsets = (0..targets.len()).collect();
        Ok(Self {
            inputs,
            targets,
            width,
            mode: TargetMode::Endpoint,
            offsets,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.width..(i + 1) * self.width]
    }

    fn select(&self, rows: impl Iterator<Item = usize>) -> WindowBatch {
        let mut out = WindowBatch {
            inputs: Vec::new(),
            targets: Vec::new(),
            width: self.width,
            mode: self.mode,
            offsets: Vec::new(),
        };
        for r in rows {
            out.inputs.extend_from_slice(self.input(r));
            out.targets.push(self.targets[r]);
            out.offsets.push(self.offsets[r]);
        }
        out
    }

    /// Splits off the chronologically last `fraction` of windows
    /// (at least one window on each side when `len() >= 2`).
    pub fn split_tail(&self, fraction: f64) -> (WindowBatch, WindowBatch) {
        let n = self.len();
        let mut tail = ((n as f64) * fraction).round() as usize;
        if n >= 2 {
            tail = tail.clamp(1, n - 1);
        } else {
            tail = 0;
        }
        let head = n - tail;
        (self.select(0..head), self.select(head..n))
    }

    /// At most `max` windows taken at evenly spaced positions.
    pub fn subsample_evenly(&self, max: usize) -> WindowBatch {
        let n = self.len();
        if max == 0 || n <= max {
            return self.clone();
        }
        self.select((0..max).map(|i| i * n / max))
    }

    /// Concatenates window sets of equal width and mode. Offsets keep
    /// their per-source meaning.
    pub fn concat(parts: &[WindowBatch]) -> Result<WindowBatch> {
        let first = parts
            .first()
            .ok_or_else(|| Error::EmptyDataset("no window sets to concatenate".into()))?;
        let mut out = WindowBatch {
            inputs: Vec::new(),
            targets: Vec::new(),
            width: first.width,
            mode: first.mode,
            offsets: Vec::new(),
        };
        for p in parts {
            if p.width != out.width || p.mode != out.mode {
                return Err(Error::Usage("cannot concatenate windows of different shape".into()));
            }
            out.inputs.extend_from_slice(&p.inputs);
            out.targets.extend_from_slice(&p.targets);
            out.offsets.extend_from_slice(&p.offsets);
        }
        Ok(out)
    }
}

/// Maximal runs `[start, end)` of `true` in a mask.
pub fn valid_runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &v) in mask.iter().enumerate() {
        match (v, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, mask.len()));
    }
    runs
}

/// Builds every stride-1 window of `width` samples lying inside a run where
/// both the aggregate and the target channel are valid.
pub fn make_windows(
    household: &AlignedHousehold,
    target: &Target,
    width: usize,
    mode: TargetMode,
    aggregate_stats: &NormStats,
    target_stats: &NormStats,
) -> Result<WindowBatch> {
    if width == 0 {
        return Err(Error::Config("window length must be >= 1".into()));
    }
    if mode == TargetMode::Midpoint && width.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "midpoint targets need an odd window length, got {width}"
        )));
    }
    let agg = &household.aggregate;
    let tgt = match target {
        Target::Aggregate => agg,
        Target::Appliance(name) => household
            .appliance(name)
            .ok_or_else(|| Error::Pipeline(format!("household has no channel `{name}`")))?,
    };
    let usable: Vec<bool> = agg.valid.iter().zip(&tgt.valid).map(|(a, b)| *a && *b).collect();
    let norm_agg: Vec<f64> = agg.values.iter().map(|v| aggregate_stats.normalize(*v)).collect();
    let off = mode.offset(width);
    let mut out = WindowBatch {
        inputs: Vec::new(),
        targets: Vec::new(),
        width,
        mode,
        offsets: Vec::new(),
    };
    for (a, b) in valid_runs(&usable) {
        if b - a < width {
            continue;
        }
        for t in a..=b - width {
            out.inputs.extend_from_slice(&norm_agg[t..t + width]);
            out.targets.push(target_stats.normalize(tgt.values[t + off]));
            out.offsets.push(t);
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no contiguous valid run of at least {width} samples"
        )));
    }
    Ok(out)
}
