//! Uniformly sampled power signals and aligned households.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling period of every resampled signal, in seconds.
pub const MINUTE: i64 = 60;

/// A uniformly sampled power signal in watts with a per-sample validity mask.
///
/// Invalid samples carry a value of 0 and must not be read as measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    /// Unix seconds of the first sample.
    pub start: i64,
    /// Seconds between samples.
    pub period: i64,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl PowerSeries {
    pub fn new(start: i64, period: i64, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if period <= 0 {
            return Err(Error::Usage("sampling period must be positive".into()));
        }
        if values.len() != valid.len() {
            return Err(Error::Usage("values and validity mask differ in length".into()));
        }
        Ok(Self {
            start,
            period,
            values,
            valid,
        })
    }

    /// A fully valid series on the one-minute grid.
    pub fn from_values(start: i64, values: Vec<f64>) -> Self {
        let valid = vec![true; values.len()];
        Self {
            start,
            period: MINUTE,
            values,
            valid,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Timestamp one period past the last sample.
    pub fn end(&self) -> i64 {
        self.start + self.period * self.values.len() as i64
    }

    pub fn timestamp(&self, i: usize) -> i64 {
        self.start + self.period * i as i64
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Sub-series covering `[from, to)` (unix seconds); both bounds must lie
    /// on this series' grid.
    pub fn crop(&self, from: i64, to: i64) -> Result<PowerSeries> {
        if (from - self.start) % self.period != 0 || (to - self.start) % self.period != 0 {
            return Err(Error::Alignment(format!(
                "crop bounds {from}..{to} are off the {}-second grid starting at {}",
                self.period, self.start
            )));
        }
        if from < self.start || to > self.end() || from > to {
            return Err(Error::Alignment(format!(
                "crop {from}..{to} outside series span {}..{}",
                self.start,
                self.end()
            )));
        }
        let a = ((from - self.start) / self.period) as usize;
        let b = ((to - self.start) / self.period) as usize;
        Ok(PowerSeries {
            start: from,
            period: self.period,
            values: self.values[a..b].to_vec(),
            valid: self.valid[a..b].to_vec(),
        })
    }

    /// Values of valid samples.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, v)| **v)
            .map(|(x, _)| *x)
    }
}

/// Aggregate and per-appliance channels sharing one grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedHousehold {
    pub aggregate: PowerSeries,
    /// Appliance channels in column order.
    pub appliances: Vec<(String, PowerSeries)>,
}

impl AlignedHousehold {
    pub fn appliance(&self, name: &str) -> Option<&PowerSeries> {
        self.appliances.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn appliance_names(&self) -> impl Iterator<Item = &str> {
        self.appliances.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.aggregate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aggregate.is_empty()
    }

    /// The same household restricted to `[from, to)`.
    pub fn crop(&self, from: i64, to: i64) -> Result<AlignedHousehold> {
        Ok(AlignedHousehold {
            aggregate: self.aggregate.crop(from, to)?,
            appliances: self
                .appliances
                .iter()
                .map(|(n, s)| Ok((n.clone(), s.crop(from, to)?)))
                .collect::<Result<_>>()?,
        })
    }

    /// Keeps only whole days `[first, last)` counted from the first sample.
    pub fn day_range(&self, first: usize, last: usize) -> Result<AlignedHousehold> {
        let day = 86_400;
        let from = self.aggregate.start + first as i64 * day;
        let to = (self.aggregate.start + last as i64 * day).min(self.aggregate.end());
        if from >= to {
            return Err(Error::Alignment(format!(
                "day range {first}..{last} is empty for a series of {} samples",
                self.len()
            )));
        }
        self.crop(from, to)
    }
}

/// Crops every channel to the common span and makes a sample valid only
/// when it is valid in all channels.
pub fn align(aggregate: PowerSeries, appliances: Vec<(String, PowerSeries)>) -> Result<AlignedHousehold> {
    let period = aggregate.period;
    let mut from = aggregate.start;
    let mut to = aggregate.end();
    for (name, s) in &appliances {
        if s.period != period {
            return Err(Error::Alignment(format!(
                "channel {name} has period {} s, aggregate has {period} s",
                s.period
            )));
        }
        if (s.start - aggregate.start) % period != 0 {
            return Err(Error::Alignment(format!("channel {name} is off the aggregate grid")));
        }
        from = from.max(s.start);
        to = to.min(s.end());
    }
    if from >= to {
        return Err(Error::Alignment("channels share no common time span".into()));
    }
    let mut agg = aggregate.crop(from, to)?;
    let mut apps: Vec<(String, PowerSeries)> = appliances
        .iter()
        .map(|(n, s)| Ok((n.clone(), s.crop(from, to)?)))
        .collect::<Result<_>>()?;
    let mut valid = agg.valid.clone();
    for (_, s) in &apps {
        valid.iter_mut().zip(&s.valid).for_each(|(v, w)| *v &= *w);
    }
    let apply = |s: &mut PowerSeries| {
        s.valid.clone_from(&valid);
        s.values
            .iter_mut()
            .zip(&valid)
            .filter(|(_, v)| !**v)
            .for_each(|(x, _)| *x = 0.0);
    };
    apply(&mut agg);
    apps.iter_mut().for_each(|(_, s)| apply(s));
    Ok(AlignedHousehold {
        aggregate: agg,
        appliances: apps,
    })
}
