//! Seeded finite-state appliance simulator for desk-scale experiments.
//!
//! Each appliance idles OFF (0 W) and, when activated, walks through its ON
//! states in order before returning to OFF. Dwell times are geometric with the
//! configured means. The aggregate is the sum of all appliance traces plus
//! Gaussian meter noise, clamped at 0 W.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::series::{AlignedHousehold, PowerSeries};
use crate::error::{Error, Result};
use crate::rng::{stream, SeededRng, Stream};

const MINUTES_PER_DAY: usize = 1440;

/// One ON state: its power draw and mean dwell time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnState {
    pub power_w: f64,
    pub mean_dwell_min: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    /// OFF ↔ a single ON state.
    TwoState,
    /// OFF → ON₁ → … → ONₖ → OFF.
    Cyclic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticApplianceSpec {
    pub name: String,
    pub on_states: Vec<OnState>,
    pub transition: Transition,
    /// Mean activations per day; fixes the mean OFF dwell.
    pub activations_per_day: f64,
}

impl SyntheticApplianceSpec {
    pub fn two_state(name: &str, power_w: f64, on_min: f64, activations_per_day: f64) -> Self {
        Self {
            name: name.into(),
            on_states: vec![OnState {
                power_w,
                mean_dwell_min: on_min,
            }],
            transition: Transition::TwoState,
            activations_per_day,
        }
    }

    pub fn cyclic(name: &str, states: &[(f64, f64)], activations_per_day: f64) -> Self {
        Self {
            name: name.into(),
            on_states: states
                .iter()
                .map(|&(power_w, mean_dwell_min)| OnState {
                    power_w,
                    mean_dwell_min,
                })
                .collect(),
            transition: Transition::Cyclic,
            activations_per_day,
        }
    }

    /// Mean minutes spent OFF between activations.
    pub fn mean_off_dwell(&self) -> f64 {
        let cycle = MINUTES_PER_DAY as f64 / self.activations_per_day;
        cycle - self.on_states.iter().map(|s| s.mean_dwell_min).sum::<f64>()
    }

    /// Long-run fraction of time ON.
    pub fn duty_cycle(&self) -> f64 {
        let on: f64 = self.on_states.iter().map(|s| s.mean_dwell_min).sum();
        on / (on + self.mean_off_dwell())
    }

    /// Long-run mean power in watts.
    pub fn mean_power(&self) -> f64 {
        let on: f64 = self.on_states.iter().map(|s| s.power_w * s.mean_dwell_min).sum();
        let total: f64 = self.on_states.iter().map(|s| s.mean_dwell_min).sum::<f64>() + self.mean_off_dwell();
        on / total
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("appliance {}: {m}", self.name)));
        if self.on_states.is_empty() {
            return bad("needs at least one ON state".into());
        }
        if self.transition == Transition::TwoState && self.on_states.len() != 1 {
            return bad("a two-state appliance has exactly one ON state".into());
        }
        for s in &self.on_states {
            if !(s.power_w > 0.0) {
                return bad("ON power must be positive (OFF is 0 W)".into());
            }
            if !(s.mean_dwell_min >= 1.0) {
                return bad("dwell times must be at least 1 minute".into());
            }
        }
        if !(self.activations_per_day > 0.0) {
            return bad("activation rate must be positive".into());
        }
        if !(self.mean_off_dwell() >= 1.0) {
            return bad("activation rate leaves no OFF time".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticHouseSpec {
    pub appliances: Vec<SyntheticApplianceSpec>,
    /// Standard deviation of the Gaussian meter noise on the aggregate (W).
    pub noise_std: f64,
    /// Unix seconds of the first minute.
    pub start: i64,
}

impl SyntheticHouseSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        for a in &spec.appliances {
            a.validate()?;
        }
        Ok(spec)
    }

    /// Three-appliance desk household: a 100 W fridge at 30 % duty, a
    /// 2 kW kettle used in short bursts and a washing machine cycling
    /// 500 W then 1500 W, with 20 W meter noise.
    pub fn desk(start: i64) -> Self {
        Self {
            appliances: vec![
                SyntheticApplianceSpec::two_state("fridge", 100.0, 30.0, 14.4),
                SyntheticApplianceSpec::two_state("kettle", 2000.0, 3.0, 6.0),
                SyntheticApplianceSpec::cyclic("washing_machine", &[(500.0, 40.0), (1500.0, 20.0)], 1.0),
            ],
            noise_std: 20.0,
            start,
        }
    }
}

/// Geometric dwell on {1, 2, …} with the given mean.
fn dwell(mean: f64, rng: &mut SeededRng) -> usize {
    if mean <= 1.0 {
        return 1;
    }
    let p = 1.0 / mean;
    let u: f64 = 1.0 - rng.random::<f64>();
    1 + (u.ln() / (1.0 - p).ln()).floor() as usize
}

fn simulate(spec: &SyntheticApplianceSpec, minutes: usize, rng: &mut SeededRng) -> Vec<f64> {
    let off = spec.mean_off_dwell();
    let mut out = Vec::with_capacity(minutes);
    // state 0 is OFF, 1..=k the ON states
    let mut state = 0usize;
    let mut remaining = dwell(off, rng);
    while out.len() < minutes {
        let power = if state == 0 {
            0.0
        } else {
            spec.on_states[state - 1].power_w
        };
        let take = remaining.min(minutes - out.len());
        out.extend(std::iter::repeat_n(power, take));
        state = (state + 1) % (spec.on_states.len() + 1);
        remaining = if state == 0 {
            dwell(off, rng)
        } else {
            dwell(spec.on_states[state - 1].mean_dwell_min, rng)
        };
    }
    out
}

/// Simulates `days` days at one-minute resolution. Appliance channels are the
/// noise-free ground truth; the aggregate is their sum plus noise.
pub fn generate_synthetic(spec: &SyntheticHouseSpec, days: usize, seed: u64) -> Result<AlignedHousehold> {
    if days == 0 {
        return Err(Error::Config("synthetic data needs at least one day".into()));
    }
    if !(spec.noise_std >= 0.0) {
        return Err(Error::Config("noise std must be >= 0".into()));
    }
    let minutes = days * MINUTES_PER_DAY;
    let mut agg = vec![0.0; minutes];
    let mut appliances = Vec::with_capacity(spec.appliances.len());
    for (i, a) in spec.appliances.iter().enumerate() {
        a.validate()?;
        let trace = simulate(a, minutes, &mut stream(seed, Stream::Appliance(i as u64)));
        agg.iter_mut().zip(&trace).for_each(|(s, v)| *s += v);
        appliances.push((a.name.clone(), PowerSeries::from_values(spec.start, trace)));
    }
    if spec.noise_std > 0.0 {
        let normal = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = stream(seed, Stream::MeterNoise);
        for v in &mut agg {
            *v = (*v + normal.sample(&mut rng)).max(0.0);
        }
    }
    Ok(AlignedHousehold {
        aggregate: PowerSeries::from_values(spec.start, agg),
        appliances,
    })
}
