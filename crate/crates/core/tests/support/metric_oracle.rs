//! Direct-loop metrics, written from the definitions without sharing code
//! with the library.

use std::collections::BTreeMap;

use nilm_core::data::PowerSeries;
use nilm_core::rng::{stream, Stream};
use rand::Rng;

fn both_valid(p: &PowerSeries, t: &PowerSeries) -> Vec<usize> {
    (0..p.values.len()).filter(|&i| p.valid[i] && t.valid[i]).collect()
}

pub fn mae(p: &PowerSeries, t: &PowerSeries) -> f64 {
    let idx = both_valid(p, t);
    let mut s = 0.0;
    for &i in &idx {
        s += (p.values[i] - t.values[i]).abs();
    }
    s / idx.len() as f64
}

/// Energies in kWh: watt-minutes summed, then divided by 60 000.
pub fn energy_kwh(p: &PowerSeries, t: &PowerSeries) -> (f64, f64) {
    let minutes = p.period as f64 / 60.0;
    let (mut ep, mut et) = (0.0, 0.0);
    for i in both_valid(p, t) {
        ep += p.values[i] * minutes;
        et += t.values[i] * minutes;
    }
    (ep / 60_000.0, et / 60_000.0)
}

pub fn sae(p: &PowerSeries, t: &PowerSeries) -> f64 {
    let (rh, r) = energy_kwh(p, t);
    (rh - r).abs() / r
}

pub fn epd(p: &PowerSeries, t: &PowerSeries) -> f64 {
    let day_of = |ts: i64| (ts as f64 / 86_400.0).floor() as i64;
    let first = day_of(p.start);
    let last = day_of(p.start + (p.values.len() as i64 - 1) * p.period);
    let mut per_day: BTreeMap<i64, (f64, f64)> = (first..=last).map(|d| (d, (0.0, 0.0))).collect();
    let minutes = p.period as f64 / 60.0;
    for i in both_valid(p, t) {
        let e = per_day.get_mut(&day_of(p.start + i as i64 * p.period)).unwrap();
        e.0 += p.values[i] * minutes / 60_000.0;
        e.1 += t.values[i] * minutes / 60_000.0;
    }
    let total: f64 = per_day.values().map(|(a, b)| (a - b).abs()).sum();
    total / per_day.len() as f64
}

/// A random prediction/truth pair of at most 1000 minutes with gaps.
pub fn random_fixture(seed: u64) -> (PowerSeries, PowerSeries) {
    let mut rng = stream(seed, Stream::Synthetic);
    let n = rng.random_range(2..=1000);
    let start = rng.random_range(-3_000_000i64..3_000_000) * 60;
    let mut draw = |scale: f64| -> PowerSeries {
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..scale)).collect();
        let valid: Vec<bool> = (0..n).map(|_| rng.random_bool(0.9)).collect();
        PowerSeries::new(start, 60, values, valid).unwrap()
    };
    let mut truth = draw(2500.0);
    let pred = draw(2000.0);
    truth.valid[0] = true;
    truth.values[0] = 100.0;
    let mut pred = pred;
    pred.valid[0] = true;
    (pred, truth)
}
