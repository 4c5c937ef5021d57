//! MAE, SAE and energy-per-day over aligned prediction/truth series.
//!
//! Only samples valid in both series take part. Energies are integrated as
//! watts × sampling period and reported in kWh.

use serde::{Deserialize, Serialize};

use crate::data::PowerSeries;
use crate::error::{Error, Result};

const SECONDS_PER_DAY: i64 = 86_400;
const JOULES_PER_KWH: f64 = 3.6e6;

fn check_aligned(pred: &PowerSeries, truth: &PowerSeries) -> Result<()> {
    if pred.start != truth.start || pred.period != truth.period || pred.len() != truth.len() {
        return Err(Error::Evaluation(format!(
            "series are not aligned: prediction starts {} (period {}, {} samples), truth starts {} (period {}, {} samples)",
            pred.start,
            pred.period,
            pred.len(),
            truth.start,
            truth.period,
            truth.len()
        )));
    }
    Ok(())
}

fn pairs<'a>(pred: &'a PowerSeries, truth: &'a PowerSeries) -> impl Iterator<Item = (usize, f64, f64)> + 'a {
    (0..pred.len())
        .filter(|&i| pred.valid[i] && truth.valid[i])
        .map(|i| (i, pred.values[i], truth.values[i]))
}

/// Mean absolute error in watts.
pub fn mae(pred: &PowerSeries, truth: &PowerSeries) -> Result<f64> {
    check_aligned(pred, truth)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (_, p, t) in pairs(pred, truth) {
        sum += (p - t).abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::Evaluation("no sample is valid in both series".into()));
    }
    Ok(sum / n as f64)
}

/// Predicted and true energy in kWh over the pairwise-valid samples.
pub fn energies(pred: &PowerSeries, truth: &PowerSeries) -> Result<(f64, f64)> {
    check_aligned(pred, truth)?;
    let (mut p_sum, mut t_sum) = (0.0, 0.0);
    for (_, p, t) in pairs(pred, truth) {
        p_sum += p;
        t_sum += t;
    }
    let scale = pred.period as f64 / JOULES_PER_KWH;
    Ok((p_sum * scale, t_sum * scale))
}

/// `|r̂ − r| / r` for total energies; undefined when the true total is 0.
pub fn sae(pred: &PowerSeries, truth: &PowerSeries) -> Result<f64> {
    let (r_hat, r) = energies(pred, truth)?;
    if r == 0.0 {
        return Err(Error::UndefinedMetric("SAE with zero true energy".into()));
    }
    Ok((r_hat - r).abs() / r)
}

/// Per-UTC-day `(day index, predicted kWh, true kWh)` for every day the
/// series touches.
pub fn daily_energies(pred: &PowerSeries, truth: &PowerSeries) -> Result<Vec<(i64, f64, f64)>> {
    check_aligned(pred, truth)?;
    if pred.is_empty() {
        return Err(Error::Evaluation("evaluation span covers no day".into()));
    }
    let first = pred.start.div_euclid(SECONDS_PER_DAY);
    let last = pred.timestamp(pred.len() - 1).div_euclid(SECONDS_PER_DAY);
    let mut days: Vec<(i64, f64, f64)> = (first..=last).map(|d| (d, 0.0, 0.0)).collect();
    for (i, p, t) in pairs(pred, truth) {
        let d = (pred.timestamp(i).div_euclid(SECONDS_PER_DAY) - first) as usize;
        days[d].1 += p;
        days[d].2 += t;
    }
    let scale = pred.period as f64 / JOULES_PER_KWH;
    for d in &mut days {
        d.1 *= scale;
        d.2 *= scale;
    }
    Ok(days)
}

/// Mean absolute daily energy error in kWh/day; partial first and last days
/// count as days.
pub fn epd(pred: &PowerSeries, truth: &PowerSeries) -> Result<f64> {
    let days = daily_energies(pred, truth)?;
    let total: f64 = days.iter().map(|(_, p, t)| (p - t).abs()).sum();
    Ok(total / days.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    /// `None` when the true energy is zero.
    pub sae: Option<f64>,
    pub epd: f64,
    pub true_kwh: f64,
    pub pred_kwh: f64,
    pub days: usize,
}

pub fn evaluate(pred: &PowerSeries, truth: &PowerSeries) -> Result<Metrics> {
    let (pred_kwh, true_kwh) = energies(pred, truth)?;
    let sae = match sae(pred, truth) {
        Ok(v) => Some(v),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Metrics {
        mae: mae(pred, truth)?,
        sae,
        epd: epd(pred, truth)?,
        true_kwh,
        pred_kwh,
        days: daily_energies(pred, truth)?.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(values: &[f64]) -> PowerSeries {
        PowerSeries::from_values(0, values.to_vec())
    }

    #[test]
    fn hand_cases() {
        assert_eq!(mae(&s(&[0.0, 2.0, 4.0]), &s(&[1.0, 2.0, 3.0])).unwrap(), 2.0 / 3.0);
        let day = 1440;
        let on = PowerSeries::from_values(0, vec![1000.0; day]);
        let off = PowerSeries::from_values(0, vec![0.0; day]);
        assert_eq!(epd(&on, &off).unwrap(), 24.0);
        assert!(matches!(sae(&on, &off), Err(Error::UndefinedMetric(_))));
        assert_eq!(sae(&off, &on).unwrap(), 1.0);
    }

    #[test]
    fn sae_ratio() {
        // 90 vs 100 kWh at one sample per hour
        let p = PowerSeries::new(0, 3600, vec![90_000.0], vec![true]).unwrap();
        let t = PowerSeries::new(0, 3600, vec![100_000.0], vec![true]).unwrap();
        let (rp, rt) = energies(&p, &t).unwrap();
        assert_eq!((rp, rt), (90.0, 100.0));
        assert!((sae(&p, &t).unwrap() - 0.10).abs() < 1e-15);
    }

    #[test]
    fn epd_two_days() {
        // one sample per hour: 500 W·h = 0.5 kWh on day 0, 1.5 kWh on day 1
        let mut pv = vec![0.0; 48];
        pv[3] = 500.0;
        pv[30] = 1500.0;
        let p = PowerSeries::new(0, 3600, pv, vec![true; 48]).unwrap();
        let t = PowerSeries::new(0, 3600, vec![0.0; 48], vec![true; 48]).unwrap();
        assert_eq!(epd(&p, &t).unwrap(), 1.0);
    }

    #[test]
    fn invalid_samples_are_skipped_and_misalignment_errors() {
        let mut p = s(&[10.0, 0.0]);
        p.valid[0] = false;
        assert_eq!(mae(&p, &s(&[0.0, 0.0])).unwrap(), 0.0);
        let mut none = s(&[1.0]);
        none.valid[0] = false;
        assert!(matches!(mae(&none, &s(&[1.0])), Err(Error::Evaluation(_))));
        assert!(mae(&s(&[1.0]), &s(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn constant_error_units_agree() {
        let t = PowerSeries::from_values(0, vec![50.0; 2880]);
        let p = PowerSeries::from_values(0, vec![80.0; 2880]);
        let m = evaluate(&p, &t).unwrap();
        assert!((m.epd - m.mae * 24.0 / 1000.0).abs() < 1e-12);
        assert_eq!(m.days, 2);
    }
}
