use serde::{Deserialize, Serialize};

use super::series::PowerSeries;
use crate::error::{Error, Result};

/// Standardization constants of one signal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    /// Mean and population standard deviation over the valid samples.
    pub fn fit(series: &PowerSeries) -> Result<Self> {
        Self::fit_values(series.valid_values())
    }

    pub fn fit_values(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.len() < 2 {
            return Err(Error::Normalization(format!(
                "need at least 2 valid samples, got {}",
                v.len()
            )));
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::Normalization("signal has zero variance".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_statistics() {
        let s = NormStats::fit(&PowerSeries::from_values(0, vec![0.0, 100.0])).unwrap();
        assert_eq!((s.mean, s.std), (50.0, 50.0));
        assert_eq!(s.normalize(100.0), 1.0);
    }

    #[test]
    fn constant_series_is_rejected() {
        let err = NormStats::fit(&PowerSeries::from_values(0, vec![3.0; 10])).unwrap_err();
        assert!(matches!(err, Error::Normalization(_)));
    }

    #[test]
    fn invalid_samples_are_ignored() {
        let mut s = PowerSeries::from_values(0, vec![0.0, 100.0, 1e9]);
        s.valid[2] = false;
        assert_eq!(NormStats::fit(&s).unwrap().mean, 50.0);
    }

    proptest! {
        #[test]
        fn round_trip(x in 0.0f64..5000.0, mean in 0.0f64..500.0, std in 0.1f64..1000.0) {
            let s = NormStats { mean, std };
            let back = s.denormalize(s.normalize(x));
            prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }
}
