use log::warn;

use super::{Stage, TrainedModel};
use crate::data::{valid_runs, PowerSeries, TargetMode};
use crate::error::{Error, Result};
use crate::optim::predict_windows;

/// Estimates the appliance signal for every valid aggregate sample.
///
/// Each contiguous valid run is padded by repeating its edge values, so
/// each sample of a run at least `W` long gets exactly one prediction.
/// Estimates are denormalized and clamped at 0 W. Invalid samples, and runs
/// shorter than the window, come out invalid.
pub fn disaggregate(model: &TrainedModel, aggregate: &PowerSeries) -> Result<PowerSeries> {
    match model.last_stage() {
        Some(Stage::Downstream) | Some(Stage::Zsl) => {}
        _ => {
            return Err(Error::Pipeline(
                "checkpoint has not been trained on an appliance; refusing to disaggregate".into(),
            ))
        }
    }
    model.check_stage_order()?;
    let w = model.model.spec.window;
    let (before, after) = match model.model.target_mode() {
        TargetMode::Midpoint => ((w - 1) / 2, (w - 1) / 2),
        TargetMode::Endpoint => (w - 1, 0),
    };
    let agg = &model.aggregate_stats;
    let tgt = &model.target_stats;
    let mut values = vec![0.0; aggregate.len()];
    let mut valid = vec![false; aggregate.len()];
    let (mut short, mut any) = (0usize, false);
    for (a, b) in valid_runs(&aggregate.valid) {
        if b - a < w {
            short += b - a;
            continue;
        }
        any = true;
        let z: Vec<f64> = aggregate.values[a..b].iter().map(|v| agg.normalize(*v)).collect();
        let mut padded = Vec::with_capacity(z.len() + before + after);
        padded.extend(std::iter::repeat_n(z[0], before));
        padded.extend_from_slice(&z);
        padded.extend(std::iter::repeat_n(z[z.len() - 1], after));
        let mut inputs = Vec::with_capacity(z.len() * w);
        for t in 0..z.len() {
            inputs.extend_from_slice(&padded[t..t + w]);
        }
        let preds = predict_windows(&model.model.net, &inputs, w)?;
        for (i, p) in preds.into_iter().enumerate() {
            values[a + i] = tgt.denormalize(p).max(0.0);
            valid[a + i] = true;
        }
    }
    if short > 0 {
        warn!("{short} valid samples lie in runs shorter than the {w}-sample window and get no estimate");
    }
    if !any {
        warn!("no valid run reaches the {w}-sample window; the estimate is empty");
    }
    PowerSeries::new(aggregate.start, aggregate.period, values, valid)
}
