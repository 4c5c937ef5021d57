//! Pretext training, downstream fine-tuning, the zero-shot baseline and
//! full-signal disaggregation.
//!
//! A self-supervised run first trains a fresh network to predict the
//! aggregate's own midpoint (S2p) or endpoint (Bi-GRU) from unlabeled target
//! aggregate windows, then fine-tunes it per appliance on labeled source
//! houses, either fully (FSSL) or with only the dense and output layers
//! trainable (PSSL). The zero-shot baseline (ZSL) trains the same network
//! from scratch on the same source data.

mod case;
mod disagg;
mod sources;

pub use case::{estimate_csv, run_case, CaseInputs, CaseOutcome, CellOutcome};
pub use disagg::disaggregate;
pub use sources::{AccessLog, AccessRecord, Exposure};

use std::fmt;
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use crate::data::{make_windows, AlignedHousehold, NormStats, Target, WindowBatch};
use crate::error::{Error, Result};
use crate::models::{
    apply_freeze, build_model, reinit_output_head, ArchitectureKind, ArchitectureSpec, FreezePolicy, Model,
};
use crate::optim::{train_epochs, TrainConfig, TrainReport};
use crate::rng::{derive_seed, stream, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Zsl,
    Fssl,
    Pssl,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Zsl, Scheme::Fssl, Scheme::Pssl];

    pub fn is_ssl(self) -> bool {
        self != Scheme::Zsl
    }

    pub fn freeze_policy(self) -> FreezePolicy {
        match self {
            Scheme::Pssl => FreezePolicy::Partial,
            Scheme::Zsl | Scheme::Fssl => FreezePolicy::None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Zsl => "ZSL",
            Scheme::Fssl => "FSSL",
            Scheme::Pssl => "PSSL",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zsl" => Ok(Scheme::Zsl),
            "fssl" => Ok(Scheme::Fssl),
            "pssl" => Ok(Scheme::Pssl),
            _ => Err(Error::Config(format!(
                "unknown scheme `{s}` (expected zsl, fssl or pssl)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Self-supervised aggregate-to-aggregate training.
    Pretext,
    /// Supervised fine-tuning of a pretext network.
    Downstream,
    /// Supervised training from scratch.
    Zsl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub freeze: FreezePolicy,
    pub seed: u64,
    pub train_windows: usize,
    pub val_windows: usize,
    pub report: TrainReport,
}

pub(crate) fn arch_tag(kind: ArchitectureKind) -> &'static str {
    match kind {
        ArchitectureKind::S2p => "s2p",
        ArchitectureKind::Bigru => "bigru",
    }
}

/// Seed of the pretext run shared by every appliance with this window.
pub fn pretext_seed(seed: u64, kind: ArchitectureKind, window: usize) -> u64 {
    derive_seed(seed, &format!("pretext/{}/{window}", arch_tag(kind)))
}

/// Seed shared by the ZSL, FSSL and PSSL runs of one appliance, so the
/// schemes differ only in their starting parameters.
pub fn downstream_seed(seed: u64, kind: ArchitectureKind, appliance: &str) -> u64 {
    derive_seed(seed, &format!("downstream/{}/{appliance}", arch_tag(kind)))
}

/// Training knobs shared by every stage of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSettings {
    pub train: TrainConfig,
    /// Chronological tail of each house's windows held out for validation.
    pub val_fraction: f64,
    pub max_val_windows: Option<usize>,
    /// Start fine-tuning from a freshly drawn output layer.
    pub reinit_output_head: bool,
}

impl Default for StageSettings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            val_fraction: 0.1,
            max_val_windows: None,
            reinit_output_head: false,
        }
    }
}

impl StageSettings {
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.train.seed = seed;
        s
    }

    fn validate(&self) -> Result<()> {
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config("val_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// A network together with everything needed to apply it to new data.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: Model,
    /// `None` for a pretext network.
    pub appliance: Option<String>,
    pub scheme: Option<Scheme>,
    pub stages: Vec<StageRecord>,
    pub aggregate_stats: NormStats,
    pub target_stats: NormStats,
    pub config_digest: String,
}

impl TrainedModel {
    pub fn last_stage(&self) -> Option<Stage> {
        self.stages.last().map(|s| s.stage)
    }

    /// Checks the recorded stage sequence against the scheme.
    pub fn check_stage_order(&self) -> Result<()> {
        let order: Vec<Stage> = self.stages.iter().map(|s| s.stage).collect();
        let ok = match self.scheme {
            None => order == [Stage::Pretext],
            Some(Scheme::Zsl) => order == [Stage::Zsl],
            Some(_) => order == [Stage::Pretext, Stage::Downstream],
        };
        if !ok {
            return Err(Error::Pipeline(format!(
                "stage sequence {order:?} does not fit scheme {:?}",
                self.scheme
            )));
        }
        Ok(())
    }
}

fn fit_stats<'a>(series: impl Iterator<Item = &'a crate::data::PowerSeries>) -> Result<NormStats> {
    NormStats::fit_values(series.flat_map(|s| s.valid_values()))
}

/// Per-house windows, split chronologically into training and validation
/// parts, then concatenated house by house.
fn split_windows(
    houses: &[&AlignedHousehold],
    target: &Target,
    spec: &ArchitectureSpec,
    agg: &NormStats,
    tgt: &NormStats,
    settings: &StageSettings,
) -> Result<(WindowBatch, WindowBatch)> {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for h in houses {
        match make_windows(h, target, spec.window, spec.target_mode(), agg, tgt) {
            Ok(w) => {
                let (a, b) = w.split_tail(settings.val_fraction);
                train.push(a);
                val.push(b);
            }
            Err(Error::EmptyDataset(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let train = WindowBatch::concat(&train)
        .map_err(|_| Error::Pipeline(format!("no house yields a window of {} samples", spec.window)))?;
    let mut val = WindowBatch::concat(&val)?;
    if let Some(max) = settings.max_val_windows {
        val = val.subsample_evenly(max);
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::Pipeline("too few windows to hold out a validation set".into()));
    }
    Ok((train, val))
}

fn train_stage(
    model: &mut Model,
    stage: Stage,
    train: &WindowBatch,
    val: &WindowBatch,
    settings: &StageSettings,
) -> Result<StageRecord> {
    info!(
        "{:?} stage for {}: {} training / {} validation windows, {} trainable parameters",
        stage,
        model.spec.kind,
        train.len(),
        val.len(),
        model.trainable_count()
    );
    let report = train_epochs(&mut model.net, train, val, &settings.train)?;
    Ok(StageRecord {
        stage,
        freeze: if model.trainable_count() == model.param_count() {
            FreezePolicy::None
        } else {
            FreezePolicy::Partial
        },
        seed: settings.train.seed,
        train_windows: train.len(),
        val_windows: val.len(),
        report,
    })
}

/// Trains a fresh network to regress each aggregate window onto its own
/// target-position sample. Only aggregate channels are read.
pub fn pretext_train(
    spec: &ArchitectureSpec,
    pretext: &[&AlignedHousehold],
    settings: &StageSettings,
    config_digest: &str,
) -> Result<TrainedModel> {
    settings.validate()?;
    if pretext.is_empty() {
        return Err(Error::Pipeline(
            "pretext training needs unlabeled aggregate data".into(),
        ));
    }
    let stats = fit_stats(pretext.iter().map(|h| &h.aggregate))?;
    let (train, val) = split_windows(pretext, &Target::Aggregate, spec, &stats, &stats, settings)?;
    let mut model = build_model(spec, &mut stream(settings.train.seed, Stream::Init))?;
    let record = train_stage(&mut model, Stage::Pretext, &train, &val, settings)?;
    Ok(TrainedModel {
        model,
        appliance: None,
        scheme: None,
        stages: vec![record],
        aggregate_stats: stats,
        target_stats: stats,
        config_digest: config_digest.to_string(),
    })
}

fn labeled<'a>(sources: &[&'a AlignedHousehold], appliance: &str) -> Result<Vec<&'a AlignedHousehold>> {
    let houses: Vec<&AlignedHousehold> = sources
        .iter()
        .copied()
        .filter(|h| h.appliance(appliance).is_some())
        .collect();
    if houses.is_empty() {
        return Err(Error::Pipeline(format!("no source house has a `{appliance}` channel")));
    }
    Ok(houses)
}

fn supervised(
    mut model: Model,
    stage: Stage,
    appliance: &str,
    sources: &[&AlignedHousehold],
    settings: &StageSettings,
) -> Result<(Model, StageRecord, NormStats, NormStats)> {
    settings.validate()?;
    let houses = labeled(sources, appliance)?;
    let agg = fit_stats(houses.iter().map(|h| &h.aggregate))?;
    let tgt = fit_stats(houses.iter().map(|h| h.appliance(appliance).expect("filtered")))?;
    let target = Target::Appliance(appliance.to_string());
    let (train, val) = split_windows(&houses, &target, &model.spec, &agg, &tgt, settings)?;
    let record = train_stage(&mut model, stage, &train, &val, settings)?;
    Ok((model, record, agg, tgt))
}

/// Fine-tunes a copy of a pretext network on labeled source houses. PSSL
/// trains only the dense and output layers; FSSL trains everything.
pub fn downstream_finetune(
    pretext: &TrainedModel,
    spec: &ArchitectureSpec,
    appliance: &str,
    scheme: Scheme,
    sources: &[&AlignedHousehold],
    settings: &StageSettings,
) -> Result<TrainedModel> {
    if !scheme.is_ssl() {
        return Err(Error::Pipeline(
            "downstream fine-tuning applies to PSSL and FSSL only".into(),
        ));
    }
    if pretext.last_stage() != Some(Stage::Pretext) || pretext.scheme.is_some() {
        return Err(Error::Pipeline(
            "downstream fine-tuning needs a pretext checkpoint".into(),
        ));
    }
    if &pretext.model.spec != spec {
        return Err(Error::Pipeline(format!(
            "pretext checkpoint is {} with W={}, experiment wants {} with W={}",
            pretext.model.spec.kind, pretext.model.spec.window, spec.kind, spec.window
        )));
    }
    let mut model = pretext.model.clone();
    if settings.reinit_output_head {
        reinit_output_head(&mut model, &mut stream(settings.train.seed, Stream::Init))?;
    }
    apply_freeze(&mut model, scheme.freeze_policy());
    let (mut model, record, agg, tgt) = supervised(model, Stage::Downstream, appliance, sources, settings)?;
    apply_freeze(&mut model, FreezePolicy::None);
    let mut stages = pretext.stages.clone();
    stages.push(record);
    Ok(TrainedModel {
        model,
        appliance: Some(appliance.to_string()),
        scheme: Some(scheme),
        stages,
        aggregate_stats: agg,
        target_stats: tgt,
        config_digest: pretext.config_digest.clone(),
    })
}

/// Trains a fresh network directly on labeled source houses.
pub fn train_zsl(
    spec: &ArchitectureSpec,
    appliance: &str,
    sources: &[&AlignedHousehold],
    settings: &StageSettings,
    config_digest: &str,
) -> Result<TrainedModel> {
    let model = build_model(spec, &mut stream(settings.train.seed, Stream::Init))?;
    let (model, record, agg, tgt) = supervised(model, Stage::Zsl, appliance, sources, settings)?;
    Ok(TrainedModel {
        model,
        appliance: Some(appliance.to_string()),
        scheme: Some(Scheme::Zsl),
        stages: vec![record],
        aggregate_stats: agg,
        target_stats: tgt,
        config_digest: config_digest.to_string(),
    })
}
