//! Runs every (architecture × appliance × scheme) cell of a case file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{error, info};

use super::sources::{AccessLog, DataStore, Exposure};
use super::{
    arch_tag, disaggregate, downstream_finetune, downstream_seed, pretext_seed, pretext_train, train_zsl, Scheme,
    StageRecord, TrainedModel,
};
use crate::checkpoint;
use crate::config::CaseConfig;
use crate::data::{AlignedHousehold, PowerSeries};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::models::{ArchitectureKind, ArchitectureSpec};
use crate::report::{cells_csv, emit_report, energy_csv, Cell, Report};

/// Everything a finished cell produced.
#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub cell: Cell,
    pub window: usize,
    /// Stage records of the trained model; empty when training failed.
    pub stages: Vec<StageRecord>,
    pub checkpoint: Option<PathBuf>,
    pub estimate: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct CaseOutcome {
    pub cells: Vec<CellOutcome>,
    pub report: Report,
    pub access_log: AccessLog,
}

impl CaseOutcome {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.cell.outcome.is_err()).count()
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn estimate_csv(estimate: &PowerSeries, truth: &PowerSeries) -> String {
    let mut out = String::from("timestamp,estimate_watts,truth_watts\n");
    for i in 0..estimate.len() {
        let e = if estimate.valid[i] {
            estimate.values[i].to_string()
        } else {
            String::new()
        };
        let t = if truth.valid[i] {
            truth.values[i].to_string()
        } else {
            String::new()
        };
        let _ = writeln!(out, "{},{e},{t}", estimate.timestamp(i));
    }
    out
}

fn loss_rows(out: &mut String, label: &str, stages: &[StageRecord]) {
    for s in stages {
        let stage = format!("{:?}", s.stage).to_lowercase();
        let _ = writeln!(out, "{label},{stage},0,,{}", s.report.initial_val_loss);
        for e in &s.report.history {
            let _ = writeln!(out, "{label},{stage},{},{},{}", e.epoch, e.train_loss, e.val_loss);
        }
    }
}

/// Case data handed out under per-stage channel exposure.
pub struct CaseInputs<'a> {
    config: &'a CaseConfig,
    store: DataStore,
    log: AccessLog,
}

impl<'a> CaseInputs<'a> {
    pub fn new(config: &'a CaseConfig) -> Self {
        Self {
            config,
            store: DataStore::default(),
            log: AccessLog::default(),
        }
    }

    pub fn log(&self) -> &AccessLog {
        &self.log
    }

    /// Pretext houses with their aggregate channel only.
    pub fn pretext_houses(&mut self) -> Result<Vec<AlignedHousehold>> {
        let refs = self.config.data.pretext.clone();
        refs.iter()
            .map(|r| {
                let path = self.config.resolve(&r.path);
                self.store
                    .view(&path, r, &Exposure::AggregateOnly, "pretext", &mut self.log)
            })
            .collect()
    }

    /// Source houses supplying `appliance`, exposing that channel only.
    pub fn source_houses(&mut self, appliance: &str, stage: &str) -> Result<Vec<AlignedHousehold>> {
        let refs = self.config.data.source.clone();
        let mut houses = Vec::new();
        for r in refs.iter().filter(|r| r.supplies(appliance)) {
            let path = self.config.resolve(&r.path);
            let exposure = Exposure::Appliances(vec![appliance.to_string()]);
            match self.store.view(&path, r, &exposure, stage, &mut self.log) {
                Ok(h) => houses.push(h),
                // houses without the channel are skipped unless named explicitly
                Err(Error::Pipeline(_)) if r.appliances.is_none() => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(houses)
    }

    /// Test-house aggregate, as seen by disaggregation.
    pub fn test_aggregate(&mut self) -> Result<PowerSeries> {
        let test = self.config.data.test.clone();
        let path = self.config.resolve(&test.path);
        let h = self
            .store
            .view(&path, &test, &Exposure::AggregateOnly, "disaggregation", &mut self.log)?;
        Ok(h.aggregate)
    }

    /// Test-house ground truth for scoring.
    pub fn test_truth(&mut self, appliance: &str) -> Result<PowerSeries> {
        let test = self.config.data.test.clone();
        let path = self.config.resolve(&test.path);
        let exposure = Exposure::Appliances(vec![appliance.to_string()]);
        let h = self.store.view(&path, &test, &exposure, "evaluation", &mut self.log)?;
        Ok(h.appliances.into_iter().next().expect("exposed channel").1)
    }
}

struct Runner<'a> {
    config: &'a CaseConfig,
    out: &'a Path,
    inputs: CaseInputs<'a>,
    digest: String,
    pretext: BTreeMap<(ArchitectureKind, usize), std::result::Result<TrainedModel, String>>,
    losses: String,
}

impl Runner<'_> {
    fn pretext_for(&mut self, spec: &ArchitectureSpec) -> std::result::Result<TrainedModel, String> {
        let key = (spec.kind, spec.window);
        if !self.pretext.contains_key(&key) {
            let seed = pretext_seed(self.config.seed, spec.kind, spec.window);
            let settings = self.config.settings().with_seed(seed);
            let label = format!("{}_pretext_w{}", arch_tag(spec.kind), spec.window);
            info!("training {label}");
            let result = self.inputs.pretext_houses().and_then(|houses| {
                let refs: Vec<&AlignedHousehold> = houses.iter().collect();
                let m = pretext_train(spec, &refs, &settings, &self.digest)?;
                checkpoint::save(&m, self.out.join("checkpoints").join(format!("{label}.json")))?;
                Ok(m)
            });
            if let Ok(m) = &result {
                loss_rows(&mut self.losses, &label, &m.stages);
            }
            self.pretext.insert(key, result.map_err(|e| format!("pretext: {e}")));
        }
        self.pretext[&key].clone()
    }

    fn train(&mut self, spec: &ArchitectureSpec, appliance: &str, scheme: Scheme) -> Result<TrainedModel> {
        let seed = downstream_seed(self.config.seed, spec.kind, appliance);
        let settings = self.config.settings().with_seed(seed);
        let stage = if scheme.is_ssl() { "downstream" } else { "zsl" };
        match scheme {
            Scheme::Zsl => {
                let houses = self.inputs.source_houses(appliance, stage)?;
                let refs: Vec<&AlignedHousehold> = houses.iter().collect();
                train_zsl(spec, appliance, &refs, &settings, &self.digest)
            }
            _ => {
                let pretext = self.pretext_for(spec).map_err(Error::Pipeline)?;
                let houses = self.inputs.source_houses(appliance, stage)?;
                let refs: Vec<&AlignedHousehold> = houses.iter().collect();
                downstream_finetune(&pretext, spec, appliance, scheme, &refs, &settings)
            }
        }
    }

    fn cell(&mut self, kind: ArchitectureKind, appliance: &str, scheme: Scheme) -> CellOutcome {
        let window = self.config.window(kind, appliance);
        let label = format!("{}_{}_{}", arch_tag(kind), scheme.label().to_lowercase(), appliance);
        info!("cell {label} (W={window})");
        let mut outcome = CellOutcome {
            cell: Cell {
                appliance: appliance.to_string(),
                architecture: kind,
                scheme,
                outcome: Err(String::new()),
            },
            window,
            stages: Vec::new(),
            checkpoint: None,
            estimate: None,
        };
        let result = (|| -> Result<_> {
            let spec = ArchitectureSpec::new(kind, window)?;
            let model = self.train(&spec, appliance, scheme)?;
            outcome.stages = model.stages.clone();
            loss_rows(&mut self.losses, &label, &model.stages);
            let ckpt = self.out.join("checkpoints").join(format!("{label}.json"));
            checkpoint::save(&model, &ckpt)?;
            outcome.checkpoint = Some(ckpt);

            let input = self.inputs.test_aggregate()?;
            let estimate = disaggregate(&model, &input)?;
            let truth = self.inputs.test_truth(appliance)?;
            let est_path = self.out.join("estimates").join(format!("{label}.csv"));
            write(&est_path, &estimate_csv(&estimate, &truth))?;
            outcome.estimate = Some(est_path);
            evaluate(&estimate, &truth)
        })();
        outcome.cell.outcome = result.map_err(|e| {
            error!("cell {label} failed: {e}");
            e.to_string()
        });
        outcome
    }
}

/// Runs the case and writes checkpoints, estimates, the result table
/// (`results.csv`, `results.md`), per-cell and energy summaries, loss
/// histories and the data access log under `out`.
///
/// A failing cell is recorded and the remaining cells still run.
pub fn run_case(config: &CaseConfig, out: &Path) -> Result<CaseOutcome> {
    config.validate()?;
    for dir in [out.to_path_buf(), out.join("checkpoints"), out.join("estimates")] {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut runner = Runner {
        config,
        out,
        inputs: CaseInputs::new(config),
        digest: config.digest(),
        pretext: BTreeMap::new(),
        losses: String::from("model,stage,epoch,train_loss,val_loss\n"),
    };
    let mut cells = Vec::new();
    for &kind in &config.architectures {
        for appliance in &config.appliances {
            for &scheme in &config.schemes {
                cells.push(runner.cell(kind, appliance, scheme));
            }
        }
    }
    let plain: Vec<Cell> = cells.iter().map(|c| c.cell.clone()).collect();
    let report = emit_report(&plain);
    write(&out.join("results.csv"), &report.to_csv())?;
    write(&out.join("results.md"), &report.to_markdown())?;
    write(&out.join("cells.csv"), &cells_csv(&plain))?;
    write(&out.join("energy.csv"), &energy_csv(&plain))?;
    write(&out.join("losses.csv"), &runner.losses)?;
    write(&out.join("access_log.csv"), &runner.inputs.log.to_csv())?;
    Ok(CaseOutcome {
        cells,
        report,
        access_log: runner.inputs.log,
    })
}
