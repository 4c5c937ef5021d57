//! Self-describing JSON checkpoints.
//!
//! A checkpoint carries the architecture, target mode, normalization
//! statistics, stage history and every parameter tensor as a shape plus a
//! flat decimal array. Floats are written in shortest round-trip form, so
//! loading restores parameters bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{NormStats, TargetMode};
use crate::error::{Error, Result};
use crate::models::{build_model, ArchitectureSpec};
use crate::pipeline::{Scheme, StageRecord, TrainedModel};
use crate::rng::{stream, Stream};

pub const FORMAT: &str = "nilm-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub aggregate: NormStats,
    pub target: NormStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointFile {
    pub format: String,
    pub architecture: ArchitectureSpec,
    pub target_mode: TargetMode,
    pub appliance: Option<String>,
    pub scheme: Option<Scheme>,
    pub stages: Vec<StageRecord>,
    pub normalization: Normalization,
    pub config_digest: String,
    pub params: Vec<ParamRecord>,
}

impl CheckpointFile {
    pub fn from_model(m: &TrainedModel) -> Self {
        Self {
            format: FORMAT.to_string(),
            architecture: m.model.spec.clone(),
            target_mode: m.model.target_mode(),
            appliance: m.appliance.clone(),
            scheme: m.scheme,
            stages: m.stages.clone(),
            normalization: Normalization {
                aggregate: m.aggregate_stats,
                target: m.target_stats,
            },
            config_digest: m.config_digest.clone(),
            params: m
                .model
                .net
                .params
                .iter()
                .map(|p| ParamRecord {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    trainable: p.trainable,
                    values: p.value.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<TrainedModel> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format `{}`", self.format)));
        }
        self.architecture
            .validate()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if self.target_mode != self.architecture.target_mode() {
            return Err(Error::Checkpoint("target mode does not match the architecture".into()));
        }
        let mut model = build_model(&self.architecture, &mut stream(0, Stream::Init))?;
        if self.params.len() != model.net.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                model.net.params.len(),
                self.params.len()
            )));
        }
        for rec in self.params {
            let p = model
                .net
                .params
                .get_mut(&rec.name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {}", rec.name)))?;
            if p.value.shape() != rec.shape.as_slice() || rec.values.len() != p.value.len() {
                return Err(Error::Checkpoint(format!("parameter {} has the wrong shape", rec.name)));
            }
            if rec.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!(
                    "parameter {} holds non-finite values",
                    rec.name
                )));
            }
            p.value.data_mut().copy_from_slice(&rec.values);
            p.trainable = rec.trainable;
        }
        let m = TrainedModel {
            model,
            appliance: self.appliance,
            scheme: self.scheme,
            stages: self.stages,
            aggregate_stats: self.normalization.aggregate,
            target_stats: self.normalization.target,
            config_digest: self.config_digest,
        };
        m.check_stage_order().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(m)
    }
}

pub fn save(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &CheckpointFile::from_model(model)).map_err(|e| Error::Checkpoint(e.to_string()))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parsed: CheckpointFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    parsed.into_model()
}
