//! Experiment-case configuration files (TOML).
//!
//! ```toml
//! seed = 7
//! architectures = ["s2p", "bigru"]
//! schemes = ["zsl", "fssl", "pssl"]
//! appliances = ["fridge", "kettle", "washing_machine"]
//! batch_size = 1024
//!
//! [windows.appliance.washing_machine]
//! bigru = 10
//!
//! [data]
//! pretext = [{ path = "house_1.csv", days = [0, 11] }]
//! source = [{ path = "house_2.csv" }, { path = "house_3.csv", appliances = ["fridge"] }]
//! test = { path = "house_1.csv", days = [11, 14] }
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::ArchitectureKind;
use crate::optim::{AdamConfig, TrainConfig};
use crate::pipeline::{Scheme, StageSettings};

fn default_batch() -> usize {
    1024
}
fn default_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    6
}
fn default_val_fraction() -> f64 {
    0.1
}

/// One canonical household file and the part of it to use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataRef {
    pub path: PathBuf,
    /// Whole days `[first, last)` counted from the file's first sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub days: Option<[usize; 2]>,
    /// Restricts a source house to these appliances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appliances: Option<Vec<String>>,
}

impl DataRef {
    pub fn supplies(&self, appliance: &str) -> bool {
        self.appliances
            .as_ref()
            .is_none_or(|a| a.iter().any(|x| x == appliance))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseData {
    /// Unlabeled target-domain houses; only their aggregate is read.
    #[serde(default)]
    pub pretext: Vec<DataRef>,
    /// Labeled source-domain houses.
    pub source: Vec<DataRef>,
    /// Test house: aggregate for disaggregation, channels for scoring.
    pub test: DataRef,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchWindows {
    pub s2p: Option<usize>,
    pub bigru: Option<usize>,
}

impl ArchWindows {
    fn get(&self, kind: ArchitectureKind) -> Option<usize> {
        match kind {
            ArchitectureKind::S2p => self.s2p,
            ArchitectureKind::Bigru => self.bigru,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowOverrides {
    #[serde(flatten)]
    pub all: ArchWindows,
    #[serde(default)]
    pub appliance: BTreeMap<String, ArchWindows>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub architectures: Vec<ArchitectureKind>,
    pub schemes: Vec<Scheme>,
    pub appliances: Vec<String>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Windows drawn per epoch after shuffling; all when absent.
    #[serde(default)]
    pub windows_per_epoch: Option<usize>,
    /// Validation windows kept (evenly spaced); all when absent.
    #[serde(default)]
    pub max_val_windows: Option<usize>,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub reinit_output_head: bool,
    #[serde(default)]
    pub windows: WindowOverrides,
    pub data: CaseData,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl CaseConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut c: CaseConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        c.base_dir = base_dir.into();
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, dir)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.architectures.is_empty() || self.schemes.is_empty() || self.appliances.is_empty() {
            return bad("architectures, schemes and appliances must all be non-empty");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be >= 1");
        }
        if self.windows_per_epoch == Some(0) || self.max_val_windows == Some(0) {
            return bad("window caps must be >= 1");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        if self.schemes.iter().any(|s| s.is_ssl()) && self.data.pretext.is_empty() {
            return bad("PSSL and FSSL need at least one pretext source");
        }
        if self.data.source.is_empty() {
            return bad("at least one labeled source house is required");
        }
        for r in self
            .data
            .pretext
            .iter()
            .chain(&self.data.source)
            .chain([&self.data.test])
        {
            if let Some([a, b]) = r.days {
                if a >= b {
                    return Err(Error::Config(format!("empty day range in {}", r.path.display())));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn window(&self, kind: ArchitectureKind, appliance: &str) -> usize {
        self.windows
            .appliance
            .get(appliance)
            .and_then(|w| w.get(kind))
            .or(self.windows.all.get(kind))
            .unwrap_or_else(|| kind.default_window(appliance))
    }

    pub fn settings(&self) -> StageSettings {
        StageSettings {
            train: TrainConfig {
                batch_size: self.batch_size,
                max_epochs: self.max_epochs,
                patience: self.patience,
                windows_per_epoch: self.windows_per_epoch,
                seed: self.seed,
                adam: AdamConfig::default(),
            },
            val_fraction: self.val_fraction,
            max_val_windows: self.max_val_windows,
            reinit_output_head: self.reinit_output_head,
        }
    }

    /// SHA-256 of the effective configuration (paths as written).
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
