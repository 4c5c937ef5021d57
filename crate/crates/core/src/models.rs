//! The S2p and Bi-GRU seq2point architectures and their fine-tuning freeze
//! policies.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::TargetMode;
use crate::error::{Error, Result};
use crate::nn::{LayerKind, LayerSpec, Network};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub const S2P_WINDOW: usize = 79;
pub const BIGRU_WINDOW: usize = 5;
pub const BIGRU_WASHING_MACHINE_WINDOW: usize = 10;
const BIGRU_DROPOUT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureKind {
    S2p,
    Bigru,
}

impl ArchitectureKind {
    pub const ALL: [ArchitectureKind; 2] = [ArchitectureKind::S2p, ArchitectureKind::Bigru];

    pub fn target_mode(self) -> TargetMode {
        match self {
            ArchitectureKind::S2p => TargetMode::Midpoint,
            ArchitectureKind::Bigru => TargetMode::Endpoint,
        }
    }

    /// Default window length for an appliance.
    pub fn default_window(self, appliance: &str) -> usize {
        match self {
            ArchitectureKind::S2p => S2P_WINDOW,
            ArchitectureKind::Bigru if is_washing_machine(appliance) => BIGRU_WASHING_MACHINE_WINDOW,
            ArchitectureKind::Bigru => BIGRU_WINDOW,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ArchitectureKind::S2p => "S2p",
            ArchitectureKind::Bigru => "Bi-GRU",
        }
    }
}

impl fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn is_washing_machine(name: &str) -> bool {
    let n: String = name
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    n == "washingmachine" || n == "wm" || n == "washerdryer"
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub kind: ArchitectureKind,
    pub window: usize,
    pub layers: Vec<LayerSpec>,
}

fn s2p_layers() -> Vec<LayerSpec> {
    let convs = [(10, 30), (8, 30), (6, 40), (5, 50), (5, 50)];
    let mut v = Vec::new();
    for (i, (k, f)) in convs.into_iter().enumerate() {
        v.push(LayerSpec::conv1d(&format!("conv{}", i + 1), k, f));
        v.push(LayerSpec::relu(&format!("conv{}_relu", i + 1)));
    }
    v.push(LayerSpec::flatten("flatten"));
    v.push(LayerSpec::dense("dense", 1024));
    v.push(LayerSpec::relu("dense_relu"));
    v.push(LayerSpec::dense("output", 1));
    v
}

fn bigru_layers() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv1d("conv", 4, 16),
        LayerSpec::relu("conv_relu"),
        LayerSpec::dropout("conv_dropout", BIGRU_DROPOUT),
        LayerSpec::bigru("bigru1", 64, true),
        LayerSpec::dropout("bigru1_dropout", BIGRU_DROPOUT),
        LayerSpec::bigru("bigru2", 128, false),
        LayerSpec::dropout("bigru2_dropout", BIGRU_DROPOUT),
        LayerSpec::dense("dense", 128),
        LayerSpec::relu("dense_relu"),
        LayerSpec::dense("output", 1),
    ]
}

impl ArchitectureSpec {
    pub fn new(kind: ArchitectureKind, window: usize) -> Result<Self> {
        let spec = Self {
            kind,
            window,
            layers: match kind {
                ArchitectureKind::S2p => s2p_layers(),
                ArchitectureKind::Bigru => bigru_layers(),
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn s2p(window: usize) -> Result<Self> {
        Self::new(ArchitectureKind::S2p, window)
    }

    pub fn bigru(window: usize) -> Result<Self> {
        Self::new(ArchitectureKind::Bigru, window)
    }

    pub fn target_mode(&self) -> TargetMode {
        self.kind.target_mode()
    }

    /// Checks the window length and that the layer list is the canonical one
    /// for the kind (a deserialized spec may have been edited).
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("window length must be >= 1".into()));
        }
        if self.kind == ArchitectureKind::S2p && self.window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "S2p predicts the window midpoint and needs an odd window length, got {}",
                self.window
            )));
        }
        let canonical = match self.kind {
            ArchitectureKind::S2p => s2p_layers(),
            ArchitectureKind::Bigru => bigru_layers(),
        };
        if self.layers != canonical {
            return Err(Error::Config(format!(
                "layer list is not the {} architecture",
                self.kind
            )));
        }
        Ok(())
    }
}

/// Which parameters a downstream stage may update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezePolicy {
    /// Every parameter trains.
    None,
    /// Only the dense and output layers train.
    Partial,
}

fn is_head(param: &str) -> bool {
    param.starts_with("dense.") || param.starts_with("output.")
}

#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ArchitectureSpec,
    pub net: Network,
}

pub fn build_model(spec: &ArchitectureSpec, rng: &mut SeededRng) -> Result<Model> {
    spec.validate()?;
    let net = Network::build(&[spec.window, 1], &spec.layers, rng)?;
    Ok(Model {
        spec: spec.clone(),
        net,
    })
}

pub fn apply_freeze(model: &mut Model, policy: FreezePolicy) {
    match policy {
        FreezePolicy::None => model.net.params.set_trainable_where(|_| true),
        FreezePolicy::Partial => model.net.params.set_trainable_where(is_head),
    }
}

/// Re-initializes the output layer from `rng`, keeping everything else.
pub fn reinit_output_head(model: &mut Model, rng: &mut SeededRng) -> Result<()> {
    let fresh = build_model(&model.spec, rng)?;
    for name in ["output.weight", "output.bias"] {
        let src = fresh.net.params.get(name).expect("output layer").value.clone();
        model.net.params.get_mut(name).expect("output layer").value = src;
    }
    Ok(())
}

impl Model {
    pub fn target_mode(&self) -> TargetMode {
        self.spec.target_mode()
    }

    pub fn param_count(&self) -> usize {
        self.net.params.num_scalars()
    }

    pub fn trainable_count(&self) -> usize {
        self.net.params.num_trainable_scalars()
    }

    /// Names of layers with at least one trainable parameter.
    pub fn trainable_layers(&self) -> Vec<&str> {
        self.net
            .layers()
            .iter()
            .filter(|l| l.any_trainable(&self.net.params))
            .map(|l| l.spec.name.as_str())
            .collect()
    }

    /// Inference on one normalized window.
    pub fn predict_point(&self, window: &[f64]) -> Result<f64> {
        if window.len() != self.spec.window {
            return Err(Error::Usage(format!(
                "window has {} samples, model expects {}",
                window.len(),
                self.spec.window
            )));
        }
        let y = self.net.infer(&Tensor::new(vec![1, window.len()], window.to_vec())?)?;
        Ok(y.data()[0])
    }

    /// One row per parameterized layer: kind, filter or unit sizes, merge
    /// mode and activation.
    pub fn layer_table(&self) -> Vec<LayerRow> {
        let layers = self.net.layers();
        let mut rows = Vec::new();
        let (mut conv_i, mut gru_i) = (0, 0);
        let n_conv = layers
            .iter()
            .filter(|l| matches!(l.spec.kind, LayerKind::Conv1d { .. }))
            .count();
        for (i, l) in layers.iter().enumerate() {
            let relu_next = layers
                .get(i + 1)
                .is_some_and(|n| matches!(n.spec.kind, LayerKind::Relu));
            let act = if relu_next { "ReLU" } else { "Linear" };
            let row = match &l.spec.kind {
                LayerKind::Conv1d {
                    filter_size,
                    filters,
                    stride,
                    ..
                } => {
                    conv_i += 1;
                    let layer = if n_conv == 1 {
                        "Conv. layer".to_string()
                    } else {
                        format!("Conv. layer{conv_i}")
                    };
                    LayerRow {
                        layer,
                        filter_size: Some(*filter_size),
                        filters: Some(*filters),
                        stride: Some(*stride),
                        size: None,
                        units: None,
                        merge: None,
                        activation: act.into(),
                        params: l.param_count(&self.net.params),
                    }
                }
                LayerKind::Bigru { units, .. } => {
                    gru_i += 1;
                    LayerRow {
                        layer: format!("Bi-GRU layer{gru_i}"),
                        filter_size: None,
                        filters: None,
                        stride: None,
                        size: Some(*units),
                        units: None,
                        merge: Some("concat".into()),
                        activation: "tanh".into(),
                        params: l.param_count(&self.net.params),
                    }
                }
                LayerKind::Dense { units } => LayerRow {
                    layer: if l.spec.name == "output" {
                        "Output"
                    } else {
                        "Dense layer"
                    }
                    .into(),
                    filter_size: None,
                    filters: None,
                    stride: None,
                    size: None,
                    units: Some(*units),
                    merge: None,
                    activation: act.into(),
                    params: l.param_count(&self.net.params),
                },
                _ => continue,
            };
            rows.push(row);
        }
        rows
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRow {
    pub layer: String,
    pub filter_size: Option<usize>,
    pub filters: Option<usize>,
    pub stride: Option<usize>,
    pub size: Option<usize>,
    pub units: Option<usize>,
    pub merge: Option<String>,
    pub activation: String,
    pub params: usize,
}

impl fmt::Display for LayerRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.layer)?;
        if let Some(k) = self.filter_size {
            write!(f, "\tFilter size: {k}")?;
        }
        if let Some(n) = self.filters {
            write!(f, "\t# filters: {n}")?;
        }
        if let Some(s) = self.stride {
            write!(f, "\tStride: {s}")?;
        }
        if let Some(s) = self.size {
            write!(f, "\tSize: {s}")?;
        }
        if let Some(u) = self.units {
            write!(f, "\tUnits: {u}")?;
        }
        if let Some(m) = &self.merge {
            write!(f, "\tMerge: {m}")?;
        }
        write!(f, "\tActivation: {}", self.activation)
    }
}
