//! Layer descriptions and their runtime form.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use super::ops::{self, GruCache, GruWeights};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Same,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv1d {
        filter_size: usize,
        filters: usize,
        stride: usize,
        padding: Padding,
    },
    Dense {
        units: usize,
    },
    Gru {
        units: usize,
        return_sequence: bool,
    },
    Bigru {
        units: usize,
        return_sequence: bool,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    Flatten,
}

/// A named layer with its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    pub fn conv1d(name: &str, filter_size: usize, filters: usize) -> Self {
        Self::new(
            name,
            LayerKind::Conv1d {
                filter_size,
                filters,
                stride: 1,
                padding: Padding::Same,
            },
        )
    }

    pub fn dense(name: &str, units: usize) -> Self {
        Self::new(name, LayerKind::Dense { units })
    }

    pub fn bigru(name: &str, units: usize, return_sequence: bool) -> Self {
        Self::new(name, LayerKind::Bigru { units, return_sequence })
    }

    pub fn relu(name: &str) -> Self {
        Self::new(name, LayerKind::Relu)
    }

    pub fn dropout(name: &str, rate: f64) -> Self {
        Self::new(name, LayerKind::Dropout { rate })
    }

    pub fn flatten(name: &str) -> Self {
        Self::new(name, LayerKind::Flatten)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("layer {}: {what}", self.name)));
        match &self.kind {
            LayerKind::Conv1d {
                filter_size,
                filters,
                stride,
                ..
            } => {
                if *filter_size == 0 || *filters == 0 || *stride == 0 {
                    return bad("filter size, filter count and stride must be >= 1");
                }
                if *stride != 1 {
                    return bad("only stride 1 is supported");
                }
            }
            LayerKind::Dense { units } | LayerKind::Gru { units, .. } | LayerKind::Bigru { units, .. } => {
                if *units == 0 {
                    return bad("units must be >= 1");
                }
            }
            LayerKind::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return bad("dropout rate must lie in [0, 1)");
                }
            }
            LayerKind::Relu | LayerKind::Flatten => {}
        }
        Ok(())
    }

    /// Whether the layer owns parameters.
    pub fn has_params(&self) -> bool {
        matches!(
            self.kind,
            LayerKind::Conv1d { .. } | LayerKind::Dense { .. } | LayerKind::Gru { .. } | LayerKind::Bigru { .. }
        )
    }
}

/// Per-layer values saved by a training forward pass.
#[derive(Debug)]
pub(crate) enum Cache {
    Conv { patches: Vec<f64> },
    Dense { input: Vec<f64> },
    Gru(GruCache),
    Bigru { fwd: GruCache, bwd: GruCache },
    Relu { output: Vec<f64> },
    Dropout { mask: Option<Vec<f64>> },
    Flatten,
}

/// Training or inference behavior for a forward pass.
pub enum Mode<'a> {
    Infer,
    Train(&'a mut SeededRng),
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// A layer bound to its parameter slots and per-sample input shape.
#[derive(Clone, Debug)]
pub struct Layer {
    pub spec: LayerSpec,
    pub(crate) slots: Vec<usize>,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
}

fn seq_dims(shape: &[usize], name: &str) -> Result<(usize, usize)> {
    match shape {
        [len, ch] => Ok((*len, *ch)),
        _ => Err(Error::Config(format!(
            "layer {name} expects a [length, channels] input, got {shape:?}"
        ))),
    }
}

fn vec_dim(shape: &[usize], name: &str) -> Result<usize> {
    match shape {
        [n] => Ok(*n),
        _ => Err(Error::Config(format!(
            "layer {name} expects a flat input, got {shape:?}"
        ))),
    }
}

/// Parameter names registered for a layer, in slot order.
pub fn param_names(spec: &LayerSpec) -> Vec<String> {
    let n = &spec.name;
    match spec.kind {
        LayerKind::Conv1d { .. } => vec![format!("{n}.kernel"), format!("{n}.bias")],
        LayerKind::Dense { .. } => vec![format!("{n}.weight"), format!("{n}.bias")],
        LayerKind::Gru { .. } => gru_names(n, "fwd"),
        LayerKind::Bigru { .. } => {
            let mut v = gru_names(n, "fwd");
            v.extend(gru_names(n, "bwd"));
            v
        }
        _ => Vec::new(),
    }
}

fn gru_names(layer: &str, dir: &str) -> Vec<String> {
    vec![
        format!("{layer}.{dir}.input_weight"),
        format!("{layer}.{dir}.recurrent_weight"),
        format!("{layer}.{dir}.bias"),
    ]
}

impl Layer {
    /// Registers the layer's parameters (Glorot-uniform weights, zero biases)
    /// and infers its output shape.
    pub fn build(spec: LayerSpec, in_shape: &[usize], params: &mut ParamStore, rng: &mut SeededRng) -> Result<Self> {
        spec.validate()?;
        let names = param_names(&spec);
        let mut slots = Vec::new();
        let mut add = |params: &mut ParamStore, i: usize, t: Tensor| -> Result<()> {
            slots.push(params.insert(names[i].clone(), t)?);
            Ok(())
        };
        let out_shape = match &spec.kind {
            LayerKind::Conv1d {
                filter_size, filters, ..
            } => {
                let (len, ch) = seq_dims(in_shape, &spec.name)?;
                let (k, f) = (*filter_size, *filters);
                let w = glorot_uniform(k * ch, k * f, k * ch * f, rng);
                add(params, 0, Tensor::new(vec![k, ch, f], w)?)?;
                add(params, 1, Tensor::zeros(&[f]))?;
                vec![len, f]
            }
            LayerKind::Dense { units } => {
                let n = vec_dim(in_shape, &spec.name)?;
                let w = glorot_uniform(n, *units, n * units, rng);
                add(params, 0, Tensor::new(vec![n, *units], w)?)?;
                add(params, 1, Tensor::zeros(&[*units]))?;
                vec![*units]
            }
            LayerKind::Gru { units, return_sequence } | LayerKind::Bigru { units, return_sequence } => {
                let (len, ch) = seq_dims(in_shape, &spec.name)?;
                let u = *units;
                let dirs = if matches!(spec.kind, LayerKind::Bigru { .. }) {
                    2
                } else {
                    1
                };
                for d in 0..dirs {
                    let wx = glorot_uniform(ch, 3 * u, ch * 3 * u, rng);
                    add(params, 3 * d, Tensor::new(vec![ch, 3 * u], wx)?)?;
                    let wh = glorot_uniform(u, 3 * u, u * 3 * u, rng);
                    add(params, 3 * d + 1, Tensor::new(vec![u, 3 * u], wh)?)?;
                    add(params, 3 * d + 2, Tensor::zeros(&[3 * u]))?;
                }
                if *return_sequence {
                    vec![len, dirs * u]
                } else {
                    vec![dirs * u]
                }
            }
            LayerKind::Relu | LayerKind::Dropout { .. } => in_shape.to_vec(),
            LayerKind::Flatten => vec![in_shape.iter().product()],
        };
        Ok(Self {
            spec,
            slots,
            in_shape: in_shape.to_vec(),
            out_shape,
        })
    }

    pub fn param_count(&self, params: &ParamStore) -> usize {
        self.slots.iter().map(|&s| params.entry(s).value.len()).sum()
    }

    pub fn any_trainable(&self, params: &ParamStore) -> bool {
        self.slots.iter().any(|&s| params.entry(s).trainable)
    }

    fn gru_weights<'a>(&self, params: &'a ParamStore, dir: usize) -> GruWeights<'a> {
        let units = match self.spec.kind {
            LayerKind::Gru { units, .. } | LayerKind::Bigru { units, .. } => units,
            _ => unreachable!("not a recurrent layer"),
        };
        GruWeights {
            input: params.value(self.slots[3 * dir]),
            recurrent: params.value(self.slots[3 * dir + 1]),
            bias: params.value(self.slots[3 * dir + 2]),
            in_dim: self.in_shape[1],
            units,
        }
    }

    /// Forward pass on a batch laid out as `[batch, in_shape...]`.
    pub(crate) fn forward(
        &self,
        params: &ParamStore,
        x: Tensor,
        mode: &mut Mode<'_>,
        keep_cache: bool,
    ) -> Result<(Tensor, Option<Cache>)> {
        let batch = x.shape()[0];
        if x.shape()[1..] != self.in_shape[..] {
            return Err(Error::Usage(format!(
                "layer {} expects per-sample shape {:?}, got {:?}",
                self.spec.name,
                self.in_shape,
                &x.shape()[1..]
            )));
        }
        let mut out_shape = vec![batch];
        out_shape.extend_from_slice(&self.out_shape);
        let (data, cache) = match &self.spec.kind {
            LayerKind::Conv1d {
                filter_size, filters, ..
            } => {
                let (len, ch) = (self.in_shape[0], self.in_shape[1]);
                let (y, patches) = ops::conv1d_forward(
                    x.data(),
                    batch,
                    len,
                    ch,
                    *filter_size,
                    *filters,
                    params.value(self.slots[0]),
                    params.value(self.slots[1]),
                );
                (y, Cache::Conv { patches })
            }
            LayerKind::Dense { units } => {
                let y = ops::dense_forward(
                    x.data(),
                    batch,
                    self.in_shape[0],
                    *units,
                    params.value(self.slots[0]),
                    params.value(self.slots[1]),
                );
                let input = if keep_cache { x.into_data() } else { Vec::new() };
                (y, Cache::Dense { input })
            }
            LayerKind::Gru { units, return_sequence } => {
                let len = self.in_shape[0];
                let w = self.gru_weights(params, 0);
                let (states, cache) = ops::gru_sequence_forward(x.data(), batch, len, w, false, keep_cache);
                let y = if *return_sequence {
                    states
                } else {
                    let mut y = vec![0.0; batch * units];
                    for b in 0..batch {
                        let src = (b * len + len - 1) * units;
                        y[b * units..(b + 1) * units].copy_from_slice(&states[src..src + units]);
                    }
                    y
                };
                match cache {
                    Some(c) => (y, Cache::Gru(c)),
                    None => (y, Cache::Flatten),
                }
            }
            LayerKind::Bigru { units, return_sequence } => {
                let len = self.in_shape[0];
                let u = *units;
                let (fs, fc) =
                    ops::gru_sequence_forward(x.data(), batch, len, self.gru_weights(params, 0), false, keep_cache);
                let (bs, bc) =
                    ops::gru_sequence_forward(x.data(), batch, len, self.gru_weights(params, 1), true, keep_cache);
                let y = if *return_sequence {
                    let mut y = vec![0.0; batch * len * 2 * u];
                    for row in 0..batch * len {
                        y[row * 2 * u..row * 2 * u + u].copy_from_slice(&fs[row * u..(row + 1) * u]);
                        y[row * 2 * u + u..(row + 1) * 2 * u].copy_from_slice(&bs[row * u..(row + 1) * u]);
                    }
                    y
                } else {
                    let mut y = vec![0.0; batch * 2 * u];
                    for b in 0..batch {
                        let last = (b * len + len - 1) * u;
                        let first = b * len * u;
                        y[b * 2 * u..b * 2 * u + u].copy_from_slice(&fs[last..last + u]);
                        y[b * 2 * u + u..(b + 1) * 2 * u].copy_from_slice(&bs[first..first + u]);
                    }
                    y
                };
                match (fc, bc) {
                    (Some(fwd), Some(bwd)) => (y, Cache::Bigru { fwd, bwd }),
                    _ => (y, Cache::Flatten),
                }
            }
            LayerKind::Relu => {
                let mut y = x.into_data();
                y.iter_mut().for_each(|v| *v = v.max(0.0));
                let output = if keep_cache { y.clone() } else { Vec::new() };
                (y, Cache::Relu { output })
            }
            LayerKind::Dropout { rate } => {
                let mut y = x.into_data();
                let mask = match mode {
                    Mode::Train(rng) if *rate > 0.0 => {
                        let scale = 1.0 / (1.0 - rate);
                        let mask: Vec<f64> = (0..y.len())
                            .map(|_| if rng.random::<f64>() < *rate { 0.0 } else { scale })
                            .collect();
                        y.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                        Some(mask)
                    }
                    _ => None,
                };
                (y, Cache::Dropout { mask })
            }
            LayerKind::Flatten => (x.into_data(), Cache::Flatten),
        };
        let out = Tensor::new(out_shape, data)?;
        Ok((out, keep_cache.then_some(cache)))
    }

    /// Backward pass. Accumulates parameter gradients when `param_grads` and
    /// returns the input gradient when `want_dx`.
    pub(crate) fn backward(
        &self,
        params: &mut ParamStore,
        cache: Cache,
        dy: Tensor,
        param_grads: bool,
        want_dx: bool,
    ) -> Result<Option<Tensor>> {
        let batch = dy.shape()[0];
        let mut in_shape = vec![batch];
        in_shape.extend_from_slice(&self.in_shape);
        let dx: Option<Vec<f64>> = match (&self.spec.kind, cache) {
            (
                LayerKind::Conv1d {
                    filter_size, filters, ..
                },
                Cache::Conv { patches },
            ) => {
                let (len, ch) = (self.in_shape[0], self.in_shape[1]);
                let kernel = params.value(self.slots[0]).to_vec();
                let mut gk = vec![0.0; kernel.len()];
                let mut gb = vec![0.0; *filters];
                let dx = ops::conv1d_backward(
                    &patches,
                    dy.data(),
                    batch,
                    len,
                    ch,
                    *filter_size,
                    *filters,
                    &kernel,
                    param_grads.then_some((&mut gk[..], &mut gb[..])),
                    want_dx,
                );
                if param_grads {
                    self.add_grad(params, 0, &gk);
                    self.add_grad(params, 1, &gb);
                }
                dx
            }
            (LayerKind::Dense { units }, Cache::Dense { input }) => {
                let n = self.in_shape[0];
                let weight = params.value(self.slots[0]);
                let mut gw = if param_grads {
                    vec![0.0; weight.len()]
                } else {
                    Vec::new()
                };
                let mut gb = vec![0.0; *units];
                let dx = ops::dense_backward(
                    &input,
                    dy.data(),
                    batch,
                    n,
                    *units,
                    weight,
                    param_grads.then_some((&mut gw[..], &mut gb[..])),
                    want_dx,
                );
                if param_grads {
                    self.add_grad(params, 0, &gw);
                    self.add_grad(params, 1, &gb);
                }
                dx
            }
            (LayerKind::Gru { units, return_sequence }, Cache::Gru(c)) => {
                let len = self.in_shape[0];
                let dout = if *return_sequence {
                    dy.into_data()
                } else {
                    let mut d = vec![0.0; batch * len * units];
                    for b in 0..batch {
                        let dst = (b * len + len - 1) * units;
                        d[dst..dst + units].copy_from_slice(&dy.data()[b * units..(b + 1) * units]);
                    }
                    d
                };
                self.gru_dir_backward(params, 0, &c, &dout, param_grads, want_dx)
            }
            (LayerKind::Bigru { units, return_sequence }, Cache::Bigru { fwd, bwd }) => {
                let len = self.in_shape[0];
                let u = *units;
                let mut df = vec![0.0; batch * len * u];
                let mut db = vec![0.0; batch * len * u];
                let g = dy.data();
                if *return_sequence {
                    for row in 0..batch * len {
                        df[row * u..(row + 1) * u].copy_from_slice(&g[row * 2 * u..row * 2 * u + u]);
                        db[row * u..(row + 1) * u].copy_from_slice(&g[row * 2 * u + u..(row + 1) * 2 * u]);
                    }
                } else {
                    for b in 0..batch {
                        let last = (b * len + len - 1) * u;
                        let first = b * len * u;
                        df[last..last + u].copy_from_slice(&g[b * 2 * u..b * 2 * u + u]);
                        db[first..first + u].copy_from_slice(&g[b * 2 * u + u..(b + 1) * 2 * u]);
                    }
                }
                let dxf = self.gru_dir_backward(params, 0, &fwd, &df, param_grads, want_dx);
                let dxb = self.gru_dir_backward(params, 1, &bwd, &db, param_grads, want_dx);
                match (dxf, dxb) {
                    (Some(mut a), Some(b)) => {
                        a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                        Some(a)
                    }
                    _ => None,
                }
            }
            (LayerKind::Relu, Cache::Relu { output }) => want_dx.then(|| {
                dy.data()
                    .iter()
                    .zip(&output)
                    .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                    .collect()
            }),
            (LayerKind::Dropout { .. }, Cache::Dropout { mask }) => want_dx.then(|| match mask {
                Some(m) => dy.data().iter().zip(&m).map(|(g, k)| g * k).collect(),
                None => dy.into_data(),
            }),
            (LayerKind::Flatten, Cache::Flatten) => want_dx.then(|| dy.into_data()),
            _ => {
                return Err(Error::Usage(format!(
                    "layer {} received a cache from a different layer kind",
                    self.spec.name
                )))
            }
        };
        dx.map(|d| Tensor::new(in_shape, d)).transpose()
    }

    fn gru_dir_backward(
        &self,
        params: &mut ParamStore,
        dir: usize,
        cache: &GruCache,
        dout: &[f64],
        param_grads: bool,
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        let w = self.gru_weights(params, dir);
        let (mut gx, mut gh, mut gb) = if param_grads {
            (
                vec![0.0; w.input.len()],
                vec![0.0; w.recurrent.len()],
                vec![0.0; w.bias.len()],
            )
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        let dx = ops::gru_sequence_backward(
            cache,
            dout,
            w,
            param_grads.then_some((&mut gx[..], &mut gh[..], &mut gb[..])),
            want_dx,
        );
        if param_grads {
            self.add_grad(params, 3 * dir, &gx);
            self.add_grad(params, 3 * dir + 1, &gh);
            self.add_grad(params, 3 * dir + 2, &gb);
        }
        dx
    }

    fn add_grad(&self, params: &mut ParamStore, i: usize, g: &[f64]) {
        params
            .grad_mut(self.slots[i])
            .iter_mut()
            .zip(g)
            .for_each(|(a, b)| *a += b);
    }
}
