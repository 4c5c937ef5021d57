//! Minimal network toolkit: tensors flow through a fixed stack of
//! convolutional, dense and bidirectional GRU layers, with reverse-mode
//! gradients for scalar losses.

pub mod init;
mod layer;
mod network;
pub mod ops;
mod params;

pub use layer::{param_names, Layer, LayerKind, LayerSpec, Mode, Padding};
pub use network::{Graph, Network};
pub use params::{Param, ParamStore};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use ops::GruWeights;

fn lookup<'a>(params: &'a ParamStore, name: &str, shape: &[usize]) -> Result<&'a [f64]> {
    let p = params
        .get(name)
        .ok_or_else(|| Error::Config(format!("missing parameter {name}")))?;
    if p.value.shape() != shape {
        return Err(Error::Config(format!(
            "parameter {name} has shape {:?}, expected {:?}",
            p.value.shape(),
            shape
        )));
    }
    Ok(p.value.data())
}

/// Batch-of-one view: `[len, ch]` becomes `(1, len, ch)`, `[b, len, ch]` stays.
fn seq_view(input: &Tensor) -> Result<(usize, usize, usize)> {
    match *input.shape() {
        [len, ch] => Ok((1, len, ch)),
        [b, len, ch] => Ok((b, len, ch)),
        ref s => Err(Error::Config(format!("expected a sequence tensor, got {s:?}"))),
    }
}

/// Stride-1 "same" convolution of a `[length, in_channels]` (or batched)
/// input with the `<name>.kernel` / `<name>.bias` tensors of `params`.
pub fn conv1d_forward(input: &Tensor, spec: &LayerSpec, params: &ParamStore) -> Result<Tensor> {
    spec.validate()?;
    let LayerKind::Conv1d {
        filter_size, filters, ..
    } = spec.kind
    else {
        return Err(Error::Config(format!("{} is not a conv1d layer", spec.name)));
    };
    let (b, len, ch) = seq_view(input)?;
    let names = param_names(spec);
    let kernel = lookup(params, &names[0], &[filter_size, ch, filters])?;
    let bias = lookup(params, &names[1], &[filters])?;
    let (y, _) = ops::conv1d_forward(input.data(), b, len, ch, filter_size, filters, kernel, bias);
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = filters;
    Tensor::new(shape, y)
}

/// `inputᵀ·weight + bias` for a flat input (or a `[batch, n]` matrix).
pub fn dense_forward(input: &Tensor, spec: &LayerSpec, params: &ParamStore) -> Result<Tensor> {
    spec.validate()?;
    let LayerKind::Dense { units } = spec.kind else {
        return Err(Error::Config(format!("{} is not a dense layer", spec.name)));
    };
    let (b, n) = match *input.shape() {
        [n] => (1, n),
        [b, n] => (b, n),
        ref s => return Err(Error::Config(format!("dense input must be flat, got {s:?}"))),
    };
    let names = param_names(spec);
    let weight = lookup(params, &names[0], &[n, units])?;
    let bias = lookup(params, &names[1], &[units])?;
    let y = ops::dense_forward(input.data(), b, n, units, weight, bias);
    let shape = if input.shape().len() == 1 {
        vec![units]
    } else {
        vec![b, units]
    };
    Tensor::new(shape, y)
}

fn gru_weights<'a>(
    params: &'a ParamStore,
    layer: &str,
    dir: &str,
    in_dim: usize,
    units: usize,
) -> Result<GruWeights<'a>> {
    Ok(GruWeights {
        input: lookup(params, &format!("{layer}.{dir}.input_weight"), &[in_dim, 3 * units])?,
        recurrent: lookup(params, &format!("{layer}.{dir}.recurrent_weight"), &[units, 3 * units])?,
        bias: lookup(params, &format!("{layer}.{dir}.bias"), &[3 * units])?,
        in_dim,
        units,
    })
}

/// One step of the forward-direction cell of `layer`:
/// `z = σ(·)`, `r = σ(·)`, `h̃ = tanh(Wx + r⊙(Uh) + b)`, `h' = (1−z)⊙h + z⊙h̃`.
pub fn gru_cell_step(x: &Tensor, h: &Tensor, layer: &str, params: &ParamStore) -> Result<Tensor> {
    let w = gru_weights(params, layer, "fwd", x.len(), h.len())?;
    Ok(Tensor::from_vec(ops::gru_step(x.data(), h.data(), w)))
}

/// Bidirectional GRU over a `[length, in]` input with zero initial states.
///
/// With `return_sequence` the result is `[length, 2·units]` (forward state,
/// backward state per step); otherwise it is the forward final state followed
/// by the backward final state.
pub fn bigru_forward(input: &Tensor, spec: &LayerSpec, params: &ParamStore, return_sequence: bool) -> Result<Tensor> {
    spec.validate()?;
    let units = match spec.kind {
        LayerKind::Bigru { units, .. } => units,
        _ => return Err(Error::Config(format!("{} is not a bigru layer", spec.name))),
    };
    let (b, len, ch) = seq_view(input)?;
    let fwd = gru_weights(params, &spec.name, "fwd", ch, units)?;
    let bwd = gru_weights(params, &spec.name, "bwd", ch, units)?;
    let (fs, _) = ops::gru_sequence_forward(input.data(), b, len, fwd, false, false);
    let (bs, _) = ops::gru_sequence_forward(input.data(), b, len, bwd, true, false);
    let u = units;
    let batched = input.shape().len() == 3;
    if return_sequence {
        let mut y = vec![0.0; b * len * 2 * u];
        for row in 0..b * len {
            y[row * 2 * u..row * 2 * u + u].copy_from_slice(&fs[row * u..(row + 1) * u]);
            y[row * 2 * u + u..(row + 1) * 2 * u].copy_from_slice(&bs[row * u..(row + 1) * u]);
        }
        let shape = if batched { vec![b, len, 2 * u] } else { vec![len, 2 * u] };
        Tensor::new(shape, y)
    } else {
        let mut y = vec![0.0; b * 2 * u];
        for i in 0..b {
            let last = (i * len + len - 1) * u;
            let first = i * len * u;
            y[i * 2 * u..i * 2 * u + u].copy_from_slice(&fs[last..last + u]);
            y[i * 2 * u + u..(i + 1) * 2 * u].copy_from_slice(&bs[first..first + u]);
        }
        let shape = if batched { vec![b, 2 * u] } else { vec![2 * u] };
        Tensor::new(shape, y)
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

/// Inverted dropout: in training each element is zeroed with probability
/// `rate` and survivors are scaled by `1/(1−rate)`; at inference it is the
/// identity.
pub fn dropout(x: &Tensor, rate: f64, rng: &mut crate::rng::SeededRng, training: bool) -> Result<Tensor> {
    use rand::Rng;
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config("dropout rate must lie in [0, 1)".into()));
    }
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let scale = 1.0 / (1.0 - rate);
    let data = x
        .data()
        .iter()
        .map(|v| if rng.random::<f64>() < rate { 0.0 } else { v * scale })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

pub fn flatten(x: &Tensor) -> Tensor {
    Tensor::from_vec(x.data().to_vec())
}
