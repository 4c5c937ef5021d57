//! Sequential networks with a recorded forward pass for backpropagation.

use super::layer::{Cache, Layer, LayerSpec, Mode};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Record of one training forward pass, consumed by [`Network::backward`].
#[derive(Debug, Default)]
pub struct Graph {
    caches: Vec<Option<Cache>>,
    /// Lowest layer whose cache was kept.
    start: usize,
    recorded: bool,
    keep_all: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph that caches every layer, so the backward pass can also
    /// return the input gradient.
    pub fn with_input_grad() -> Self {
        Self {
            keep_all: true,
            ..Self::default()
        }
    }

    pub fn is_recorded(&self) -> bool {
        self.recorded
    }
}

/// A stack of layers mapping `[batch, input_shape...]` to `[batch, out...]`.
#[derive(Clone, Debug)]
pub struct Network {
    layers: Vec<Layer>,
    pub params: ParamStore,
    input_shape: Vec<usize>,
}

impl Network {
    /// Builds the layers in order, drawing initial weights from `rng`.
    pub fn build(input_shape: &[usize], specs: &[LayerSpec], rng: &mut SeededRng) -> Result<Self> {
        let mut params = ParamStore::new();
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for spec in specs {
            let layer = Layer::build(spec.clone(), &shape, &mut params, rng)?;
            shape = layer.out_shape.clone();
            layers.push(layer);
        }
        Ok(Self {
            layers,
            params,
            input_shape: input_shape.to_vec(),
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers
            .last()
            .map(|l| l.out_shape.as_slice())
            .unwrap_or(&self.input_shape)
    }

    fn lowest_trainable(&self) -> Option<usize> {
        self.layers.iter().position(|l| l.any_trainable(&self.params))
    }

    fn batch_input(&self, x: &Tensor) -> Result<Tensor> {
        let per: usize = self.input_shape.iter().product();
        if x.shape().is_empty() || x.len() != x.shape()[0] * per {
            return Err(Error::Usage(format!(
                "input {:?} is not a batch of {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        let mut shape = vec![x.shape()[0]];
        shape.extend_from_slice(&self.input_shape);
        x.clone().reshape(&shape)
    }

    /// Inference forward pass; safe to call concurrently.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.batch_input(x)?;
        let mut mode = Mode::Infer;
        for layer in &self.layers {
            h = layer.forward(&self.params, h, &mut mode, false)?.0;
        }
        Ok(h)
    }

    /// Forward pass that records what [`Network::backward`] needs.
    ///
    /// Caches are kept only from the lowest layer holding a trainable
    /// parameter upwards.
    pub fn forward(&self, x: &Tensor, graph: &mut Graph, mut mode: Mode<'_>) -> Result<Tensor> {
        let mut h = self.batch_input(x)?;
        let start = if graph.keep_all {
            0
        } else {
            self.lowest_trainable().unwrap_or(self.layers.len())
        };
        graph.caches.clear();
        graph.start = start;
        for (i, layer) in self.layers.iter().enumerate() {
            let (out, cache) = layer.forward(&self.params, h, &mut mode, i >= start)?;
            graph.caches.push(cache);
            h = out;
        }
        graph.recorded = true;
        Ok(h)
    }

    /// Accumulates `∂loss/∂param` into the store's gradient buffers, given
    /// `dy = ∂loss/∂output`. Consumes the graph.
    pub fn backward(&mut self, graph: &mut Graph, dy: &Tensor) -> Result<()> {
        self.backward_impl(graph, dy, false).map(|_| ())
    }

    /// Like [`Network::backward`] but also returns `∂loss/∂input`.
    pub fn backward_with_input_grad(&mut self, graph: &mut Graph, dy: &Tensor) -> Result<Tensor> {
        self.backward_impl(graph, dy, true)?
            .ok_or_else(|| Error::Usage("input gradient needs a graph from Graph::with_input_grad".into()))
    }

    fn backward_impl(&mut self, graph: &mut Graph, dy: &Tensor, want_input_grad: bool) -> Result<Option<Tensor>> {
        if !graph.recorded {
            return Err(Error::Usage("backward called before forward".into()));
        }
        graph.recorded = false;
        if want_input_grad && graph.start != 0 {
            return Ok(None);
        }
        let mut g = dy.clone();
        let start = graph.start;
        for i in (start..self.layers.len()).rev() {
            let cache = graph.caches[i]
                .take()
                .ok_or_else(|| Error::Usage("missing cache for layer".into()))?;
            let layer = &self.layers[i];
            let param_grads = layer.any_trainable(&self.params);
            let want_dx = i > start || want_input_grad;
            match layer.backward(&mut self.params, cache, g, param_grads, want_dx)? {
                Some(dx) => g = dx,
                None => return Ok(None),
            }
        }
        graph.caches.clear();
        Ok(Some(g))
    }
}
