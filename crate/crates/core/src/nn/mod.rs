//! A small fully connected network with hand-written backpropagation.
//!
//! Hidden layers use `tanh`; the last layer is affine. Weights are stored
//! row-major as `outputs x inputs`.

mod adam;
mod checkpoint;
mod policy;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use adam::{clip_grad_norm, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use policy::{gaussian_entropy, gaussian_logprob, GaussianPolicy, PolicyGrads};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs)
                .map(|_| rng.random_range(-limit..=limit))
                .collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dense>", into = "Vec<Dense>")]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl TryFrom<Vec<Dense>> for Mlp {
    type Error = Error;

    fn try_from(layers: Vec<Dense>) -> Result<Self> {
        Mlp::from_layers(layers)
    }
}

impl From<Mlp> for Vec<Dense> {
    fn from(mlp: Mlp) -> Self {
        mlp.layers
    }
}

/// Layer inputs recorded by [`Mlp::forward`], needed for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[i]` is what layer `i` consumed; hidden entries are post-`tanh`.
    inputs: Vec<Vec<f64>>,
}

impl Mlp {
    /// Builds a Glorot-initialised network with the given layer widths,
    /// input first.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs an input and an output width");
        let layers = sizes.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::mismatch("at least one layer", "none"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.len() != layer.inputs * layer.outputs || layer.bias.len() != layer.outputs {
                return Err(Error::mismatch(
                    format!("layer {i} of {}x{}", layer.outputs, layer.inputs),
                    format!("{} weights and {} biases", layer.weights.len(), layer.bias.len()),
                ));
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::config(format!("layers[{i}]"), "non-finite parameter"));
            }
            if i > 0 && layers[i - 1].outputs != layer.inputs {
                return Err(Error::mismatch(
                    format!("layer {i} input width {}", layers[i - 1].outputs),
                    layer.inputs,
                ));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if input.len() != self.input_dim() {
            return Err(Error::mismatch(self.input_dim(), input.len()));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(&x);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            inputs.push(std::mem::replace(&mut x, z));
        }
        Ok((x, ForwardCache { inputs }))
    }

    /// Forward pass without keeping the cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input).map(|(out, _)| out)
    }

    /// Reverse-mode pass. Returns parameter gradients (shaped like the
    /// network) and the gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<(Mlp, Vec<f64>)> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::mismatch(
                format!("cache for {} layers", self.layers.len()),
                cache.inputs.len(),
            ));
        }
        if grad_output.len() != self.output_dim() {
            return Err(Error::mismatch(self.output_dim(), grad_output.len()));
        }
        let mut grads: Vec<Dense> = self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();
        let mut delta = grad_output.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let x = &cache.inputs[i];
            if x.len() != layer.inputs {
                return Err(Error::mismatch(layer.inputs, x.len()));
            }
            let g = &mut grads[i];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] = *d;
                for (gw, xi) in g.weights[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(x) {
                    *gw = d * xi;
                }
            }
            let mut upstream = vec![0.0; layer.inputs];
            for (row, d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                for (u, w) in upstream.iter_mut().zip(row) {
                    *u += w * d;
                }
            }
            if i > 0 {
                // x is tanh output of the previous layer: d tanh = 1 - tanh².
                for (u, a) in upstream.iter_mut().zip(x) {
                    *u *= 1.0 - a * a;
                }
            }
            delta = upstream;
        }
        Ok((Mlp { layers: grads }, delta))
    }

    pub fn zeros_like(&self) -> Mlp {
        Mlp {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    /// Adds `scale * other` in place. Shapes must match.
    pub fn add_scaled(&mut self, other: &Mlp, scale: f64) {
        for (a, b) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }

    /// Parameter tensors in a fixed order: weights then bias, layer by layer.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }
}
