//! Feed-forward embedding extractor with hand-written reverse mode.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::embedding::ZERO_NORM_THRESHOLD;
use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};
use crate::rng::{seeded, STREAM_INIT};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => libm::tanh(v),
        }
    }

    /// Derivative at pre-activation `z` given the activation value `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Affine layer `y = x·W + b` with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(inputs, outputs),
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    #[inline]
    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }
}

/// Hidden layers apply the activation; the output layer is affine only and
/// optionally L2-normalised.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layers: Vec<Dense>,
    activation: Activation,
    normalize_output: bool,
    version: u64,
}

/// Per-layer parameter gradients, same shapes as the model layers.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

/// Activations saved by [`MlpModel::forward`] for [`MlpModel::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    version: u64,
    shapes: Vec<(usize, usize)>,
    /// Input to each layer.
    inputs: Vec<Matrix>,
    /// Hidden pre-activations.
    pre: Vec<Matrix>,
    /// Output before normalisation.
    raw: Matrix,
}

/// `widths = [in, h₁, …, out]` gives `widths.len() − 1` layers with
/// `U(−1, 1)·√(2/fan_in)` weights and zero biases.
pub fn init_model(
    widths: &[usize],
    activation: Activation,
    normalize_output: bool,
    seed: u64,
) -> Result<MlpModel> {
    if widths.len() < 2 {
        return Err(Error::InvalidSpec(format!(
            "need at least input and output widths, got {widths:?}"
        )));
    }
    if widths.contains(&0) {
        return Err(Error::InvalidSpec(format!("layer widths must be positive: {widths:?}")));
    }
    let mut rng = seeded(seed, STREAM_INIT);
    let layers = widths
        .windows(2)
        .map(|w| {
            let scale = libm::sqrt(2.0 / w[0] as f64);
            let mut layer = Dense::zeros(w[0], w[1]);
            for v in layer.weight.as_mut_slice() {
                *v = rng.random_range(-1.0..1.0) * scale;
            }
            layer
        })
        .collect();
    Ok(MlpModel {
        layers,
        activation,
        normalize_output,
        version: 0,
    })
}

impl MlpModel {
    /// Builds a model from explicit layers, checking that shapes chain.
    pub fn from_layers(layers: Vec<Dense>, activation: Activation, normalize_output: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidSpec("model has no layers".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.outputs() || l.inputs() == 0 || l.outputs() == 0 {
                return Err(Error::InvalidSpec(format!("layer {k} has inconsistent shapes")));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::InvalidSpec(format!(
                    "layer {k} emits {} values but layer {} expects {}",
                    pair[0].outputs(),
                    k + 1,
                    pair[1].inputs()
                )));
            }
        }
        Ok(Self {
            layers,
            activation,
            normalize_output,
            version: 0,
        })
    }

    #[inline]
    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access to the parameters. Invalidates earlier forward caches.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.version += 1;
        &mut self.layers
    }

    #[inline]
    pub fn activation(&self) -> Activation {
        self.activation
    }

    #[inline]
    pub fn normalize_output(&self) -> bool {
        self.normalize_output
    }

    pub fn set_normalize_output(&mut self, on: bool) {
        self.version += 1;
        self.normalize_output = on;
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Layer widths `[in, h₁, …, out]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(Dense::outputs));
        w
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.as_slice().len() + l.bias.len()).sum()
    }

    /// Embeddings only, without keeping a cache.
    pub fn embed(&self, inputs: &Matrix) -> Result<Matrix> {
        self.forward(inputs).map(|(out, _)| out)
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "input width {} but the model expects {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = inputs.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = h.matmul(&layer.weight)?;
            for i in 0..z.rows() {
                for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            layer_inputs.push(h);
            if k == last {
                h = z;
            } else {
                let mut a = z.clone();
                a.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = self.activation.apply(*v));
                pre.push(z);
                h = a;
            }
        }
        let raw = h;
        let mut out = raw.clone();
        if self.normalize_output {
            for i in 0..out.rows() {
                let row = out.row_mut(i);
                let n = norm(row);
                if !(n >= ZERO_NORM_THRESHOLD) {
                    return Err(if n.is_finite() { Error::ZeroNorm } else { Error::NonFiniteInput("network output") });
                }
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        let cache = ForwardCache {
            version: self.version,
            shapes: self.layers.iter().map(|l| l.weight.shape()).collect(),
            inputs: layer_inputs,
            pre,
            raw,
        };
        Ok((out, cache))
    }

    /// Parameter gradients for upstream gradient `grad_out` (∂L/∂embeddings).
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Matrix) -> Result<MlpGrads> {
        self.backward_with_input(cache, grad_out).map(|(g, _)| g)
    }

    /// Parameter gradients plus ∂L/∂inputs.
    pub fn backward_with_input(
        &self,
        cache: &ForwardCache,
        grad_out: &Matrix,
    ) -> Result<(MlpGrads, Matrix)> {
        let shapes_match = cache.shapes.len() == self.layers.len()
            && cache.shapes.iter().zip(&self.layers).all(|(s, l)| *s == l.weight.shape());
        if cache.version != self.version || !shapes_match {
            return Err(Error::StaleCache);
        }
        if grad_out.shape() != cache.raw.shape() {
            return Err(Error::shape(format!(
                "upstream gradient is {:?}, output is {:?}",
                grad_out.shape(),
                cache.raw.shape()
            )));
        }

        let mut delta = grad_out.clone();
        if self.normalize_output {
            // y = z/‖z‖  ⇒  ∂L/∂z = (g − (g·y)y)/‖z‖
            for i in 0..delta.rows() {
                let z = cache.raw.row(i);
                let n = norm(z);
                let g = delta.row(i);
                let gy = dot(g, z) / n;
                let row: Vec<f64> = g.iter().zip(z).map(|(gk, zk)| (gk - gy * zk / n) / n).collect();
                delta.row_mut(i).copy_from_slice(&row);
            }
        }

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let weight = cache.inputs[k].t_matmul(&delta)?;
            let mut bias = vec![0.0; layer.outputs()];
            for row in delta.iter_rows() {
                for (b, d) in bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            grads.push(Dense { weight, bias });
            let mut upstream = delta.matmul_t(&layer.weight)?;
            if k > 0 {
                let z = &cache.pre[k - 1];
                let a = &cache.inputs[k];
                for ((u, &zv), &av) in upstream
                    .as_mut_slice()
                    .iter_mut()
                    .zip(z.as_slice())
                    .zip(a.as_slice())
                {
                    *u *= self.activation.derivative(zv, av);
                }
            }
            delta = upstream;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta))
    }
}
