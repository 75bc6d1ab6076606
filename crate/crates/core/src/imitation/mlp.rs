//! Small dense network with flat parameter storage and hand-written backprop.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected network. Hidden layers use `hidden`, the output layer is linear.
///
/// Parameters are laid out layer by layer as a row-major `outputs × inputs`
/// weight block followed by the `outputs` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden: Activation,
    params: Vec<f64>,
}

/// Per-layer activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    pub fn zeros(sizes: &[usize], hidden: Activation) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let count = sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        Self { sizes: sizes.to_vec(), hidden, params: vec![0.0; count] }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn xavier<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes, hidden);
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.random_range(-limit..limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn from_layers(sizes: &[usize], hidden: Activation, layers: &[(Vec<f64>, Vec<f64>)]) -> Option<Self> {
        let mut net = Self::zeros(sizes, hidden);
        if layers.len() != sizes.len() - 1 {
            return None;
        }
        let mut params = Vec::with_capacity(net.params.len());
        for (w, (weights, bias)) in sizes.windows(2).zip(layers) {
            if weights.len() != w[0] * w[1] || bias.len() != w[1] {
                return None;
            }
            params.extend_from_slice(weights);
            params.extend_from_slice(bias);
        }
        net.params = params;
        Some(net)
    }

    /// `(weights, bias)` per layer, weights row-major.
    pub fn layers(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut out = Vec::new();
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            let nw = w[0] * w[1];
            out.push((
                self.params[offset..offset + nw].to_vec(),
                self.params[offset + nw..offset + nw + w[1]].to_vec(),
            ));
            offset += nw + w[1];
        }
        out
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty sizes")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_cached(input).activations.pop().unwrap_or_default()
    }

    pub fn forward_cached(&self, input: &[f64]) -> ForwardCache {
        debug_assert_eq!(input.len(), self.input_dim());
        let n_layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(input.to_vec());
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = &activations[l];
            let act = if l + 1 == n_layers { Activation::Identity } else { self.hidden };
            let y: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    let z = row.iter().zip(x).fold(bias[o], |acc, (w, x)| acc + w * x);
                    act.apply(z)
                })
                .collect();
            activations.push(y);
            offset += n_in * n_out + n_out;
        }
        ForwardCache { activations }
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64], grad: &mut [f64]) {
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        // gradient w.r.t. pre-activation of the current layer
        let mut delta = output_grad.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let base = offsets[l];
            let x = &cache.activations[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[base + o * n_in..base + (o + 1) * n_in];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
                grad[base + n_in * n_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let weights = &self.params[base..base + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                    *p += d * w;
                }
            }
            for (p, y) in prev.iter_mut().zip(x) {
                *p *= self.hidden.derivative_from_output(*y);
            }
            delta = prev;
        }
    }
}
