//! Small shared pieces for the two hand-rolled networks: activations,
//! seeded initialization, a flat parameter layout and the Adam optimizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    /// Linear hidden layer; used to check derivatives against closed forms.
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// A dense layer's position inside a flat parameter vector.
/// Weights are row-major `[out][in]`, followed by `out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseSlot {
    pub offset: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl DenseSlot {
    pub fn weight_len(&self) -> usize {
        self.inputs * self.outputs
    }

    pub fn len(&self) -> usize {
        self.weight_len() + self.outputs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn end(&self) -> usize {
        self.offset + self.len()
    }

    pub fn weights<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset..self.offset + self.weight_len()]
    }

    pub fn bias<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset + self.weight_len()..self.end()]
    }

    pub fn weights_mut<'a>(&self, params: &'a mut [f64]) -> &'a mut [f64] {
        let start = self.offset;
        let end = start + self.weight_len();
        &mut params[start..end]
    }

    pub fn bias_mut<'a>(&self, params: &'a mut [f64]) -> &'a mut [f64] {
        let start = self.offset + self.weight_len();
        let end = self.end();
        &mut params[start..end]
    }

    /// `out = W x + b`
    pub fn forward(&self, params: &[f64], x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        debug_assert_eq!(out.len(), self.outputs);
        let w = self.weights(params);
        let b = self.bias(params);
        for (o, row) in w.chunks_exact(self.inputs).enumerate() {
            out[o] = b[o] + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients for upstream `dout` and adds `Wᵀ dout` into `dx`.
    pub fn backward(&self, params: &[f64], x: &[f64], dout: &[f64], grads: &mut [f64], dx: Option<&mut [f64]>) {
        {
            let gw = self.weights_mut(grads);
            for (o, row) in gw.chunks_exact_mut(self.inputs).enumerate() {
                let d = dout[o];
                if d != 0.0 {
                    for (g, xi) in row.iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
        }
        {
            let gb = self.bias_mut(grads);
            for (g, d) in gb.iter_mut().zip(dout) {
                *g += d;
            }
        }
        if let Some(dx) = dx {
            let w = self.weights(params);
            for (o, row) in w.chunks_exact(self.inputs).enumerate() {
                let d = dout[o];
                if d != 0.0 {
                    for (dxi, wi) in dx.iter_mut().zip(row) {
                        *dxi += d * wi;
                    }
                }
            }
        }
    }

    /// Uniform in ±1/√fan_in for weights and biases.
    pub fn init_uniform(&self, params: &mut [f64], rng: &mut SimRng) {
        let bound = 1.0 / (self.inputs.max(1) as f64).sqrt();
        for p in &mut params[self.offset..self.end()] {
            *p = rng.random_range(-bound..bound);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, len: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
