//! Mixture density network `g(μ)`: joint angles to a mixture of isotropic
//! Gaussians over the hand's image position.
//!
//! Layout of the flat parameter vector: hidden layer, mixing logits head,
//! means head (kernel-major, x then y), log-sigma head.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{log_sum_exp, Activation, Adam, AdamConfig, DenseSlot};
use crate::rng::SimRng;
use crate::weights::WeightFile;
use crate::{ImageJacobian, ImagePoint, Joints, DOF};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdnConfig {
    pub input_dim: usize,
    pub hidden_units: usize,
    pub mixtures: usize,
    pub output_dim: usize,
    pub activation: Activation,
    /// Kernel widths are `sigma_min + exp(s)`.
    pub sigma_min: f64,
}

impl Default for MdnConfig {
    fn default() -> Self {
        Self {
            input_dim: DOF,
            hidden_units: 20,
            mixtures: 4,
            output_dim: 2,
            activation: Activation::Tanh,
            sigma_min: 0.0,
        }
    }
}

impl MdnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim != DOF {
            return Err(Error::config("mdn.input_dim", format!("must be {DOF}")));
        }
        if self.output_dim != 2 {
            return Err(Error::config("mdn.output_dim", "must be 2"));
        }
        if self.hidden_units == 0 {
            return Err(Error::config("mdn.hidden_units", "must be positive"));
        }
        if self.mixtures == 0 {
            return Err(Error::config("mdn.mixtures", "must be positive"));
        }
        if !(self.sigma_min >= 0.0 && self.sigma_min.is_finite()) {
            return Err(Error::config("mdn.sigma_min", "must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    hidden: DenseSlot,
    pi: DenseSlot,
    mean: DenseSlot,
    log_sigma: DenseSlot,
}

impl Layout {
    fn new(cfg: &MdnConfig) -> Self {
        let h = cfg.hidden_units;
        let k = cfg.mixtures;
        let hidden = DenseSlot {
            offset: 0,
            inputs: cfg.input_dim,
            outputs: h,
        };
        let pi = DenseSlot {
            offset: hidden.end(),
            inputs: h,
            outputs: k,
        };
        let mean = DenseSlot {
            offset: pi.end(),
            inputs: h,
            outputs: k * cfg.output_dim,
        };
        let log_sigma = DenseSlot {
            offset: mean.end(),
            inputs: h,
            outputs: k,
        };
        Self {
            hidden,
            pi,
            mean,
            log_sigma,
        }
    }

    fn len(&self) -> usize {
        self.log_sigma.end()
    }
}

/// Mixture parameters for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureOutput {
    pub pi: Vec<f64>,
    pub means: Vec<ImagePoint>,
    pub sigma: Vec<f64>,
}

impl MixtureOutput {
    pub fn mixtures(&self) -> usize {
        self.pi.len()
    }

    /// Log of `Π_i N(s; s̄_i, σ_i² I)` for each kernel.
    pub fn log_components(&self, s: &ImagePoint) -> Vec<f64> {
        (0..self.mixtures())
            .map(|i| {
                let sig2 = self.sigma[i] * self.sigma[i];
                self.pi[i].ln() - (s - self.means[i]).norm_squared() / (2.0 * sig2) - sig2.ln() - LN_2PI
            })
            .collect()
    }

    /// Posterior kernel responsibilities at `s`.
    pub fn responsibilities(&self, s: &ImagePoint) -> Vec<f64> {
        let lc = self.log_components(s);
        let lse = log_sum_exp(&lc);
        lc.iter().map(|l| (l - lse).exp()).collect()
    }
}

/// Most probable kernel and its mean and width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub g: ImagePoint,
    pub sigma: f64,
    pub index: usize,
}

/// Argmax of the mixing coefficients; ties go to the lowest index.
pub fn predict(mix: &MixtureOutput) -> Prediction {
    let mut index = 0;
    for (i, &p) in mix.pi.iter().enumerate().skip(1) {
        if p > mix.pi[index] {
            index = i;
        }
    }
    Prediction {
        g: mix.means[index],
        sigma: mix.sigma[index],
        index,
    }
}

/// `−ln Σ_i Π_i N(s; s̄_i, σ_i² I₂)`.
pub fn nll(mix: &MixtureOutput, s: &ImagePoint) -> f64 {
    -log_sum_exp(&mix.log_components(s))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainBatch {
    pub qx: Vec<Joints>,
    pub qy: Vec<ImagePoint>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.qx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qx.is_empty()
    }

    pub fn push(&mut self, x: Joints, y: ImagePoint) {
        self.qx.push(x);
        self.qy.push(y);
    }

    pub fn clear(&mut self) {
        self.qx.clear();
        self.qy.clear();
    }

    pub fn validate(&self) -> Result<()> {
        if self.qx.len() != self.qy.len() {
            return Err(Error::Shape(format!("{} inputs vs {} targets", self.qx.len(), self.qy.len())));
        }
        if self.qx.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if self.qx.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("training inputs"));
        }
        if self.qy.iter().any(|y| !(0.0..=1.0).contains(&y.x) || !(0.0..=1.0).contains(&y.y)) {
            return Err(Error::Shape("training targets must lie in [0,1]²".into()));
        }
        Ok(())
    }
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
struct Pass {
    hidden: Vec<f64>,
    pi_logits: Vec<f64>,
    means: Vec<f64>,
    log_sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mdn {
    cfg: MdnConfig,
    layout_len: usize,
    params: Vec<f64>,
}

impl Mdn {
    /// Uniform ±1/√fan_in initialization.
    pub fn new(cfg: MdnConfig, rng: &mut SimRng) -> Result<Self> {
        let mut m = Self::zeros(cfg)?;
        let l = m.layout();
        for slot in [l.hidden, l.pi, l.mean, l.log_sigma] {
            slot.init_uniform(&mut m.params, rng);
        }
        Ok(m)
    }

    pub fn zeros(cfg: MdnConfig) -> Result<Self> {
        cfg.validate()?;
        let len = Layout::new(&cfg).len();
        Ok(Self {
            cfg,
            layout_len: len,
            params: vec![0.0; len],
        })
    }

    pub fn config(&self) -> &MdnConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.cfg)
    }

    fn pass(&self, mu: &Joints) -> Pass {
        let l = self.layout();
        let mut hidden = vec![0.0; l.hidden.outputs];
        l.hidden.forward(&self.params, mu.as_slice(), &mut hidden);
        for h in &mut hidden {
            *h = self.cfg.activation.apply(*h);
        }
        let mut pi_logits = vec![0.0; l.pi.outputs];
        l.pi.forward(&self.params, &hidden, &mut pi_logits);
        let mut means = vec![0.0; l.mean.outputs];
        l.mean.forward(&self.params, &hidden, &mut means);
        let mut log_sigma = vec![0.0; l.log_sigma.outputs];
        l.log_sigma.forward(&self.params, &hidden, &mut log_sigma);
        Pass {
            hidden,
            pi_logits,
            means,
            log_sigma,
        }
    }

    fn mixture_of(&self, pass: &Pass) -> MixtureOutput {
        let lse = log_sum_exp(&pass.pi_logits);
        MixtureOutput {
            pi: pass.pi_logits.iter().map(|z| (z - lse).exp()).collect(),
            means: pass.means.chunks_exact(2).map(|c| ImagePoint::new(c[0], c[1])).collect(),
            sigma: pass.log_sigma.iter().map(|z| self.cfg.sigma_min + z.exp()).collect(),
        }
    }

    pub fn forward(&self, mu: &Joints) -> Result<MixtureOutput> {
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mdn input"));
        }
        Ok(self.mixture_of(&self.pass(mu)))
    }

    /// `∂s̄_i/∂μ` for kernel `index`, by backprop through the mean head.
    pub fn mean_jacobian(&self, mu: &Joints, index: usize) -> ImageJacobian {
        let l = self.layout();
        let pass = self.pass(mu);
        let w_h = l.hidden.weights(&self.params);
        let w_m = l.mean.weights(&self.params);
        let hdim = l.hidden.outputs;
        let mut jac = ImageJacobian::zeros();
        for r in 0..2 {
            let row = &w_m[(2 * index + r) * hdim..(2 * index + r + 1) * hdim];
            for (j, (&wm, &h)) in row.iter().zip(&pass.hidden).enumerate() {
                let d = wm * self.cfg.activation.derivative_from_output(h);
                if d == 0.0 {
                    continue;
                }
                for c in 0..DOF {
                    jac[(r, c)] += d * w_h[j * DOF + c];
                }
            }
        }
        jac
    }

    /// Responsibility-weighted pull of the most probable kernel,
    /// `Jᵀ P_{i*} (s̄_{i*} − s_v)/σ_{i*}²`. It is the μ-gradient of the
    /// kernel's quadratic surprise with `P`, `σ` and `i*` held fixed, so
    /// descending it moves the prediction toward `s_v`.
    pub fn likelihood_gradient(&self, mu: &Joints, s_v: &ImagePoint, mix: &MixtureOutput) -> Joints {
        let p = predict(mix);
        let resp = mix.responsibilities(s_v)[p.index];
        let jac = self.mean_jacobian(mu, p.index);
        jac.transpose() * ((p.g - s_v) * (resp / (p.sigma * p.sigma)))
    }

    /// Mean negative log-likelihood over a batch.
    pub fn batch_nll(&self, batch: &TrainBatch) -> Result<f64> {
        batch.validate()?;
        let total: f64 = batch
            .qx
            .iter()
            .zip(&batch.qy)
            .map(|(x, y)| nll(&self.mixture_of(&self.pass(x)), y))
            .sum();
        Ok(total / batch.len() as f64)
    }

    /// Mean NLL and its parameter gradient.
    pub fn loss_and_grad(&self, batch: &TrainBatch) -> Result<(f64, Vec<f64>)> {
        batch.validate()?;
        let l = self.layout();
        let k = self.cfg.mixtures;
        let mut grads = vec![0.0; self.layout_len];
        let mut loss = 0.0;
        let mut d_pi = vec![0.0; k];
        let mut d_mean = vec![0.0; 2 * k];
        let mut d_ls = vec![0.0; k];
        let mut d_hidden = vec![0.0; l.hidden.outputs];
        for (x, y) in batch.qx.iter().zip(&batch.qy) {
            let pass = self.pass(x);
            let mix = self.mixture_of(&pass);
            let lc = mix.log_components(y);
            let lse = log_sum_exp(&lc);
            loss -= lse;
            for i in 0..k {
                let gamma = (lc[i] - lse).exp();
                let sig2 = mix.sigma[i] * mix.sigma[i];
                let diff = mix.means[i] - y;
                d_pi[i] = mix.pi[i] - gamma;
                d_mean[2 * i] = gamma * diff.x / sig2;
                d_mean[2 * i + 1] = gamma * diff.y / sig2;
                // ∂σ/∂s = σ − σ_min.
                d_ls[i] = gamma * (2.0 - diff.norm_squared() / sig2) * (1.0 - self.cfg.sigma_min / mix.sigma[i]);
            }
            d_hidden.iter_mut().for_each(|v| *v = 0.0);
            l.pi.backward(&self.params, &pass.hidden, &d_pi, &mut grads, Some(&mut d_hidden));
            l.mean.backward(&self.params, &pass.hidden, &d_mean, &mut grads, Some(&mut d_hidden));
            l.log_sigma.backward(&self.params, &pass.hidden, &d_ls, &mut grads, Some(&mut d_hidden));
            for (d, &h) in d_hidden.iter_mut().zip(&pass.hidden) {
                *d *= self.cfg.activation.derivative_from_output(h);
            }
            l.hidden.backward(&self.params, x.as_slice(), &d_hidden, &mut grads, None);
        }
        let n = batch.len() as f64;
        grads.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grads))
    }

    /// Adam over consecutive chunks of `batch_size` samples (the whole
    /// batch when it is smaller). Returns the full-batch loss before every
    /// epoch and after the last one (`epochs + 1` values).
    pub fn train(&mut self, batch: &TrainBatch, epochs: usize, batch_size: usize, adam: AdamConfig) -> Result<Vec<f64>> {
        batch.validate()?;
        if batch_size == 0 {
            return Err(Error::Shape("batch size must be positive".into()));
        }
        let mut opt = Adam::new(adam, self.layout_len);
        let mut curve = Vec::with_capacity(epochs + 1);
        let single = batch_size >= batch.len();
        for _ in 0..epochs {
            if single {
                let (loss, grads) = self.loss_and_grad(batch)?;
                curve.push(loss);
                opt.step(&mut self.params, &grads);
                continue;
            }
            curve.push(self.batch_nll(batch)?);
            for start in (0..batch.len()).step_by(batch_size) {
                let end = (start + batch_size).min(batch.len());
                let chunk = TrainBatch {
                    qx: batch.qx[start..end].to_vec(),
                    qy: batch.qy[start..end].to_vec(),
                };
                let (_, grads) = self.loss_and_grad(&chunk)?;
                opt.step(&mut self.params, &grads);
            }
        }
        curve.push(self.batch_nll(batch)?);
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("mdn parameters after training"));
        }
        Ok(curve)
    }

    pub fn to_weight_file(&self) -> WeightFile {
        let l = self.layout();
        let c = &self.cfg;
        let mut w = WeightFile::new("mdn", vec![c.input_dim, c.hidden_units, c.mixtures, c.output_dim]);
        w.push_meta("activation", c.activation.name());
        w.push_meta("sigma_min", format!("{:?}", c.sigma_min));
        for (name, slot) in [
            ("hidden", l.hidden),
            ("pi", l.pi),
            ("mean", l.mean),
            ("log_sigma", l.log_sigma),
        ] {
            w.push_tensor(&format!("{name}.weight"), slot.outputs, slot.inputs, slot.weights(&self.params));
            w.push_tensor(&format!("{name}.bias"), slot.outputs, 1, slot.bias(&self.params));
        }
        w
    }

    pub fn from_weight_file(w: &WeightFile) -> Result<Self> {
        if w.kind != "mdn" {
            return Err(Error::Format(format!("expected an mdn weight file, found `{}`", w.kind)));
        }
        let [input_dim, hidden_units, mixtures, output_dim] = w.dims[..] else {
            return Err(Error::Format("mdn dims must have four entries".into()));
        };
        let activation = match w.meta("activation") {
            Some(name) => Activation::from_name(name)
                .ok_or_else(|| Error::Format(format!("unknown activation `{name}`")))?,
            None => Activation::Tanh,
        };
        let sigma_min = match w.meta("sigma_min") {
            Some(v) => v.parse().map_err(|_| Error::Format(format!("bad sigma_min `{v}`")))?,
            None => 0.0,
        };
        let cfg = MdnConfig {
            input_dim,
            hidden_units,
            mixtures,
            output_dim,
            activation,
            sigma_min,
        };
        cfg.validate().map_err(|e| Error::Format(e.to_string()))?;
        let mut m = Self::zeros(cfg)?;
        let l = m.layout();
        for (name, slot) in [
            ("hidden", l.hidden),
            ("pi", l.pi),
            ("mean", l.mean),
            ("log_sigma", l.log_sigma),
        ] {
            let wt = w.tensor(&format!("{name}.weight"), slot.outputs, slot.inputs)?;
            slot.weights_mut(&mut m.params).copy_from_slice(wt);
            let b = w.tensor(&format!("{name}.bias"), slot.outputs, 1)?;
            slot.bias_mut(&mut m.params).copy_from_slice(b);
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_weight_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_weight_file(&WeightFile::load(path)?)
    }
}
