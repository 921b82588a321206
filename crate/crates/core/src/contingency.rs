//! Contingency classifier: is this flow histogram the visual consequence
//! of my own action? Input is the scaled action (7) concatenated with the
//! direction histogram (10); one tanh hidden layer; one logit.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{sigmoid, softplus, Activation, Adam, AdamConfig, DenseSlot};
use crate::rng::{rng_from, SimRng};
use crate::simworld::sensor::{direction_histogram, noise_histogram};
use crate::weights::WeightFile;
use crate::{Histogram, Joints, DOF, HIST_BINS};

pub const INPUT_DIM: usize = DOF + HIST_BINS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContingencyConfig {
    pub hidden_units: usize,
    /// Actions are divided by this before entering the network.
    pub action_scale_rad_per_s: f64,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub holdout_fraction: f64,
    pub noise: NoiseConfig,
}

impl Default for ContingencyConfig {
    fn default() -> Self {
        Self {
            hidden_units: 32,
            action_scale_rad_per_s: 0.015,
            epochs: 600,
            adam: AdamConfig::default(),
            holdout_fraction: 0.2,
            noise: NoiseConfig::default(),
        }
    }
}

impl ContingencyConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if self.hidden_units == 0 {
            return Err(Error::config(format!("{path}.hidden_units"), "must be positive"));
        }
        if !(self.action_scale_rad_per_s > 0.0) {
            return Err(Error::config(format!("{path}.action_scale_rad_per_s"), "must be positive"));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::config(format!("{path}.adam.learning_rate"), "must be positive"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::config(format!("{path}.holdout_fraction"), "must lie in [0, 1)"));
        }
        self.noise.validate(&format!("{path}.noise"))
    }
}

/// Negative histograms: isotropic random flow, or coherent motion whose
/// direction is rotated away from the frame's own direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Share of noise negatives drawn as isotropic flow.
    pub isotropic_fraction: f64,
    /// Smallest rotation of a foreign motion away from the own direction.
    pub min_offset_rad: f64,
    pub jitter_std_rad: f64,
    pub flow_samples: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            isotropic_fraction: 0.5,
            min_offset_rad: PI / 3.0,
            jitter_std_rad: 0.3,
            flow_samples: 32,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.isotropic_fraction) {
            return Err(Error::config(format!("{path}.isotropic_fraction"), "must lie in [0, 1]"));
        }
        if !(0.0..=PI).contains(&self.min_offset_rad) {
            return Err(Error::config(format!("{path}.min_offset_rad"), "must lie in [0, π]"));
        }
        if self.flow_samples == 0 {
            return Err(Error::config(format!("{path}.flow_samples"), "must be positive"));
        }
        Ok(())
    }

    /// One noise histogram relative to the frame histogram `own`.
    pub fn sample(&self, own: &Histogram, rng: &mut SimRng) -> Histogram {
        if rng.random::<f64>() < self.isotropic_fraction {
            noise_histogram(self.flow_samples, rng)
        } else {
            let span = PI - self.min_offset_rad;
            let offset = self.min_offset_rad + if span > 0.0 { rng.random_range(0.0..span) } else { 0.0 };
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let angle = histogram_direction(own).unwrap_or(0.0) + sign * offset;
            direction_histogram(angle, self.jitter_std_rad, self.flow_samples, rng)
        }
    }
}

/// Circular mean direction of a histogram, `None` for an empty one.
pub fn histogram_direction(h: &Histogram) -> Option<f64> {
    let width = 2.0 * PI / HIST_BINS as f64;
    let (mut x, mut y) = (0.0, 0.0);
    for (i, &w) in h.iter().enumerate() {
        let c = -PI + (i as f64 + 0.5) * width;
        x += w * c.cos();
        y += w * c.sin();
    }
    (x * x + y * y > 1e-18).then(|| y.atan2(x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContingencySample {
    pub action: Joints,
    pub histogram: Histogram,
    pub contingent: bool,
}

/// Action/histogram pairs recorded while the arm waved in front of the
/// mirror; every pair is a contingent example.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelfTrace {
    pub pairs: Vec<(Joints, Histogram)>,
}

/// Positives from the traces; an equal number of negatives cycling through
/// (action, noise), (zero action, moving histogram) and (action, still).
pub fn build_dataset(
    traces: &[SelfTrace],
    noise: &NoiseConfig,
    with_negatives: bool,
    seed: u64,
) -> Result<Vec<ContingencySample>> {
    let positives: Vec<&(Joints, Histogram)> = traces.iter().flat_map(|t| t.pairs.iter()).collect();
    if positives.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut rng = rng_from(seed);
    let mut out: Vec<ContingencySample> = positives
        .iter()
        .map(|(a, h)| ContingencySample {
            action: *a,
            histogram: *h,
            contingent: true,
        })
        .collect();
    if with_negatives {
        let n = positives.len();
        for k in 0..n {
            let (a, h) = positives[k];
            let sample = match k % 3 {
                0 => ContingencySample {
                    action: *a,
                    histogram: noise.sample(h, &mut rng),
                    contingent: false,
                },
                1 => {
                    let (_, other_h) = positives[rng.random_range(0..n)];
                    ContingencySample {
                        action: Joints::zeros(),
                        histogram: *other_h,
                        contingent: false,
                    }
                }
                _ => ContingencySample {
                    action: *a,
                    histogram: [0.0; HIST_BINS],
                    contingent: false,
                },
            };
            out.push(sample);
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Deterministic train/holdout split (shuffle then cut).
pub fn split(samples: &[ContingencySample], holdout_fraction: f64, seed: u64) -> (Vec<ContingencySample>, Vec<ContingencySample>) {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut rng_from(seed));
    let cut = ((1.0 - holdout_fraction) * samples.len() as f64).round() as usize;
    let train = idx[..cut].iter().map(|&i| samples[i].clone()).collect();
    let test = idx[cut..].iter().map(|&i| samples[i].clone()).collect();
    (train, test)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    hidden: DenseSlot,
    output: DenseSlot,
    action_scale: f64,
    params: Vec<f64>,
}

impl Classifier {
    pub fn zeros(hidden_units: usize, action_scale: f64) -> Self {
        let hidden = DenseSlot {
            offset: 0,
            inputs: INPUT_DIM,
            outputs: hidden_units,
        };
        let output = DenseSlot {
            offset: hidden.end(),
            inputs: hidden_units,
            outputs: 1,
        };
        Self {
            hidden,
            output,
            action_scale,
            params: vec![0.0; output.end()],
        }
    }

    pub fn new(hidden_units: usize, action_scale: f64, rng: &mut SimRng) -> Self {
        let mut c = Self::zeros(hidden_units, action_scale);
        c.hidden.init_uniform(&mut c.params, rng);
        c.output.init_uniform(&mut c.params, rng);
        c
    }

    pub fn action_scale(&self) -> f64 {
        self.action_scale
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn input(&self, a: &Joints, h: &Histogram) -> [f64; INPUT_DIM] {
        let mut x = [0.0; INPUT_DIM];
        for i in 0..DOF {
            x[i] = a[i] / self.action_scale;
        }
        x[DOF..].copy_from_slice(h);
        x
    }

    fn hidden_of(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden.outputs];
        self.hidden.forward(&self.params, x, &mut h);
        h.iter_mut().for_each(|v| *v = Activation::Tanh.apply(*v));
        h
    }

    pub fn logit(&self, a: &Joints, h: &Histogram) -> f64 {
        let x = self.input(a, h);
        let hid = self.hidden_of(&x);
        let mut out = [0.0];
        self.output.forward(&self.params, &hid, &mut out);
        out[0]
    }

    /// `sigmoid(logit)`.
    pub fn prob(&self, a: &Joints, h: &Histogram) -> f64 {
        sigmoid(self.logit(a, h))
    }

    /// Mean binary cross-entropy on logits and its gradient.
    pub fn loss_and_grad(&self, data: &[ContingencySample]) -> (f64, Vec<f64>) {
        let mut grads = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let mut d_hidden = vec![0.0; self.hidden.outputs];
        for s in data {
            let x = self.input(&s.action, &s.histogram);
            let hid = self.hidden_of(&x);
            let mut z = [0.0];
            self.output.forward(&self.params, &hid, &mut z);
            let y = if s.contingent { 1.0 } else { 0.0 };
            // BCE(z, y) = softplus(z) − y z.
            loss += softplus(z[0]) - y * z[0];
            let dz = [sigmoid(z[0]) - y];
            d_hidden.iter_mut().for_each(|v| *v = 0.0);
            self.output.backward(&self.params, &hid, &dz, &mut grads, Some(&mut d_hidden));
            for (d, &h) in d_hidden.iter_mut().zip(&hid) {
                *d *= Activation::Tanh.derivative_from_output(h);
            }
            self.hidden.backward(&self.params, &x, &d_hidden, &mut grads, None);
        }
        let n = data.len().max(1) as f64;
        grads.iter_mut().for_each(|g| *g /= n);
        (loss / n, grads)
    }

    pub fn accuracy(&self, data: &[ContingencySample]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = data
            .iter()
            .filter(|s| (self.prob(&s.action, &s.histogram) > 0.5) == s.contingent)
            .count();
        hits as f64 / data.len() as f64
    }

    pub fn to_weight_file(&self) -> WeightFile {
        let mut w = WeightFile::new("contingency", vec![INPUT_DIM, self.hidden.outputs, 1]);
        w.push_meta("activation", "tanh");
        w.push_meta("action_scale", format!("{:?}", self.action_scale));
        w.push_tensor("hidden.weight", self.hidden.outputs, INPUT_DIM, self.hidden.weights(&self.params));
        w.push_tensor("hidden.bias", self.hidden.outputs, 1, self.hidden.bias(&self.params));
        w.push_tensor("output.weight", 1, self.hidden.outputs, self.output.weights(&self.params));
        w.push_tensor("output.bias", 1, 1, self.output.bias(&self.params));
        w
    }

    pub fn from_weight_file(w: &WeightFile) -> Result<Self> {
        if w.kind != "contingency" {
            return Err(Error::Format(format!("expected a contingency weight file, found `{}`", w.kind)));
        }
        let [input, hidden_units, 1] = w.dims[..] else {
            return Err(Error::Format("contingency dims must be [17, hidden, 1]".into()));
        };
        if input != INPUT_DIM || hidden_units == 0 {
            return Err(Error::Format(format!("unsupported contingency shape {input}x{hidden_units}")));
        }
        let scale: f64 = w
            .meta("action_scale")
            .and_then(|s| s.parse().ok())
            .filter(|s: &f64| *s > 0.0)
            .ok_or_else(|| Error::Format("missing or invalid action_scale".into()))?;
        let mut c = Self::zeros(hidden_units, scale);
        let (hs, os) = (c.hidden, c.output);
        hs.weights_mut(&mut c.params).copy_from_slice(w.tensor("hidden.weight", hidden_units, INPUT_DIM)?);
        hs.bias_mut(&mut c.params).copy_from_slice(w.tensor("hidden.bias", hidden_units, 1)?);
        os.weights_mut(&mut c.params).copy_from_slice(w.tensor("output.weight", 1, hidden_units)?);
        os.bias_mut(&mut c.params).copy_from_slice(w.tensor("output.bias", 1, 1)?);
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_weight_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_weight_file(&WeightFile::load(path)?)
    }
}

/// Full-batch Adam on BCE. Returns the model and the loss before each
/// epoch plus the final loss.
pub fn train_classifier(data: &[ContingencySample], cfg: &ContingencyConfig, seed: u64) -> Result<(Classifier, Vec<f64>)> {
    let pos = data.iter().filter(|s| s.contingent).count();
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if pos == 0 || pos == data.len() {
        return Err(Error::SingleClass);
    }
    let mut model = Classifier::new(cfg.hidden_units, cfg.action_scale_rad_per_s, &mut rng_from(seed));
    let mut adam = Adam::new(cfg.adam, model.params.len());
    let mut curve = Vec::with_capacity(cfg.epochs + 1);
    for _ in 0..cfg.epochs {
        let (loss, grads) = model.loss_and_grad(data);
        curve.push(loss);
        adam.step(&mut model.params, &grads);
    }
    curve.push(model.loss_and_grad(data).0);
    if model.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("classifier parameters after training"));
    }
    Ok((model, curve))
}

const CSV_HEADER: [&str; INPUT_DIM + 1] = [
    "a1", "a2", "a3", "a4", "a5", "a6", "a7", "h1", "h2", "h3", "h4", "h5", "h6", "h7", "h8", "h9", "h10", "label",
];

/// Columns `a1..a7, h1..h10, label` with label 1 for contingent.
pub fn write_dataset_csv<W: Write>(samples: &[ContingencySample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fmt_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(CSV_HEADER).map_err(fmt_err)?;
    for s in samples {
        let mut row: Vec<String> = s.action.iter().map(|v| format!("{v:?}")).collect();
        row.extend(s.histogram.iter().map(|v| format!("{v:?}")));
        row.push(if s.contingent { "1" } else { "0" }.to_string());
        w.write_record(&row).map_err(fmt_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(input: R) -> Result<Vec<ContingencySample>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| Error::Format(e.to_string()))?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Format("unexpected contingency dataset header".into()));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("row {}: {e}", line + 1)))?;
        let mut histogram = [0.0; HIST_BINS];
        histogram.copy_from_slice(&vals[DOF..DOF + HIST_BINS]);
        out.push(ContingencySample {
            action: Joints::from_column_slice(&vals[..DOF]),
            histogram,
            contingent: vals[INPUT_DIM] > 0.5,
        });
    }
    Ok(out)
}

/// Pure-noise probes: Gaussian actions with an isotropic flow histogram.
pub fn noise_probe(count: usize, noise: &NoiseConfig, action_std: f64, seed: u64) -> Vec<ContingencySample> {
    let mut rng = rng_from(seed);
    let jitter = Normal::new(0.0, action_std.max(0.0)).expect("finite std");
    (0..count)
        .map(|_| ContingencySample {
            action: Joints::from_fn(|_, _| jitter.sample(&mut rng)),
            histogram: noise_histogram(noise.flow_samples, &mut rng),
            contingent: false,
        })
        .collect()
}
