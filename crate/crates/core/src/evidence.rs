//! Self-recognition evidence: per-frame Gaussian log-likelihood of the
//! visual residual plus the log contingency, leaky accumulation,
//! normalization between calibrated bounds, smoothing and a dwell-time
//! decision rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdn::TrainBatch;
use crate::{ImagePoint, Joints};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Unknown,
    Learning,
    #[serde(rename = "self")]
    IsSelf,
    Other,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Unknown => "unknown",
            Status::Learning => "learning",
            Status::IsSelf => "self",
            Status::Other => "other",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "unknown" => Some(Status::Unknown),
            "learning" => Some(Status::Learning),
            "self" => Some(Status::IsSelf),
            "other" => Some(Status::Other),
            _ => None,
        }
    }

    pub fn is_final(self) -> bool {
        matches!(self, Status::IsSelf | Status::Other)
    }

    /// unknown → learning → {self, other}, or unknown → other.
    pub fn can_become(self, next: Status) -> bool {
        matches!(
            (self, next),
            (Status::Unknown, Status::Learning)
                | (Status::Unknown, Status::Other)
                | (Status::Learning, Status::IsSelf)
                | (Status::Learning, Status::Other)
        ) || self == next
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognitionConfig {
    /// Forgetting factor; 1 is the plain running sum.
    pub lambda: f64,
    pub smoothing_gain: f64,
    pub p_floor: f64,
    /// Normalization bounds on `exp(L)`. Calibrated when absent.
    pub logmin: Option<f64>,
    pub logmax: Option<f64>,
    /// Residual, in visual standard deviations, that anchors LOGMIN.
    pub calibration_sigmas: f64,
    pub outlier_threshold: f64,
    pub outlier_window: usize,
    pub p_hi: f64,
    pub p_lo: f64,
    pub dwell_s: f64,
    /// Value of `L` when evaluation begins.
    pub start_l: f64,
    /// Contingency gate for the learning buffer.
    pub delta: f64,
    pub samples: usize,
    pub min_samples: usize,
    pub learning_timeout_s: f64,
    pub evaluation_s: f64,
    pub global_timeout_s: f64,
}

impl Default for RecognitionConfig {
    fn default() -> Self {
        Self {
            lambda: 0.95,
            smoothing_gain: 0.2,
            p_floor: 1e-3,
            logmin: None,
            logmax: None,
            calibration_sigmas: 3.0,
            outlier_threshold: 1.0,
            outlier_window: 20,
            p_hi: 0.8,
            p_lo: 0.2,
            dwell_s: 3.0,
            start_l: 0.0,
            delta: 0.5,
            samples: 200,
            min_samples: 150,
            learning_timeout_s: 20.0,
            evaluation_s: 20.0,
            global_timeout_s: 60.0,
        }
    }
}

impl RecognitionConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let err = |k: &str, m: &str| Err(Error::config(format!("{path}.{k}"), m));
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return err("lambda", "must lie in (0, 1]");
        }
        if !(self.smoothing_gain > 0.0 && self.smoothing_gain <= 1.0) {
            return err("smoothing_gain", "must lie in (0, 1]");
        }
        if !self.start_l.is_finite() {
            return err("start_l", "must be finite");
        }
        if !(self.p_floor > 0.0 && self.p_floor < 1.0) {
            return err("p_floor", "must lie in (0, 1)");
        }
        match (self.logmin, self.logmax) {
            (Some(lo), Some(hi)) if !(hi > lo) => return err("logmax", "must exceed logmin"),
            (Some(_), None) | (None, Some(_)) => return err("logmax", "set both bounds or neither"),
            (None, None) if self.lambda >= 1.0 => {
                return err("logmin", "bounds cannot be calibrated without forgetting (lambda = 1)")
            }
            _ => {}
        }
        if !(self.calibration_sigmas > 0.0) {
            return err("calibration_sigmas", "must be positive");
        }
        if !(self.outlier_threshold >= 0.0) {
            return err("outlier_threshold", "must be non-negative");
        }
        if self.outlier_window == 0 {
            return err("outlier_window", "must be positive");
        }
        if !(0.0 <= self.p_lo && self.p_lo < self.p_hi && self.p_hi <= 1.0) {
            return err("p_hi", "thresholds must satisfy 0 <= p_lo < p_hi <= 1");
        }
        if !(self.dwell_s > 0.0) {
            return err("dwell_s", "must be positive");
        }
        if self.samples == 0 {
            return err("samples", "must be positive");
        }
        if self.min_samples == 0 || self.min_samples > self.samples {
            return err("min_samples", "must lie in [1, samples]");
        }
        for (k, v) in [
            ("learning_timeout_s", self.learning_timeout_s),
            ("evaluation_s", self.evaluation_s),
            ("global_timeout_s", self.global_timeout_s),
        ] {
            if !(v > 0.0) {
                return err(k, "must be positive");
            }
        }
        Ok(())
    }

    /// Explicit bounds, or the calibrated pair for visual variance `sigma_v`.
    pub fn bounds(&self, sigma_v: f64) -> Bounds {
        match (self.logmin, self.logmax) {
            (Some(logmin), Some(logmax)) => Bounds { logmin, logmax },
            _ => calibrate(sigma_v, self.lambda, self.p_floor, self.calibration_sigmas),
        }
    }
}

/// `L_i = −½(eᵀ Σ_v⁻¹ e + n ln Σ_v + n ln 2π)` for isotropic `Σ_v`.
pub fn instant_loglik(e_v: &ImagePoint, sigma_v: f64) -> f64 {
    loglik_of_mahalanobis(e_v.norm_squared() / sigma_v, sigma_v, 2)
}

fn loglik_of_mahalanobis(m: f64, sigma_v: f64, n: usize) -> f64 {
    let n = n as f64;
    -0.5 * (m + n * sigma_v.ln() + n * LN_2PI)
}

/// `L ← λL + L_i + ln max(p_cont, p_floor)`.
pub fn accumulate(l: f64, l_i: f64, p_cont: f64, lambda: f64, p_floor: f64) -> f64 {
    lambda * l + l_i + clamped_log(p_cont, p_floor)
}

pub fn clamped_log(p: f64, p_floor: f64) -> f64 {
    let p = if p.is_nan() { p_floor } else { p };
    p.clamp(p_floor, 1.0).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub logmin: f64,
    pub logmax: f64,
}

/// LOGMAX is `exp` of the steady-state `L` for a zero residual with full
/// contingency; LOGMIN uses a residual of `sigmas` standard deviations and
/// the contingency floor.
pub fn calibrate(sigma_v: f64, lambda: f64, p_floor: f64, sigmas: f64) -> Bounds {
    let scale = 1.0 / (1.0 - lambda);
    let best = loglik_of_mahalanobis(0.0, sigma_v, 2);
    let worst = loglik_of_mahalanobis(sigmas * sigmas, sigma_v, 2) + p_floor.ln();
    Bounds {
        logmin: (worst * scale).exp(),
        logmax: (best * scale).exp(),
    }
}

/// `(exp(L) − LOGMIN)/(LOGMAX − LOGMIN)` clamped to `[0,1]`.
pub fn p_norm(l: f64, b: &Bounds) -> f64 {
    let v = (l.exp() - b.logmin) / (b.logmax - b.logmin);
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Returns `(p_norm, p_self)` after one smoothing step with gain `k`.
pub fn normalize_and_smooth(l: f64, b: &Bounds, k: f64, p_self: f64) -> (f64, f64) {
    let pn = p_norm(l, b);
    (pn, (p_self + k * (pn - p_self)).clamp(0.0, 1.0))
}

/// Windowed mean Mahalanobis distance above the threshold, or no model yet.
pub fn detect_outlier(window: &[ImagePoint], sigma_v: f64, threshold: f64, min_window: usize, trained: bool) -> bool {
    if !trained {
        return true;
    }
    if window.len() < min_window || window.is_empty() {
        return false;
    }
    let mean = window.iter().map(|e| e.norm_squared() / sigma_v).sum::<f64>() / window.len() as f64;
    mean > threshold
}

/// Contingency-gated training buffer.
#[derive(Debug, Clone, Default)]
pub struct LearningBuffer {
    pub batch: TrainBatch,
    pub delta: f64,
    pub capacity: usize,
}

impl LearningBuffer {
    pub fn new(delta: f64, capacity: usize) -> Self {
        Self {
            batch: TrainBatch::default(),
            delta,
            capacity,
        }
    }

    /// Admit when contingent and not yet full.
    pub fn offer(&mut self, s_p: &Joints, s_v: &ImagePoint, p_cont: f64) -> bool {
        if p_cont > self.delta && self.batch.len() < self.capacity {
            self.batch.push(*s_p, *s_v);
            true
        } else {
            false
        }
    }

    pub fn len(&self) -> usize {
        self.batch.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batch.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.batch.len() >= self.capacity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearningOutcome {
    Collecting,
    /// Buffer full, or timed out with at least the minimum sample count.
    Train,
    /// Timed out under the minimum; evaluation continues untrained.
    Abandon,
}

/// Learning-phase bookkeeping: buffer plus timeout.
#[derive(Debug, Clone)]
pub struct LearningPhase {
    pub buffer: LearningBuffer,
    pub elapsed_s: f64,
    timeout_s: f64,
    min_samples: usize,
}

impl LearningPhase {
    pub fn new(cfg: &RecognitionConfig) -> Self {
        Self {
            buffer: LearningBuffer::new(cfg.delta, cfg.samples),
            elapsed_s: 0.0,
            timeout_s: cfg.learning_timeout_s,
            min_samples: cfg.min_samples,
        }
    }

    /// One tick: optionally offer a sample, then advance the clock.
    pub fn tick(&mut self, sample: Option<(&Joints, &ImagePoint)>, p_cont: f64, dt: f64) -> LearningOutcome {
        if let Some((s_p, s_v)) = sample {
            self.buffer.offer(s_p, s_v, p_cont);
        }
        self.elapsed_s += dt;
        if self.buffer.is_full() {
            LearningOutcome::Train
        } else if self.elapsed_s >= self.timeout_s - 1e-9 {
            if self.buffer.len() >= self.min_samples {
                LearningOutcome::Train
            } else {
                LearningOutcome::Abandon
            }
        } else {
            LearningOutcome::Collecting
        }
    }
}

/// Dwell timers over evidence-bearing ticks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Decider {
    pub above_s: f64,
    pub below_s: f64,
}

impl Decider {
    /// Self after `p_self > p_hi` held for the dwell time; other after
    /// `p_self < p_lo` held as long.
    pub fn update(&mut self, p_self: f64, dt: f64, cfg: &RecognitionConfig) -> Option<Status> {
        if p_self > cfg.p_hi {
            self.above_s += dt;
        } else {
            self.above_s = 0.0;
        }
        if p_self < cfg.p_lo {
            self.below_s += dt;
        } else {
            self.below_s = 0.0;
        }
        let dwell = cfg.dwell_s - 1e-9;
        if self.above_s >= dwell {
            Some(Status::IsSelf)
        } else if self.below_s >= dwell {
            Some(Status::Other)
        } else {
            None
        }
    }
}

/// Accumulator state for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceState {
    pub l: f64,
    pub p_self: f64,
    pub p_norm: f64,
    pub status: Status,
    pub decider: Decider,
}

impl Default for EvidenceState {
    fn default() -> Self {
        Self {
            l: 0.0,
            p_self: 0.0,
            p_norm: 0.0,
            status: Status::Unknown,
            decider: Decider::default(),
        }
    }
}

/// Values produced by one evidence update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvidenceStep {
    pub l_i: f64,
    pub ln_p_cont: f64,
}

impl EvidenceState {
    pub fn set_status(&mut self, next: Status) -> Result<()> {
        if !self.status.can_become(next) {
            return Err(Error::Session(format!(
                "illegal status transition {} -> {}",
                self.status.name(),
                next.name()
            )));
        }
        self.status = next;
        Ok(())
    }

    /// Fold one frame into `L` and `p_self`.
    pub fn update(&mut self, e_v: &ImagePoint, p_cont: f64, sigma_v: f64, cfg: &RecognitionConfig, b: &Bounds) -> EvidenceStep {
        let l_i = instant_loglik(e_v, sigma_v);
        let ln_p_cont = clamped_log(p_cont, cfg.p_floor);
        self.l = cfg.lambda * self.l + l_i + ln_p_cont;
        let (pn, ps) = normalize_and_smooth(self.l, b, cfg.smoothing_gain, self.p_self);
        self.p_norm = pn;
        self.p_self = ps;
        EvidenceStep { l_i, ln_p_cont }
    }
}
