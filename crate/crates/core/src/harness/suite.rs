//! Suites of independent seeded trials over random placements, aggregated
//! into a success rate and a mean p_self trajectory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contingency::Classifier;
use crate::error::{Error, Result};
use crate::evidence::Status;
use crate::rng::{derive_seed, rng_from, stream};
use crate::simworld::world::Placement;

use super::config::ScenarioConfig;
use super::summary::RunSummary;
use super::trace::{write_trace_file, Phase, TraceRecord};
use super::trial::run_trial_at;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub position: usize,
    pub repeat: usize,
    pub seed: u64,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
    pub trace_file: Option<String>,
}

/// Mean and standard deviation of p_self across trials, aligned on the
/// start of evaluation. `count[k]` trials still ran at step `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Trajectory {
    pub dt_s: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub count: Vec<usize>,
}

impl Trajectory {
    pub fn from_series(series: &[Vec<f64>], dt_s: f64) -> Self {
        let len = series.iter().map(Vec::len).max().unwrap_or(0);
        let mut out = Trajectory {
            dt_s,
            ..Default::default()
        };
        for k in 0..len {
            let xs: Vec<f64> = series.iter().filter_map(|s| s.get(k).copied()).collect();
            let n = xs.len() as f64;
            let m = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            out.mean.push(m);
            out.std.push(var.sqrt());
            out.count.push(xs.len());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub scenario: String,
    pub master_seed: u64,
    pub positions: usize,
    pub repeats: usize,
    pub expected_status: Status,
    pub completed: usize,
    pub failed: usize,
    pub self_count: usize,
    pub other_count: usize,
    /// Fraction of all trials ending with the expected status.
    pub success_rate: f64,
    /// Suite mean of each trial's settled p_self.
    pub mean_settled_p_self: Option<f64>,
    /// Suite mean of each trial's whole-evaluation mean p_self.
    pub mean_evaluation_p_self: Option<f64>,
    pub max_evaluation_p_self: Option<f64>,
    pub trajectory: Trajectory,
    pub trials: Vec<TrialEntry>,
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Placement for position `p` of a suite.
pub fn suite_placement(cfg: &ScenarioConfig, master: u64, position: usize) -> Placement {
    Placement::sample(&cfg.world, &mut rng_from(derive_seed(master, &[stream::PLACEMENT, position as u64])))
}

pub fn trial_seed(master: u64, position: usize, repeat: usize) -> u64 {
    derive_seed(master, &[position as u64, repeat as u64])
}

pub fn trace_name(position: usize, repeat: usize) -> String {
    format!("trial_p{position:02}_r{repeat:02}.csv")
}

struct Outcome {
    entry: TrialEntry,
    eval_p_self: Vec<f64>,
}

fn run_one(
    cfg: &ScenarioConfig,
    classifier: &Arc<Classifier>,
    position: usize,
    repeat: usize,
    trace_dir: Option<&Path>,
) -> Outcome {
    let seed = trial_seed(cfg.seed, position, repeat);
    let mut entry = TrialEntry {
        position,
        repeat,
        seed,
        summary: None,
        error: None,
        trace_file: None,
    };
    let placement = suite_placement(cfg, cfg.seed, position);
    let trial_cfg = ScenarioConfig { seed, ..cfg.clone() };
    let result = run_trial_at(&trial_cfg, &placement, classifier.clone()).and_then(|out| {
        let mut summary = out.summary;
        let mut trace_file = None;
        if let Some(dir) = trace_dir {
            let name = trace_name(position, repeat);
            write_trace_file(&out.trace, &dir.join(&name))?;
            if !out.training_curve.is_empty() {
                let curve = name.replace(".csv", "_loss.csv");
                write_curve(&out.training_curve, &dir.join(&curve))?;
                summary.training_curve_file = Some(curve);
            }
            trace_file = Some(name);
        }
        Ok((summary, trace_file, evaluation_p_self(&out.trace)))
    });
    match result {
        Ok((summary, trace_file, eval_p_self)) => {
            entry.summary = Some(summary);
            entry.trace_file = trace_file;
            Outcome { entry, eval_p_self }
        }
        Err(e) => {
            entry.error = Some(e.to_string());
            Outcome {
                entry,
                eval_p_self: Vec::new(),
            }
        }
    }
}

fn evaluation_p_self(trace: &[TraceRecord]) -> Vec<f64> {
    trace.iter().filter(|r| r.phase == Phase::Evaluation).map(|r| r.p_self).collect()
}

/// Epoch-indexed loss curve as a two-column CSV.
pub fn write_curve(curve: &[f64], path: &Path) -> Result<()> {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        s.push_str(&format!("{i},{l}\n"));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Run `positions × repeats` trials of `cfg` from master seed `cfg.seed`.
/// Failing trials are recorded and the suite carries on. Traces go to
/// `trace_dir` when given.
pub fn run_suite(
    cfg: &ScenarioConfig,
    positions: usize,
    repeats: usize,
    classifier: Arc<Classifier>,
    trace_dir: Option<&Path>,
) -> Result<SuiteReport> {
    cfg.validate()?;
    if positions == 0 || repeats == 0 {
        return Err(Error::config("suite", "positions and repeats must be positive"));
    }
    if let Some(dir) = trace_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let jobs: Vec<(usize, usize)> = (0..positions).flat_map(|p| (0..repeats).map(move |r| (p, r))).collect();
    let outcomes: Vec<Outcome> = jobs
        .par_iter()
        .map(|&(p, r)| run_one(cfg, &classifier, p, r, trace_dir))
        .collect();
    Ok(aggregate(cfg, positions, repeats, outcomes))
}

fn aggregate(cfg: &ScenarioConfig, positions: usize, repeats: usize, outcomes: Vec<Outcome>) -> SuiteReport {
    let expected = cfg.expected_status();
    let summaries: Vec<&RunSummary> = outcomes.iter().filter_map(|o| o.entry.summary.as_ref()).collect();
    let count = |s: Status| summaries.iter().filter(|m| m.status == s).count();
    let mean_of = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let series: Vec<Vec<f64>> = outcomes.iter().map(|o| o.eval_p_self.clone()).collect();
    let total = outcomes.len();
    SuiteReport {
        scenario: cfg.kind.name().to_string(),
        master_seed: cfg.seed,
        positions,
        repeats,
        expected_status: expected,
        completed: summaries.len(),
        failed: total - summaries.len(),
        self_count: count(Status::IsSelf),
        other_count: count(Status::Other),
        success_rate: count(expected) as f64 / total as f64,
        mean_settled_p_self: mean_of(summaries.iter().filter_map(|s| s.settled_p_self).collect()),
        mean_evaluation_p_self: mean_of(summaries.iter().filter_map(|s| s.mean_p_self).collect()),
        max_evaluation_p_self: summaries.iter().filter_map(|s| s.max_p_self).reduce(f64::max),
        trajectory: Trajectory::from_series(&series, cfg.world.dt_s),
        trials: outcomes.into_iter().map(|o| o.entry).collect(),
    }
}

/// Path of a trial's trace inside a suite output directory.
pub fn trace_path(dir: &Path, position: usize, repeat: usize) -> PathBuf {
    dir.join(trace_name(position, repeat))
}
