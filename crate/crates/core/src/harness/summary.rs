//! Trial summary, computed from the trace alone.

use serde::{Deserialize, Serialize};

use crate::evidence::Status;

use super::trace::{Phase, TraceRecord};

/// Tail of the evaluation phase over which the settled belief is averaged.
pub const SETTLE_WINDOW_S: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: Status,
    /// Time of the first record carrying the final status.
    pub decision_time_s: Option<f64>,
    /// Decision time measured from the start of evaluation.
    pub time_to_decision_s: Option<f64>,
    pub learning_start_s: Option<f64>,
    pub evaluation_start_s: Option<f64>,
    pub trained: bool,
    pub samples_collected: usize,
    pub mean_p_self: Option<f64>,
    pub max_p_self: Option<f64>,
    pub min_p_self: Option<f64>,
    /// Mean p_self over the last `SETTLE_WINDOW_S` of evaluation.
    pub settled_p_self: Option<f64>,
    pub ticks: usize,
    pub duration_s: f64,
    /// File holding the forward-model loss curve, when one was written.
    pub training_curve_file: Option<String>,
}

impl RunSummary {
    pub fn from_trace(trace: &[TraceRecord]) -> Self {
        let first_t = |p: Phase| trace.iter().find(|r| r.phase == p).map(|r| r.t);
        let status = trace.last().map(|r| r.status).unwrap_or(Status::Unknown);
        let decision_time_s = if status.is_final() {
            trace.iter().find(|r| r.status == status).map(|r| r.t)
        } else {
            None
        };
        let evaluation_start_s = first_t(Phase::Evaluation);
        let eval: Vec<f64> = trace.iter().filter(|r| r.phase == Phase::Evaluation).map(|r| r.p_self).collect();
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let end = trace.last().map(|r| r.t).unwrap_or(0.0);
        let settled: Vec<f64> = trace
            .iter()
            .filter(|r| r.phase == Phase::Evaluation && r.t > end - SETTLE_WINDOW_S)
            .map(|r| r.p_self)
            .collect();
        Self {
            status,
            decision_time_s,
            time_to_decision_s: decision_time_s.zip(evaluation_start_s).map(|(d, e)| d - e),
            learning_start_s: first_t(Phase::Learning),
            evaluation_start_s,
            trained: trace.last().is_some_and(|r| r.trained),
            samples_collected: trace.iter().map(|r| r.buffer).max().unwrap_or(0),
            mean_p_self: mean(&eval),
            max_p_self: eval.iter().copied().reduce(f64::max),
            min_p_self: eval.iter().copied().reduce(f64::min),
            settled_p_self: mean(&settled),
            ticks: trace.len(),
            duration_s: trace.last().map(|r| r.t).unwrap_or(0.0),
            training_curve_file: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::trace::tests::sample_record;

    #[test]
    fn empty_trace() {
        let s = RunSummary::from_trace(&[]);
        assert_eq!(s.status, Status::Unknown);
        assert_eq!(s.ticks, 0);
        assert!(s.mean_p_self.is_none());
    }

    #[test]
    fn statistics_over_evaluation_only() {
        let mut recs: Vec<_> = (0..6).map(|i| sample_record(i, 0.1)).collect();
        recs[0].phase = Phase::PreLearning;
        recs[0].p_self = 0.9;
        recs[1].phase = Phase::Learning;
        recs[1].status = Status::Learning;
        recs[1].buffer = 12;
        for (i, r) in recs.iter_mut().enumerate().skip(2) {
            r.p_self = 0.1 * i as f64;
            r.status = if i >= 4 { Status::IsSelf } else { Status::Learning };
        }
        let s = RunSummary::from_trace(&recs);
        assert_eq!(s.status, Status::IsSelf);
        assert_eq!(s.decision_time_s, Some(recs[4].t));
        assert_eq!(s.evaluation_start_s, Some(recs[2].t));
        assert_eq!(s.learning_start_s, Some(recs[1].t));
        assert!((s.mean_p_self.unwrap() - 0.35).abs() < 1e-12);
        assert_eq!(s.max_p_self, Some(0.5));
        assert!((s.settled_p_self.unwrap() - 0.35).abs() < 1e-12);
        assert_eq!(s.samples_collected, 200);
    }
}
