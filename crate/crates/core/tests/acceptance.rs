//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails. Runs without the test harness so the lines
//! are always shown.

use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;

use mirrorself::contingency::Classifier;
use mirrorself::evidence::{accumulate, calibrate, clamped_log, instant_loglik, normalize_and_smooth, p_norm, Status};
use mirrorself::harness::practice::{train_prior, waving_dataset};
use mirrorself::harness::session::{run_replay, ReplayInjector};
use mirrorself::harness::suite::trace_path;
use mirrorself::harness::{run_suite, run_trial, ScenarioConfig, ScenarioKind, SuiteReport, TraceRecord};
use mirrorself::inference::{step, BeliefState, InferenceConfig};
use mirrorself::mdn::{predict, Mdn, MdnConfig};
use mirrorself::rng::{derive_seed, rng_from, stream, SimRng};
use mirrorself::{ImageJacobian, ImagePoint, Joints, DOF};

const SUITE_POSITIONS: usize = 10;
const SUITE_REPEATS: usize = 10;
const MIRROR_SELF_RATE: f64 = 0.95;
const MIRROR_P_SELF: f64 = 0.8;
const MIRROR_RUNTIME_S: f64 = 300.0;
const TWIN_P_SELF: f64 = 0.2;
const LAG_S: f64 = 0.5;
const LAG_TRIALS: u64 = 20;
const MDN_SAMPLES: usize = 200;
const MDN_EPOCHS: usize = 1000;
const MDN_CHECK_EPOCH: usize = 400;
const MDN_FRACTION: f64 = 0.9;
const MDN_SEEDS: u64 = 10;
const MDN_SEEDS_REQUIRED: usize = 9;
const GRAD_CONFIGS: u64 = 100;
const GRAD_REL_TOL: f64 = 1e-4;
const RECURRENCE_STEPS: i32 = 100;
const RECURRENCE_TOL: f64 = 1e-9;
const HOLDOUT_ACCURACY: f64 = 0.95;
const NOISE_MEAN: f64 = 0.5;
const ANCHOR_TOL: f64 = 1e-9;

struct Gate {
    failed: usize,
}

impl Gate {
    fn report(&mut self, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

fn read_traces(report: &SuiteReport, dir: &Path) -> Vec<Vec<TraceRecord>> {
    report
        .trials
        .iter()
        .map(|t| mirrorself::harness::trace::read_trace_file(&trace_path(dir, t.position, t.repeat)).unwrap())
        .collect()
}

fn same_files(a: &Path, b: &Path) -> (usize, bool) {
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let identical = names.iter().all(|n| std::fs::read(a.join(n)).ok() == std::fs::read(b.join(n)).ok())
        && std::fs::read_dir(b).unwrap().count() == names.len();
    (names.len(), identical)
}

fn mirror_suite(gate: &mut Gate, clf: &Arc<Classifier>, started: Instant) {
    let cfg = ScenarioConfig::for_kind(ScenarioKind::Mirror);
    let report = run_suite(&cfg, SUITE_POSITIONS, SUITE_REPEATS, clf.clone(), None).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let settled = report.mean_settled_p_self;
    gate.report(
        "mirror suite",
        report.failed == 0 && report.success_rate >= MIRROR_SELF_RATE && settled.is_some_and(|p| p > MIRROR_P_SELF),
        format!(
            "{}/{} self (need >= {:.0}%), post-learning mean p_self {} over the last {} s (need > {MIRROR_P_SELF}), whole-evaluation mean {}",
            report.self_count,
            report.trials.len(),
            MIRROR_SELF_RATE * 100.0,
            opt(settled),
            mirrorself::harness::summary::SETTLE_WINDOW_S,
            opt(report.mean_evaluation_p_self)
        ),
    );
    gate.report(
        "mirror suite runtime",
        elapsed <= MIRROR_RUNTIME_S,
        format!("{elapsed:.1} s including prior training (limit {MIRROR_RUNTIME_S} s)"),
    );
}

/// Runs the asynchronous twin suite twice into separate directories, so it
/// also serves the determinism check.
fn twin_async_suite(gate: &mut Gate, clf: &Arc<Classifier>) {
    let cfg = ScenarioConfig::for_kind(ScenarioKind::TwinAsync);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_suite(&cfg, SUITE_POSITIONS, SUITE_REPEATS, clf.clone(), Some(a.path())).unwrap();
    let traces = read_traces(&first, a.path());
    let max_p = traces
        .iter()
        .flat_map(|t| t.iter().map(|r| r.p_self))
        .fold(0.0f64, f64::max);
    gate.report(
        "asynchronous twin suite",
        first.failed == 0 && first.other_count == first.trials.len() && max_p < TWIN_P_SELF,
        format!(
            "{}/{} other (need all), max p_self over every record {max_p:.4} (need < {TWIN_P_SELF})",
            first.other_count,
            first.trials.len()
        ),
    );

    let second = run_suite(&cfg, SUITE_POSITIONS, SUITE_REPEATS, clf.clone(), Some(b.path())).unwrap();
    let (files, identical) = same_files(a.path(), b.path());
    let mirror_cfg = ScenarioConfig::for_kind(ScenarioKind::Mirror);
    let c = tempfile::tempdir().unwrap();
    let d = tempfile::tempdir().unwrap();
    let m1 = run_suite(&mirror_cfg, 2, 2, clf.clone(), Some(c.path())).unwrap();
    let m2 = run_suite(&mirror_cfg, 2, 2, clf.clone(), Some(d.path())).unwrap();
    let (mfiles, midentical) = same_files(c.path(), d.path());
    gate.report(
        "determinism",
        identical && midentical && first.to_json() == second.to_json() && m1.to_json() == m2.to_json(),
        format!("{files} twin_async and {mfiles} mirror output files compared byte for byte across two runs"),
    );
}

fn twin_sync(gate: &mut Gate, clf: &Arc<Classifier>) {
    let base = ScenarioConfig::for_kind(ScenarioKind::TwinSync);
    let seeds: Vec<u64> = std::iter::once(base.seed).chain(1..=10).collect();
    let selfs = seeds
        .iter()
        .filter(|&&seed| {
            let cfg = ScenarioConfig { seed, ..base.clone() };
            run_trial(&cfg, clf.clone()).unwrap().summary.status == Status::IsSelf
        })
        .count();
    gate.report(
        "synchronized twin",
        selfs == seeds.len(),
        format!("{selfs}/{} zero-lag trials self (default seed plus seeds 1-10)", seeds.len()),
    );
}

fn lag_sensitivity(gate: &mut Gate, clf: &Arc<Classifier>) {
    let mut others = 0;
    let mut worst = 0.0f64;
    for seed in 0..LAG_TRIALS {
        let mut rec = ScenarioConfig::for_kind(ScenarioKind::TwinSync);
        rec.seed = seed;
        rec.world.initial_jitter_rad = 0.0;
        let own = run_trial(&rec, clf.clone()).unwrap().trace;
        let live = ScenarioConfig {
            kind: ScenarioKind::InteractiveOther,
            ..rec.clone()
        };
        let inj = ReplayInjector::new(&own, LAG_S, live.world.dt_s);
        let out = run_replay(&live, clf.clone(), &inj).unwrap();
        if out.summary.status == Status::Other {
            others += 1;
        }
        worst = worst.max(out.summary.max_p_self.unwrap_or(0.0));
    }
    gate.report(
        "lag sensitivity",
        others == LAG_TRIALS,
        format!("{others}/{LAG_TRIALS} replays of the own trace lagged {LAG_S} s end other (max p_self {worst:.3})"),
    );
}

fn mdn_convergence(gate: &mut Gate) {
    let cfg = ScenarioConfig::default();
    let mut fractions = Vec::new();
    for seed in 0..MDN_SEEDS {
        let data = waving_dataset(&cfg.world, derive_seed(seed, &[stream::DATASET]), MDN_SAMPLES).unwrap();
        assert_eq!(data.len(), MDN_SAMPLES);
        let mut mdn = Mdn::new(cfg.mdn.network(), &mut rng_from(derive_seed(seed, &[stream::MDN_INIT]))).unwrap();
        let curve = mdn.train(&data, MDN_EPOCHS, cfg.mdn.batch_size, cfg.mdn.adam).unwrap();
        let total = curve[0] - curve[MDN_EPOCHS];
        fractions.push(if total > 0.0 { (curve[0] - curve[MDN_CHECK_EPOCH]) / total } else { 0.0 });
    }
    let passing = fractions.iter().filter(|&&f| f >= MDN_FRACTION).count();
    let lowest = fractions.iter().copied().fold(f64::INFINITY, f64::min);
    gate.report(
        "MDN convergence",
        passing >= MDN_SEEDS_REQUIRED,
        format!(
            "{passing}/{MDN_SEEDS} seeds reach {:.0}% of the epoch 0-{MDN_EPOCHS} decrease by epoch {MDN_CHECK_EPOCH} (lowest fraction {lowest:.3})",
            MDN_FRACTION * 100.0
        ),
    );
}

fn random_model(rng: &mut SimRng) -> Mdn {
    let cfg = MdnConfig {
        sigma_min: rng.random_range(0.0..0.05),
        ..MdnConfig::default()
    };
    let mut m = Mdn::new(cfg, rng).unwrap();
    let scale = rng.random_range(0.5..2.0);
    for p in m.params_mut() {
        *p *= scale;
    }
    m
}

fn random_joints(rng: &mut SimRng) -> Joints {
    Joints::from_fn(|_, _| rng.random_range(-1.5..1.5))
}

/// Norm-wise relative error with a floor so all-but-zero references do not
/// divide by nothing.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-8)
}

fn gradient_oracles(gate: &mut Gate) {
    let h = 1e-6;
    let mut rng = rng_from(0x6a_0b);
    let mut worst_j = 0.0f64;
    let mut worst_l = 0.0f64;
    for _ in 0..GRAD_CONFIGS {
        let m = random_model(&mut rng);
        let mu = random_joints(&mut rng);
        let s_v = ImagePoint::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let mix = m.forward(&mu).unwrap();
        let p = predict(&mix);
        let index = rng.random_range(0..mix.mixtures());

        let jac = m.mean_jacobian(&mu, index);
        let mut fd = ImageJacobian::zeros();
        for c in 0..DOF {
            let mut up = mu;
            up[c] += h;
            let mut down = mu;
            down[c] -= h;
            let d = (m.forward(&up).unwrap().means[index] - m.forward(&down).unwrap().means[index]) / (2.0 * h);
            fd.set_column(c, &d);
        }
        worst_j = worst_j.max(rel_err(jac.as_slice(), fd.as_slice()));

        // Quadratic surprise of the selected kernel with its weight,
        // responsibility and width frozen at mu.
        let resp = mix.responsibilities(&s_v)[p.index];
        let q = |x: &Joints| {
            let mean = m.forward(x).unwrap().means[p.index];
            0.5 * resp * (mean - s_v).norm_squared() / (p.sigma * p.sigma)
        };
        let grad = m.likelihood_gradient(&mu, &s_v, &mix);
        let fd = Joints::from_fn(|c, _| {
            let mut up = mu;
            up[c] += h;
            let mut down = mu;
            down[c] -= h;
            (q(&up) - q(&down)) / (2.0 * h)
        });
        worst_l = worst_l.max(rel_err(grad.as_slice(), fd.as_slice()));
    }
    gate.report(
        "gradient oracle: mean_jacobian",
        worst_j < GRAD_REL_TOL,
        format!("{GRAD_CONFIGS} random configurations, worst relative error {worst_j:.2e} (need < {GRAD_REL_TOL:.0e})"),
    );
    gate.report(
        "gradient oracle: likelihood_gradient",
        worst_l < GRAD_REL_TOL,
        format!("{GRAD_CONFIGS} random configurations, worst relative error {worst_l:.2e} (need < {GRAD_REL_TOL:.0e})"),
    );
}

fn proprioceptive_recurrence(gate: &mut Gate) {
    let cfg = InferenceConfig::default();
    let dt = ScenarioConfig::default().world.dt_s;
    let mut rng = rng_from(0x9e0);
    let model = random_model(&mut rng);
    let s_p = random_joints(&mut rng);
    let mu0 = random_joints(&mut rng);
    let ratio = 1.0 - dt / cfg.precisions.sigma_p;
    let mut b = BeliefState::at(mu0);
    let mut worst = 0.0f64;
    for k in 1..=RECURRENCE_STEPS {
        b = step(&b, Some(&s_p), None, &model, None, &cfg, dt).unwrap().0;
        for i in 0..DOF {
            let expect = s_p[i] + (mu0[i] - s_p[i]) * ratio.powi(k);
            worst = worst.max((b.mu[i] - expect).abs());
        }
    }
    gate.report(
        "proprioception-only recurrence",
        worst < RECURRENCE_TOL,
        format!("{RECURRENCE_STEPS} steps, worst deviation {worst:.2e} (need < {RECURRENCE_TOL:.0e})"),
    );
}

fn evidence_anchors(gate: &mut Gate) {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut checks: Vec<(&str, f64, f64)> = vec![
        ("L_i at zero residual, unit variance", instant_loglik(&ImagePoint::zeros(), 1.0), -two_pi.ln()),
        (
            "L_i at unit residual, unit variance",
            instant_loglik(&ImagePoint::new(1.0, 0.0), 1.0),
            -two_pi.ln() - 0.5,
        ),
        ("accumulate from zero with p_cont 1", accumulate(0.0, -1.5, 1.0, 0.95, 1e-3), -1.5),
        ("ln of the contingency floor", clamped_log(0.0, 1e-3), (1e-3f64).ln()),
    ];
    let rc = mirrorself::evidence::RecognitionConfig::default();
    let b = calibrate(0.1, rc.lambda, rc.p_floor, rc.calibration_sigmas);
    checks.push(("p_norm at LOGMIN", p_norm(b.logmin.ln(), &b), 0.0));
    checks.push(("p_norm at LOGMAX", p_norm(b.logmax.ln(), &b), 1.0));
    checks.push(("smoothing with K = 1", normalize_and_smooth(b.logmax.ln(), &b, 1.0, 0.3).1, 1.0));
    checks.push((
        "LOGMAX is the steady state",
        b.logmax.ln(),
        instant_loglik(&ImagePoint::zeros(), 0.1) / (1.0 - rc.lambda),
    ));
    let bad: Vec<_> = checks.iter().filter(|(_, got, want)| (got - want).abs() > ANCHOR_TOL).collect();
    gate.report(
        "evidence anchors",
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} anchors exact to {ANCHOR_TOL:.0e}", checks.len())
        } else {
            bad.iter().map(|(n, g, w)| format!("{n}: {g} vs {w}")).collect::<Vec<_>>().join("; ")
        },
    );
}

fn main() -> ExitCode {
    let mut gate = Gate { failed: 0 };

    evidence_anchors(&mut gate);
    proprioceptive_recurrence(&mut gate);
    gradient_oracles(&mut gate);
    mdn_convergence(&mut gate);

    let started = Instant::now();
    let (clf, prior, _) = train_prior(&ScenarioConfig::default()).unwrap();
    gate.report(
        "contingency classifier",
        prior.holdout_accuracy >= HOLDOUT_ACCURACY && prior.noise_mean_prob < NOISE_MEAN,
        format!(
            "held-out accuracy {:.3} on {} samples (need >= {HOLDOUT_ACCURACY}), mean p on noise {:.3} (need < {NOISE_MEAN})",
            prior.holdout_accuracy, prior.holdout_samples, prior.noise_mean_prob
        ),
    );
    let clf = Arc::new(clf);

    mirror_suite(&mut gate, &clf, started);
    twin_async_suite(&mut gate, &clf);
    twin_sync(&mut gate, &clf);
    lag_sensitivity(&mut gate, &clf);

    println!("{} criteria failed", gate.failed);
    if gate.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
