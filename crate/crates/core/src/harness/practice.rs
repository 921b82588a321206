//! Practice runs outside the recognition loop: waving in front of a mirror
//! to build the contingency prior, and waving datasets for the forward
//! model.

use crate::contingency::{
    build_dataset, noise_probe, split, train_classifier, Classifier, ContingencySample, SelfTrace,
};
use crate::error::Result;
use crate::mdn::TrainBatch;
use crate::rng::{derive_seed, rng_from, stream};
use crate::schedule::Schedule;
use crate::simworld::waving::{Waver, WavingPrimitive};
use crate::simworld::world::{OtherSpec, Placement, World, WorldConfig};
use crate::Joints;

use super::config::ScenarioConfig;

/// The robot's own waving behaviour, seeded per trial.
pub fn self_waver(cfg: &WorldConfig, seed: u64) -> Waver {
    Waver {
        primitive: WavingPrimitive::new(cfg.waving, cfg.home(), rng_from(derive_seed(seed, &[stream::EXPLORE]))),
        schedule: Schedule::new(cfg.waving_schedule, rng_from(derive_seed(seed, &[stream::SCHEDULE]))),
    }
}

/// Wave in front of a mirror at a sampled placement. `visit` sees the
/// applied command of the previous tick and the current observation.
fn wave_in_mirror(
    cfg: &WorldConfig,
    seed: u64,
    ticks: usize,
    mut visit: impl FnMut(&Joints, &crate::simworld::world::Observation) -> bool,
) -> Result<()> {
    let placement = Placement::sample(cfg, &mut rng_from(derive_seed(seed, &[stream::PLACEMENT])));
    let mut world = World::new(cfg, &placement, &OtherSpec::None, seed)?;
    let mut waver = self_waver(cfg, seed);
    let mut last = Joints::zeros();
    for _ in 0..ticks {
        let obs = world.observe();
        if !visit(&last, &obs) {
            break;
        }
        last = waver.command(&obs.s_p, cfg.dt_s);
        world.step(&last);
    }
    Ok(())
}

/// Action/flow pairs from practice waving; every moving frame is a
/// contingent example.
pub fn practice_traces(cfg: &ScenarioConfig) -> Result<Vec<SelfTrace>> {
    let prior = &cfg.contingency;
    let ticks = (prior.practice_duration_s / cfg.world.dt_s).round() as usize;
    (0..prior.practice_trials)
        .map(|i| {
            let seed = derive_seed(prior.seed, &[stream::CONTINGENCY, i as u64]);
            let mut trace = SelfTrace::default();
            wave_in_mirror(&cfg.world, seed, ticks, |a, obs| {
                if obs.frame.is_moving() {
                    trace.pairs.push((*a, obs.frame.histogram));
                }
                true
            })?;
            Ok(trace)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PriorReport {
    pub train_samples: usize,
    pub holdout_samples: usize,
    pub train_accuracy: f64,
    pub holdout_accuracy: f64,
    /// Mean output on isotropic noise flow with random actions at half the
    /// waving speed limit.
    pub noise_mean_prob: f64,
    pub curve: Vec<f64>,
}

/// Practice, build a balanced dataset, split, train.
pub fn train_prior(cfg: &ScenarioConfig) -> Result<(Classifier, PriorReport, Vec<ContingencySample>)> {
    let prior = &cfg.contingency;
    let traces = practice_traces(cfg)?;
    let data = build_dataset(
        &traces,
        &prior.classifier.noise,
        true,
        derive_seed(prior.seed, &[stream::DATASET]),
    )?;
    let (train, holdout) = split(&data, prior.classifier.holdout_fraction, derive_seed(prior.seed, &[stream::DATASET, 1]));
    let (model, curve) = train_classifier(&train, &prior.classifier, derive_seed(prior.seed, &[stream::MDN_INIT]))?;
    let probe = noise_probe(
        500,
        &prior.classifier.noise,
        0.5 * cfg.world.waving.speed_limit_rad_per_s,
        derive_seed(prior.seed, &[stream::DATASET, 2]),
    );
    let noise_mean_prob = probe.iter().map(|s| model.prob(&s.action, &s.histogram)).sum::<f64>() / probe.len() as f64;
    let report = PriorReport {
        train_samples: train.len(),
        holdout_samples: holdout.len(),
        train_accuracy: model.accuracy(&train),
        holdout_accuracy: model.accuracy(&holdout),
        noise_mean_prob,
        curve,
    };
    Ok((model, report, data))
}

/// The classifier a trial uses: loaded from disk when configured,
/// otherwise trained from practice.
pub fn contingency_prior(cfg: &ScenarioConfig) -> Result<Classifier> {
    match &cfg.contingency.weights_path {
        Some(path) => Classifier::load(path),
        None => Ok(train_prior(cfg)?.0),
    }
}

/// `samples` (s_p, s_v) pairs from moving frames of mirror waving.
pub fn waving_dataset(cfg: &WorldConfig, seed: u64, samples: usize) -> Result<TrainBatch> {
    let mut batch = TrainBatch::default();
    let cap = samples * 50 + 1000;
    wave_in_mirror(cfg, seed, cap, |_, obs| {
        if let Some(s_v) = obs.frame.centroid {
            batch.push(obs.s_p, s_v);
        }
        batch.len() < samples
    })?;
    Ok(batch)
}
