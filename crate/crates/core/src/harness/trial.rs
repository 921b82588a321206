//! One recognition trial: the robot waves, learns its forward model from
//! contingent frames when surprised, then moves under active inference
//! while accumulating evidence until it decides.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::contingency::Classifier;
use crate::error::{Error, Result};
use crate::evidence::{detect_outlier, Bounds, EvidenceState, LearningOutcome, LearningPhase, Status};
use crate::inference::{self, AttractorGoal, BeliefState, StepDiagnostics};
use crate::mdn::Mdn;
use crate::rng::{derive_seed, rng_from, stream};
use crate::schedule::{Schedule, Side};
use crate::simworld::waving::Waver;
use crate::simworld::world::{HumanCommand, Observation, Placement, World};
use crate::{ImagePoint, Joints};

use super::config::ScenarioConfig;
use super::practice::self_waver;
use super::summary::RunSummary;
use super::trace::{Phase, TraceRecord};

/// Image goal for a side of the attractor schedule.
pub fn goal_for(side: Side, offset: f64) -> AttractorGoal {
    AttractorGoal {
        rho: ImagePoint::new(0.5 + side.sign() * offset, 0.5),
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub trace: Vec<TraceRecord>,
    pub summary: RunSummary,
    /// Loss before each epoch and after the last; empty when untrained.
    pub training_curve: Vec<f64>,
    pub model: Mdn,
}

/// Tick-by-tick trial state.
pub struct Trial {
    cfg: ScenarioConfig,
    classifier: Arc<Classifier>,
    world: World,
    waver: Waver,
    goals: Schedule,
    mdn: Mdn,
    trained: bool,
    phase: Phase,
    belief: BeliefState,
    evidence: EvidenceState,
    bounds: Bounds,
    learning: LearningPhase,
    residuals: VecDeque<ImagePoint>,
    last_action: Joints,
    tick: u64,
    eval_start_s: Option<f64>,
    curve: Vec<f64>,
    finished: bool,
}

impl Trial {
    /// Placement drawn from the trial seed.
    pub fn new(cfg: &ScenarioConfig, classifier: Arc<Classifier>) -> Result<Self> {
        let placement = Placement::sample(&cfg.world, &mut rng_from(derive_seed(cfg.seed, &[stream::PLACEMENT])));
        Self::at(cfg, &placement, classifier)
    }

    pub fn at(cfg: &ScenarioConfig, placement: &Placement, classifier: Arc<Classifier>) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.seed;
        let world = World::new(&cfg.world, placement, &cfg.other_spec(), seed)?;
        let mdn = Mdn::new(cfg.mdn.network(), &mut rng_from(derive_seed(seed, &[stream::MDN_INIT])))?;
        let belief = BeliefState::at(world.state().self_joints);
        Ok(Self {
            waver: self_waver(&cfg.world, seed),
            goals: Schedule::new(cfg.attractor, rng_from(derive_seed(seed, &[stream::SCHEDULE, 1]))),
            bounds: cfg.recognition.bounds(cfg.inference.precisions.sigma_v),
            learning: LearningPhase::new(&cfg.recognition),
            residuals: VecDeque::with_capacity(cfg.recognition.outlier_window),
            cfg: cfg.clone(),
            classifier,
            world,
            mdn,
            trained: false,
            phase: Phase::PreLearning,
            belief,
            evidence: EvidenceState::default(),
            last_action: Joints::zeros(),
            tick: 0,
            eval_start_s: None,
            curve: Vec::new(),
            finished: false,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn evidence(&self) -> &EvidenceState {
        &self.evidence
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn training_curve(&self) -> &[f64] {
        &self.curve
    }

    pub fn model(&self) -> &Mdn {
        &self.mdn
    }

    /// Forward a human command to the other agent (applied next tick).
    pub fn command_other(&mut self, cmd: HumanCommand) -> Result<()> {
        self.world.command_other(cmd)
    }

    pub fn freeze_other(&mut self) {
        self.world.freeze_other();
    }

    fn inference_step(&self, obs: &Observation, goal: Option<&AttractorGoal>) -> Result<(BeliefState, StepDiagnostics)> {
        inference::step(
            &self.belief,
            Some(&obs.s_p),
            obs.frame.centroid.as_ref(),
            &self.mdn,
            goal,
            &self.cfg.inference,
            self.world.dt(),
        )
    }

    fn start_evaluation(&mut self, s_p: &Joints, t: f64) {
        self.phase = Phase::Evaluation;
        self.belief = BeliefState::at(*s_p);
        self.evidence.l = self.cfg.recognition.start_l;
        self.evidence.decider = Default::default();
        self.eval_start_s = Some(t);
    }

    fn set_status(&mut self, s: Status) -> Result<()> {
        self.evidence.set_status(s)
    }

    /// Advance one tick and return its record. Errors after the trial
    /// has finished.
    pub fn tick(&mut self) -> Result<TraceRecord> {
        if self.finished {
            return Err(Error::Session("trial already finished".into()));
        }
        let dt = self.world.dt();
        let rc = self.cfg.recognition.clone();
        let sigma_v = self.cfg.inference.precisions.sigma_v;
        let t = self.world.state().time;
        let obs = self.world.observe();
        let s_v = obs.frame.centroid;
        let p_cont = self.classifier.prob(&self.last_action, &obs.frame.histogram);
        let phase = self.phase;
        let mu_before = self.belief.mu;

        let mut diag: Option<StepDiagnostics> = None;
        let mut ev_step = None;
        let action;
        match phase {
            Phase::PreLearning => {
                let (next, d) = self.inference_step(&obs, None)?;
                if let Some(e_v) = d.e_v {
                    ev_step = Some(self.evidence.update(&e_v, p_cont, sigma_v, &rc, &self.bounds));
                    if self.residuals.len() == rc.outlier_window {
                        self.residuals.pop_front();
                    }
                    self.residuals.push_back(e_v);
                }
                self.belief = BeliefState { a: Joints::zeros(), ..next };
                diag = Some(d);
                action = self.waver.command(&obs.s_p, dt);
                if self.residuals.len() >= rc.outlier_window {
                    let window: Vec<_> = self.residuals.iter().copied().collect();
                    if detect_outlier(&window, sigma_v, rc.outlier_threshold, rc.outlier_window, self.trained) {
                        self.phase = Phase::Learning;
                        self.set_status(Status::Learning)?;
                    }
                }
            }
            Phase::Learning => {
                action = self.waver.command(&obs.s_p, dt);
                match self.learning.tick(s_v.as_ref().map(|v| (&obs.s_p, v)), p_cont, dt) {
                    LearningOutcome::Collecting => {}
                    LearningOutcome::Train => {
                        let adam = self.cfg.mdn.adam;
                        self.curve =
                            self.mdn.train(&self.learning.buffer.batch, self.cfg.mdn.epochs, self.cfg.mdn.batch_size, adam)?;
                        self.trained = true;
                        self.start_evaluation(&obs.s_p, t + dt);
                    }
                    LearningOutcome::Abandon => self.start_evaluation(&obs.s_p, t + dt),
                }
            }
            Phase::Evaluation => {
                let goal = self.goals.current().map(|s| goal_for(s, self.cfg.inference.target_offset));
                let (next, d) = self.inference_step(&obs, goal.as_ref())?;
                self.goals.advance(dt);
                self.belief = next;
                action = next.a;
                if let Some(e_v) = d.e_v {
                    ev_step = Some(self.evidence.update(&e_v, p_cont, sigma_v, &rc, &self.bounds));
                    if !self.evidence.status.is_final() {
                        if let Some(decision) = self.evidence.decider.update(self.evidence.p_self, dt, &rc) {
                            self.set_status(decision)?;
                        }
                    }
                }
                diag = Some(d);
                let elapsed = t + dt - self.eval_start_s.unwrap_or(t);
                if self.evidence.status.is_final() && elapsed >= rc.evaluation_s - 1e-9 {
                    self.finished = true;
                }
            }
        }
        if !self.finished && t + dt >= rc.global_timeout_s - 1e-9 {
            if !self.evidence.status.is_final() {
                self.set_status(Status::Other)?;
            }
            self.finished = true;
        }

        self.world.step(&action);
        self.last_action = action;
        let tick = self.tick;
        self.tick += 1;

        let pair = |v: ImagePoint| [v.x, v.y];
        let d = diag.as_ref();
        Ok(TraceRecord {
            tick,
            t,
            phase,
            status: self.evidence.status,
            trained: self.trained,
            mu: mu_before.into(),
            s_p: obs.s_p.into(),
            s_v: s_v.map(pair),
            g: d.map(|d| pair(d.g)),
            sigma_star: d.map(|d| d.sigma_star),
            kernel: d.map(|d| d.kernel),
            e_p_norm: d.map(|d| d.e_p.norm()),
            e_v: d.and_then(|d| d.e_v).map(pair),
            a: action.into(),
            h: obs.frame.histogram,
            p_cont,
            l_i: ev_step.map(|e| e.l_i),
            ln_p_cont: ev_step.map(|e| e.ln_p_cont),
            l: self.evidence.l,
            p_norm: self.evidence.p_norm,
            p_self: self.evidence.p_self,
            buffer: self.learning.buffer.len(),
            free_energy: d.map(|d| d.free_energy),
        }
        .quantized())
    }

    /// Tick until finished.
    pub fn run(mut self) -> Result<TrialOutput> {
        let mut trace = Vec::new();
        while !self.finished {
            trace.push(self.tick()?);
        }
        let summary = RunSummary::from_trace(&trace);
        Ok(TrialOutput {
            trace,
            summary,
            training_curve: self.curve,
            model: self.mdn,
        })
    }
}

/// Run a full trial with the placement drawn from the trial seed.
pub fn run_trial(cfg: &ScenarioConfig, classifier: Arc<Classifier>) -> Result<TrialOutput> {
    Trial::new(cfg, classifier)?.run()
}

pub fn run_trial_at(cfg: &ScenarioConfig, placement: &Placement, classifier: Arc<Classifier>) -> Result<TrialOutput> {
    Trial::at(cfg, placement, classifier)?.run()
}
