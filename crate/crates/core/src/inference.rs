//! Belief and action updates by gradient descent on the Laplace-form free
//! energy, with a visual attractor acting as the goal prior.
//!
//! `μ′` stays at zero for the whole run, so the dynamics residual is
//! `e_f = −f` and `∂f/∂μ` is taken as `−β I`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdn::{predict, Mdn};
use crate::{ImageJacobian, ImagePoint, Joints, DOF};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Isotropic variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Precisions {
    pub sigma_p: f64,
    pub sigma_v: f64,
    pub sigma_mu: f64,
}

impl Default for Precisions {
    fn default() -> Self {
        Self {
            sigma_p: 0.1,
            sigma_v: 0.1,
            sigma_mu: 0.075,
        }
    }
}

impl Precisions {
    pub fn validate(&self, path: &str) -> Result<()> {
        for (name, v) in [("sigma_p", self.sigma_p), ("sigma_v", self.sigma_v), ("sigma_mu", self.sigma_mu)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{path}.{name}"), "must be positive"));
            }
        }
        Ok(())
    }
}

/// Which vector drives the visual terms of the belief and action updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradientVariant {
    /// `Jᵀ e_v / Σ_v` with the mean Jacobian of the selected kernel.
    #[default]
    Jacobian,
    /// Negated responsibility-weighted gradient, precision `1/σ*²`.
    Likelihood,
}

impl std::str::FromStr for GradientVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "jacobian" => Ok(Self::Jacobian),
            "likelihood" => Ok(Self::Likelihood),
            other => Err(format!("unknown gradient variant `{other}` (jacobian|likelihood)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub precisions: Precisions,
    pub beta: f64,
    pub velocity_limit_rad_per_s: f64,
    /// Multiplies the action derivative before integration; 1 is the
    /// plain Euler rule.
    pub action_gain: f64,
    /// Joints the attractor may move.
    pub attractor_joints: Vec<usize>,
    /// Horizontal offset of the left/right targets from the image centre.
    pub target_offset: f64,
    pub gradient_variant: GradientVariant,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            precisions: Precisions::default(),
            beta: 1.0,
            velocity_limit_rad_per_s: 0.5,
            action_gain: 45.0,
            attractor_joints: vec![0],
            target_offset: 0.15,
            gradient_variant: GradientVariant::Jacobian,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        self.precisions.validate(&format!("{path}.precisions"))?;
        if !(self.beta > 0.0) {
            return Err(Error::config(format!("{path}.beta"), "must be positive"));
        }
        if !(self.velocity_limit_rad_per_s > 0.0) {
            return Err(Error::config(format!("{path}.velocity_limit_rad_per_s"), "must be positive"));
        }
        if !(self.action_gain > 0.0) {
            return Err(Error::config(format!("{path}.action_gain"), "must be positive"));
        }
        if let Some(j) = self.attractor_joints.iter().find(|&&j| j >= DOF) {
            return Err(Error::config(format!("{path}.attractor_joints"), format!("joint {j} out of range")));
        }
        if !(0.0..0.5).contains(&self.target_offset) {
            return Err(Error::config(format!("{path}.target_offset"), "must lie in [0, 0.5)"));
        }
        Ok(())
    }

    pub fn mask(&self) -> Joints {
        let mut m = Joints::zeros();
        for &j in &self.attractor_joints {
            m[j] = 1.0;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BeliefState {
    pub mu: Joints,
    pub mu_dot: Joints,
    pub a: Joints,
}

impl BeliefState {
    pub fn at(mu: Joints) -> Self {
        Self {
            mu,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttractorGoal {
    pub rho: ImagePoint,
}

/// Residuals and update vectors of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub g: ImagePoint,
    pub sigma_star: f64,
    pub kernel: usize,
    pub e_p: Joints,
    pub e_v: Option<ImagePoint>,
    pub e_f: Joints,
    pub f: Joints,
    pub dot_mu: Joints,
    pub dot_a: Joints,
    pub free_energy: f64,
}

/// `f = β · mask ⊙ Jᵀ(ρ − g)`.
pub fn attractor_dynamics(rho: &ImagePoint, jac: &ImageJacobian, g: &ImagePoint, beta: f64, mask: &Joints) -> Joints {
    (jac.transpose() * (rho - g) * beta).component_mul(mask)
}

/// Precision-weighted visual drive used in place of `Jᵀ e_v / Σ_v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisualDrive(pub Joints);

impl VisualDrive {
    pub fn jacobian(jac: &ImageJacobian, e_v: &ImagePoint, sigma_v: f64) -> Self {
        Self(jac.transpose() * e_v / sigma_v)
    }
}

/// `dotμ = e_p/Σ_p + drive_v + β f/Σ_μ`; absent terms contribute zero.
pub fn perception_step(
    belief: &BeliefState,
    s_p: Option<&Joints>,
    visual: Option<&VisualDrive>,
    f: Option<&Joints>,
    prec: &Precisions,
    beta: f64,
) -> Joints {
    let mut d = Joints::zeros();
    if let Some(s_p) = s_p {
        d += (s_p - belief.mu) / prec.sigma_p;
    }
    if let Some(v) = visual {
        d += v.0;
    }
    if let Some(f) = f {
        // (∂f/∂μ)ᵀ (μ′ − f)/Σ_μ with ∂f/∂μ = −βI.
        d += (belief.mu_dot - f) * (-beta / prec.sigma_mu);
    }
    d
}

/// `dota = −Δt e_p/Σ_p − Δt drive_v`.
pub fn action_step(e_p: Option<&Joints>, visual: Option<&VisualDrive>, prec: &Precisions, dt: f64) -> Joints {
    let mut d = Joints::zeros();
    if let Some(e_p) = e_p {
        d -= e_p * (dt / prec.sigma_p);
    }
    if let Some(v) = visual {
        d -= v.0 * dt;
    }
    d
}

/// Euler step. `a` is clamped to `±limit` per joint; `μ′` is untouched.
pub fn integrate(belief: &BeliefState, dot_mu: &Joints, dot_a: &Joints, dt: f64, action_gain: f64, limit: f64) -> BeliefState {
    let mut a = belief.a + dot_a * (dt * action_gain);
    for v in a.iter_mut() {
        *v = v.clamp(-limit, limit);
    }
    BeliefState {
        mu: belief.mu + dot_mu * dt,
        mu_dot: belief.mu_dot,
        a,
    }
}

/// Laplace free energy of the present terms, constants included.
pub fn free_energy(
    belief: &BeliefState,
    s_p: Option<&Joints>,
    s_v: Option<&ImagePoint>,
    g: &ImagePoint,
    f: Option<&Joints>,
    prec: &Precisions,
) -> f64 {
    let mut quad = 0.0;
    let mut logdet = 0.0;
    let mut n = 0usize;
    if let Some(s_p) = s_p {
        quad += (s_p - belief.mu).norm_squared() / prec.sigma_p;
        logdet += DOF as f64 * prec.sigma_p.ln();
        n += DOF;
    }
    if let Some(s_v) = s_v {
        quad += (s_v - g).norm_squared() / prec.sigma_v;
        logdet += 2.0 * prec.sigma_v.ln();
        n += 2;
    }
    if let Some(f) = f {
        quad += (belief.mu_dot - f).norm_squared() / prec.sigma_mu;
        logdet += DOF as f64 * prec.sigma_mu.ln();
        n += DOF;
    }
    0.5 * (quad + logdet + n as f64 * LN_2PI)
}

/// One inference tick against the learned model: perception, goal and
/// action updates, then integration.
pub fn step(
    belief: &BeliefState,
    s_p: Option<&Joints>,
    s_v: Option<&ImagePoint>,
    model: &Mdn,
    goal: Option<&AttractorGoal>,
    cfg: &InferenceConfig,
    dt: f64,
) -> Result<(BeliefState, StepDiagnostics)> {
    let mix = model.forward(&belief.mu)?;
    let pred = predict(&mix);
    let jac = model.mean_jacobian(&belief.mu, pred.index);
    let prec = &cfg.precisions;
    let e_p = s_p.map(|s| s - belief.mu).unwrap_or_else(Joints::zeros);
    let e_v = s_v.map(|s| s - pred.g);
    let visual = s_v.map(|s| match cfg.gradient_variant {
        GradientVariant::Jacobian => VisualDrive::jacobian(&jac, &(s - pred.g), prec.sigma_v),
        GradientVariant::Likelihood => VisualDrive(-model.likelihood_gradient(&belief.mu, s, &mix)),
    });
    let f = goal.map(|goal| attractor_dynamics(&goal.rho, &jac, &pred.g, cfg.beta, &cfg.mask()));
    let dot_mu = perception_step(belief, s_p, visual.as_ref(), f.as_ref(), prec, cfg.beta);
    let dot_a = action_step(s_p.map(|_| &e_p), visual.as_ref(), prec, dt);
    let free = free_energy(belief, s_p, s_v, &pred.g, f.as_ref(), prec);
    let next = integrate(belief, &dot_mu, &dot_a, dt, cfg.action_gain, cfg.velocity_limit_rad_per_s);
    let f = f.unwrap_or_else(Joints::zeros);
    Ok((
        next,
        StepDiagnostics {
            g: pred.g,
            sigma_star: pred.sigma,
            kernel: pred.index,
            e_p,
            e_v,
            e_f: belief.mu_dot - f,
            f,
            dot_mu,
            dot_a,
            free_energy: free,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdn::MdnConfig;
    use crate::rng::rng_from;
    use rand::Rng;

    fn unit_prec() -> Precisions {
        Precisions {
            sigma_p: 1.0,
            sigma_v: 0.1,
            sigma_mu: 10.0,
        }
    }

    fn unit(i: usize, v: f64) -> Joints {
        let mut j = Joints::zeros();
        j[i] = v;
        j
    }

    #[test]
    fn attractor_vanishes_at_goal_and_with_flat_model() {
        let jac = ImageJacobian::from_fn(|r, c| 0.1 * (r + c) as f64);
        let g = ImagePoint::new(0.4, 0.5);
        let mask = Joints::repeat(1.0);
        assert_eq!(attractor_dynamics(&g, &jac, &g, 1.0, &mask), Joints::zeros());
        let rho = ImagePoint::new(0.6, 0.2);
        assert_eq!(attractor_dynamics(&rho, &ImageJacobian::zeros(), &g, 1.0, &mask), Joints::zeros());
        let f1 = attractor_dynamics(&rho, &jac, &g, 1.5, &mask);
        let f2 = attractor_dynamics(&rho, &jac, &g, 3.0, &mask);
        assert_eq!(f1 * 2.0, f2);
    }

    #[test]
    fn proprioceptive_term_alone() {
        let belief = BeliefState::at(Joints::zeros());
        let s_p = unit(0, 0.1);
        let d = perception_step(&belief, Some(&s_p), None, None, &unit_prec(), 1.0);
        assert_eq!(d, unit(0, 0.1));
    }

    #[test]
    fn zero_visual_residual_contributes_nothing() {
        let belief = BeliefState::at(Joints::repeat(0.2));
        let jac = ImageJacobian::from_fn(|r, c| (r as f64 - c as f64) * 0.05);
        let v = VisualDrive::jacobian(&jac, &ImagePoint::zeros(), 0.1);
        let s_p = Joints::repeat(0.25);
        let with = perception_step(&belief, Some(&s_p), Some(&v), None, &unit_prec(), 1.0);
        let without = perception_step(&belief, Some(&s_p), None, None, &unit_prec(), 1.0);
        assert_eq!(with, without);
    }

    #[test]
    fn action_formula() {
        let prec = unit_prec();
        assert_eq!(action_step(Some(&Joints::zeros()), None, &prec, 0.05), Joints::zeros());
        let d = action_step(Some(&unit(0, 1.0)), None, &prec, 0.05);
        assert!((d - unit(0, -0.05)).amax() < 1e-15);
    }

    #[test]
    fn integrate_rules() {
        let b = BeliefState {
            mu: Joints::repeat(0.3),
            mu_dot: Joints::zeros(),
            a: Joints::repeat(0.1),
        };
        assert_eq!(integrate(&b, &Joints::zeros(), &Joints::zeros(), 0.05, 1.0, 0.5), b);
        let d = Joints::repeat(0.7);
        let half = integrate(&integrate(&b, &d, &d, 0.025, 1.0, 10.0), &d, &d, 0.025, 1.0, 10.0);
        let full = integrate(&b, &d, &d, 0.05, 1.0, 10.0);
        assert!((half.mu - full.mu).amax() < 1e-15);
        assert!((half.a - full.a).amax() < 1e-15);
        let big = integrate(&b, &Joints::zeros(), &Joints::repeat(1e6), 0.05, 1.0, 0.5);
        assert!(big.a.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn free_energy_constants_and_quadratic_scaling() {
        let prec = unit_prec();
        let b = BeliefState::at(Joints::repeat(0.1));
        let g = ImagePoint::new(0.5, 0.5);
        let f0 = free_energy(&b, Some(&b.mu), Some(&g), &g, None, &prec);
        let c = 0.5 * (7.0 * prec.sigma_p.ln() + 2.0 * prec.sigma_v.ln() + 9.0 * LN_2PI);
        assert!((f0 - c).abs() < 1e-12);
        let s1 = g + ImagePoint::new(0.03, -0.01);
        let s2 = g + ImagePoint::new(0.06, -0.02);
        let q1 = free_energy(&b, None, Some(&s1), &g, None, &prec) - free_energy(&b, None, Some(&g), &g, None, &prec);
        let q2 = free_energy(&b, None, Some(&s2), &g, None, &prec) - free_energy(&b, None, Some(&g), &g, None, &prec);
        assert!((q2 - 4.0 * q1).abs() < 1e-12);
    }

    #[test]
    fn proprioceptive_recurrence_is_geometric() {
        let prec = Precisions {
            sigma_p: 1.3,
            ..Default::default()
        };
        let dt = 0.05;
        let s_p = Joints::from_fn(|i, _| 0.1 * i as f64 - 0.2);
        let mu0 = Joints::from_fn(|i, _| 0.3 - 0.05 * i as f64);
        let mut b = BeliefState::at(mu0);
        for k in 1..=100 {
            let d = perception_step(&b, Some(&s_p), None, None, &prec, 1.0);
            b = integrate(&b, &d, &Joints::zeros(), dt, 1.0, 0.5);
            let r = (1.0 - dt / prec.sigma_p).powi(k);
            for i in 0..DOF {
                let expect = s_p[i] + (mu0[i] - s_p[i]) * r;
                assert!((b.mu[i] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn one_joint_closed_loop_settles() {
        // Only joint 0 moves; the belief starts displaced from the body.
        let prec = unit_prec();
        let dt = 0.05;
        let mut q = Joints::zeros();
        let mut b = BeliefState::at(unit(0, 0.4));
        let mut errs = Vec::new();
        for _ in 0..2000 {
            let d_mu = perception_step(&b, Some(&q), None, None, &prec, 1.0);
            let e_p = q - b.mu;
            let d_a = action_step(Some(&e_p), None, &prec, dt);
            b = integrate(&b, &d_mu, &d_a, dt, 1.0, 0.5);
            q += b.a * dt;
            errs.push(e_p[0].abs());
        }
        // The fast mode has died out after 10 s.
        for w in errs[200..].windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        assert!(*errs.last().unwrap() < 1e-3);
    }

    #[test]
    fn perception_step_descends_free_energy() {
        let mut rng = rng_from(31);
        let prec = unit_prec();
        let model = Mdn::new(MdnConfig::default(), &mut rng_from(2)).unwrap();
        for _ in 0..1000 {
            let mu = Joints::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let s_p = mu + Joints::from_fn(|_, _| rng.random_range(-0.3..0.3));
            let s_v = ImagePoint::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            let b = BeliefState::at(mu);
            let mix = model.forward(&mu).unwrap();
            let p = predict(&mix);
            let jac = model.mean_jacobian(&mu, p.index);
            let v = VisualDrive::jacobian(&jac, &(s_v - p.g), prec.sigma_v);
            let d = perception_step(&b, Some(&s_p), Some(&v), None, &prec, 1.0);
            let next = integrate(&b, &d, &Joints::zeros(), 1e-3, 1.0, 0.5);
            let g_next = predict(&model.forward(&next.mu).unwrap());
            let f0 = free_energy(&b, Some(&s_p), Some(&s_v), &p.g, None, &prec);
            let g1 = if g_next.index == p.index { g_next.g } else { model.forward(&next.mu).unwrap().means[p.index] };
            let f1 = free_energy(&next, Some(&s_p), Some(&s_v), &g1, None, &prec);
            assert!(f1 <= f0 + 1e-12, "{f1} > {f0}");
        }
    }

    #[test]
    fn config_validation_reports_paths() {
        let cfg = InferenceConfig {
            beta: 0.0,
            ..Default::default()
        };
        match cfg.validate("inference") {
            Err(Error::Config { path, .. }) => assert_eq!(path, "inference.beta"),
            other => panic!("{other:?}"),
        }
        let mut cfg = InferenceConfig::default();
        cfg.precisions.sigma_v = -1.0;
        assert!(cfg.validate("inference").is_err());
    }
}
