//! Scripted waving primitive: joint-space P-control toward a left or right
//! pose around home, with Ornstein-Uhlenbeck exploration on every joint.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;
use crate::schedule::{Schedule, Side};
use crate::{Joints, DOF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WavingConfig {
    /// Offset of the waving joint from home at each side.
    pub amplitude_rad: f64,
    pub waving_joint: usize,
    pub gain_per_s: f64,
    pub speed_limit_rad_per_s: f64,
    pub explore_std_rad_per_s: f64,
    pub explore_tau_s: f64,
}

impl Default for WavingConfig {
    fn default() -> Self {
        Self {
            amplitude_rad: 0.6,
            waving_joint: 0,
            gain_per_s: 2.0,
            speed_limit_rad_per_s: 0.5,
            explore_std_rad_per_s: 0.08,
            explore_tau_s: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WavingPrimitive {
    cfg: WavingConfig,
    home: Joints,
    explore: Joints,
    rng: SimRng,
}

impl WavingPrimitive {
    pub fn new(cfg: WavingConfig, home: Joints, rng: SimRng) -> Self {
        Self {
            cfg,
            home,
            explore: Joints::zeros(),
            rng,
        }
    }

    pub fn config(&self) -> &WavingConfig {
        &self.cfg
    }

    pub fn target(&self, side: Side) -> Joints {
        let mut t = self.home;
        t[self.cfg.waving_joint] += side.sign() * self.cfg.amplitude_rad;
        t
    }

    /// Velocity command; zero while idle.
    pub fn command(&mut self, q: &Joints, side: Option<Side>, dt: f64) -> Joints {
        let Some(side) = side else {
            self.explore = Joints::zeros();
            return Joints::zeros();
        };
        let tau = self.cfg.explore_tau_s.max(dt);
        let kick = self.cfg.explore_std_rad_per_s * (2.0 * dt / tau).sqrt();
        for i in 0..DOF {
            let n: f64 = StandardNormal.sample(&mut self.rng);
            self.explore[i] += -self.explore[i] * dt / tau + kick * n;
        }
        let limit = self.cfg.speed_limit_rad_per_s;
        let mut a = (self.target(side) - q) * self.cfg.gain_per_s + self.explore;
        for v in a.iter_mut() {
            *v = v.clamp(-limit, limit);
        }
        a
    }
}

/// Primitive bundled with its own schedule, as run by the robot before it
/// has a model and by an asynchronous twin.
#[derive(Debug, Clone)]
pub struct Waver {
    pub primitive: WavingPrimitive,
    pub schedule: Schedule,
}

impl Waver {
    pub fn command(&mut self, q: &Joints, dt: f64) -> Joints {
        let side = self.schedule.current();
        let a = self.primitive.command(q, side, dt);
        self.schedule.advance(dt);
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn idle_command_is_zero() {
        let mut p = WavingPrimitive::new(WavingConfig::default(), Joints::zeros(), rng_from(1));
        assert_eq!(p.command(&Joints::repeat(0.3), None, 0.05), Joints::zeros());
    }

    #[test]
    fn converges_to_side_target_without_exploration() {
        let cfg = WavingConfig {
            explore_std_rad_per_s: 0.0,
            ..Default::default()
        };
        let mut p = WavingPrimitive::new(cfg, Joints::zeros(), rng_from(1));
        let mut q = Joints::zeros();
        for _ in 0..200 {
            let a = p.command(&q, Some(Side::Right), 0.05);
            assert!(a.amax() <= cfg.speed_limit_rad_per_s + 1e-15);
            q += a * 0.05;
        }
        assert!((q[0] + cfg.amplitude_rad).abs() < 1e-6);
        assert!(q.rows(1, DOF - 1).amax() < 1e-12);
    }
}
