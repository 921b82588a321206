//! Alternating left/right activity schedule. Each side is active for a
//! fixed duration; idle gaps are drawn uniformly before every cycle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// +1 for left, −1 for right.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub active_s: f64,
    pub idle_max_s: f64,
    pub first: Side,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            active_s: 2.0,
            idle_max_s: 3.0,
            first: Side::Left,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Schedule {
    cfg: ScheduleConfig,
    rng: SimRng,
    side: Side,
    active: bool,
    remaining_s: f64,
}

impl Schedule {
    /// Starts with an idle gap.
    pub fn new(cfg: ScheduleConfig, mut rng: SimRng) -> Self {
        let gap = draw_gap(&cfg, &mut rng);
        Self {
            cfg,
            rng,
            side: cfg.first,
            active: false,
            remaining_s: gap,
        }
    }

    /// Current side when active.
    pub fn current(&self) -> Option<Side> {
        self.active.then_some(self.side)
    }

    /// Advance by `dt`; returns the side active for the next interval.
    pub fn advance(&mut self, dt: f64) -> Option<Side> {
        self.remaining_s -= dt;
        while self.remaining_s <= 1e-12 {
            if self.active {
                self.active = false;
                self.side = self.side.flip();
                self.remaining_s += draw_gap(&self.cfg, &mut self.rng);
            } else {
                self.active = true;
                self.remaining_s += self.cfg.active_s;
            }
        }
        self.current()
    }
}

fn draw_gap(cfg: &ScheduleConfig, rng: &mut SimRng) -> f64 {
    if cfg.idle_max_s > 0.0 {
        rng.random_range(0.0..cfg.idle_max_s)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn alternates_with_fixed_active_time() {
        let cfg = ScheduleConfig::default();
        let mut s = Schedule::new(cfg, rng_from(3));
        let dt = 0.05;
        let mut runs: Vec<(Option<Side>, usize)> = Vec::new();
        for _ in 0..4000 {
            let cur = s.advance(dt);
            match runs.last_mut() {
                Some((side, n)) if *side == cur => *n += 1,
                _ => runs.push((cur, 1)),
            }
        }
        let active: Vec<_> = runs.iter().filter(|(s, _)| s.is_some()).collect();
        for w in active.windows(2) {
            assert_ne!(w[0].0, w[1].0);
        }
        for (_, n) in &active[..active.len() - 1] {
            assert_eq!(*n, 40);
        }
        for (side, n) in &runs[1..runs.len() - 1] {
            if side.is_none() {
                assert!((*n as f64) * dt <= 3.0 + dt);
            }
        }
    }

    #[test]
    fn zero_gap_keeps_waving() {
        let cfg = ScheduleConfig {
            idle_max_s: 0.0,
            ..Default::default()
        };
        let mut s = Schedule::new(cfg, rng_from(1));
        for _ in 0..200 {
            assert!(s.advance(0.05).is_some());
        }
    }
}
