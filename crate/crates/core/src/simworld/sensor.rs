//! Synthetic flow front end. The moving blob is a single tracked point;
//! its image velocity comes from the frame difference of the noiseless
//! projection and the direction histogram is built from jittered flow
//! samples around that velocity.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;
use crate::{Histogram, ImagePoint, HIST_BINS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    /// Blob speed below which the frame counts as non-movement.
    pub motion_threshold_per_s: f64,
    /// Centroid noise, normalized units.
    pub centroid_noise_std: f64,
    pub proprio_noise_std_rad: f64,
    /// Angular jitter of each flow sample.
    pub flow_jitter_std_rad: f64,
    pub flow_samples: usize,
    /// Fixed at the library's bin count; present so configs state it.
    pub histogram_bins: usize,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            motion_threshold_per_s: 0.02,
            centroid_noise_std: 0.005,
            proprio_noise_std_rad: 0.005,
            flow_jitter_std_rad: 0.3,
            flow_samples: 32,
            histogram_bins: HIST_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualFrame {
    /// Present only when a moving blob is visible.
    pub centroid: Option<ImagePoint>,
    pub histogram: Histogram,
    /// Normalized units per second.
    pub blob_speed: f64,
}

impl VisualFrame {
    pub fn still() -> Self {
        Self {
            centroid: None,
            histogram: [0.0; HIST_BINS],
            blob_speed: 0.0,
        }
    }

    pub fn is_moving(&self) -> bool {
        self.histogram.iter().any(|&b| b > 0.0)
    }
}

/// Bin of an angle in `[−π, π)` split into equal sectors.
pub fn direction_bin(angle: f64) -> usize {
    let width = 2.0 * PI / HIST_BINS as f64;
    let wrapped = (angle + PI).rem_euclid(2.0 * PI);
    ((wrapped / width).floor() as usize).min(HIST_BINS - 1)
}

/// Pixel-space direction of a normalized image displacement.
pub fn flow_angle(delta: &ImagePoint, image_size: (f64, f64)) -> f64 {
    (delta.y * image_size.1).atan2(delta.x * image_size.0)
}

/// Histogram of `samples` directions jittered around `angle`.
pub fn direction_histogram(angle: f64, jitter_std: f64, samples: usize, rng: &mut SimRng) -> Histogram {
    let mut h = [0.0; HIST_BINS];
    let n = samples.max(1);
    for _ in 0..n {
        let jitter = if jitter_std > 0.0 {
            Normal::new(0.0, jitter_std).expect("positive std").sample(rng)
        } else {
            0.0
        };
        h[direction_bin(angle + jitter)] += 1.0;
    }
    for b in &mut h {
        *b /= n as f64;
    }
    h
}

/// Build a frame from the previous and current noiseless projections.
/// `None` means the point is not visible in that frame.
pub fn flow_frame(
    prev: Option<ImagePoint>,
    cur: Option<ImagePoint>,
    dt: f64,
    image_size: (f64, f64),
    cfg: &SensorConfig,
    rng: &mut SimRng,
) -> VisualFrame {
    let (Some(prev), Some(cur)) = (prev, cur) else {
        return VisualFrame::still();
    };
    let delta = cur - prev;
    let speed = delta.norm() / dt;
    if !(speed >= cfg.motion_threshold_per_s) {
        return VisualFrame {
            blob_speed: speed,
            ..VisualFrame::still()
        };
    }
    let histogram = direction_histogram(flow_angle(&delta, image_size), cfg.flow_jitter_std_rad, cfg.flow_samples, rng);
    let mut centroid = cur;
    if cfg.centroid_noise_std > 0.0 {
        let noise = Normal::new(0.0, cfg.centroid_noise_std).expect("positive std");
        centroid.x += noise.sample(rng);
        centroid.y += noise.sample(rng);
    }
    centroid.x = centroid.x.clamp(0.0, 1.0);
    centroid.y = centroid.y.clamp(0.0, 1.0);
    VisualFrame {
        centroid: Some(centroid),
        histogram,
        blob_speed: speed,
    }
}

/// Isotropic random flow: every sample has an independent uniform direction.
pub fn noise_histogram(samples: usize, rng: &mut SimRng) -> Histogram {
    let mut h = [0.0; HIST_BINS];
    let n = samples.max(1);
    for _ in 0..n {
        h[direction_bin(rng.random_range(-PI..PI))] += 1.0;
    }
    for b in &mut h {
        *b /= n as f64;
    }
    h
}
