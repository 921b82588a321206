use nalgebra::{Isometry3, Point3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::camera::{in_image, project_point, CameraSpec};
use super::kinematics::{forward_kinematics_unchecked, ArmModel};
use super::mirror::{mirror_reflect, MirrorSpec};
use super::sensor::{flow_frame, SensorConfig, VisualFrame};
use super::waving::{Waver, WavingConfig, WavingPrimitive};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, stream, SimRng};
use crate::schedule::{Schedule, ScheduleConfig, Side};
use crate::{ImagePoint, Joints, DOF};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub dt_s: f64,
    pub link_lengths_m: [f64; DOF],
    pub joint_limits_rad: [[f64; 2]; DOF],
    pub arm_base_m: [f64; 3],
    pub home_rad: [f64; DOF],
    pub focal_length_px: f64,
    pub camera_eye_m: [f64; 3],
    pub mirror_distance_m: [f64; 2],
    pub mirror_yaw_rad: [f64; 2],
    /// Half-width of the uniform jitter applied to the initial pose.
    pub initial_jitter_rad: f64,
    pub sensor: SensorConfig,
    pub waving: WavingConfig,
    pub waving_schedule: ScheduleConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let arm = ArmModel::default_seven_dof();
        let mut link_lengths_m = [0.0; DOF];
        link_lengths_m.copy_from_slice(arm.link_lengths());
        let mut joint_limits_rad = [[0.0; 2]; DOF];
        for (dst, &(lo, hi)) in joint_limits_rad.iter_mut().zip(arm.joint_limits()) {
            *dst = [lo, hi];
        }
        let base = arm.base_pose().translation.vector;
        Self {
            dt_s: 0.05,
            link_lengths_m,
            joint_limits_rad,
            arm_base_m: [base.x, base.y, base.z],
            home_rad: [0.0, 0.35, 0.0, -0.7, 0.0, 0.35, 0.0],
            focal_length_px: 554.0,
            camera_eye_m: [0.1, 0.0, 1.45],
            mirror_distance_m: [1.3, 1.7],
            mirror_yaw_rad: [-0.2, 0.2],
            initial_jitter_rad: 0.1,
            sensor: SensorConfig::default(),
            waving: WavingConfig::default(),
            waving_schedule: ScheduleConfig::default(),
        }
    }
}

impl WorldConfig {
    pub fn arm(&self) -> Result<ArmModel> {
        let axes = ArmModel::default_seven_dof();
        ArmModel::new(
            self.link_lengths_m.to_vec(),
            (0..DOF).map(|i| axes.joint_axis(i).into_inner()).collect(),
            self.joint_limits_rad.iter().map(|l| (l[0], l[1])).collect(),
            Isometry3::translation(self.arm_base_m[0], self.arm_base_m[1], self.arm_base_m[2]),
        )
    }

    pub fn home(&self) -> Joints {
        Joints::from_column_slice(&self.home_rad)
    }
}

/// One randomized robot placement in front of the mirror.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub mirror_distance_m: f64,
    pub mirror_yaw_rad: f64,
    pub initial_offset_rad: [f64; DOF],
}

impl Placement {
    pub fn nominal(cfg: &WorldConfig) -> Self {
        Self {
            mirror_distance_m: 0.5 * (cfg.mirror_distance_m[0] + cfg.mirror_distance_m[1]),
            mirror_yaw_rad: 0.5 * (cfg.mirror_yaw_rad[0] + cfg.mirror_yaw_rad[1]),
            initial_offset_rad: [0.0; DOF],
        }
    }

    pub fn sample(cfg: &WorldConfig, rng: &mut SimRng) -> Self {
        let mut draw = |r: [f64; 2]| if r[1] > r[0] { rng.random_range(r[0]..r[1]) } else { r[0] };
        let mirror_distance_m = draw(cfg.mirror_distance_m);
        let mirror_yaw_rad = draw(cfg.mirror_yaw_rad);
        let j = cfg.initial_jitter_rad;
        let mut initial_offset_rad = [0.0; DOF];
        for o in &mut initial_offset_rad {
            *o = draw([-j, j]);
        }
        Self {
            mirror_distance_m,
            mirror_yaw_rad,
            initial_offset_rad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OtherKind {
    None,
    Twin,
    Scripted,
    Human,
}

/// What the camera sees instead of the mirror reflection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OtherSpec {
    /// Mirror only.
    None,
    /// Lagged copy of the self trajectory.
    Replay { delay_s: f64 },
    /// Independent agent running the waving primitive on its own schedule.
    Twin,
    /// Sinusoid on the waving joint.
    Scripted { amplitude_rad: f64, frequency_hz: f64 },
    /// Externally commanded.
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HumanCommand {
    Wave { direction: Side },
    Stop,
    JointVelocity { velocity: [f64; DOF] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub time: f64,
    pub self_joints: Joints,
    pub other_joints: Option<Joints>,
    pub other_kind: OtherKind,
}

#[derive(Debug, Clone)]
enum OtherAgent {
    None,
    Replay { delay_s: f64, history: Vec<Joints> },
    Twin(Box<Waver>),
    Scripted { amplitude_rad: f64, frequency_hz: f64 },
    Human { primitive: Box<WavingPrimitive>, command: Option<HumanCommand> },
}

#[derive(Debug, Clone)]
pub struct Observation {
    /// Noisy joint readings.
    pub s_p: Joints,
    pub frame: VisualFrame,
}

/// Advance joints by one Euler step and clamp to the limits.
pub fn integrate_joints(arm: &ArmModel, q: &Joints, velocity: &Joints, dt: f64) -> (Joints, bool) {
    let mut next = q + velocity * dt;
    let clamped = arm.clamp(next.as_mut_slice());
    (next, clamped)
}

/// Simulated scene: the self arm, a mirror or another agent, and the
/// head camera that tracks the moving hand.
#[derive(Debug, Clone)]
pub struct World {
    cfg: WorldConfig,
    arm: ArmModel,
    camera: CameraSpec,
    mirror: MirrorSpec,
    home: Joints,
    state: WorldState,
    tick: u64,
    other: OtherAgent,
    prev_point: Option<ImagePoint>,
    proprio_rng: SimRng,
    vision_rng: SimRng,
}

impl World {
    pub fn new(cfg: &WorldConfig, placement: &Placement, other: &OtherSpec, seed: u64) -> Result<Self> {
        if !(cfg.dt_s > 0.0) {
            return Err(Error::config("world.dt_s", "must be positive"));
        }
        let arm = cfg.arm()?;
        let home = cfg.home();
        arm.check_limits(home.as_slice())?;
        let mirror = MirrorSpec::vertical(placement.mirror_distance_m, placement.mirror_yaw_rad);
        let eye = Point3::from(Vector3::from(cfg.camera_eye_m));
        let target = mirror_reflect(&mirror, &forward_kinematics_unchecked(&arm, home.as_slice()));
        let camera = CameraSpec::look_at(cfg.focal_length_px, eye, target, Vector3::z())?;

        let mut q0 = home + Joints::from_column_slice(&placement.initial_offset_rad);
        arm.clamp(q0.as_mut_slice());

        let mut other_rng = rng_from(derive_seed(seed, &[stream::OTHER]));
        let (agent, other_joints, other_kind) = match other {
            OtherSpec::None => (OtherAgent::None, None, OtherKind::None),
            OtherSpec::Replay { delay_s } => (
                OtherAgent::Replay {
                    delay_s: delay_s.max(0.0),
                    history: vec![q0],
                },
                Some(q0),
                OtherKind::Twin,
            ),
            OtherSpec::Twin => {
                let mut start = home;
                for v in start.iter_mut() {
                    let j = cfg.initial_jitter_rad;
                    if j > 0.0 {
                        *v += other_rng.random_range(-j..j);
                    }
                }
                arm.clamp(start.as_mut_slice());
                let waver = Waver {
                    primitive: WavingPrimitive::new(cfg.waving, home, rng_from(derive_seed(seed, &[stream::OTHER, 1]))),
                    schedule: Schedule::new(cfg.waving_schedule, rng_from(derive_seed(seed, &[stream::OTHER_SCHEDULE]))),
                };
                (OtherAgent::Twin(Box::new(waver)), Some(start), OtherKind::Twin)
            }
            OtherSpec::Scripted {
                amplitude_rad,
                frequency_hz,
            } => (
                OtherAgent::Scripted {
                    amplitude_rad: *amplitude_rad,
                    frequency_hz: *frequency_hz,
                },
                Some(home),
                OtherKind::Scripted,
            ),
            OtherSpec::Human => {
                let quiet = WavingConfig {
                    explore_std_rad_per_s: 0.0,
                    ..cfg.waving
                };
                (
                    OtherAgent::Human {
                        primitive: Box::new(WavingPrimitive::new(quiet, home, other_rng.clone())),
                        command: None,
                    },
                    Some(home),
                    OtherKind::Human,
                )
            }
        };

        let mut world = Self {
            cfg: cfg.clone(),
            arm,
            camera,
            mirror,
            home,
            state: WorldState {
                time: 0.0,
                self_joints: q0,
                other_joints,
                other_kind,
            },
            tick: 0,
            other: agent,
            prev_point: None,
            proprio_rng: rng_from(derive_seed(seed, &[stream::PROPRIO])),
            vision_rng: rng_from(derive_seed(seed, &[stream::VISION])),
        };
        world.prev_point = world.tracked_point();
        Ok(world)
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn arm(&self) -> &ArmModel {
        &self.arm
    }

    pub fn camera(&self) -> &CameraSpec {
        &self.camera
    }

    pub fn mirror(&self) -> &MirrorSpec {
        &self.mirror
    }

    pub fn home(&self) -> &Joints {
        &self.home
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt_s
    }

    /// Latest command wins; applied at the next step.
    pub fn command_other(&mut self, cmd: HumanCommand) -> Result<()> {
        match &mut self.other {
            OtherAgent::Human { command, .. } => {
                if let HumanCommand::JointVelocity { velocity } = &cmd {
                    if velocity.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite("joint velocity command"));
                    }
                }
                *command = Some(cmd);
                Ok(())
            }
            _ => Err(Error::Session("the other agent does not accept commands".into())),
        }
    }

    /// Disconnect: the human-driven agent stops moving.
    pub fn freeze_other(&mut self) {
        if let OtherAgent::Human { command, .. } = &mut self.other {
            *command = Some(HumanCommand::Stop);
        }
    }

    /// Hand position of the tracked body: the reflected self hand in the
    /// mirror setup, else the other agent's hand standing at the mirrored
    /// placement.
    pub fn tracked_world_point(&self) -> Point3<f64> {
        let q = self.state.other_joints.as_ref().unwrap_or(&self.state.self_joints);
        mirror_reflect(&self.mirror, &forward_kinematics_unchecked(&self.arm, q.as_slice()))
    }

    /// Noiseless projection, `None` when outside the image.
    pub fn tracked_point(&self) -> Option<ImagePoint> {
        project_point(&self.camera, &self.tracked_world_point()).filter(in_image)
    }

    /// Self velocity command in rad/s. Returns whether any joint clamped.
    pub fn step(&mut self, action: &Joints) -> bool {
        let dt = self.cfg.dt_s;
        let (q, clamped) = integrate_joints(&self.arm, &self.state.self_joints, action, dt);
        self.state.self_joints = q;
        self.tick += 1;
        self.state.time = self.tick as f64 * dt;
        let t = self.state.time;
        let home = self.home;
        let limit = self.cfg.waving.speed_limit_rad_per_s;
        match &mut self.other {
            OtherAgent::None => {}
            OtherAgent::Replay { delay_s, history } => {
                history.push(q);
                self.state.other_joints = Some(interpolate_history(history, t - *delay_s, dt));
            }
            OtherAgent::Twin(waver) => {
                let cur = self.state.other_joints.expect("twin has joints");
                let v = waver.command(&cur, dt);
                self.state.other_joints = Some(integrate_joints(&self.arm, &cur, &v, dt).0);
            }
            OtherAgent::Scripted {
                amplitude_rad,
                frequency_hz,
            } => {
                let mut j = home;
                j[0] += *amplitude_rad * (2.0 * std::f64::consts::PI * *frequency_hz * t).sin();
                self.arm.clamp(j.as_mut_slice());
                self.state.other_joints = Some(j);
            }
            OtherAgent::Human { primitive, command } => {
                let cur = self.state.other_joints.expect("human agent has joints");
                let v = match command {
                    Some(HumanCommand::Wave { direction }) => primitive.command(&cur, Some(*direction), dt),
                    Some(HumanCommand::JointVelocity { velocity }) => {
                        Joints::from_column_slice(velocity).map(|v| v.clamp(-limit, limit))
                    }
                    Some(HumanCommand::Stop) | None => Joints::zeros(),
                };
                self.state.other_joints = Some(integrate_joints(&self.arm, &cur, &v, dt).0);
            }
        }
        clamped
    }

    /// Sample the sensors at the current state.
    pub fn observe(&mut self) -> Observation {
        let std = self.cfg.sensor.proprio_noise_std_rad;
        let mut s_p = self.state.self_joints;
        if std > 0.0 {
            let n = Normal::new(0.0, std).expect("positive std");
            for v in s_p.iter_mut() {
                *v += n.sample(&mut self.proprio_rng);
            }
        }
        let cur = self.tracked_point();
        let frame = flow_frame(
            self.prev_point,
            cur,
            self.cfg.dt_s,
            self.camera.image_size(),
            &self.cfg.sensor,
            &mut self.vision_rng,
        );
        self.prev_point = cur;
        Observation { s_p, frame }
    }
}

fn interpolate_history(history: &[Joints], t: f64, dt: f64) -> Joints {
    if t <= 0.0 {
        return history[0];
    }
    let x = t / dt;
    let k = x.floor() as usize;
    if k + 1 >= history.len() {
        return *history.last().expect("history is never empty");
    }
    let frac = x - k as f64;
    history[k] * (1.0 - frac) + history[k + 1] * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(other: OtherSpec) -> World {
        let cfg = WorldConfig::default();
        World::new(&cfg, &Placement::nominal(&cfg), &other, 9).unwrap()
    }

    #[test]
    fn zero_action_changes_only_time() {
        let mut w = world(OtherSpec::None);
        let before = w.state().clone();
        for _ in 0..10 {
            w.step(&Joints::zeros());
        }
        assert_eq!(w.state().self_joints, before.self_joints);
        assert!(w.state().other_joints.is_none());
        assert!((w.state().time - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_velocity_integrates_linearly() {
        let mut w = world(OtherSpec::None);
        let q0 = w.state().self_joints;
        let v = Joints::from_column_slice(&[0.1, -0.05, 0.02, 0.03, -0.1, 0.04, 0.0]);
        for _ in 0..20 {
            assert!(!w.step(&v));
        }
        let expect = q0 + v * 1.0;
        assert!((w.state().self_joints - expect).amax() < 1e-12);
    }

    #[test]
    fn clamps_at_joint_limits() {
        let mut w = world(OtherSpec::None);
        let v = Joints::repeat(100.0);
        assert!(w.step(&v));
        w.arm().check_limits(w.state().self_joints.as_slice()).unwrap();
    }

    #[test]
    fn replay_is_time_shifted_self() {
        let mut w = world(OtherSpec::Replay { delay_s: 0.5 });
        let mut selfs = vec![w.state().self_joints];
        let mut others = vec![w.state().other_joints.unwrap()];
        for k in 0..100 {
            let t = k as f64 * 0.05;
            let v = Joints::from_fn(|i, _| 0.2 * (t + i as f64).sin());
            w.step(&v);
            selfs.push(w.state().self_joints);
            others.push(w.state().other_joints.unwrap());
        }
        for k in 10..selfs.len() {
            assert!((others[k] - selfs[k - 10]).amax() < 1e-12);
        }
    }

    #[test]
    fn zero_delay_replay_matches_mirror_view() {
        let mut a = world(OtherSpec::None);
        let mut b = world(OtherSpec::Replay { delay_s: 0.0 });
        for k in 0..40 {
            let v = Joints::from_fn(|i, _| 0.3 * ((k + i) as f64 * 0.2).cos());
            a.step(&v);
            b.step(&v);
            assert_eq!(a.tracked_point(), b.tracked_point());
        }
    }

    #[test]
    fn home_hand_is_near_image_centre() {
        let cfg = WorldConfig {
            initial_jitter_rad: 0.0,
            ..Default::default()
        };
        let w = World::new(&cfg, &Placement::nominal(&cfg), &OtherSpec::None, 1).unwrap();
        let p = w.tracked_point().unwrap();
        assert!((p - ImagePoint::new(0.5, 0.5)).norm() < 1e-9);
    }

    #[test]
    fn human_agent_follows_latest_command() {
        let mut w = world(OtherSpec::Human);
        let start = w.state().other_joints.unwrap();
        w.command_other(HumanCommand::Wave { direction: Side::Left }).unwrap();
        w.command_other(HumanCommand::Stop).unwrap();
        w.step(&Joints::zeros());
        assert_eq!(w.state().other_joints.unwrap(), start);
        let mut v = [0.0; DOF];
        v[0] = 0.2;
        w.command_other(HumanCommand::JointVelocity { velocity: v }).unwrap();
        w.step(&Joints::zeros());
        assert!((w.state().other_joints.unwrap()[0] - start[0] - 0.01).abs() < 1e-12);
        w.freeze_other();
        let frozen = w.state().other_joints.unwrap();
        w.step(&Joints::zeros());
        assert_eq!(w.state().other_joints.unwrap(), frozen);
    }

    #[test]
    fn commanding_a_scripted_agent_fails() {
        let mut w = world(OtherSpec::Twin);
        assert!(w.command_other(HumanCommand::Stop).is_err());
    }
}
