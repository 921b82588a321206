//! Serial revolute chain. Each joint rotates about its own axis, then the
//! frame is translated along its local x by the link length, so the zero
//! configuration stretches the arm along the base x axis.

use nalgebra::{Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    link_lengths: Vec<f64>,
    joint_axes: Vec<Unit<Vector3<f64>>>,
    joint_limits: Vec<(f64, f64)>,
    base_pose: Isometry3<f64>,
}

impl ArmModel {
    pub fn new(
        link_lengths: Vec<f64>,
        joint_axes: Vec<Vector3<f64>>,
        joint_limits: Vec<(f64, f64)>,
        base_pose: Isometry3<f64>,
    ) -> Result<Self> {
        let n = link_lengths.len();
        if n == 0 || joint_axes.len() != n || joint_limits.len() != n {
            return Err(Error::Shape(format!(
                "arm needs matching links/axes/limits, got {}/{}/{}",
                n,
                joint_axes.len(),
                joint_limits.len()
            )));
        }
        if let Some((i, l)) = link_lengths.iter().enumerate().find(|(_, l)| !(**l > 0.0)) {
            return Err(Error::Geometry(format!("link {i} has length {l}")));
        }
        if let Some((i, (lo, hi))) = joint_limits.iter().enumerate().find(|(_, (lo, hi))| !(lo < hi)) {
            return Err(Error::Geometry(format!("joint {i} limits [{lo}, {hi}] are empty")));
        }
        let joint_axes = joint_axes
            .into_iter()
            .enumerate()
            .map(|(i, a)| {
                Unit::try_new(a, 1e-12).ok_or_else(|| Error::Geometry(format!("joint {i} axis is zero")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            link_lengths,
            joint_axes,
            joint_limits,
            base_pose,
        })
    }

    /// Seven-joint arm (yaw, pitch, roll, pitch, roll, pitch, roll) with
    /// links summing to 0.9 m, mounted at a right shoulder facing +x.
    pub fn default_seven_dof() -> Self {
        let z = Vector3::z();
        let y = Vector3::y();
        let x = Vector3::x();
        Self::new(
            vec![0.10, 0.30, 0.05, 0.25, 0.05, 0.10, 0.05],
            vec![z, y, x, y, x, y, x],
            vec![
                (-1.5, 1.5),
                (-1.2, 1.5),
                (-2.0, 2.0),
                (-2.2, 0.6),
                (-2.0, 2.0),
                (-1.5, 1.5),
                (-2.0, 2.0),
            ],
            Isometry3::translation(0.05, -0.25, 1.0),
        )
        .expect("default arm is valid")
    }

    pub fn dof(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn link_lengths(&self) -> &[f64] {
        &self.link_lengths
    }

    pub fn joint_limits(&self) -> &[(f64, f64)] {
        &self.joint_limits
    }

    pub fn base_pose(&self) -> &Isometry3<f64> {
        &self.base_pose
    }

    pub fn joint_axis(&self, i: usize) -> &Unit<Vector3<f64>> {
        &self.joint_axes[i]
    }

    pub fn check_limits(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::Shape(format!("expected {} joints, got {}", self.dof(), q.len())));
        }
        for (joint, (&value, &(lo, hi))) in q.iter().zip(&self.joint_limits).enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite("joint angles"));
            }
            if value < lo || value > hi {
                return Err(Error::JointLimit { joint, value, lo, hi });
            }
        }
        Ok(())
    }

    /// Clamp in place; returns whether any joint was clamped.
    pub fn clamp(&self, q: &mut [f64]) -> bool {
        let mut clamped = false;
        for (v, &(lo, hi)) in q.iter_mut().zip(&self.joint_limits) {
            let c = v.clamp(lo, hi);
            if c != *v {
                clamped = true;
                *v = c;
            }
        }
        clamped
    }
}

/// End-effector position in the world frame.
pub fn forward_kinematics(arm: &ArmModel, q: &[f64]) -> Result<Point3<f64>> {
    arm.check_limits(q)?;
    Ok(forward_kinematics_unchecked(arm, q))
}

pub(crate) fn forward_kinematics_unchecked(arm: &ArmModel, q: &[f64]) -> Point3<f64> {
    let mut frame = arm.base_pose;
    for ((axis, &angle), &len) in arm.joint_axes.iter().zip(q).zip(&arm.link_lengths) {
        let rot = UnitQuaternion::from_axis_angle(axis, angle);
        frame = frame * Isometry3::from_parts(Translation3::identity(), rot) * Isometry3::translation(len, 0.0, 0.0);
    }
    frame * Point3::origin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;
    use rand::{Rng, SeedableRng};

    /// Homogeneous 4×4 product with Rodrigues rotations, coded independently.
    fn oracle(arm: &ArmModel, q: &[f64]) -> [f64; 3] {
        let mut t = arm.base_pose().to_homogeneous();
        for i in 0..arm.dof() {
            let k = arm.joint_axis(i).into_inner();
            let (s, c) = q[i].sin_cos();
            let kx = nalgebra::Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
            let r = nalgebra::Matrix3::identity() + kx * s + kx * kx * (1.0 - c);
            let mut rot = Matrix4::identity();
            rot.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
            let mut tr = Matrix4::identity();
            tr[(0, 3)] = arm.link_lengths()[i];
            t = t * rot * tr;
        }
        [t[(0, 3)], t[(1, 3)], t[(2, 3)]]
    }

    #[test]
    fn zero_configuration_is_straight() {
        let arm = ArmModel::default_seven_dof();
        let p = forward_kinematics(&arm, &[0.0; 7]).unwrap();
        let base = arm.base_pose().translation.vector;
        let reach: f64 = arm.link_lengths().iter().sum();
        assert!((p.x - (base.x + reach)).abs() < 1e-12);
        assert!((p.y - base.y).abs() < 1e-12);
        assert!((p.z - base.z).abs() < 1e-12);
    }

    #[test]
    fn quarter_turn_single_joint() {
        let arm = ArmModel::new(
            vec![1.0],
            vec![Vector3::z()],
            vec![(-3.0, 3.0)],
            Isometry3::identity(),
        )
        .unwrap();
        let p = forward_kinematics(&arm, &[std::f64::consts::FRAC_PI_2]).unwrap();
        assert!(p.x.abs() < 1e-12);
        assert!((p.y - 1.0).abs() < 1e-12);
        assert!(p.z.abs() < 1e-12);
    }

    #[test]
    fn matches_homogeneous_transform_oracle() {
        let arm = ArmModel::default_seven_dof();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let q: Vec<f64> = arm.joint_limits().iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
            let p = forward_kinematics(&arm, &q).unwrap();
            let o = oracle(&arm, &q);
            assert!((p.x - o[0]).abs() < 1e-9 && (p.y - o[1]).abs() < 1e-9 && (p.z - o[2]).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_out_of_limit_configuration() {
        let arm = ArmModel::default_seven_dof();
        let mut q = [0.0; 7];
        q[3] = 1.0;
        assert!(matches!(forward_kinematics(&arm, &q), Err(Error::JointLimit { joint: 3, .. })));
    }

    #[test]
    fn rejects_bad_geometry() {
        let bad_link = ArmModel::new(vec![0.0], vec![Vector3::z()], vec![(-1.0, 1.0)], Isometry3::identity());
        assert!(bad_link.is_err());
        let bad_limits = ArmModel::new(vec![1.0], vec![Vector3::z()], vec![(1.0, 1.0)], Isometry3::identity());
        assert!(bad_limits.is_err());
    }
}
