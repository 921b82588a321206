use nalgebra::{Point3, Unit, Vector3};

use crate::error::{Error, Result};

/// Planar mirror given by a point on the plane and its unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct MirrorSpec {
    point: Point3<f64>,
    normal: Unit<Vector3<f64>>,
}

impl MirrorSpec {
    /// `normal` must already be unit length (within 1e-9).
    pub fn new(point: Point3<f64>, normal: Vector3<f64>) -> Result<Self> {
        if ((normal.norm() - 1.0).abs()) > 1e-9 {
            return Err(Error::Geometry(format!("mirror normal has length {}", normal.norm())));
        }
        Ok(Self {
            point,
            normal: Unit::new_unchecked(normal),
        })
    }

    /// Vertical mirror `distance` metres ahead of the origin along +x,
    /// turned by `yaw` radians about the vertical axis.
    pub fn vertical(distance: f64, yaw: f64) -> Self {
        let normal = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
        Self {
            point: Point3::from(normal * distance),
            normal: Unit::new_normalize(normal),
        }
    }

    pub fn point(&self) -> &Point3<f64> {
        &self.point
    }

    pub fn normal(&self) -> &Unit<Vector3<f64>> {
        &self.normal
    }
}

pub fn mirror_reflect(mirror: &MirrorSpec, p: &Point3<f64>) -> Point3<f64> {
    let n = mirror.normal.as_ref();
    p - n * (2.0 * (p - mirror.point).dot(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_checked_reflection() {
        let m = MirrorSpec::new(Point3::new(1.0, 0.0, 0.0), Vector3::x()).unwrap();
        let r = mirror_reflect(&m, &Point3::new(3.0, 0.0, 0.0));
        assert!((r - Point3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn points_on_plane_are_fixed() {
        let m = MirrorSpec::vertical(1.5, 0.3);
        let along = Vector3::new(-0.3f64.sin(), 0.3f64.cos(), 0.0);
        let p = m.point() + along * 0.7 + Vector3::z() * 1.1;
        assert!((mirror_reflect(&m, &p) - p).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_unit_normal() {
        assert!(MirrorSpec::new(Point3::origin(), Vector3::new(2.0, 0.0, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn involution_and_isometry(
            d in 0.5f64..3.0, yaw in -1.0f64..1.0,
            a in prop::array::uniform3(-5.0f64..5.0),
            b in prop::array::uniform3(-5.0f64..5.0),
        ) {
            let m = MirrorSpec::vertical(d, yaw);
            let pa = Point3::from(a);
            let pb = Point3::from(b);
            let ra = mirror_reflect(&m, &pa);
            let rb = mirror_reflect(&m, &pb);
            prop_assert!((mirror_reflect(&m, &ra) - pa).norm() < 1e-9);
            prop_assert!(((ra - rb).norm() - (pa - pb).norm()).abs() < 1e-9);
        }
    }
}
