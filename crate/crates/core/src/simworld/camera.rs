use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};

pub const DEFAULT_WIDTH_PX: f64 = 640.0;
pub const DEFAULT_HEIGHT_PX: f64 = 480.0;

/// Pinhole camera. The pose maps camera coordinates (x right, y down,
/// z along the optical axis) into the world frame; the principal point is
/// the image centre.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraSpec {
    focal_length_px: f64,
    width_px: f64,
    height_px: f64,
    pose: Isometry3<f64>,
}

impl CameraSpec {
    pub fn new(focal_length_px: f64, width_px: f64, height_px: f64, pose: Isometry3<f64>) -> Result<Self> {
        if !(focal_length_px > 0.0) {
            return Err(Error::Geometry(format!("focal length {focal_length_px} must be positive")));
        }
        if !(width_px > 0.0 && height_px > 0.0) {
            return Err(Error::Geometry(format!("image size {width_px}x{height_px} must be positive")));
        }
        Ok(Self {
            focal_length_px,
            width_px,
            height_px,
            pose,
        })
    }

    /// Camera at `eye` whose optical axis passes through `target`.
    pub fn look_at(focal_length_px: f64, eye: Point3<f64>, target: Point3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Geometry("camera eye coincides with target".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Geometry("camera up vector parallel to optical axis".into()))?;
        let down = forward.cross(&right);
        let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[right, down, forward]));
        let pose = Isometry3::from_parts(Translation3::from(eye.coords), UnitQuaternion::from_rotation_matrix(&rot));
        Self::new(focal_length_px, DEFAULT_WIDTH_PX, DEFAULT_HEIGHT_PX, pose)
    }

    pub fn focal_length_px(&self) -> f64 {
        self.focal_length_px
    }

    pub fn image_size(&self) -> (f64, f64) {
        (self.width_px, self.height_px)
    }

    pub fn pose(&self) -> &Isometry3<f64> {
        &self.pose
    }

    /// World point expressed in the camera frame.
    pub fn to_camera(&self, p: &Point3<f64>) -> Point3<f64> {
        self.pose.inverse_transform_point(p)
    }
}

/// Pinhole projection in normalized image coordinates (pixels divided by
/// width and height). `None` when the point is not strictly in front.
pub fn project_point(camera: &CameraSpec, p: &Point3<f64>) -> Option<Vector2<f64>> {
    let c = camera.to_camera(p);
    if !(c.z > 0.0) {
        return None;
    }
    let u = camera.focal_length_px * c.x / c.z + 0.5 * camera.width_px;
    let v = camera.focal_length_px * c.y / c.z + 0.5 * camera.height_px;
    Some(Vector2::new(u / camera.width_px, v / camera.height_px))
}

pub fn in_image(uv: &Vector2<f64>) -> bool {
    (0.0..=1.0).contains(&uv.x) && (0.0..=1.0).contains(&uv.y)
}
