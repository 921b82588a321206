//! Deterministic world: arm kinematics, the mirror, the head camera and a
//! synthetic flow sensor that stands in for image processing.

pub mod camera;
pub mod kinematics;
pub mod mirror;
pub mod sensor;
pub mod waving;
pub mod world;

pub use camera::{project_point, CameraSpec};
pub use kinematics::{forward_kinematics, ArmModel};
pub use mirror::{mirror_reflect, MirrorSpec};
pub use sensor::{SensorConfig, VisualFrame};
pub use waving::{Waver, WavingConfig, WavingPrimitive};
pub use world::{
    integrate_joints, HumanCommand, Observation, OtherKind, OtherSpec, Placement, World, WorldConfig, WorldState,
};
