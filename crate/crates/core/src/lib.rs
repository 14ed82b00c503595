//! Gear-assembly motion synthesis and coupled trajectory prediction.

pub mod autodiff;
pub mod coupling;
pub mod error;
pub mod gear;
pub mod kv;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod se3;
pub mod train;

pub use coupling::{estimate_coupling, pairwise_contact_count, CouplingMatrix};
pub use error::{Error, Result};
pub use gear::{Assembly, GeneratorConfig, MotionTrack, PartKind, PartSpec};
pub use se3::{Mat3, RigidTransform, Twist, Vec3};
