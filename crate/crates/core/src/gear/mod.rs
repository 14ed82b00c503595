//! Procedural gear assemblies with analytic ground-truth motion.
//!
//! Assemblies are planar: every gear turns about +z and racks slide in the
//! xy-plane. Geometry is built in raw units (module = 1) and normalized into
//! the unit sphere at the end of [`build_assembly`].

mod assembly;
mod config;
mod dataset;
mod motion;
mod profile;

pub use assembly::{build_assembly, build_assembly_with_parts, normalize_assembly};
pub use config::{assembly_seed, DriverRule, GeneratorConfig, PartCountRule, PAPER_PART_COUNTS};
pub use dataset::{
    build_dataset, generate_dataset, load_dataset, read_cloud, read_manifest, read_motion,
    read_record, read_tracks, record_dirs, summarize, write_cloud, write_manifest, write_motion,
    write_record, write_tracks, DatasetRecord, DatasetSummary, Manifest, MOTION_HEADER,
};
pub use motion::{derive_twists, gear_speeds, ground_truth_motion, mobility_units, PartMotion};
pub use profile::{gear_profile, rack_profile, ToothGeometry};

use serde::{Deserialize, Serialize};

use crate::coupling::CouplingMatrix;
use crate::se3::{RigidTransform, Twist, Vec3};

pub type Cloud = Vec<Vec3>;

/// Normal of the assembly plane; every gear axis is parallel to it.
pub const PLANE_NORMAL: Vec3 = Vec3::new(0.0, 0.0, 1.0);

pub const PRESSURE_ANGLE_DEG: f64 = 20.0;
/// Default circular tooth-thickness reduction per part, in modules. The
/// generator overrides it per assembly so the mesh gap has a fixed size in
/// normalized units.
pub const BACKLASH: f64 = 0.4;
/// Root clearance below the mating tip, in modules.
pub const CLEARANCE: f64 = 0.6;
/// Target spacing of the structured top-rim samples, in modules.
pub const RIM_SPACING: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartKind {
    SpurGear,
    Rack,
}

/// One rigid part of an assembly.
///
/// Gears: `center` is a point on the rotation axis `axis`, `phase` the polar
/// angle of a tooth center. Racks: `center` is the midpoint of the pitch line,
/// `axis` the slide direction, `phase` the offset of a tooth center along it;
/// teeth point along `PLANE_NORMAL × axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSpec {
    pub kind: PartKind,
    pub module: f64,
    pub tooth_count: u32,
    pub pitch_radius: f64,
    pub length: f64,
    pub width: f64,
    pub center: Vec3,
    pub axis: Vec3,
    pub phase: f64,
    /// Tooth-thickness reduction in modules.
    pub backlash: f64,
}

impl PartSpec {
    pub fn spur(module: f64, tooth_count: u32, width: f64, center: Vec3, phase: f64) -> Self {
        Self {
            kind: PartKind::SpurGear,
            module,
            tooth_count,
            pitch_radius: module * tooth_count as f64 / 2.0,
            length: 0.0,
            width,
            center,
            axis: PLANE_NORMAL,
            phase,
            backlash: BACKLASH,
        }
    }

    pub fn rack(
        module: f64,
        length: f64,
        width: f64,
        center: Vec3,
        slide_dir: Vec3,
        phase: f64,
    ) -> Self {
        let pitch = std::f64::consts::PI * module;
        Self {
            kind: PartKind::Rack,
            module,
            tooth_count: (length / pitch).floor() as u32,
            pitch_radius: 0.0,
            length,
            width,
            center,
            axis: slide_dir,
            phase,
            backlash: BACKLASH,
        }
    }

    pub fn is_gear(&self) -> bool {
        self.kind == PartKind::SpurGear
    }

    pub fn tip_radius(&self) -> f64 {
        ToothGeometry::with_backlash(self.module, self.tooth_count, self.backlash).r_tip
    }

    /// Direction the rack teeth point to.
    pub fn rack_normal(&self) -> Vec3 {
        PLANE_NORMAL.cross(&self.axis)
    }

    /// Uniform scale about the origin after translating by `shift`.
    pub fn normalized(&self, shift: &Vec3, scale: f64) -> Self {
        let mut out = self.clone();
        out.module *= scale;
        out.pitch_radius *= scale;
        out.length *= scale;
        out.width *= scale;
        out.center = (self.center + shift) * scale;
        if self.kind == PartKind::Rack {
            out.phase *= scale;
        }
        out
    }
}

/// Adjacency recorded at construction plus everything needed to animate it.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub id: String,
    pub seed: u64,
    pub parts: Vec<PartSpec>,
    pub clouds: Vec<Cloud>,
    pub coupling_gt: CouplingMatrix,
    pub driver_index: usize,
    /// Raw-to-normalized scale factor.
    pub scale: f64,
}

impl Assembly {
    pub fn n_parts(&self) -> usize {
        self.parts.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MotionType {
    Rotation,
    Translation,
}

/// Bits 0..3 are rotations and 3..6 translations about/along the local x, y,
/// z axes of a frame whose z axis is `axis`.
pub const DOF_ROT_AXIS: u8 = 1 << 2;
pub const DOF_TRANS_AXIS: u8 = 1 << 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityUnit {
    pub motion_type: MotionType,
    pub axis: Vec3,
    pub center: Vec3,
    pub dof: u8,
}

/// Absolute poses for frames `1..=T` (frame 0 is the identity) and the
/// relative twists between consecutive frames, `T_t = exp(ξ_t) · T_{t-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTrack {
    pub transforms: Vec<RigidTransform>,
    pub twists: Vec<Twist>,
}

impl MotionTrack {
    pub fn n_frames(&self) -> usize {
        self.transforms.len()
    }

    /// Build a track by integrating relative twists from the rest pose.
    pub fn from_twists(twists: &[Twist]) -> Self {
        let mut pose = RigidTransform::identity();
        let transforms = twists
            .iter()
            .map(|xi| {
                pose = crate::se3::exp_se3(xi).compose(&pose);
                pose
            })
            .collect();
        Self {
            transforms,
            twists: twists.to_vec(),
        }
    }
}
