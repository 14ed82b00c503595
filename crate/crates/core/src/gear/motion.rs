use std::collections::VecDeque;

use super::{
    Assembly, MobilityUnit, MotionTrack, MotionType, PartKind, PartSpec, DOF_ROT_AXIS,
    DOF_TRANS_AXIS,
};
use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::se3::{log_se3, rotation_about_axis, RigidTransform, Twist};

/// Per-frame rate of one part: radians about its axis or units along its
/// slide direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartMotion {
    Rotate(f64),
    Slide(f64),
}

impl PartMotion {
    pub fn rate(&self) -> f64 {
        match *self {
            PartMotion::Rotate(x) | PartMotion::Slide(x) => x,
        }
    }
}

const SPEED_TOL: f64 = 1e-9;

/// Propagate the driver's step through the coupling graph breadth first.
///
/// Meshed gears turn in opposite senses at the inverse tooth ratio; a rack
/// slides at the pitch-line speed of its pinion. Every edge is checked, so
/// a loop that would give some part two rates is rejected.
pub fn gear_speeds(
    parts: &[PartSpec],
    coupling: &CouplingMatrix,
    driver: usize,
    step_rad: f64,
) -> Result<Vec<PartMotion>> {
    if !parts[driver].is_gear() {
        return Err(Error::DriverNotGear(driver));
    }
    let m = parts.len();
    let mut rate: Vec<Option<f64>> = vec![None; m];
    rate[driver] = Some(step_rad);
    let mut queue = VecDeque::from([driver]);
    while let Some(i) = queue.pop_front() {
        let ri = rate[i].expect("queued parts have a rate");
        for j in coupling.neighbors(i) {
            let rj = match (parts[i].kind, parts[j].kind) {
                (PartKind::SpurGear, PartKind::SpurGear) => {
                    -ri * parts[i].tooth_count as f64 / parts[j].tooth_count as f64
                }
                (PartKind::SpurGear, PartKind::Rack) => ri * parts[i].pitch_radius,
                (PartKind::Rack, PartKind::SpurGear) => ri / parts[j].pitch_radius,
                (PartKind::Rack, PartKind::Rack) => {
                    return Err(Error::Config(format!("racks {i} and {j} cannot mesh")))
                }
            };
            match rate[j] {
                None => {
                    rate[j] = Some(rj);
                    queue.push_back(j);
                }
                Some(prev) if (prev - rj).abs() > SPEED_TOL => {
                    return Err(Error::InconsistentLoop {
                        part: j,
                        first: prev,
                        second: rj,
                    })
                }
                Some(_) => {}
            }
        }
    }
    parts
        .iter()
        .zip(rate)
        .map(|(p, r)| {
            let r = r.ok_or(Error::Disconnected)?;
            Ok(if p.is_gear() {
                PartMotion::Rotate(r)
            } else {
                PartMotion::Slide(r)
            })
        })
        .collect()
}

/// Absolute pose of a part after `t` frames at a constant rate, from θ_0 = 0.
pub(crate) fn pose_at(spec: &PartSpec, motion: PartMotion, t: f64) -> Result<RigidTransform> {
    match motion {
        PartMotion::Rotate(w) => rotation_about_axis(&spec.center, &spec.axis, t * w),
        PartMotion::Slide(v) => Ok(RigidTransform::from_translation(spec.axis.normalize() * (t * v))),
    }
}

/// Ground-truth tracks of every part for frames `1..=n_frames`.
pub fn ground_truth_motion(
    asm: &Assembly,
    n_frames: usize,
    driver_step_deg: f64,
) -> Result<Vec<MotionTrack>> {
    let speeds = gear_speeds(
        &asm.parts,
        &asm.coupling_gt,
        asm.driver_index,
        driver_step_deg.to_radians(),
    )?;
    asm.parts
        .iter()
        .zip(speeds)
        .map(|(spec, motion)| {
            let transforms = (1..=n_frames)
                .map(|t| pose_at(spec, motion, t as f64))
                .collect::<Result<Vec<_>>>()?;
            let twists = derive_twists(&transforms)?;
            Ok(MotionTrack { transforms, twists })
        })
        .collect()
}

/// Relative twists `log(T_t · T_{t-1}⁻¹)` with `T_0 = I`.
pub fn derive_twists(transforms: &[RigidTransform]) -> Result<Vec<Twist>> {
    let mut prev = RigidTransform::identity();
    transforms
        .iter()
        .map(|t| {
            let xi = log_se3(&t.compose(&prev.inverse()));
            prev = *t;
            xi
        })
        .collect()
}

pub fn mobility_units(asm: &Assembly) -> Vec<MobilityUnit> {
    asm.parts
        .iter()
        .map(|p| match p.kind {
            PartKind::SpurGear => MobilityUnit {
                motion_type: MotionType::Rotation,
                axis: p.axis,
                center: p.center,
                dof: DOF_ROT_AXIS,
            },
            PartKind::Rack => MobilityUnit {
                motion_type: MotionType::Translation,
                axis: p.axis,
                center: p.center,
                dof: DOF_TRANS_AXIS,
            },
        })
        .collect()
}
