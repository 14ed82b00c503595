use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::assembly_seed;
use super::motion::gear_speeds;
use super::profile::RackGeometry;
use super::{
    gear_profile, rack_profile, Assembly, Cloud, DriverRule, GeneratorConfig, PartCountRule,
    PartKind, PartSpec, PLANE_NORMAL, PRESSURE_ANGLE_DEG,
};
use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::se3::Vec3;

/// Raw-unit margin kept between non-meshing gears while placing; the final
/// check runs in normalized units.
const PLACE_MARGIN: f64 = 1.5;
const TRIES_PER_PART: usize = 50;
/// Rack teeth kept beyond the contact point at both ends of the travel.
const RACK_WINDOW_PITCHES: f64 = 3.0;
const BACKLASH_RANGE: (f64, f64) = (0.15, 0.55);

/// One assembly with a part count drawn from the config's rule.
pub fn build_assembly(cfg: &GeneratorConfig, seed: u64) -> Result<Assembly> {
    let mut rng = ChaCha8Rng::seed_from_u64(assembly_seed(seed, 0xC0FFEE));
    let weights: Vec<(usize, f64)> = match &cfg.part_counts {
        PartCountRule::Exact(c) => c.iter().map(|&(p, n)| (p, n as f64)).collect(),
        PartCountRule::Weighted(w) => w.clone(),
    };
    let total: f64 = weights.iter().map(|w| w.1).sum();
    let mut pick = rng.gen::<f64>() * total;
    let mut n_parts = weights.last().map(|w| w.0).unwrap_or(2);
    for &(p, w) in &weights {
        if pick < w {
            n_parts = p;
            break;
        }
        pick -= w;
    }
    build_assembly_with_parts(cfg, n_parts, seed)
}

/// One assembly with exactly `n_parts` parts, retrying placement up to
/// `cfg.max_attempts` times.
pub fn build_assembly_with_parts(
    cfg: &GeneratorConfig,
    n_parts: usize,
    seed: u64,
) -> Result<Assembly> {
    for attempt in 0..cfg.max_attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(assembly_seed(seed, attempt as u64));
        if let Some(asm) = try_build(cfg, n_parts, seed, &mut rng)? {
            return Ok(asm);
        }
    }
    Err(Error::PlacementFailed {
        attempts: cfg.max_attempts,
    })
}

fn sample_teeth(cfg: &GeneratorConfig, n: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    loop {
        let teeth: Vec<u32> = (0..n)
            .map(|_| rng.gen_range(cfg.tooth_min..=cfg.tooth_max))
            .collect();
        let min = *teeth.iter().min().expect("at least one gear");
        if cfg.driver_rule == DriverRule::Random || teeth.iter().filter(|&&t| t == min).count() == 1 {
            return teeth;
        }
    }
}

fn wrap(x: f64, period: f64) -> f64 {
    x - period * (x / period).floor()
}

/// Phase of a gear with `teeth` placed in direction `psi` from a gear
/// `(phase_j, teeth_j)` so that its tooth sits in the middle of a space.
fn mesh_phase(psi: f64, phase_j: f64, teeth_j: u32, teeth: u32) -> f64 {
    let u = wrap((psi - phase_j) * teeth_j as f64 / TAU, 1.0);
    wrap(psi + PI + TAU / teeth as f64 * (u + 0.5), TAU)
}

/// Distance in the plane from `p` to the region a rack sweeps while it slides
/// by `travel` along its axis.
fn rack_sweep_distance(rack: &PartSpec, travel: f64, p: &Vec3) -> f64 {
    let geo = RackGeometry::from_spec(rack);
    let s = rack.axis.normalize();
    let h_dir = rack.rack_normal();
    let d = p - rack.center;
    let u = d.dot(&s);
    let h = d.dot(&h_dir);
    let (u_lo, u_hi) = (
        -rack.length / 2.0 + travel.min(0.0),
        rack.length / 2.0 + travel.max(0.0),
    );
    let du = (u_lo - u).max(u - u_hi).max(0.0);
    let dh = (geo.back() - h).max(h - geo.tip()).max(0.0);
    du.hypot(dh)
}

fn try_build(
    cfg: &GeneratorConfig,
    n_parts: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Assembly>> {
    let has_rack = n_parts >= 2 && rng.gen::<f64>() < cfg.rack_fraction;
    let n_gears = n_parts - has_rack as usize;
    let teeth = sample_teeth(cfg, n_gears, rng);
    let driver_index = match cfg.driver_rule {
        DriverRule::Smallest => (0..n_gears).min_by_key(|&i| teeth[i]).expect("non-empty"),
        DriverRule::Random => rng.gen_range(0..n_gears),
    };

    let width = cfg.face_width;
    let mut parts: Vec<PartSpec> = Vec::with_capacity(n_parts);
    let mut edges = Vec::new();
    let first_phase = rng.gen::<f64>() * TAU;
    parts.push(PartSpec::spur(1.0, teeth[0], width, Vec3::zeros(), first_phase));
    for (k, &nk) in teeth.iter().enumerate().skip(1) {
        let mut placed = false;
        for _ in 0..TRIES_PER_PART {
            let parent = rng.gen_range(0..k);
            let psi = rng.gen::<f64>() * TAU;
            let pj = &parts[parent];
            let dir = Vec3::new(psi.cos(), psi.sin(), 0.0);
            let center = pj.center + dir * (pj.pitch_radius + nk as f64 / 2.0);
            let phase = mesh_phase(psi, pj.phase, pj.tooth_count, nk);
            let cand = PartSpec::spur(1.0, nk, width, center, phase);
            let clear = parts.iter().enumerate().all(|(j, q)| {
                j == parent || (q.center - center).norm() >= q.tip_radius() + cand.tip_radius() + PLACE_MARGIN
            });
            if clear {
                parts.push(cand);
                edges.push((parent, k));
                placed = true;
                break;
            }
        }
        if !placed {
            return Ok(None);
        }
    }

    if has_rack {
        let gear_coupling = CouplingMatrix::from_edges(n_gears, &edges);
        let speeds = gear_speeds(
            &parts,
            &gear_coupling,
            driver_index,
            cfg.driver_step_deg.to_radians(),
        )?;
        let mut placed = false;
        for _ in 0..TRIES_PER_PART {
            let parent = rng.gen_range(0..n_gears);
            let psi = rng.gen::<f64>() * TAU;
            let pj = &parts[parent];
            let n = Vec3::new(psi.cos(), psi.sin(), 0.0);
            let slide = PLANE_NORMAL.cross(&n);
            let contact = pj.center + n * pj.pitch_radius;
            let travel = cfg.n_frames as f64 * speeds[parent].rate() * pj.pitch_radius;
            let pitch = PI * pj.module;
            let length = ((travel.abs() + 2.0 * RACK_WINDOW_PITCHES * pitch) / pitch).ceil() * pitch;
            let center = contact - slide * (travel / 2.0);
            let u_j = wrap((psi - pj.phase) * pj.tooth_count as f64 / TAU, 1.0);
            let offset = wrap(-pitch * (u_j + 0.5), pitch);
            let phase = wrap(travel / 2.0 + offset + pitch / 2.0, pitch) - pitch / 2.0;
            let rack = PartSpec::rack(pj.module, length, width, center, slide, phase);
            let clear = parts.iter().enumerate().all(|(j, q)| {
                j == parent || rack_sweep_distance(&rack, travel, &q.center) >= q.tip_radius() + PLACE_MARGIN
            });
            if clear {
                edges.push((parent, n_gears));
                parts.push(rack);
                placed = true;
                break;
            }
        }
        if !placed {
            return Ok(None);
        }
    }

    let coupling = CouplingMatrix::from_edges(n_parts, &edges);
    let cloud_seed = |k: usize| assembly_seed(seed, 1000 + k as u64);
    let sample = |parts: &[PartSpec]| -> Vec<Cloud> {
        parts
            .iter()
            .enumerate()
            .map(|(k, p)| match p.kind {
                PartKind::SpurGear => gear_profile(p, cfg.n_points, cloud_seed(k)),
                PartKind::Rack => rack_profile(p, cfg.n_points, cloud_seed(k)),
            })
            .collect()
    };

    // Size the mesh gap for the normalized scale, then resample.
    let (_, _, scale_est) = normalize_assembly(&parts, &sample(&parts));
    let alpha = PRESSURE_ANGLE_DEG.to_radians();
    let backlash = (cfg.mesh_gap / (scale_est * alpha.cos())).clamp(BACKLASH_RANGE.0, BACKLASH_RANGE.1);
    for p in parts.iter_mut() {
        p.backlash = backlash;
    }
    let (parts, clouds, scale) = normalize_assembly(&parts, &sample(&parts));

    // Non-meshing parts must stay clear of each other over the whole motion.
    let travel = if has_rack {
        let speeds = gear_speeds(&parts, &coupling, driver_index, cfg.driver_step_deg.to_radians())?;
        speeds[n_parts - 1].rate() * cfg.n_frames as f64
    } else {
        0.0
    };
    for i in 0..n_parts {
        for j in (i + 1)..n_parts {
            if coupling.get(i, j) {
                continue;
            }
            let gap = match (parts[i].kind, parts[j].kind) {
                (PartKind::SpurGear, PartKind::SpurGear) => {
                    (parts[i].center - parts[j].center).norm() - parts[i].tip_radius() - parts[j].tip_radius()
                }
                (PartKind::SpurGear, PartKind::Rack) => {
                    rack_sweep_distance(&parts[j], travel, &parts[i].center) - parts[i].tip_radius()
                }
                (PartKind::Rack, PartKind::SpurGear) => {
                    rack_sweep_distance(&parts[i], travel, &parts[j].center) - parts[j].tip_radius()
                }
                (PartKind::Rack, PartKind::Rack) => unreachable!("at most one rack"),
            };
            if gap < cfg.min_separation {
                return Ok(None);
            }
        }
    }

    Ok(Some(Assembly {
        id: format!("asm_{seed:016x}"),
        seed,
        parts,
        clouds,
        coupling_gt: coupling,
        driver_index,
        scale,
    }))
}

/// Move the centroid of all points to the origin and scale into the unit
/// sphere. Returns the transformed specs, clouds and the scale factor.
pub fn normalize_assembly(parts: &[PartSpec], clouds: &[Cloud]) -> (Vec<PartSpec>, Vec<Cloud>, f64) {
    let count: usize = clouds.iter().map(Vec::len).sum();
    let centroid = clouds.iter().flatten().fold(Vec3::zeros(), |a, p| a + p) / count as f64;
    let max_norm = clouds
        .iter()
        .flatten()
        .map(|p| (p - centroid).norm())
        .fold(0.0, f64::max);
    let scale = 1.0 / (max_norm * (1.0 + 1e-9));
    let shift = -centroid;
    let parts = parts.iter().map(|p| p.normalized(&shift, scale)).collect();
    let clouds = clouds
        .iter()
        .map(|c| c.iter().map(|p| (p + shift) * scale).collect())
        .collect();
    (parts, clouds, scale)
}
