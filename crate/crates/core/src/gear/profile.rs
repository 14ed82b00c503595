//! Surface sampling of spur gears and racks.
//!
//! Both parts are prisms: a 2D toothed outline extruded over the face width.
//! A structured set of samples runs along the outline on the top face edge,
//! one identical pattern per tooth period; the rest of the budget is spread
//! uniformly over faces and side walls. Flanks are exact involutes (straight
//! lines for the rack) so mating parts keep a constant normal gap.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PartKind, PartSpec, BACKLASH, CLEARANCE, PLANE_NORMAL, PRESSURE_ANGLE_DEG, RIM_SPACING};
use crate::se3::Vec3;

/// Fraction of the budget the structured rim may take.
const RIM_SHARE: f64 = 0.5;
/// Rack backing depth below the root line, in modules.
const RACK_BODY: f64 = 2.5;
/// Samples per flank used to build the dense outline polyline.
const FLANK_RESOLUTION: usize = 64;

fn involute(x: f64) -> f64 {
    x.tan() - x
}

/// Radii and thickness of a spur gear tooth.
#[derive(Debug, Clone, Copy)]
pub struct ToothGeometry {
    pub module: f64,
    pub teeth: u32,
    pub r_pitch: f64,
    pub r_base: f64,
    pub r_tip: f64,
    pub r_root: f64,
    /// Angular half thickness at the pitch circle.
    half_pitch_angle: f64,
}

impl ToothGeometry {
    pub fn new(module: f64, teeth: u32) -> Self {
        Self::with_backlash(module, teeth, BACKLASH)
    }

    pub fn with_backlash(module: f64, teeth: u32, backlash: f64) -> Self {
        let alpha = PRESSURE_ANGLE_DEG.to_radians();
        let r_pitch = module * teeth as f64 / 2.0;
        let thickness = PI * module / 2.0 - backlash * module;
        let mut g = Self {
            module,
            teeth,
            r_pitch,
            r_base: r_pitch * alpha.cos(),
            r_tip: r_pitch + module,
            r_root: r_pitch - (1.0 + CLEARANCE) * module,
            half_pitch_angle: thickness / (2.0 * r_pitch),
        };
        // Small tooth counts come out pointed; cut the tip down to a land.
        let min_land = 0.05 * module;
        if g.half_angle(g.r_tip) * g.r_tip < min_land {
            let (mut lo, mut hi) = (g.r_pitch, g.r_tip);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if g.half_angle(mid) * mid < min_land {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            g.r_tip = lo;
        }
        g
    }

    pub fn tooth_angle(&self) -> f64 {
        TAU / self.teeth as f64
    }

    /// Angular half thickness of a tooth at radius `rho`; radial below the
    /// base circle.
    pub fn half_angle(&self, rho: f64) -> f64 {
        let alpha = PRESSURE_ANGLE_DEG.to_radians();
        let base = self.half_pitch_angle + involute(alpha);
        if rho <= self.r_base {
            base
        } else {
            base - involute((self.r_base / rho).acos())
        }
    }

    /// Whether a point at polar `(rho, phi)` (tooth centered at angle 0) is
    /// inside the outline.
    pub fn contains(&self, rho: f64, phi: f64) -> bool {
        if rho <= self.r_root {
            return true;
        }
        if rho > self.r_tip {
            return false;
        }
        let tau = self.tooth_angle();
        let rel = phi - tau * (phi / tau).round();
        rel.abs() <= self.half_angle(rho)
    }

    /// Dense polyline for one tooth period `[-τ/2, τ/2]`, tooth centered at 0.
    fn period_polyline(&self) -> Vec<(f64, f64)> {
        let tau = self.tooth_angle();
        let root_half = self.half_angle(self.r_root);
        let tip_half = self.half_angle(self.r_tip);
        let polar = |rho: f64, phi: f64| (rho * phi.cos(), rho * phi.sin());
        let mut pts = Vec::new();
        let arc = |pts: &mut Vec<(f64, f64)>, rho: f64, a: f64, b: f64| {
            let n = ((b - a).abs() * rho / (0.02 * self.module)).ceil().max(2.0) as usize;
            for i in 0..n {
                let phi = a + (b - a) * i as f64 / n as f64;
                pts.push(polar(rho, phi));
            }
        };
        arc(&mut pts, self.r_root, -tau / 2.0, -root_half);
        // Right flank going outward.
        for i in 0..FLANK_RESOLUTION {
            let rho = self.r_root + (self.r_tip - self.r_root) * i as f64 / FLANK_RESOLUTION as f64;
            pts.push(polar(rho, -self.half_angle(rho)));
        }
        arc(&mut pts, self.r_tip, -tip_half, tip_half);
        for i in 0..FLANK_RESOLUTION {
            let rho = self.r_tip - (self.r_tip - self.r_root) * i as f64 / FLANK_RESOLUTION as f64;
            pts.push(polar(rho, self.half_angle(rho)));
        }
        arc(&mut pts, self.r_root, root_half, tau / 2.0);
        pts.push(polar(self.r_root, tau / 2.0));
        pts
    }

    /// Face area of the toothed disk.
    fn face_area(&self) -> f64 {
        let n = 256;
        let dr = (self.r_tip - self.r_root) / n as f64;
        let teeth: f64 = (0..n)
            .map(|i| {
                let rho = self.r_root + (i as f64 + 0.5) * dr;
                2.0 * self.half_angle(rho) * rho * dr
            })
            .sum();
        PI * self.r_root * self.r_root + self.teeth as f64 * teeth
    }
}

/// Arc-length parameterized 2D polyline.
struct Polyline {
    pts: Vec<(f64, f64)>,
    cum: Vec<f64>,
}

impl Polyline {
    fn new(pts: Vec<(f64, f64)>) -> Self {
        let mut cum = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in pts.windows(2) {
            acc += ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
            cum.push(acc);
        }
        Self { pts, cum }
    }

    fn length(&self) -> f64 {
        *self.cum.last().unwrap_or(&0.0)
    }

    fn at(&self, s: f64) -> (f64, f64) {
        let s = s.clamp(0.0, self.length());
        let i = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => return self.pts[i],
            Err(i) => i.max(1) - 1,
        };
        let j = (i + 1).min(self.pts.len() - 1);
        let span = self.cum[j] - self.cum[i];
        if span <= 0.0 {
            return self.pts[i];
        }
        let f = (s - self.cum[i]) / span;
        (
            self.pts[i].0 + f * (self.pts[j].0 - self.pts[i].0),
            self.pts[i].1 + f * (self.pts[j].1 - self.pts[i].1),
        )
    }
}

/// Orthonormal `(e1, e2)` spanning the plane perpendicular to `axis`.
fn plane_basis(axis: &Vec3) -> (Vec3, Vec3) {
    let a = axis.normalize();
    let helper = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = (helper - a * a.dot(&helper)).normalize();
    (e1, a.cross(&e1))
}

/// Points sampled from the surface of a spur gear, in world coordinates.
///
/// Deterministic in `(spec, seed)`. All points lie within the tip radius of
/// the axis and within half the face width of the mid-plane.
pub fn gear_profile(spec: &PartSpec, n_points: usize, seed: u64) -> Vec<Vec3> {
    debug_assert_eq!(spec.kind, PartKind::SpurGear);
    let geo = ToothGeometry::with_backlash(spec.module, spec.tooth_count, spec.backlash);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let period = Polyline::new(geo.period_polyline());
    let n_teeth = spec.tooth_count as usize;
    let tau = geo.tooth_angle();
    let half_w = spec.width / 2.0;

    let per_tooth = ((period.length() / (RIM_SPACING * spec.module)).ceil() as usize)
        .min(((RIM_SHARE * n_points as f64) / n_teeth as f64).floor() as usize)
        .max(1);
    let n_rim = (per_tooth * n_teeth).min(n_points);

    // (local angle, radius-plane x, y, z) collected in the gear frame first.
    let mut local: Vec<(f64, f64, f64)> = Vec::with_capacity(n_points);
    let offset: f64 = rng.gen();
    let rim_pattern: Vec<(f64, f64)> = (0..per_tooth)
        .map(|i| period.at((i as f64 + offset) / per_tooth as f64 * period.length()))
        .collect();
    'rim: for k in 0..n_teeth {
        let (s, c) = (k as f64 * tau).sin_cos();
        for &(x, y) in &rim_pattern {
            if local.len() == n_rim {
                break 'rim;
            }
            local.push((c * x - s * y, s * x + c * y, half_w));
        }
    }

    let face = geo.face_area();
    let wall = period.length() * n_teeth as f64 * spec.width;
    let total = 2.0 * face + wall;
    while local.len() < n_points {
        let u: f64 = rng.gen::<f64>() * total;
        if u < 2.0 * face {
            let z = if u < face { half_w } else { -half_w };
            loop {
                let rho = geo.r_tip * rng.gen::<f64>().sqrt();
                let phi = rng.gen::<f64>() * TAU;
                if geo.contains(rho, phi) {
                    local.push((rho * phi.cos(), rho * phi.sin(), z));
                    break;
                }
            }
        } else {
            let k = rng.gen_range(0..n_teeth) as f64;
            let (x, y) = period.at(rng.gen::<f64>() * period.length());
            let (s, c) = (k * tau).sin_cos();
            let z = (rng.gen::<f64>() * 2.0 - 1.0) * half_w;
            local.push((c * x - s * y, s * x + c * y, z));
        }
    }

    let (e1, e2) = plane_basis(&spec.axis);
    let axis = spec.axis.normalize();
    let (s, c) = spec.phase.sin_cos();
    local
        .into_iter()
        .map(|(x, y, z)| {
            let xr = c * x - s * y;
            let yr = s * x + c * y;
            spec.center + e1 * xr + e2 * yr + axis * z
        })
        .collect()
}

/// Toothed edge of a rack in its local `(u, h)` frame: `u` along the slide
/// direction measured from the center, `h` toward the tooth tips, pitch line
/// at `h = 0`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RackGeometry {
    pub module: f64,
    pub phase: f64,
    pub backlash: f64,
}

impl RackGeometry {
    pub fn from_spec(spec: &PartSpec) -> Self {
        Self {
            module: spec.module,
            phase: spec.phase,
            backlash: spec.backlash,
        }
    }

    pub fn pitch(&self) -> f64 {
        PI * self.module
    }

    pub fn tip(&self) -> f64 {
        self.module
    }

    pub fn root(&self) -> f64 {
        -(1.0 + CLEARANCE) * self.module
    }

    pub fn back(&self) -> f64 {
        self.root() - RACK_BODY * self.module
    }

    fn half_thickness(&self) -> f64 {
        (PI * self.module / 2.0 - self.backlash * self.module) / 2.0
    }

    /// Height of the toothed edge at `u`.
    pub fn top(&self, u: f64) -> f64 {
        let p = self.pitch();
        let rel = u - self.phase;
        let d = (rel - p * (rel / p).round()).abs();
        let tan = PRESSURE_ANGLE_DEG.to_radians().tan();
        ((self.half_thickness() - d) / tan).clamp(self.root(), self.tip())
    }

    /// Dense polyline of the toothed edge over one period starting at `u0`.
    fn period_polyline(&self, u0: f64) -> Vec<(f64, f64)> {
        let n = 512;
        let p = self.pitch();
        (0..=n)
            .map(|i| {
                let u = u0 + p * i as f64 / n as f64;
                (u, self.top(u))
            })
            .collect()
    }
}

/// Points sampled from the surface of a rack, in world coordinates.
///
/// All points lie inside the rack's box: `|u| ≤ length/2`, `h` between the
/// back face and the tooth tips, `|z| ≤ width/2`.
pub fn rack_profile(spec: &PartSpec, n_points: usize, seed: u64) -> Vec<Vec3> {
    debug_assert_eq!(spec.kind, PartKind::Rack);
    let geo = RackGeometry::from_spec(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half_l = spec.length / 2.0;
    let half_w = spec.width / 2.0;
    let p = geo.pitch();
    // Periods aligned to root-land centers so each one is a whole tooth.
    let first = geo.phase + p / 2.0 - p * ((geo.phase + p / 2.0 + half_l) / p).ceil();
    let period = Polyline::new(geo.period_polyline(0.0));
    let n_periods = ((spec.length + 2.0 * p) / p).ceil() as usize;

    let per_period = ((period.length() / (RIM_SPACING * spec.module)).ceil() as usize)
        .min(((RIM_SHARE * n_points as f64) / (spec.length / p)).floor() as usize)
        .max(1);
    let offset: f64 = rng.gen();
    let pattern: Vec<(f64, f64)> = (0..per_period)
        .map(|i| period.at((i as f64 + offset) / per_period as f64 * period.length()))
        .collect();

    let mut local: Vec<(f64, f64, f64)> = Vec::with_capacity(n_points);
    let budget = (RIM_SHARE * n_points as f64) as usize;
    'rim: for k in 0..n_periods {
        let shift = first + k as f64 * p;
        for &(u, _) in &pattern {
            let u = u + shift;
            if u.abs() > half_l {
                continue;
            }
            if local.len() == budget {
                break 'rim;
            }
            local.push((u, geo.top(u), half_w));
        }
    }

    // Uniform remainder over faces, toothed wall, back wall and end walls.
    let edge_len = period.length() * spec.length / p;
    let depth = geo.tip() - geo.back();
    let face = spec.length * (geo.top_mean() - geo.back());
    let areas = [
        face,
        face,
        edge_len * spec.width,
        spec.length * spec.width,
        depth * spec.width,
        depth * spec.width,
    ];
    let total: f64 = areas.iter().sum();
    while local.len() < n_points {
        let mut pick = rng.gen::<f64>() * total;
        let mut which = 0;
        while which < areas.len() - 1 && pick >= areas[which] {
            pick -= areas[which];
            which += 1;
        }
        let z = (rng.gen::<f64>() * 2.0 - 1.0) * half_w;
        let pt = match which {
            0 | 1 => {
                let z = if which == 0 { half_w } else { -half_w };
                loop {
                    let u = (rng.gen::<f64>() * 2.0 - 1.0) * half_l;
                    let h = geo.back() + rng.gen::<f64>() * depth;
                    if h <= geo.top(u) {
                        break (u, h, z);
                    }
                }
            }
            2 => {
                // Arc-length sampling along the toothed edge, restricted to the bar.
                loop {
                    let k = rng.gen_range(0..n_periods) as f64;
                    let (u, _) = period.at(rng.gen::<f64>() * period.length());
                    let u = u + first + k * p;
                    if u.abs() <= half_l {
                        break (u, geo.top(u), z);
                    }
                }
            }
            3 => ((rng.gen::<f64>() * 2.0 - 1.0) * half_l, geo.back(), z),
            _ => {
                let u = if which == 4 { -half_l } else { half_l };
                let h = geo.back() + rng.gen::<f64>() * (geo.top(u) - geo.back());
                (u, h, z)
            }
        };
        local.push(pt);
    }

    let slide = spec.axis.normalize();
    let normal = PLANE_NORMAL.cross(&slide);
    local
        .into_iter()
        .map(|(u, h, z)| spec.center + slide * u + normal * h + PLANE_NORMAL * z)
        .collect()
}

impl RackGeometry {
    fn top_mean(&self) -> f64 {
        let n = 256;
        let p = self.pitch();
        (0..n).map(|i| self.top(p * i as f64 / n as f64)).sum::<f64>() / n as f64
    }
}
