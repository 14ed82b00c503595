//! Evaluation metrics over predicted and ground-truth pose tracks.

use std::fmt::Write as _;

use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::gear::MotionTrack;
use crate::se3::{rotation_angle, Mat3, Vec3};

/// Relative threshold below which a singular value counts as zero.
const SINGULAR_TOL: f64 = 1e-12;

/// Best-fit rotation taking centered `p` onto centered `q`, with the sign fix
/// that keeps `det R = +1`.
pub fn kabsch(p: &[Vec3], q: &[Vec3]) -> Result<Mat3> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "kabsch",
            left: vec![p.len(), 3],
            right: vec![q.len(), 3],
        });
    }
    let n = p.len() as f64;
    let cp = p.iter().sum::<Vec3>() / n;
    let cq = q.iter().sum::<Vec3>() / n;
    let mut h = Mat3::zeros();
    for (a, b) in p.iter().zip(q) {
        h += (a - cp) * (b - cq).transpose();
    }
    let svd = SVD::new(h, true, true);
    let mut s = [svd.singular_values[0], svd.singular_values[1], svd.singular_values[2]];
    s.sort_by(|a, b| b.total_cmp(a));
    if s[1] <= SINGULAR_TOL * s[0].max(SINGULAR_TOL) {
        return Err(Error::DegenerateCloud(s));
    }
    let u = svd.u.expect("requested");
    let v = svd.v_t.expect("requested").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let fix = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d));
    Ok(v * fix * u.transpose())
}

/// `|θ_pred − θ_gt|` in degrees for each part and each transition between
/// consecutive frames. Track index `i` holds frame `i + 1`, so a part with
/// `T` frames yields `T − 1` values, the first for the step from frame 1 to 2.
pub fn rotation_error(pred: &[MotionTrack], gt: &[MotionTrack], clouds: &[Vec<Vec3>]) -> Result<Vec<Vec<f64>>> {
    check_tracks("rotation_error", pred, gt, clouds)?;
    let mut out = Vec::with_capacity(pred.len());
    for ((tp, tg), cloud) in pred.iter().zip(gt).zip(clouds) {
        let frames = tp.transforms.len();
        let angle = |track: &MotionTrack, t: usize| -> Result<f64> {
            let a = track.transforms[t - 1].apply(cloud);
            let b = track.transforms[t].apply(cloud);
            Ok(rotation_angle(&kabsch(&a, &b)?).to_degrees())
        };
        let mut errs = Vec::with_capacity(frames.saturating_sub(1));
        for t in 1..frames {
            errs.push((angle(tp, t)? - angle(tg, t)?).abs());
        }
        out.push(errs);
    }
    Ok(out)
}

/// Mean point displacement between predicted and ground-truth poses, per
/// part and frame `1..=T`.
pub fn translation_error(pred: &[MotionTrack], gt: &[MotionTrack], clouds: &[Vec<Vec3>]) -> Result<Vec<Vec<f64>>> {
    check_tracks("translation_error", pred, gt, clouds)?;
    Ok(pred
        .iter()
        .zip(gt)
        .zip(clouds)
        .map(|((tp, tg), cloud)| {
            tp.transforms
                .iter()
                .zip(&tg.transforms)
                .map(|(a, b)| {
                    cloud.iter().map(|x| (a.apply_point(x) - b.apply_point(x)).norm()).sum::<f64>()
                        / cloud.len() as f64
                })
                .collect()
        })
        .collect())
}

fn check_tracks(op: &'static str, pred: &[MotionTrack], gt: &[MotionTrack], clouds: &[Vec<Vec3>]) -> Result<()> {
    let bad = pred.len() != gt.len()
        || pred.len() != clouds.len()
        || pred.iter().zip(gt).any(|(a, b)| a.transforms.len() != b.transforms.len() || a.transforms.is_empty());
    if bad {
        return Err(Error::ShapeMismatch {
            op,
            left: vec![pred.len(), pred.first().map_or(0, |t| t.transforms.len())],
            right: vec![gt.len(), gt.first().map_or(0, |t| t.transforms.len())],
        });
    }
    Ok(())
}

/// Population standard deviation.
pub fn population_sd(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Standard deviation across frames of the per-frame mean error. `per_frame`
/// holds every observation for each frame.
pub fn framewise_sd(per_frame: &[Vec<f64>]) -> f64 {
    let means: Vec<f64> = per_frame
        .iter()
        .filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        .collect();
    population_sd(&means)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub assembly: String,
    pub part: usize,
    /// 1-based frame index.
    pub frame: usize,
    /// Undefined for the first frame.
    pub rot_err: Option<f64>,
    pub trans_err: f64,
}

/// Per-row errors plus the aggregates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub mean_rot: f64,
    pub mean_trans: f64,
    pub sd_rot: f64,
    pub sd_trans: f64,
}

/// Predicted and reference tracks of one assembly, with its rest clouds.
pub struct EvalItem<'a> {
    pub id: &'a str,
    pub pred: &'a [MotionTrack],
    pub gt: &'a [MotionTrack],
    pub clouds: &'a [Vec<Vec3>],
}

impl EvalReport {
    pub fn build(items: &[EvalItem]) -> Result<Self> {
        let mut rows = Vec::new();
        for it in items {
            let rot = rotation_error(it.pred, it.gt, it.clouds)?;
            let tr = translation_error(it.pred, it.gt, it.clouds)?;
            for (k, (r, t)) in rot.iter().zip(&tr).enumerate() {
                for (f, &te) in t.iter().enumerate() {
                    rows.push(ReportRow {
                        assembly: it.id.to_string(),
                        part: k,
                        frame: f + 1,
                        rot_err: if f == 0 { None } else { Some(r[f - 1]) },
                        trans_err: te,
                    });
                }
            }
        }
        Ok(Self::from_rows(rows))
    }

    pub fn from_rows(rows: Vec<ReportRow>) -> Self {
        let frames = rows.iter().map(|r| r.frame).max().unwrap_or(0);
        let mut rot_by = vec![Vec::new(); frames + 1];
        let mut tr_by = vec![Vec::new(); frames + 1];
        for r in &rows {
            if let Some(e) = r.rot_err {
                rot_by[r.frame].push(e);
            }
            tr_by[r.frame].push(r.trans_err);
        }
        let mean = |v: Vec<f64>| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        EvalReport {
            mean_rot: mean(rot_by.iter().flatten().copied().collect()),
            mean_trans: mean(tr_by.iter().flatten().copied().collect()),
            sd_rot: framewise_sd(&rot_by),
            sd_trans: framewise_sd(&tr_by),
            rows,
        }
    }

    /// `assembly_id,part,frame,rot_err_deg,trans_err` rows followed by `#`
    /// summary lines.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("assembly_id,part,frame,rot_err_deg,trans_err\n");
        for r in &self.rows {
            let rot = r.rot_err.map(|x| format!("{x:.6}")).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{:.6}", r.assembly, r.part, r.frame, rot, r.trans_err);
        }
        let _ = writeln!(s, "# mean_rot_err_deg={:.6}", self.mean_rot);
        let _ = writeln!(s, "# sd_rot_err_deg={:.6}", self.sd_rot);
        let _ = writeln!(s, "# mean_trans_err={:.6}", self.mean_trans);
        let _ = writeln!(s, "# sd_trans_err={:.6}", self.sd_trans);
        s
    }
}
