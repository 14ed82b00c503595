//! Training losses over per-part twist sequences.
//!
//! Predictions and targets are `(M·T) × 6` matrices, row `p·T + t` holding
//! `[ω, v]` of part `p` at frame `t`. Every loss returns its value and the
//! gradient with respect to the prediction; the math runs in f64 whatever the
//! tape precision.

use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::se3::{exp_so3, left_jacobian, vee_so3, Twist, Vec3};

/// Arccos clamp used for reported values.
pub const EVAL_CLAMP: f64 = 1e-12;
/// Arccos clamp used while training; keeps the gradient bounded near 0 and π.
pub const TRAIN_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub trans: f64,
    pub rot: f64,
    pub consistency: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            trans: 1.0,
            rot: 1.0,
            consistency: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub trans: f64,
    pub rot: f64,
    pub consistency: f64,
    pub total: f64,
}

/// Shape and mask of one assembly's prediction.
#[derive(Debug, Clone, Copy)]
pub struct Layout<'a> {
    pub parts: usize,
    pub frames: usize,
    /// Parts that count toward the averages; `None` means all.
    pub mask: Option<&'a [bool]>,
}

impl Layout<'_> {
    pub fn new(parts: usize, frames: usize) -> Self {
        Layout {
            parts,
            frames,
            mask: None,
        }
    }

    fn valid(&self, p: usize) -> bool {
        self.mask.map_or(true, |m| m[p])
    }

    fn n_valid(&self) -> usize {
        (0..self.parts).filter(|&p| self.valid(p)).count()
    }

    fn check(&self, op: &'static str, pred: &[f64], gt: Option<&[f64]>) -> Result<()> {
        let want = self.parts * self.frames * 6;
        if pred.len() != want {
            return Err(Error::ShapeMismatch {
                op,
                left: vec![pred.len() / 6, 6],
                right: vec![self.parts * self.frames, 6],
            });
        }
        if let Some(g) = gt {
            if g.len() != pred.len() {
                return Err(Error::ShapeMismatch {
                    op,
                    left: vec![pred.len() / 6, 6],
                    right: vec![g.len() / 6, 6],
                });
            }
        }
        if self.mask.is_some_and(|m| m.len() != self.parts) {
            return Err(Error::ShapeMismatch {
                op,
                left: vec![self.parts],
                right: vec![self.mask.map_or(0, <[bool]>::len)],
            });
        }
        Ok(())
    }
}

fn v3(x: &[f64]) -> Vec3 {
    Vec3::new(x[0], x[1], x[2])
}

/// Mean squared linear-velocity error.
pub fn trans_loss_grad(pred: &[f64], gt: &[f64], lay: Layout) -> Result<(f64, Vec<f64>)> {
    lay.check("loss_trans", pred, Some(gt))?;
    let mut grad = vec![0.0; pred.len()];
    let n = (lay.n_valid() * lay.frames) as f64;
    if n == 0.0 {
        return Ok((0.0, grad));
    }
    let mut total = 0.0;
    for p in (0..lay.parts).filter(|&p| lay.valid(p)) {
        for t in 0..lay.frames {
            let r = (p * lay.frames + t) * 6;
            for c in 3..6 {
                let d = pred[r + c] - gt[r + c];
                total += d * d;
                grad[r + c] = 2.0 * d / n;
            }
        }
    }
    Ok((total / n, grad))
}

/// Geodesic angle between `exp(ω_pred)` and `exp(ω_gt)` and its gradient
/// with respect to `ω_pred`.
pub fn geodesic_with_grad(w_pred: &Vec3, w_gt: &Vec3, clamp: f64) -> (f64, Vec3) {
    let rp = exp_so3(w_pred);
    let rg = exp_so3(w_gt);
    let f = (rp.transpose() * rg).trace();
    let x = (f - 1.0) * 0.5;
    let lo = -1.0 + clamp;
    let hi = 1.0 - clamp;
    let xc = x.clamp(lo, hi);
    let angle = xc.acos();
    if x <= lo || x >= hi {
        return (angle, Vec3::zeros());
    }
    let b = rg * rp.transpose();
    let df_dw = left_jacobian(w_pred).transpose() * vee_so3(&(b - b.transpose()));
    let dangle_df = -0.5 / (1.0 - xc * xc).sqrt();
    (angle, df_dw * dangle_df)
}

/// Mean geodesic rotation error in radians.
pub fn rot_loss_grad(pred: &[f64], gt: &[f64], lay: Layout, clamp: f64) -> Result<(f64, Vec<f64>)> {
    lay.check("loss_rot", pred, Some(gt))?;
    let mut grad = vec![0.0; pred.len()];
    let n = (lay.n_valid() * lay.frames) as f64;
    if n == 0.0 {
        return Ok((0.0, grad));
    }
    let mut total = 0.0;
    for p in (0..lay.parts).filter(|&p| lay.valid(p)) {
        for t in 0..lay.frames {
            let r = (p * lay.frames + t) * 6;
            let (a, g) = geodesic_with_grad(&v3(&pred[r..r + 3]), &v3(&gt[r..r + 3]), clamp);
            total += a;
            for c in 0..3 {
                grad[r + c] = g[c] / n;
            }
        }
    }
    Ok((total / n, grad))
}

/// Population variance over time of frame differences, averaged over the six
/// coordinates and the parts.
pub fn consistency_loss_grad(pred: &[f64], lay: Layout) -> Result<(f64, Vec<f64>)> {
    lay.check("loss_const", pred, None)?;
    if lay.frames < 2 {
        return Err(Error::ShapeMismatch {
            op: "loss_const",
            left: vec![lay.frames],
            right: vec![2],
        });
    }
    let mut grad = vec![0.0; pred.len()];
    let nv = lay.n_valid() as f64;
    if nv == 0.0 {
        return Ok((0.0, grad));
    }
    let nd = (lay.frames - 1) as f64;
    let mut total = 0.0;
    for p in (0..lay.parts).filter(|&p| lay.valid(p)) {
        for c in 0..6 {
            let at = |t: usize| pred[(p * lay.frames + t) * 6 + c];
            let diffs: Vec<f64> = (0..lay.frames - 1).map(|t| at(t + 1) - at(t)).collect();
            let mean = diffs.iter().sum::<f64>() / nd;
            let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / nd;
            total += var;
            // d var / d diff_t = 2 (diff_t − mean) / nd; diff_t = x_{t+1} − x_t.
            let scale = 1.0 / (6.0 * nv);
            for (t, d) in diffs.iter().enumerate() {
                let g = 2.0 * (d - mean) / nd * scale;
                grad[(p * lay.frames + t + 1) * 6 + c] += g;
                grad[(p * lay.frames + t) * 6 + c] -= g;
            }
        }
    }
    Ok((total / (6.0 * nv), grad))
}

/// Weighted sum of the three terms and its gradient.
pub fn total_loss_grad(
    pred: &[f64],
    gt: &[f64],
    lay: Layout,
    w: &LossWeights,
    clamp: f64,
) -> Result<(LossParts, Vec<f64>)> {
    let (lt, gt_) = trans_loss_grad(pred, gt, lay)?;
    let (lr, gr) = rot_loss_grad(pred, gt, lay, clamp)?;
    let (lc, gc) = consistency_loss_grad(pred, lay)?;
    let grad = gt_
        .iter()
        .zip(&gr)
        .zip(&gc)
        .map(|((a, b), c)| w.trans * a + w.rot * b + w.consistency * c)
        .collect();
    let parts = LossParts {
        trans: lt,
        rot: lr,
        consistency: lc,
        total: w.trans * lt + w.rot * lr + w.consistency * lc,
    };
    Ok((parts, grad))
}

/// Closure for [`crate::autodiff::Graph::custom_loss`] over a prediction
/// node, reporting the components through `sink`.
pub fn loss_node<T: Real>(
    gt: Vec<f64>,
    parts: usize,
    frames: usize,
    weights: LossWeights,
    clamp: f64,
    sink: std::rc::Rc<std::cell::Cell<LossParts>>,
) -> Box<dyn FnOnce(&Tensor<T>) -> (T, Tensor<T>)> {
    Box::new(move |pred: &Tensor<T>| {
        let p: Vec<f64> = pred.data().iter().map(|x| x.as_f64()).collect();
        let (lp, g) = total_loss_grad(&p, &gt, Layout::new(parts, frames), &weights, clamp)
            .expect("prediction shape checked by the model");
        sink.set(lp);
        let grad = Tensor::new(pred.rows(), pred.cols(), g.into_iter().map(T::of).collect())
            .expect("same length as prediction");
        (T::of(lp.total), grad)
    })
}

/// Flatten per-part twist sequences into the `(M·T) × 6` layout.
pub fn flatten_twists(tracks: &[Vec<Twist>]) -> Vec<f64> {
    tracks.iter().flatten().flat_map(|x| x.to_array()).collect()
}

pub fn loss_trans(pred: &[Vec<Twist>], gt: &[Vec<Twist>]) -> Result<f64> {
    let lay = layout_of(pred, gt)?;
    Ok(trans_loss_grad(&flatten_twists(pred), &flatten_twists(gt), lay)?.0)
}

pub fn loss_rot(pred: &[Vec<Twist>], gt: &[Vec<Twist>]) -> Result<f64> {
    let lay = layout_of(pred, gt)?;
    Ok(rot_loss_grad(&flatten_twists(pred), &flatten_twists(gt), lay, EVAL_CLAMP)?.0)
}

pub fn loss_const(pred: &[Vec<Twist>]) -> Result<f64> {
    let lay = layout_of(pred, pred)?;
    Ok(consistency_loss_grad(&flatten_twists(pred), lay)?.0)
}

pub fn loss_total(pred: &[Vec<Twist>], gt: &[Vec<Twist>], w: &LossWeights) -> Result<LossParts> {
    let lay = layout_of(pred, gt)?;
    Ok(total_loss_grad(&flatten_twists(pred), &flatten_twists(gt), lay, w, EVAL_CLAMP)?.0)
}

fn layout_of(pred: &[Vec<Twist>], gt: &[Vec<Twist>]) -> Result<Layout<'static>> {
    let frames = pred.first().map_or(0, Vec::len);
    let ragged = |x: &[Vec<Twist>]| x.iter().any(|s| s.len() != frames);
    if pred.len() != gt.len() || ragged(pred) || ragged(gt) {
        return Err(Error::ShapeMismatch {
            op: "loss",
            left: vec![pred.len(), frames],
            right: vec![gt.len(), gt.first().map_or(0, Vec::len)],
        });
    }
    Ok(Layout::new(pred.len(), frames))
}
