//! Schedule, clipping and the AdamW update.

use crate::autodiff::{Grads, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Cosine annealing from `lr0` at step 0 to `lr_min` at `total`.
pub fn cosine_lr(step: usize, total: usize, lr0: f64, lr_min: f64) -> f64 {
    if total == 0 {
        return lr0;
    }
    let x = step.min(total) as f64 / total as f64;
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (std::f64::consts::PI * x).cos())
}

/// Rescale `grads` so their global norm is at most `max_norm`. Returns the
/// pre-clip norm and the applied factor.
pub fn clip_grad_norm(grads: &mut Grads<f32>, max_norm: f64) -> Result<(f64, f64)> {
    let norm = grads.global_norm();
    if !norm.is_finite() {
        return Err(Error::NonFiniteGradient);
    }
    if norm <= max_norm {
        return Ok((norm, 1.0));
    }
    let scale = max_norm / norm;
    grads.scale(scale as f32);
    // f32 rounding can leave the norm a few ulps above the bound.
    while grads.global_norm() > max_norm + 1e-9 {
        grads.scale(1.0 - f32::EPSILON);
    }
    Ok((norm, scale))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// Moment estimates aligned with a parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    pub step: u64,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, params: &ParamStore<f32>) -> Self {
        let zeros = || params.zeros_like().tensors;
        Self {
            cfg,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Decay `p ← p − lr·wd·p`, then the bias-corrected adaptive step.
    pub fn update(&mut self, params: &mut ParamStore<f32>, grads: &Grads<f32>, lr: f64) {
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let decay = (1.0 - lr * c.weight_decay) as f32;
        for id in 0..params.len() {
            let p = params.get_mut(id).data_mut();
            let g = grads.tensors[id].data();
            let m = self.m[id].data_mut();
            let v = self.v[id].data_mut();
            for k in 0..p.len() {
                let gk = g[k] as f64;
                let mk = c.beta1 * m[k] as f64 + (1.0 - c.beta1) * gk;
                let vk = c.beta2 * v[k] as f64 + (1.0 - c.beta2) * gk * gk;
                m[k] = mk as f32;
                v[k] = vk as f32;
                let step = lr * (mk / bc1) / ((vk / bc2).sqrt() + c.eps);
                p[k] = (p[k] * decay) - step as f32;
            }
        }
    }

    /// Moments as a parameter store named `m.<param>` and `v.<param>`.
    pub fn to_store(&self, params: &ParamStore<f32>) -> ParamStore<f32> {
        let mut out = ParamStore::new();
        for (id, (name, _)) in params.iter().enumerate() {
            out.insert(&format!("m.{name}"), self.m[id].clone()).expect("unique");
            out.insert(&format!("v.{name}"), self.v[id].clone()).expect("unique");
        }
        out
    }

    pub fn from_store(cfg: AdamWConfig, step: u64, params: &ParamStore<f32>, store: &ParamStore<f32>) -> Result<Self> {
        let mut m = Vec::with_capacity(params.len());
        let mut v = Vec::with_capacity(params.len());
        for (name, t) in params.iter() {
            for (dst, key) in [(&mut m, format!("m.{name}")), (&mut v, format!("v.{name}"))] {
                let x = store
                    .by_name(&key)
                    .filter(|x| x.shape() == t.shape())
                    .ok_or_else(|| Error::Config(format!("optimizer state lacks `{key}`")))?;
                dst.push(x.clone());
            }
        }
        if store.len() != 2 * params.len() {
            return Err(Error::Config("optimizer state has extra entries".into()));
        }
        Ok(Self { cfg, step, m, v })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(x: f32) -> ParamStore<f32> {
        let mut p = ParamStore::new();
        p.insert("p", Tensor::new(1, 1, vec![x]).unwrap()).unwrap();
        p
    }

    fn grads(xs: &[f32]) -> Grads<f32> {
        Grads {
            tensors: vec![Tensor::new(1, xs.len(), xs.to_vec()).unwrap()],
        }
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_lr(0, 100, 1e-4, 1e-6), 1e-4);
        assert!((cosine_lr(100, 100, 1e-4, 1e-6) - 1e-6).abs() < 1e-21);
        assert!((cosine_lr(50, 100, 1e-4, 1e-6) - (1e-4 + 1e-6) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn clipping_examples() {
        let mut g = grads(&[0.3, 0.4]);
        assert_eq!(clip_grad_norm(&mut g, 1.0).unwrap().1, 1.0);
        assert_eq!(g.tensors[0].data(), &[0.3, 0.4]);
        let mut g = grads(&[0.0, 4.0]);
        let (n, s) = clip_grad_norm(&mut g, 1.0).unwrap();
        assert_eq!((n, s), (4.0, 0.25));
        assert!((g.global_norm() - 1.0).abs() < 1e-7);
        let mut g = grads(&[f32::NAN]);
        assert!(matches!(clip_grad_norm(&mut g, 1.0), Err(Error::NonFiniteGradient)));
    }

    #[test]
    fn adamw_basics() {
        let mut p = single(1.0);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &p);
        opt.update(&mut p, &grads(&[0.0]), 1e-2);
        assert_eq!(p.get(0).data()[0], 1.0);

        let mut p = single(1.0);
        let mut opt = AdamW::new(cfg, &p);
        opt.update(&mut p, &grads(&[2.0]), 1e-2);
        assert!(p.get(0).data()[0].abs() < 1.0);
    }

    #[test]
    fn decoupled_decay_closed_form() {
        let mut p = single(2.0);
        let cfg = AdamWConfig {
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &p);
        opt.update(&mut p, &grads(&[0.0]), 0.5);
        assert_eq!(p.get(0).data()[0], 2.0 * (1.0 - 0.5 * 0.1) as f32);
    }

    #[test]
    fn moments_round_trip_through_a_store() {
        let mut p = single(1.0);
        let mut opt = AdamW::new(AdamWConfig::default(), &p);
        opt.update(&mut p, &grads(&[0.5]), 1e-3);
        let back = AdamW::from_store(opt.cfg, opt.step, &p, &opt.to_store(&p)).unwrap();
        assert_eq!(back, opt);
        assert!(AdamW::from_store(opt.cfg, 1, &p, &ParamStore::new()).is_err());
    }

    proptest! {
        #[test]
        fn schedule_is_monotone(total in 1usize..500, lr0 in 1e-5f64..1e-2) {
            let lr_min = lr0 / 100.0;
            let mut prev = f64::INFINITY;
            for s in 0..=total {
                let lr = cosine_lr(s, total, lr0, lr_min);
                prop_assert!(lr <= prev + 1e-18);
                prop_assert!(lr >= lr_min - 1e-18 && lr <= lr0 + 1e-18);
                prev = lr;
            }
        }

        #[test]
        fn clipping_preserves_direction(xs in proptest::collection::vec(-10.0f32..10.0, 2..20), max in 0.1f64..5.0) {
            let mut g = grads(&xs);
            let before = g.clone();
            clip_grad_norm(&mut g, max).unwrap();
            prop_assert!(g.global_norm() <= max + 1e-9);
            let n0 = before.global_norm();
            let n1 = g.global_norm();
            if n0 > 0.0 {
                for (a, b) in before.tensors[0].data().iter().zip(g.tensors[0].data()) {
                    prop_assert!((*a as f64 / n0 - *b as f64 / n1).abs() < 1e-5);
                }
            }
        }
    }
}
