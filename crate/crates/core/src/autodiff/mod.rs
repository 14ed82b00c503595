//! Small reverse-mode autodiff over dense matrices, plus the point sampling
//! the encoder needs.

mod check;
mod graph;
mod params;
mod sampling;
mod tensor;

pub use check::grad_check;
pub use graph::{Graph, Var};
pub use params::{Grads, ParamStore};
pub use sampling::{ball_query, farthest_point_sample};
pub use tensor::{Real, Tensor};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
        Tensor::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Scalar `Σ w ⊙ x` with fixed random weights, so every output entry
    /// carries a distinct gradient.
    fn probe(g: &mut Graph<f64>, v: Var, seed: u64) -> Result<Var, crate::Error> {
        let shape = g.shape(v);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random(&mut rng, shape[0], shape[1]);
        g.custom_loss(
            v,
            Box::new(move |t: &Tensor<f64>| {
                (t.data().iter().zip(w.data()).map(|(a, b)| a * b).sum(), w.clone())
            }),
        )
    }

    fn store(shapes: &[(usize, usize)], seed: u64) -> ParamStore<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        for (i, &(r, c)) in shapes.iter().enumerate() {
            p.insert(&format!("p{i}"), random(&mut rng, r, c)).unwrap();
        }
        p
    }

    const EPS: f64 = 1e-5;

    #[test]
    fn matmul_gradients() {
        let mut p = store(&[(8, 8), (8, 8)], 1);
        let err = grad_check(&mut p, EPS, |g| {
            let (a, b) = (g.param(0), g.param(1));
            let y = g.matmul(a, b)?;
            probe(g, y, 9)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
        let mut p = store(&[(5, 4), (3, 4)], 2);
        let err = grad_check(&mut p, EPS, |g| {
            let (a, b) = (g.param(0), g.param(1));
            let y = g.matmul_bt(a, b)?;
            probe(g, y, 9)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn linear_map_is_exact() {
        let mut p = store(&[(1, 6)], 3);
        let err = grad_check(&mut p, EPS, |g| {
            let x = g.param(0);
            probe(g, x, 4)
        })
        .unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn add_scale_and_broadcast_gradients() {
        let mut p = store(&[(4, 3), (1, 3), (4, 3)], 4);
        let err = grad_check(&mut p, EPS, |g| {
            let (a, b, c) = (g.param(0), g.param(1), g.param(2));
            let y = g.add(a, b)?;
            let y = g.add(y, c)?;
            let y = g.scale(y, 0.7);
            probe(g, y, 5)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn relu_gradient_away_from_kink() {
        let mut p = store(&[(6, 5)], 5);
        for x in p.get_mut(0).data_mut() {
            if x.abs() < 1e-2 {
                *x = 0.5;
            }
        }
        let err = grad_check(&mut p, EPS, |g| {
            let x = g.param(0);
            let y = g.relu(x);
            probe(g, y, 6)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn layer_norm_gradient() {
        let mut p = store(&[(5, 7), (1, 7), (1, 7)], 6);
        let err = grad_check(&mut p, EPS, |g| {
            let (x, ga, be) = (g.param(0), g.param(1), g.param(2));
            let y = g.layer_norm(x, ga, be, 1e-5)?;
            probe(g, y, 7)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn softmax_gradient() {
        let mut p = store(&[(4, 6)], 7);
        let err = grad_check(&mut p, EPS, |g| {
            let x = g.param(0);
            let y = g.softmax_rows(x);
            probe(g, y, 8)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn max_pool_concat_gather_gradients() {
        let mut p = store(&[(12, 4), (6, 2)], 8);
        let err = grad_check(&mut p, EPS, |g| {
            let (a, b) = (g.param(0), g.param(1));
            let pooled = g.max_pool_sets(a, 2)?;
            let cat = g.concat_cols(&[pooled, b])?;
            let y = g.gather_rows(cat, &[5, 0, 0, 3, 2])?;
            probe(g, y, 9)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn two_layer_mlp_gradient() {
        let mut p = store(&[(10, 4), (4, 8), (1, 8), (8, 3), (1, 3)], 9);
        // Keep hidden pre-activations away from the relu kink.
        let kink_free = |p: &ParamStore<f64>| {
            let x = p.get(0).matmul(p.get(1)).unwrap();
            x.data().iter().zip(std::iter::repeat(p.get(2).data()).flatten()).all(|(a, b)| (a + b).abs() > 1e-3)
        };
        assert!(kink_free(&p));
        let err = grad_check(&mut p, EPS, |g| {
            let x = g.param(0);
            let (w1, b1, w2, b2) = (g.param(1), g.param(2), g.param(3), g.param(4));
            let h = g.matmul(x, w1)?;
            let h = g.add(h, b1)?;
            let h = g.relu(h);
            let y = g.matmul(h, w2)?;
            let y = g.add(y, b2)?;
            probe(g, y, 10)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
