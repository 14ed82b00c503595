//! Property tests over the public API.

use gearmotion_core::metrics::{kabsch, rotation_error, translation_error};
use gearmotion_core::se3::{exp_se3, exp_so3, log_se3, rotation_angle};
use gearmotion_core::{estimate_coupling, MotionTrack, RigidTransform, Twist, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vec3(max: f64) -> impl Strategy<Value = Vec3> {
    (-max..max, -max..max, -max..max).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

/// Twists whose rotation stays clear of a half turn.
fn twist() -> impl Strategy<Value = Twist> {
    (vec3(1.0), 0.0..3.0f64, vec3(2.0)).prop_filter_map("degenerate axis", |(axis, angle, v)| {
        (axis.norm() > 1e-3).then(|| Twist::new(axis.normalize() * angle, v))
    })
}

fn cloud(seed: u64, n: usize) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

fn sq_residual(r: &gearmotion_core::Mat3, p: &[Vec3], q: &[Vec3]) -> f64 {
    let n = p.len() as f64;
    let cp = p.iter().sum::<Vec3>() / n;
    let cq = q.iter().sum::<Vec3>() / n;
    p.iter().zip(q).map(|(a, b)| (r * (a - cp) - (b - cq)).norm_squared()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn log_inverts_exp(xi in twist()) {
        let back = log_se3(&exp_se3(&xi)).unwrap();
        for (a, b) in back.to_array().iter().zip(xi.to_array()) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn compose_inverse_laws(a in twist(), b in twist(), p in vec3(3.0)) {
        let (ta, tb) = (exp_se3(&a), exp_se3(&b));
        let ab = ta.compose(&tb);
        prop_assert!((ab.apply_point(&p) - ta.apply_point(&tb.apply_point(&p))).norm() < 1e-12);
        prop_assert!(ab.inverse().max_abs_diff(&tb.inverse().compose(&ta.inverse())) < 1e-12);
        prop_assert!(ta.compose(&ta.inverse()).max_abs_diff(&RigidTransform::identity()) < 1e-12);
        prop_assert!((rotation_angle(&ta.rotation) - a.omega.norm()).abs() < 1e-9);
    }

    #[test]
    fn tracks_rebuild_from_their_twists(xs in prop::collection::vec(twist(), 1..8)) {
        let track = MotionTrack::from_twists(&xs);
        let mut acc = RigidTransform::identity();
        for (x, t) in xs.iter().zip(&track.transforms) {
            acc = exp_se3(x).compose(&acc);
            prop_assert!(acc.max_abs_diff(t) < 1e-12);
        }
    }

    #[test]
    fn kabsch_beats_random_rotations(seed in 0u64..64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = cloud(seed, 40);
        let r = exp_so3(&Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)));
        let q: Vec<Vec3> = p
            .iter()
            .map(|x| r * x + Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)))
            .collect();
        let best = kabsch(&p, &q).unwrap();
        let floor = sq_residual(&best, &p, &q);
        for _ in 0..1000 {
            let w = Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
            let other = exp_so3(&w) * best;
            prop_assert!(sq_residual(&other, &p, &q) >= floor - 1e-10);
        }
    }

    #[test]
    fn rotation_error_ignores_a_global_rigid_motion(
        pred in prop::collection::vec(twist(), 3..6),
        gt in prop::collection::vec(twist(), 3..6),
        g in twist(),
        seed in 0u64..1000,
    ) {
        let frames = pred.len().min(gt.len());
        let (tp, tg) = (MotionTrack::from_twists(&pred[..frames]), MotionTrack::from_twists(&gt[..frames]));
        let g = exp_se3(&g);
        let moved = |t: &MotionTrack| MotionTrack {
            transforms: t.transforms.iter().map(|x| g.compose(x)).collect(),
            twists: t.twists.clone(),
        };
        let clouds = vec![cloud(seed, 30)];
        let before = rotation_error(&[tp.clone()], &[tg.clone()], &clouds).unwrap();
        let after = rotation_error(&[moved(&tp)], &[moved(&tg)], &clouds).unwrap();
        for (a, b) in before[0].iter().zip(&after[0]) {
            prop_assert!((a - b).abs() < 1e-6);
        }
        let same = translation_error(&[tp.clone()], &[tp], &clouds).unwrap();
        prop_assert!(same[0].iter().all(|&e| e == 0.0));
    }

    #[test]
    fn coupling_is_symmetric_and_hollow(seed in 0u64..200, n in 2usize..5) {
        let clouds: Vec<Vec<Vec3>> = (0..n)
            .map(|i| cloud(seed * 7 + i as u64, 60).into_iter().map(|p| p * 0.3 + Vec3::new(0.4 * i as f64, 0.0, 0.0)).collect())
            .collect();
        let m = estimate_coupling(&clouds, 0.05, 3);
        for i in 0..n {
            prop_assert!(!m.get(i, i));
            for j in 0..n {
                prop_assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
    }
}
