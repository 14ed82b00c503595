//! Acceptance criteria, one test each. Every test writes a single
//! `[PASS]`/`[FAIL]` line to stderr (bypassing output capture) before it
//! asserts.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use gearmotion_core::autodiff::{grad_check, Graph, ParamStore, Real, Tensor, Var};
use gearmotion_core::coupling::{contact_count_brute, pairwise_contact_count, DEFAULT_TAU_C, DEFAULT_TAU_D};
use gearmotion_core::gear::{build_dataset, generate_dataset, load_dataset, Assembly, DatasetRecord};
use gearmotion_core::losses::{loss_const, loss_node, loss_rot, loss_trans, LossWeights, EVAL_CLAMP, TRAIN_CLAMP};
use gearmotion_core::metrics::{kabsch, rotation_error};
use gearmotion_core::model::{forward, init_params, AssemblyInput, Dynamo, ModelConfig, SaStage};
use gearmotion_core::se3::{exp_se3, exp_so3, geodesic_angle, log_se3, rotation_angle};
use gearmotion_core::train::trial::{mean_of, run_trial, split_samples, TrialResult};
use gearmotion_core::train::{fit, TrainConfig};
use gearmotion_core::{
    estimate_coupling, CouplingMatrix, GeneratorConfig, MotionTrack, PartKind, RigidTransform, Twist, Vec3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: usize, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let line = format!("[{tag}] criterion {n:>2} {name}: {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_twist(rng: &mut ChaCha8Rng, max_angle: f64) -> Twist {
    let omega = unit(rng) * rng.gen_range(0.0..max_angle);
    let v = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    Twist::new(omega, v)
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    (0..n).map(|_| unit(rng) * rng.gen_range(0.05f64..1.0).cbrt()).collect()
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_01_lie_group_suite() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut round_trip = 0.0f64;
    for _ in 0..10_000 {
        let xi = random_twist(&mut rng, PI - 1e-3);
        let back = log_se3(&exp_se3(&xi)).unwrap();
        let d = xi.to_array().iter().zip(back.to_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        round_trip = round_trip.max(d);
    }
    let mut laws = 0.0f64;
    let id = RigidTransform::identity();
    for _ in 0..2_000 {
        let [a, b, c] = [0; 3].map(|_| exp_se3(&random_twist(&mut rng, 3.0)));
        let assoc = a.compose(&b).compose(&c).max_abs_diff(&a.compose(&b.compose(&c)));
        let ident = a.compose(&id).max_abs_diff(&a).max(id.compose(&a).max_abs_diff(&a));
        let inv = a.compose(&a.inverse()).max_abs_diff(&id).max(a.inverse().compose(&a).max_abs_diff(&id));
        let xi = random_twist(&mut rng, 3.0);
        let neg = Twist::new(-xi.omega, -xi.v);
        let opposite = exp_se3(&xi).compose(&exp_se3(&neg)).max_abs_diff(&id);
        laws = laws.max(assoc).max(ident).max(inv).max(opposite);
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = round_trip < 1e-8 && laws < 1e-9 && secs < 5.0;
    report(
        1,
        "lie group",
        pass,
        &format!("round trip {round_trip:.2e} (< 1e-8), group laws {laws:.2e} (< 1e-9), {secs:.2} s (< 5 s)"),
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_kabsch_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(20..400);
        let p = random_cloud(&mut rng, n);
        let r = exp_so3(&(unit(&mut rng) * 10f64.to_radians()));
        let t = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let q: Vec<Vec3> = p.iter().map(|x| r * x + t).collect();
        let est = kabsch(&p, &q).unwrap();
        worst = worst
            .max((rotation_angle(&est).to_degrees() - 10.0).abs())
            .max(geodesic_angle(&est, &r));
        // Through the metric: a motionless prediction of a 10 degree step
        // misses by exactly 10 degrees.
        let step = RigidTransform::new(r, t);
        let gt = MotionTrack {
            transforms: vec![step, step.compose(&step)],
            twists: vec![log_se3(&step).unwrap(); 2],
        };
        let still = MotionTrack::from_twists(&[Twist::zero(); 2]);
        let err = rotation_error(&[still], &[gt], &[p]).unwrap();
        worst = worst.max((err[0][0] - 10.0).abs());
    }
    report(2, "kabsch oracle", worst < 1e-6, &format!("worst angle error {worst:.2e} deg (< 1e-6)"));
}

// ---------------------------------------------------------------- 3 and 4

fn suite() -> &'static (GeneratorConfig, Vec<(Assembly, Vec<MotionTrack>)>) {
    static SUITE: OnceLock<(GeneratorConfig, Vec<(Assembly, Vec<MotionTrack>)>)> = OnceLock::new();
    SUITE.get_or_init(|| {
        let cfg = GeneratorConfig::suite();
        let built = build_dataset(&cfg, 0).unwrap();
        (cfg, built)
    })
}

/// Velocity of `p` under rotation `w` about the line through `c`.
fn spin_velocity(w: &Vec3, c: &Vec3, p: &Vec3) -> Vec3 {
    w.cross(&(p - c))
}

fn min_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    use rayon::prelude::*;
    a.par_iter()
        .map(|p| b.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min))
        .reduce(|| f64::INFINITY, f64::min)
        .sqrt()
}

#[test]
fn criterion_03_generator_kinematics() {
    let (cfg, built) = suite();
    assert_eq!(built.len(), 100);
    assert_eq!(cfg.n_frames, 36);
    let mut speed = 0.0f64;
    let mut turn = 0.0f64;
    let mut band = 0.0f64;
    let mut pairs = 0;
    for (asm, tracks) in built {
        // Pitch point speed matching on every frame of every meshing pair.
        for (i, j) in asm.coupling_gt.edges() {
            let (a, b) = (&asm.parts[i], &asm.parts[j]);
            for t in 0..cfg.n_frames {
                let (ta, tb) = (&tracks[i].twists[t], &tracks[j].twists[t]);
                let d = match (a.kind, b.kind) {
                    (PartKind::SpurGear, PartKind::SpurGear) => {
                        let dir = (b.center - a.center).normalize();
                        let p = a.center + dir * a.pitch_radius;
                        (spin_velocity(&ta.omega, &a.center, &p) - spin_velocity(&tb.omega, &b.center, &p)).norm()
                    }
                    (PartKind::SpurGear, PartKind::Rack) | (PartKind::Rack, PartKind::SpurGear) => {
                        let (g, r, tg, tr) = if a.is_gear() { (a, b, ta, tb) } else { (b, a, tb, ta) };
                        let p = r.center + r.axis * (g.center - r.center).dot(&r.axis);
                        let gear_v = spin_velocity(&tg.omega, &g.center, &p);
                        let pitch_gap = ((p - g.center).norm() - g.pitch_radius).abs();
                        (gear_v - tr.v).norm().max(pitch_gap)
                    }
                    (PartKind::Rack, PartKind::Rack) => f64::INFINITY,
                };
                speed = speed.max(d);
            }
        }
        // The driver makes exactly one turn.
        let drv = &tracks[asm.driver_index];
        let total: f64 = drv.twists.iter().map(|w| w.omega.z).sum();
        turn = turn.max((total - 2.0 * PI).abs());
        turn = turn.max(drv.transforms.last().unwrap().max_abs_diff(&RigidTransform::identity()));
        // Coupled parts keep their rest clearance within 25%.
        for (i, j) in asm.coupling_gt.edges() {
            pairs += 1;
            let d0 = min_distance(&asm.clouds[i], &asm.clouds[j]);
            for t in 0..cfg.n_frames {
                let a = tracks[i].transforms[t].apply(&asm.clouds[i]);
                let b = tracks[j].transforms[t].apply(&asm.clouds[j]);
                band = band.max((min_distance(&a, &b) / d0 - 1.0).abs());
            }
        }
    }
    let pass = speed < 1e-9 && turn < 1e-9 && band <= 0.25;
    report(
        3,
        "generator kinematics",
        pass,
        &format!(
            "pitch speed mismatch {speed:.2e} (< 1e-9), driver turn error {turn:.2e} (< 1e-9), \
             worst contact band {:.1}% over {pairs} pairs (<= 25%)",
            band * 100.0
        ),
    );
}

#[test]
fn criterion_04_coupling_audit() {
    let (_, built) = suite();
    let mut pairs = 0usize;
    let mut matrix_miss = 0usize;
    let mut counter_miss = 0usize;
    for (asm, _) in built {
        let est = estimate_coupling(&asm.clouds, DEFAULT_TAU_D, DEFAULT_TAU_C);
        let n = asm.n_parts();
        for i in 0..n {
            for j in i + 1..n {
                pairs += 1;
                if est.get(i, j) != asm.coupling_gt.get(i, j) || est.get(j, i) != est.get(i, j) {
                    matrix_miss += 1;
                }
                let (a, b) = (&asm.clouds[i], &asm.clouds[j]);
                if pairwise_contact_count(a, b, DEFAULT_TAU_D) != contact_count_brute(a, b, DEFAULT_TAU_D) {
                    counter_miss += 1;
                }
            }
        }
    }
    let pass = matrix_miss == 0 && counter_miss == 0;
    report(
        4,
        "coupling audit",
        pass,
        &format!("{pairs} pairs, {matrix_miss} matrix mismatches, {counter_miss} grid/brute count mismatches"),
    );
}

// ---------------------------------------------------------------- 5

fn probe(g: &mut Graph<f64>, v: Var, seed: u64) -> gearmotion_core::Result<Var> {
    let shape = g.shape(v);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::from_fn(shape[0], shape[1], |_, _| rng.gen_range(-1.0..1.0));
    g.custom_loss(
        v,
        Box::new(move |t: &Tensor<f64>| (t.data().iter().zip(w.data()).map(|(a, b)| a * b).sum(), w.clone())),
    )
}

fn random_store(shapes: &[(usize, usize)], seed: u64) -> ParamStore<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamStore::new();
    for (i, &(r, c)) in shapes.iter().enumerate() {
        let t = Tensor::from_fn(r, c, |_, _| {
            // Stay clear of the relu and max-pool kinks.
            let x: f64 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                x
            } else {
                -x
            }
        });
        p.insert(&format!("p{i}"), t).unwrap();
    }
    p
}

type Primitive = fn(&mut Graph<f64>) -> gearmotion_core::Result<Var>;

fn tiny_model() -> ModelConfig {
    ModelConfig {
        points_per_part: 32,
        feature_dim: 8,
        sa: [
            SaStage {
                samples: 8,
                radius: 0.6,
                max_neighbors: 4,
                mlp: vec![6, 6],
            },
            SaStage {
                samples: 2,
                radius: 1.5,
                max_neighbors: 4,
                mlp: vec![8],
            },
        ],
        global_mlp: vec![8, 8],
        gnn_layers: 1,
        decoder_layers: 1,
        heads: 2,
        ff_dim: 16,
        frames: 3,
        use_gnn: true,
        init_seed: 5,
    }
}

#[test]
fn criterion_05_gradient_suite() {
    let t0 = Instant::now();
    let cases: Vec<(&str, Vec<(usize, usize)>, Primitive)> = vec![
        ("matmul", vec![(6, 5), (5, 4)], |g| {
            let (a, b) = (g_param(g, 0), g_param(g, 1));
            let y = g.matmul(a, b)?;
            probe(g, y, 1)
        }),
        ("matmul_bt", vec![(6, 5), (4, 5)], |g| {
            let (a, b) = (g_param(g, 0), g_param(g, 1));
            let y = g.matmul_bt(a, b)?;
            probe(g, y, 2)
        }),
        ("add_broadcast", vec![(5, 3), (1, 3)], |g| {
            let (a, b) = (g_param(g, 0), g_param(g, 1));
            let y = g.add(a, b)?;
            probe(g, y, 3)
        }),
        ("scale", vec![(4, 4)], |g| {
            let x = g_param(g, 0);
            let y = g.scale(x, -1.7);
            probe(g, y, 4)
        }),
        ("relu", vec![(6, 5)], |g| {
            let x = g_param(g, 0);
            let y = g.relu(x);
            probe(g, y, 5)
        }),
        ("layer_norm", vec![(5, 7), (1, 7), (1, 7)], |g| {
            let x = g_param(g, 0);
            let a = g_param(g, 1);
            let b = g_param(g, 2);
            let y = g.layer_norm(x, a, b, 1e-5)?;
            probe(g, y, 6)
        }),
        ("softmax_rows", vec![(4, 6)], |g| {
            let x = g_param(g, 0);
            let y = g.softmax_rows(x);
            probe(g, y, 7)
        }),
        ("max_pool_sets", vec![(12, 3)], |g| {
            let x = g_param(g, 0);
            let y = g.max_pool_sets(x, 4)?;
            probe(g, y, 8)
        }),
        ("concat_cols", vec![(3, 2), (3, 4)], |g| {
            let (a, b) = (g_param(g, 0), g_param(g, 1));
            let y = g.concat_cols(&[a, b])?;
            probe(g, y, 9)
        }),
        ("gather_rows", vec![(4, 3)], |g| {
            let x = g_param(g, 0);
            let y = g.gather_rows(x, &[3, 0, 3, 1])?;
            probe(g, y, 10)
        }),
        ("twist losses", vec![(6, 6)], |g| {
            let gt: Vec<f64> = (0..36).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.05).collect();
            let sink = std::rc::Rc::new(std::cell::Cell::new(Default::default()));
            let x = g_param(g, 0);
            g.custom_loss(x, loss_node(gt, 2, 3, LossWeights::default(), TRAIN_CLAMP, sink))
        }),
    ];
    let mut worst_name = "";
    let mut worst = 0.0f64;
    for (name, shapes, f) in &cases {
        let mut p = random_store(shapes, 77);
        let err = grad_check(&mut p, 1e-6, f).unwrap();
        if err > worst {
            worst = err;
            worst_name = name;
        }
    }

    let cfg = tiny_model();
    let mut params = init_params::<f64>(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for id in 0..params.len() {
        if params.name(id).starts_with("gnn") {
            for x in params.get_mut(id).data_mut() {
                *x = rng.gen_range(-0.3..0.3);
            }
        }
    }
    let clouds = vec![random_cloud(&mut rng, 32), random_cloud(&mut rng, 32)];
    let input = AssemblyInput::new(&clouds, CouplingMatrix::from_edges(2, &[(0, 1)]), &cfg).unwrap();
    let gt: Vec<f64> = (0..2 * 3 * 6).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let e2e = grad_check(&mut params, 1e-5, |g| {
        let out = forward(g, &cfg, &input)?;
        let sink = std::rc::Rc::new(std::cell::Cell::new(Default::default()));
        g.custom_loss(out, loss_node(gt.clone(), 2, 3, LossWeights::default(), TRAIN_CLAMP, sink))
    })
    .unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst < 1e-6 && e2e < 1e-4 && secs < 120.0;
    report(
        5,
        "gradient suite",
        pass,
        &format!(
            "{} primitives, worst {worst:.2e} ({worst_name}, < 1e-6); end to end {e2e:.2e} (< 1e-4); {secs:.1} s (< 120 s)",
            cases.len()
        ),
    );
}

fn g_param(g: &mut Graph<f64>, id: usize) -> Var {
    g.param(id)
}

// ---------------------------------------------------------------- 6

/// Naive population variance.
fn variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

#[test]
fn criterion_06_loss_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let tracks: Vec<Vec<Twist>> = (0..3).map(|_| (0..12).map(|_| random_twist(&mut rng, 1.0)).collect()).collect();
    let trans = loss_trans(&tracks, &tracks).unwrap();
    let rot = loss_rot(&tracks, &tracks).unwrap();
    let rot_floor = (1.0 - EVAL_CLAMP).acos();
    let cons_self = {
        let flat: Vec<Vec<Twist>> = tracks.iter().map(|t| vec![t[0]; 12]).collect();
        loss_const(&flat).unwrap()
    };
    let mut linear = 0.0f64;
    for _ in 0..20 {
        let (a, b) = (random_twist(&mut rng, 1.0).to_array(), random_twist(&mut rng, 0.1).to_array());
        let seq: Vec<Twist> = (0..12)
            .map(|t| Twist::from_slice(&std::array::from_fn::<f64, 6, _>(|k| a[k] + b[k] * t as f64)))
            .collect();
        linear = linear.max(loss_const(&[seq]).unwrap());
    }
    let alternating: Vec<Twist> = [0.0, 1.0, 0.0, 1.0]
        .iter()
        .map(|&x| Twist::new(Vec3::new(x, 0.0, 0.0), Vec3::zeros()))
        .collect();
    let hand = variance(&[1.0, -1.0, 1.0]) / 6.0;
    let alt = loss_const(&[alternating]).unwrap();
    let pass = trans.abs() < 1e-15
        && rot <= rot_floor + 1e-15
        && cons_self.abs() < 1e-15
        && linear < 1e-12
        && (alt - hand).abs() < 1e-15
        && (hand - 8.0 / 54.0).abs() < 1e-15;
    report(
        6,
        "loss identities",
        pass,
        &format!(
            "trans {trans:.1e}, rot {rot:.2e} (clamp floor {rot_floor:.2e}), linear-in-t consistency {linear:.1e}, \
             alternating {alt:.6} vs hand {hand:.6}"
        ),
    );
}

// ---------------------------------------------------------------- 7, 8, 9

const SEEDS: [u64; 3] = [0, 1, 2];

fn desk_dataset() -> &'static (PathBuf, Vec<DatasetRecord>) {
    static DATA: OnceLock<(tempfile::TempDir, PathBuf, Vec<DatasetRecord>)> = OnceLock::new();
    let d = DATA.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("desk");
        generate_dataset(&GeneratorConfig::desk(), 0, &root).unwrap();
        let records = load_dataset(&root).unwrap();
        (dir, root, records)
    });
    // The tempdir lives as long as the static.
    static VIEW: OnceLock<(PathBuf, Vec<DatasetRecord>)> = OnceLock::new();
    VIEW.get_or_init(|| (d.1.clone(), d.2.clone()))
}

fn desk_model() -> ModelConfig {
    ModelConfig::fast()
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Variant {
    Full { gnn: bool, points: usize },
    Without(&'static str),
}

/// Trials of one variant over [`SEEDS`], trained once and shared.
fn trials(v: Variant) -> Vec<TrialResult> {
    static CACHE: OnceLock<Mutex<HashMap<Variant, Vec<TrialResult>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(t) = guard.get(&v) {
        return t.clone();
    }
    let (_, records) = desk_dataset();
    let mut mcfg = desk_model();
    let mut tcfg = TrainConfig::desk();
    match v {
        Variant::Full { gnn, points } => {
            mcfg.use_gnn = gnn;
            mcfg.points_per_part = points;
        }
        Variant::Without(term) => match term {
            "trans" => tcfg.weights.trans = 0.0,
            "rot" => tcfg.weights.rot = 0.0,
            "const" => tcfg.weights.consistency = 0.0,
            _ => unreachable!(),
        },
    }
    let out: Vec<TrialResult> = SEEDS
        .iter()
        .map(|&s| run_trial(records, &mcfg, &tcfg, s).unwrap().0)
        .collect();
    for t in &out {
        let _ = std::io::stderr().write_all(
            format!(
                "    {v:?} seed {}: test rot {:.3} deg, 3+ parts {:.3} deg, trans {:.4}, best epoch {}\n",
                t.seed, t.test_rot_deg, t.test_rot_multi_deg, t.test_trans, t.best_epoch
            )
            .as_bytes(),
        );
    }
    guard.insert(v, out.clone());
    out
}

const DYNAMO: Variant = Variant::Full { gnn: true, points: 256 };

#[test]
fn criterion_07_training_efficacy() {
    let t0 = Instant::now();
    let (_, records) = desk_dataset();
    let full = trials(DYNAMO);
    let plain = trials(Variant::Full { gnn: false, points: 256 });
    let mut zero = Vec::new();
    let mut sizes = Vec::new();
    for &s in &SEEDS {
        let tcfg = TrainConfig {
            split_seed: s,
            ..TrainConfig::desk()
        };
        let (train, test) = split_samples(records, &desk_model(), &tcfg).unwrap();
        sizes.push((train.len(), test.len()));
        zero.push(gearmotion_core::train::evaluate_zero_motion(&test).unwrap().mean_rot);
    }
    let rot = mean_of(&full, |t| t.test_rot_deg);
    let zero_rot = zero.iter().sum::<f64>() / zero.len() as f64;
    let multi_gnn = mean_of(&full, |t| t.test_rot_multi_deg);
    let multi_plain = mean_of(&plain, |t| t.test_rot_multi_deg);
    let halved = full.iter().all(|t| t.loss_first.is_finite() && t.loss_last < 0.5 * t.loss_first);
    let secs = t0.elapsed().as_secs_f64();
    let split_ok = sizes.iter().all(|&s| s == (60, 8));
    let a = rot < 0.5 * zero_rot;
    let b = multi_gnn <= multi_plain;
    report(
        7,
        "training efficacy",
        a && b && halved && split_ok && secs < 1800.0,
        &format!(
            "(a) test rot {rot:.3} deg vs zero motion {zero_rot:.3} deg (< 50%: {a}); \
             (b) 3+ parts with GNN {multi_gnn:.3} deg vs without {multi_plain:.3} deg (<=: {b}); \
             loss halves: {halved}; splits {sizes:?}; {secs:.0} s"
        ),
    );
}

#[test]
fn criterion_08_point_density_direction() {
    let dense = mean_of(&trials(DYNAMO), |t| t.test_rot_deg);
    let sparse = mean_of(&trials(Variant::Full { gnn: true, points: 128 }), |t| t.test_rot_deg);
    report(
        8,
        "point density direction",
        sparse > dense,
        &format!("128 points {sparse:.3} deg vs 256 points {dense:.3} deg (mean over {} seeds)", SEEDS.len()),
    );
}

#[test]
fn criterion_09_loss_removal_direction() {
    let base = mean_of(&trials(DYNAMO), |t| t.test_rot_deg);
    let mut factors = BTreeMap::new();
    for term in ["trans", "rot", "const"] {
        let r = mean_of(&trials(Variant::Without(term)), |t| t.test_rot_deg);
        factors.insert(term, r / base);
    }
    let rot = factors["rot"];
    let pass = factors.iter().all(|(k, &f)| *k == "rot" || f < rot);
    let detail: Vec<String> = factors.iter().map(|(k, f)| format!("w/o {k} x{f:.2}")).collect();
    report(
        9,
        "loss removal direction",
        pass,
        &format!("{} relative to {base:.3} deg", detail.join(", ")),
    );
}

// ---------------------------------------------------------------- 10

/// Every file below `root` with its bytes.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn first_epoch_loss(records: &[DatasetRecord]) -> (f64, Dynamo) {
    let mcfg = desk_model();
    let tcfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::desk()
    };
    let (train, test) = split_samples(records, &mcfg, &tcfg).unwrap();
    let out = fit(Dynamo::new(mcfg).unwrap(), &train, &test, &tcfg, None, &mut |_, _, _, _| Ok(())).unwrap();
    (out.state.history[0].loss_total, out.last)
}

fn bits<T: Real>(t: &Tensor<T>) -> Vec<u64> {
    t.data().iter().map(|x| x.to_f64().unwrap().to_bits()).collect()
}

#[test]
fn criterion_10_reproducibility() {
    let (root, records) = desk_dataset();
    let dir = tempfile::tempdir().unwrap();
    let again = dir.path().join("desk");
    generate_dataset(&GeneratorConfig::desk(), 0, &again).unwrap();
    let same_tree = tree(root) == tree(&again);
    let regenerated = load_dataset(&again).unwrap();
    let (l1, m1) = first_epoch_loss(records);
    let (l2, _) = first_epoch_loss(&regenerated);
    let loss_gap = (l1 - l2).abs();

    let path = dir.path().join("m.ckpt");
    m1.save(&path).unwrap();
    let back = Dynamo::load(m1.cfg.clone(), &path).unwrap();
    let params_exact = m1.params.iter().zip(back.params.iter()).all(|((n1, t1), (n2, t2))| n1 == n2 && bits(t1) == bits(t2));
    let input = split_samples(records, &m1.cfg, &TrainConfig::desk()).unwrap().1[0].input.clone();
    let outputs_exact = bits(&m1.predict_raw(&input).unwrap()) == bits(&back.predict_raw(&input).unwrap());
    let resaved = dir.path().join("m2.ckpt");
    back.save(&resaved).unwrap();
    let bytes_exact = std::fs::read(&path).unwrap() == std::fs::read(&resaved).unwrap();

    let pass = same_tree && loss_gap <= 1e-6 && params_exact && outputs_exact && bytes_exact;
    report(
        10,
        "reproducibility",
        pass,
        &format!(
            "regenerated tree identical: {same_tree}; epoch-1 loss gap {loss_gap:.1e} (<= 1e-6); \
             checkpoint params/outputs/bytes exact: {params_exact}/{outputs_exact}/{bytes_exact}"
        ),
    );
}
