//! Training: split, batching, AdamW with cosine annealing and clipping,
//! per-epoch evaluation and checkpointing.

mod optim;
pub mod trial;

use std::cell::Cell;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use optim::{clip_grad_norm, cosine_lr, AdamW, AdamWConfig};

use crate::autodiff::{Grads, Graph};
use crate::coupling::{estimate_coupling, DEFAULT_TAU_C, DEFAULT_TAU_D};
use crate::error::{Error, Result};
use crate::gear::{assembly_seed, DatasetRecord, MotionTrack};
use crate::kv::KvDoc;
use crate::losses::{flatten_twists, loss_node, LossParts, LossWeights, TRAIN_CLAMP};
use crate::metrics::{EvalItem, EvalReport};
use crate::model::{checkpoint, rotate_twists_z, AssemblyInput, Dynamo, ModelConfig};
use crate::se3::{Twist, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub epochs: usize,
    pub split_seed: u64,
    pub split_ratio: f64,
    /// Seed of the per-epoch shuffles.
    pub shuffle_seed: u64,
    pub weights: LossWeights,
    pub tau_d: f64,
    pub tau_c: usize,
    /// Turn every training assembly by a random angle about the plane normal
    /// each time it is drawn.
    pub augment_rotation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-4,
            lr_min: 1e-6,
            weight_decay: 1e-5,
            batch_size: 4,
            clip_norm: 1.0,
            epochs: 100,
            split_seed: 0,
            split_ratio: 0.9,
            shuffle_seed: 0,
            weights: LossWeights::default(),
            tau_d: DEFAULT_TAU_D,
            tau_c: DEFAULT_TAU_C,
            augment_rotation: false,
        }
    }
}

impl TrainConfig {
    /// Ratio that leaves 8 of the 68 desk assemblies for testing.
    pub const DESK_SPLIT_RATIO: f64 = 0.8825;

    /// Recipe of the desk-scale runs: a 60/8 split, a shorter schedule and
    /// a larger initial rate than the defaults.
    pub fn desk() -> Self {
        Self {
            lr0: 1e-3,
            epochs: 40,
            split_ratio: Self::DESK_SPLIT_RATIO,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr0) {
            return fail("need 0 < lr_min <= lr0");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return fail("split_ratio must lie in (0, 1)");
        }
        if !(self.clip_norm > 0.0) || self.weight_decay < 0.0 {
            return fail("clip_norm must be positive and weight_decay non-negative");
        }
        let w = &self.weights;
        if w.trans < 0.0 || w.rot < 0.0 || w.consistency < 0.0 {
            return fail("loss weights must be non-negative");
        }
        Ok(())
    }

    pub const KEYS: &'static [&'static str] = &[
        "lr0",
        "lr_min",
        "weight_decay",
        "batch_size",
        "clip_norm",
        "epochs",
        "split_seed",
        "split_ratio",
        "shuffle_seed",
        "lambda_trans",
        "lambda_rot",
        "lambda_const",
        "tau_d",
        "tau_c",
        "augment_rotation",
    ];

    pub fn apply_kv(&mut self, doc: &KvDoc) -> Result<()> {
        macro_rules! take {
            ($key:expr, $field:expr) => {
                if let Some(v) = doc.get($key)? {
                    $field = v;
                }
            };
        }
        take!("lr0", self.lr0);
        take!("lr_min", self.lr_min);
        take!("weight_decay", self.weight_decay);
        take!("batch_size", self.batch_size);
        take!("clip_norm", self.clip_norm);
        take!("epochs", self.epochs);
        take!("split_seed", self.split_seed);
        take!("split_ratio", self.split_ratio);
        take!("shuffle_seed", self.shuffle_seed);
        take!("lambda_trans", self.weights.trans);
        take!("lambda_rot", self.weights.rot);
        take!("lambda_const", self.weights.consistency);
        take!("tau_d", self.tau_d);
        take!("tau_c", self.tau_c);
        take!("augment_rotation", self.augment_rotation);
        Ok(())
    }

    pub fn to_kv(&self, doc: &mut KvDoc) {
        doc.set("lr0", self.lr0);
        doc.set("lr_min", self.lr_min);
        doc.set("weight_decay", self.weight_decay);
        doc.set("batch_size", self.batch_size);
        doc.set("clip_norm", self.clip_norm);
        doc.set("epochs", self.epochs);
        doc.set("split_seed", self.split_seed);
        doc.set("split_ratio", self.split_ratio);
        doc.set("shuffle_seed", self.shuffle_seed);
        doc.set("lambda_trans", self.weights.trans);
        doc.set("lambda_rot", self.weights.rot);
        doc.set("lambda_const", self.weights.consistency);
        doc.set("tau_d", self.tau_d);
        doc.set("tau_c", self.tau_c);
        doc.set("augment_rotation", self.augment_rotation);
    }
}

/// Key naming the model preset that the other model keys overlay.
pub const MODEL_PRESET_KEY: &str = "model_preset";

/// Model and training configuration from one flat document. Unknown keys are
/// rejected.
pub fn configs_from_kv(doc: &KvDoc) -> Result<(ModelConfig, TrainConfig)> {
    let known: Vec<&str> = ModelConfig::KEYS
        .iter()
        .chain(TrainConfig::KEYS)
        .copied()
        .chain([MODEL_PRESET_KEY])
        .collect();
    doc.check_keys(&known)?;
    let mut mcfg = ModelConfig::preset(doc.raw(MODEL_PRESET_KEY).unwrap_or("default"))?;
    mcfg.apply_kv(doc)?;
    mcfg.validate()?;
    let mut tcfg = TrainConfig::default();
    tcfg.apply_kv(doc)?;
    tcfg.validate()?;
    Ok((mcfg, tcfg))
}

/// Every field of both configurations, readable by [`configs_from_kv`].
pub fn render_configs(mcfg: &ModelConfig, tcfg: &TrainConfig) -> String {
    let mut doc = KvDoc::default();
    mcfg.to_kv(&mut doc);
    tcfg.to_kv(&mut doc);
    doc.render()
}

/// Shuffled split into `⌊ratio·n⌋` training and the remaining test indices,
/// each list sorted.
pub fn split_dataset(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 || !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("cannot split {n} records with ratio {ratio}")));
    }
    let n_train = ((ratio * n as f64).floor() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// One assembly ready for the network and the metrics.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub input: AssemblyInput,
    /// `(M·T) × 6` ground-truth twists, flattened.
    pub target: Vec<f64>,
    pub tracks: Vec<MotionTrack>,
    /// Stored rest clouds, used by the metrics.
    pub clouds: Vec<Vec<Vec3>>,
}

impl Sample {
    pub fn n_parts(&self) -> usize {
        self.tracks.len()
    }

    /// Coupling is estimated from the rest clouds, as at inference time.
    pub fn from_record(rec: &DatasetRecord, cfg: &ModelConfig, tau_d: f64, tau_c: usize) -> Result<Self> {
        if rec.manifest.n_frames != cfg.frames {
            return Err(Error::Config(format!(
                "{}: {} frames, model expects {}",
                rec.manifest.id, rec.manifest.n_frames, cfg.frames
            )));
        }
        let coupling = estimate_coupling(&rec.clouds, tau_d, tau_c);
        let input = AssemblyInput::new(&rec.clouds, coupling, cfg)?;
        let twists: Vec<Vec<Twist>> = rec.tracks.iter().map(|t| t.twists.clone()).collect();
        Ok(Self {
            id: rec.manifest.id.clone(),
            input,
            target: flatten_twists(&twists),
            tracks: rec.tracks.clone(),
            clouds: rec.clouds.clone(),
        })
    }
}

pub fn prepare_samples(records: &[DatasetRecord], cfg: &ModelConfig, tau_d: f64, tau_c: usize) -> Result<Vec<Sample>> {
    records
        .par_iter()
        .map(|r| Sample::from_record(r, cfg, tau_d, tau_c))
        .collect()
}

/// Loss and parameter gradient of one assembly, optionally turned by
/// `angle` about the plane normal.
pub fn sample_loss_grad(model: &Dynamo, s: &Sample, angle: f64, w: &LossWeights) -> Result<(LossParts, Grads<f32>)> {
    let turned;
    let (input, target) = if angle == 0.0 {
        (&s.input, s.target.clone())
    } else {
        turned = s.input.rotated_z(angle);
        (&turned, rotate_twists_z(&s.target, angle))
    };
    let mut g = Graph::new(&model.params);
    let out = crate::model::forward(&mut g, &model.cfg, input)?;
    let sink = Rc::new(Cell::new(LossParts::default()));
    let frames = model.cfg.frames;
    let node = loss_node(target, s.n_parts(), frames, *w, TRAIN_CLAMP, sink.clone());
    let loss = g.custom_loss(out, node)?;
    let grads = g.backward(loss)?;
    Ok((sink.get(), grads))
}

/// Predicted pose tracks of one sample.
pub fn predict_tracks(model: &Dynamo, s: &Sample) -> Result<Vec<MotionTrack>> {
    Ok(model.predict(&s.input)?.iter().map(|tw| MotionTrack::from_twists(tw)).collect())
}

/// Metrics of `predict` over `samples`.
pub fn evaluate_with<F>(samples: &[Sample], predict: F) -> Result<EvalReport>
where
    F: Fn(&Sample) -> Result<Vec<MotionTrack>> + Sync,
{
    let preds: Vec<Vec<MotionTrack>> = samples.par_iter().map(&predict).collect::<Result<_>>()?;
    let items: Vec<EvalItem> = samples
        .iter()
        .zip(&preds)
        .map(|(s, p)| EvalItem {
            id: &s.id,
            pred: p,
            gt: &s.tracks,
            clouds: &s.clouds,
        })
        .collect();
    EvalReport::build(&items)
}

pub fn evaluate(model: &Dynamo, samples: &[Sample]) -> Result<EvalReport> {
    evaluate_with(samples, |s| predict_tracks(model, s))
}

/// Baseline that predicts no motion at all.
pub fn evaluate_zero_motion(samples: &[Sample]) -> Result<EvalReport> {
    evaluate_with(samples, |s| {
        let frames = s.tracks.first().map_or(0, |t| t.transforms.len());
        Ok(vec![MotionTrack::from_twists(&vec![Twist::zero(); frames]); s.n_parts()])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Optimizer steps taken when the epoch ended.
    pub step: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_trans: f64,
    pub loss_rot: f64,
    pub loss_const: f64,
    /// Mean pre-clip gradient norm.
    pub grad_norm: f64,
    pub test_rot_deg: f64,
    pub test_trans: f64,
    pub skipped_steps: usize,
}

pub const HISTORY_HEADER: &str =
    "epoch,step,lr,loss_total,loss_trans,loss_rot,loss_const,grad_norm,test_rot_deg,test_trans,skipped_steps";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            self.epoch,
            self.step,
            self.lr,
            self.loss_total,
            self.loss_trans,
            self.loss_rot,
            self.loss_const,
            self.grad_norm,
            self.test_rot_deg,
            self.test_trans,
            self.skipped_steps
        )
    }
}

/// Resumable progress, stored as `train_state.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epochs_done: usize,
    pub step: usize,
    pub best_epoch: usize,
    pub best_test_rot: f64,
    pub skipped_steps: usize,
    pub history: Vec<EpochLog>,
}

pub struct TrainOutcome {
    /// Best model of this call by test rotation error; the last model when a
    /// resumed run never improved on the stored best.
    pub best: Dynamo,
    pub last: Dynamo,
    pub state: TrainState,
}

/// Callback invoked after every epoch with the current model, optimizer and
/// state; used to write checkpoints.
pub type EpochHook<'a> = dyn FnMut(&Dynamo, &AdamW, &TrainState, bool) -> Result<()> + 'a;

/// Train `model` on `train`, scoring `test` after every epoch. Starts from
/// `resume` when given.
pub fn fit(
    mut model: Dynamo,
    train: &[Sample],
    test: &[Sample],
    cfg: &TrainConfig,
    resume: Option<(AdamW, TrainState)>,
    hook: &mut EpochHook,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("empty training split".into()));
    }
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let adam_cfg = AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..Default::default()
    };
    let (mut opt, mut state) = resume.unwrap_or_else(|| {
        (
            AdamW::new(adam_cfg, &model.params),
            TrainState {
                epochs_done: 0,
                step: 0,
                best_epoch: 0,
                best_test_rot: f64::INFINITY,
                skipped_steps: 0,
                history: Vec::new(),
            },
        )
    });
    let mut best: Option<Dynamo> = None;

    for epoch in state.epochs_done + 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(assembly_seed(cfg.shuffle_seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        let mut norm_sum = 0.0;
        let mut taken = 0usize;
        let mut skipped = 0usize;
        let mut lr = cosine_lr(state.step, total_steps, cfg.lr0, cfg.lr_min);
        for batch in order.chunks(cfg.batch_size) {
            lr = cosine_lr(state.step, total_steps, cfg.lr0, cfg.lr_min);
            let angles: Vec<f64> = batch
                .iter()
                .map(|_| if cfg.augment_rotation { rng.gen_range(0.0..TAU) } else { 0.0 })
                .collect();
            let results: Vec<(LossParts, Grads<f32>)> = batch
                .par_iter()
                .zip(&angles)
                .map(|(&i, &a)| sample_loss_grad(&model, &train[i], a, &cfg.weights))
                .collect::<Result<_>>()?;
            let mut grads = model.params.zeros_like();
            let mut parts = [0.0f64; 4];
            for (lp, g) in &results {
                grads.add_assign(g);
                parts[0] += lp.total;
                parts[1] += lp.trans;
                parts[2] += lp.rot;
                parts[3] += lp.consistency;
            }
            let b = results.len() as f64;
            grads.scale((1.0 / b) as f32);
            state.step += 1;
            match clip_grad_norm(&mut grads, cfg.clip_norm) {
                Ok((norm, _)) => {
                    opt.update(&mut model.params, &grads, lr);
                    norm_sum += norm;
                    taken += 1;
                    for (s, p) in sums.iter_mut().zip(parts) {
                        *s += p / b;
                    }
                }
                Err(Error::NonFiniteGradient) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        let report = if test.is_empty() {
            EvalReport::default()
        } else {
            evaluate(&model, test)?
        };
        let n = taken.max(1) as f64;
        state.skipped_steps += skipped;
        let log = EpochLog {
            epoch,
            step: state.step,
            lr,
            loss_total: sums[0] / n,
            loss_trans: sums[1] / n,
            loss_rot: sums[2] / n,
            loss_const: sums[3] / n,
            grad_norm: norm_sum / n,
            test_rot_deg: report.mean_rot,
            test_trans: report.mean_trans,
            skipped_steps: skipped,
        };
        let improved = log.test_rot_deg < state.best_test_rot;
        if improved {
            state.best_test_rot = log.test_rot_deg;
            state.best_epoch = epoch;
            best = Some(model.clone());
        }
        state.history.push(log);
        state.epochs_done = epoch;
        hook(&model, &opt, &state, improved)?;
    }
    Ok(TrainOutcome {
        best: best.unwrap_or_else(|| model.clone()),
        last: model,
        state,
    })
}

/// File names inside a training output directory.
pub mod files {
    pub const BEST: &str = "best.ckpt";
    pub const LAST: &str = "last.ckpt";
    pub const OPTIMIZER: &str = "optimizer.bin";
    pub const STATE: &str = "train_state.json";
    pub const HISTORY: &str = "history.csv";
    pub const TRAIN_EVAL: &str = "train_eval.csv";
    pub const CONFIG: &str = "config.cfg";
}

pub fn render_history(history: &[EpochLog]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for h in history {
        s.push_str(&h.csv_row());
        s.push('\n');
    }
    s
}

/// Writes checkpoints, optimizer moments, state and history after every
/// epoch.
pub fn directory_hook(out: &Path) -> impl FnMut(&Dynamo, &AdamW, &TrainState, bool) -> Result<()> + '_ {
    move |model, opt, state, improved| {
        if improved {
            model.save(&out.join(files::BEST))?;
        }
        model.save(&out.join(files::LAST))?;
        checkpoint::save(&opt.to_store(&model.params), &out.join(files::OPTIMIZER))?;
        let json = serde_json::to_string_pretty(state).expect("state serializes");
        checkpoint::write_atomic(&out.join(files::STATE), json.as_bytes())?;
        checkpoint::write_atomic(&out.join(files::HISTORY), render_history(&state.history).as_bytes())
    }
}

/// Load what [`directory_hook`] wrote, for resuming.
pub fn load_resume(out: &Path, cfg: &ModelConfig, tcfg: &TrainConfig) -> Result<(Dynamo, AdamW, TrainState)> {
    let path = out.join(files::STATE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let state: TrainState = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    let model = Dynamo::load(cfg.clone(), &out.join(files::LAST))?;
    let moments = checkpoint::load(&out.join(files::OPTIMIZER))?;
    let adam_cfg = AdamWConfig {
        weight_decay: tcfg.weight_decay,
        ..Default::default()
    };
    let opt = AdamW::from_store(adam_cfg, state.step as u64, &model.params, &moments)
        .map_err(|e| Error::format(&out.join(files::OPTIMIZER), e.to_string()))?;
    Ok((model, opt, state))
}

/// Per-assembly errors of `model`, one line per assembly tagged by split.
pub fn render_split_eval(model: &Dynamo, train: &[Sample], test: &[Sample]) -> Result<String> {
    let mut s = String::from("assembly_id,split,rot_err_deg,trans_err\n");
    for (tag, set) in [("train", train), ("test", test)] {
        for sample in set {
            let r = evaluate(model, std::slice::from_ref(sample))?;
            let _ = writeln!(s, "{},{},{:.16e},{:.16e}", sample.id, tag, r.mean_rot, r.mean_trans);
        }
    }
    Ok(s)
}
