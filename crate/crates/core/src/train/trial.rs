//! One seeded training run scored on its test split, and the preset grid
//! compared by ablations.

use serde::{Deserialize, Serialize};

use super::{evaluate, fit, prepare_samples, split_dataset, Sample, TrainConfig, TrainState};
use crate::error::Result;
use crate::gear::DatasetRecord;
use crate::model::{Dynamo, ModelConfig};

/// Assemblies with at least this many parts form the multi-part subset.
pub const MULTI_PART_MIN: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub use_gnn: bool,
    pub points_per_part: usize,
    pub test_rot_deg: f64,
    pub test_trans: f64,
    /// Rotation error on test assemblies with [`MULTI_PART_MIN`] or more parts;
    /// NaN when there are none.
    pub test_rot_multi_deg: f64,
    pub best_epoch: usize,
    pub loss_first: f64,
    pub loss_last: f64,
}

/// Samples of the training and test split of `records`.
pub fn split_samples(records: &[DatasetRecord], mcfg: &ModelConfig, tcfg: &TrainConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let (tr, te) = split_dataset(records.len(), tcfg.split_ratio, tcfg.split_seed)?;
    let pick = |idx: &[usize]| -> Vec<DatasetRecord> { idx.iter().map(|&i| records[i].clone()).collect() };
    Ok((
        prepare_samples(&pick(&tr), mcfg, tcfg.tau_d, tcfg.tau_c)?,
        prepare_samples(&pick(&te), mcfg, tcfg.tau_d, tcfg.tau_c)?,
    ))
}

/// Train a fresh model whose split, shuffles and weights are all seeded by
/// `seed`; the best checkpoint is scored.
pub fn run_trial(
    records: &[DatasetRecord],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    seed: u64,
) -> Result<(TrialResult, Dynamo, TrainState)> {
    let mcfg = ModelConfig {
        init_seed: seed,
        ..mcfg.clone()
    };
    let tcfg = TrainConfig {
        shuffle_seed: seed,
        split_seed: seed,
        ..tcfg.clone()
    };
    let (train, test) = split_samples(records, &mcfg, &tcfg)?;
    let out = fit(Dynamo::new(mcfg.clone())?, &train, &test, &tcfg, None, &mut |_, _, _, _| Ok(()))?;
    let report = evaluate(&out.best, &test)?;
    let multi: Vec<Sample> = test.iter().filter(|s| s.n_parts() >= MULTI_PART_MIN).cloned().collect();
    let multi_rot = if multi.is_empty() {
        f64::NAN
    } else {
        evaluate(&out.best, &multi)?.mean_rot
    };
    let h = &out.state.history;
    let result = TrialResult {
        seed,
        use_gnn: mcfg.use_gnn,
        points_per_part: mcfg.points_per_part,
        test_rot_deg: report.mean_rot,
        test_trans: report.mean_trans,
        test_rot_multi_deg: multi_rot,
        best_epoch: out.state.best_epoch,
        loss_first: h.first().map_or(f64::NAN, |l| l.loss_total),
        loss_last: h.last().map_or(f64::NAN, |l| l.loss_total),
    };
    Ok((result, out.best, out.state))
}

/// Mean of a field over trials.
pub fn mean_of(trials: &[TrialResult], f: impl Fn(&TrialResult) -> f64) -> f64 {
    trials.iter().map(f).sum::<f64>() / trials.len() as f64
}
