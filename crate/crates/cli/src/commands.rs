use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gearmotion_core::coupling::estimate_coupling;
use gearmotion_core::gear::{generate_dataset, load_dataset, read_record, read_tracks, write_tracks, DatasetRecord};
use gearmotion_core::kv::KvDoc;
use gearmotion_core::metrics::{EvalItem, EvalReport};
use gearmotion_core::model::checkpoint::write_atomic;
use gearmotion_core::model::{Dynamo, ModelConfig};
use gearmotion_core::train::trial::{mean_of, run_trial, split_samples, TrialResult};
use gearmotion_core::train::{
    configs_from_kv, directory_hook, files, fit, load_resume, predict_tracks, render_configs, render_split_eval,
    Sample, TrainConfig,
};
use gearmotion_core::{Error, GeneratorConfig, Result};

use crate::manifest::RunManifest;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// A single record directory, or every record below a dataset root.
fn load_records(dir: &Path) -> Result<Vec<DatasetRecord>> {
    if dir.join("manifest.json").is_file() {
        Ok(vec![read_record(dir)?])
    } else {
        load_dataset(dir)
    }
}

fn load_configs(path: &Path) -> Result<(ModelConfig, TrainConfig, String)> {
    let (m, t) = configs_from_kv(&KvDoc::load(path)?)?;
    let text = render_configs(&m, &t);
    Ok((m, t, text))
}

fn config_or_default(path: Option<&Path>) -> Result<(ModelConfig, TrainConfig, String)> {
    match path {
        Some(p) => load_configs(p),
        None => {
            let (m, t) = (ModelConfig::default(), TrainConfig::default());
            let text = render_configs(&m, &t);
            Ok((m, t, text))
        }
    }
}

pub fn gen(config: Option<&Path>, preset: &str, count: Option<usize>, seed: u64, out: &Path) -> Result<()> {
    let mut cfg = GeneratorConfig::preset(preset)?;
    if let Some(path) = config {
        cfg = cfg.apply_kv(&KvDoc::load(path)?)?;
    }
    if let Some(n) = count {
        cfg = cfg.with_count(n);
    }
    let summary = generate_dataset(&cfg, seed, out)?;
    let hist: Vec<String> = summary.histogram.iter().map(|(p, n)| format!("{p}:{n}")).collect();
    println!(
        "{} assemblies, {} parts, {} racks, parts histogram {}",
        summary.n_assemblies,
        summary.total_parts,
        summary.n_racks,
        hist.join(" ")
    );
    RunManifest::start("gen", &cfg.to_kv().render()).seed("seed", seed).finish(out)
}

pub fn couple(input: &Path, tau_d: f64, tau_c: usize) -> Result<()> {
    if !(tau_d > 0.0) || tau_c == 0 {
        return Err(Error::Config("tau_d and tau_c must be positive".into()));
    }
    let rec = read_record(input)?;
    print!("{}", estimate_coupling(&rec.clouds, tau_d, tau_c).render());
    Ok(())
}

pub fn train(data: &Path, config: Option<&Path>, out: &Path, resume: bool) -> Result<()> {
    let stored = out.join(files::CONFIG);
    let config: PathBuf = match (config, resume) {
        (Some(p), _) => p.to_path_buf(),
        (None, true) => stored.clone(),
        (None, false) => return Err(Error::Config("--config is required unless resuming".into())),
    };
    let (mcfg, tcfg, text) = load_configs(&config)?;
    if resume {
        // Only the epoch count may change between the runs.
        let (pm, pt, _) = load_configs(&stored)?;
        let pt = TrainConfig {
            epochs: tcfg.epochs,
            ..pt
        };
        if (pm, pt) != (mcfg.clone(), tcfg.clone()) {
            return Err(Error::Config(format!(
                "{} differs from the resumed configuration in more than `epochs`",
                stored.display()
            )));
        }
    }
    let records = load_dataset(data)?;
    let (train_set, test_set) = split_samples(&records, &mcfg, &tcfg)?;
    create_dir(out)?;
    let manifest = RunManifest::start("train", &text)
        .seed("split_seed", tcfg.split_seed)
        .seed("shuffle_seed", tcfg.shuffle_seed)
        .seed("init_seed", mcfg.init_seed);
    write_atomic(&stored, text.as_bytes())?;

    let (model, resume_state) = if resume {
        let (model, opt, state) = load_resume(out, &mcfg, &tcfg)?;
        eprintln!("resuming after epoch {} (step {})", state.epochs_done, state.step);
        (model, Some((opt, state)))
    } else {
        (Dynamo::new(mcfg.clone())?, None)
    };
    let mut save = directory_hook(out);
    let mut hook = |m: &Dynamo, o: &_, s: &_, improved: bool| {
        save(m, o, s, improved)?;
        let state: &gearmotion_core::train::TrainState = s;
        if let Some(h) = state.history.last() {
            eprintln!(
                "epoch {:>4}  loss {:.5}  lr {:.3e}  test rot {:.3} deg  trans {:.5}{}",
                h.epoch,
                h.loss_total,
                h.lr,
                h.test_rot_deg,
                h.test_trans,
                if improved { "  *" } else { "" }
            );
        }
        Ok(())
    };
    let outcome = fit(model, &train_set, &test_set, &tcfg, resume_state, &mut hook)?;
    let best = Dynamo::load(mcfg, &out.join(files::BEST))?;
    write_atomic(&out.join(files::TRAIN_EVAL), render_split_eval(&best, &train_set, &test_set)?.as_bytes())?;
    println!(
        "best epoch {} test rot {:.4} deg; {} skipped steps",
        outcome.state.best_epoch, outcome.state.best_test_rot, outcome.state.skipped_steps
    );
    manifest.finish(out)
}

pub fn predict(checkpoint: &Path, config: Option<&Path>, input: &Path, out: &Path) -> Result<()> {
    let config = match config {
        Some(p) => p.to_path_buf(),
        None => checkpoint.parent().unwrap_or(Path::new(".")).join(files::CONFIG),
    };
    let (mcfg, tcfg, text) = load_configs(&config)?;
    let model = Dynamo::load(mcfg.clone(), checkpoint)?;
    let records = load_records(input)?;
    create_dir(out)?;
    for rec in &records {
        let sample = Sample::from_record(rec, &mcfg, tcfg.tau_d, tcfg.tau_c)?;
        write_tracks(&out.join(&sample.id), &predict_tracks(&model, &sample)?)?;
    }
    println!("predicted {} assemblies", records.len());
    RunManifest::start("predict", &text).seed("init_seed", mcfg.init_seed).finish(out)
}

pub fn eval(pred: &Path, gt: &Path, out: &Path) -> Result<()> {
    let records = load_records(gt)?;
    let single = records.len() == 1 && pred.join("motion_0.csv").is_file();
    let preds = records
        .iter()
        .map(|r| {
            let dir = if single { pred.to_path_buf() } else { pred.join(&r.manifest.id) };
            read_tracks(&dir, r.n_parts())
        })
        .collect::<Result<Vec<_>>>()?;
    let items: Vec<EvalItem> = records
        .iter()
        .zip(&preds)
        .map(|(r, p)| EvalItem {
            id: &r.manifest.id,
            pred: p,
            gt: &r.tracks,
            clouds: &r.clouds,
        })
        .collect();
    let report = EvalReport::build(&items)?;
    create_dir(out)?;
    write_atomic(&out.join("report.csv"), report.to_csv().as_bytes())?;
    println!("assemblies        {}", records.len());
    println!("mean rot error    {:.6} deg (sd {:.6})", report.mean_rot, report.sd_rot);
    println!("mean trans error  {:.6} (sd {:.6})", report.mean_trans, report.sd_trans);
    RunManifest::start("eval", "").finish(out)
}

pub const ABLATION_HEADER: &str =
    "use_gnn,points_per_part,seeds,mean_test_rot_deg,mean_test_trans,mean_test_rot_multi_deg,test_rot_deg_per_seed";

fn ablation_row(trials: &[TrialResult]) -> String {
    let t0 = &trials[0];
    let seeds: Vec<String> = trials.iter().map(|t| t.seed.to_string()).collect();
    let per: Vec<String> = trials.iter().map(|t| format!("{:.16e}", t.test_rot_deg)).collect();
    format!(
        "{},{},{},{:.16e},{:.16e},{:.16e},{}",
        t0.use_gnn,
        t0.points_per_part,
        seeds.join(";"),
        mean_of(trials, |t| t.test_rot_deg),
        mean_of(trials, |t| t.test_trans),
        mean_of(trials, |t| t.test_rot_multi_deg),
        per.join(";")
    )
}

pub fn ablate(data: &Path, config: Option<&Path>, out: &Path, seeds: &[u64], points: &[usize]) -> Result<()> {
    if seeds.is_empty() || points.is_empty() {
        return Err(Error::Config("need at least one seed and one point density".into()));
    }
    let (mcfg, tcfg, text) = config_or_default(config)?;
    let records = load_dataset(data)?;
    create_dir(out)?;
    let mut table = String::from(ABLATION_HEADER);
    table.push('\n');
    println!("{:>8} {:>7} {:>14} {:>12} {:>16}", "use_gnn", "points", "rot_err_deg", "trans_err", "rot_err_3+_deg");
    for use_gnn in [true, false] {
        for &p in points {
            let cfg = ModelConfig {
                use_gnn,
                points_per_part: p,
                ..mcfg.clone()
            };
            let trials = seeds
                .iter()
                .map(|&s| run_trial(&records, &cfg, &tcfg, s).map(|r| r.0))
                .collect::<Result<Vec<_>>>()?;
            let _ = writeln!(table, "{}", ablation_row(&trials));
            println!(
                "{:>8} {:>7} {:>14.4} {:>12.5} {:>16.4}",
                use_gnn,
                p,
                mean_of(&trials, |t| t.test_rot_deg),
                mean_of(&trials, |t| t.test_trans),
                mean_of(&trials, |t| t.test_rot_multi_deg)
            );
        }
    }
    write_atomic(&out.join("ablation.csv"), table.as_bytes())?;
    let mut manifest = RunManifest::start("ablate", &text);
    for (i, &s) in seeds.iter().enumerate() {
        manifest = manifest.seed(&format!("seed{i}"), s);
    }
    manifest.finish(out)
}
