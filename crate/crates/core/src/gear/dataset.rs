//! On-disk dataset records.
//!
//! ```text
//! <out>/dataset.json          summary
//! <out>/generator.cfg         generator config used
//! <out>/asm_00000/manifest.json
//! <out>/asm_00000/part_0.xyz  one "x y z" line per point
//! <out>/asm_00000/motion_0.csv
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::assembly_seed;
use super::motion::{ground_truth_motion, mobility_units};
use super::{
    build_assembly_with_parts, Assembly, Cloud, GeneratorConfig, MobilityUnit, MotionTrack,
    PartKind, PartSpec,
};
use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::se3::{RigidTransform, Twist, Vec3};

pub const MOTION_HEADER: &str =
    "frame,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz,wx,wy,wz,vx,vy,vz";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub id: String,
    pub seed: u64,
    pub n_frames: usize,
    pub driver_step_deg: f64,
    pub driver_index: usize,
    pub scale: f64,
    pub parts: Vec<PartSpec>,
    pub coupling_gt: CouplingMatrix,
    pub mobility: Vec<MobilityUnit>,
}

/// A record read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub manifest: Manifest,
    pub clouds: Vec<Cloud>,
    pub tracks: Vec<MotionTrack>,
}

impl DatasetRecord {
    pub fn n_parts(&self) -> usize {
        self.manifest.parts.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub seed: u64,
    pub n_assemblies: usize,
    pub total_parts: usize,
    pub n_racks: usize,
    /// Assemblies per part count.
    pub histogram: BTreeMap<usize, usize>,
    pub n_frames: usize,
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_cloud(path: &Path, cloud: &[Vec3]) -> Result<()> {
    let mut s = String::with_capacity(cloud.len() * 72);
    for p in cloud {
        let _ = writeln!(s, "{} {} {}", fmt_f(p.x), fmt_f(p.y), fmt_f(p.z));
    }
    write_text(path, &s)
}

pub fn read_cloud(path: &Path) -> Result<Cloud> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let xs: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
            if xs.len() != 3 {
                return Err(Error::format(path, format!("line {}: expected 3 values", i + 1)));
            }
            Ok(Vec3::new(xs[0], xs[1], xs[2]))
        })
        .collect()
}

pub fn write_motion(path: &Path, track: &MotionTrack) -> Result<()> {
    let mut s = String::from(MOTION_HEADER);
    s.push('\n');
    for (t, (tf, xi)) in track.transforms.iter().zip(&track.twists).enumerate() {
        let _ = write!(s, "{}", t + 1);
        for x in tf.to_row_major().iter().chain(xi.to_array().iter()) {
            let _ = write!(s, ",{}", fmt_f(*x));
        }
        s.push('\n');
    }
    write_text(path, &s)
}

pub fn read_motion(path: &Path) -> Result<MotionTrack> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MOTION_HEADER) {
        return Err(Error::format(path, "missing or wrong header"));
    }
    let mut transforms = Vec::new();
    let mut twists = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 19 {
            return Err(Error::format(path, format!("row {}: expected 19 columns", i + 1)));
        }
        if cols[0].trim().parse::<usize>().ok() != Some(i + 1) {
            return Err(Error::format(path, format!("row {}: bad frame index", i + 1)));
        }
        let xs: Vec<f64> = cols[1..]
            .iter()
            .map(|c| c.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, format!("row {}: {e}", i + 1)))?;
        transforms.push(RigidTransform::from_row_major(&xs[..12]));
        twists.push(Twist::from_slice(&xs[12..]));
    }
    Ok(MotionTrack { transforms, twists })
}

fn manifest_for(asm: &Assembly, n_frames: usize, driver_step_deg: f64) -> Manifest {
    Manifest {
        id: asm.id.clone(),
        seed: asm.seed,
        n_frames,
        driver_step_deg,
        driver_index: asm.driver_index,
        scale: asm.scale,
        parts: asm.parts.clone(),
        coupling_gt: asm.coupling_gt.clone(),
        mobility: mobility_units(asm),
    }
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::format(path, e.to_string()))?;
    write_text(path, &(json + "\n"))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(path, e.to_string()))
}

/// Write one assembly directory.
pub fn write_record(
    dir: &Path,
    asm: &Assembly,
    tracks: &[MotionTrack],
    n_frames: usize,
    driver_step_deg: f64,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_manifest(&dir.join("manifest.json"), &manifest_for(asm, n_frames, driver_step_deg))?;
    for (k, cloud) in asm.clouds.iter().enumerate() {
        write_cloud(&dir.join(format!("part_{k}.xyz")), cloud)?;
    }
    write_tracks(dir, tracks)
}

pub fn write_tracks(dir: &Path, tracks: &[MotionTrack]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, track) in tracks.iter().enumerate() {
        write_motion(&dir.join(format!("motion_{k}.csv")), track)?;
    }
    Ok(())
}

pub fn read_tracks(dir: &Path, n_parts: usize) -> Result<Vec<MotionTrack>> {
    (0..n_parts)
        .map(|k| read_motion(&dir.join(format!("motion_{k}.csv"))))
        .collect()
}

pub fn read_record(dir: &Path) -> Result<DatasetRecord> {
    let manifest = read_manifest(&dir.join("manifest.json"))?;
    let n = manifest.parts.len();
    let clouds = (0..n)
        .map(|k| read_cloud(&dir.join(format!("part_{k}.xyz"))))
        .collect::<Result<Vec<_>>>()?;
    let tracks = read_tracks(dir, n)?;
    Ok(DatasetRecord {
        manifest,
        clouds,
        tracks,
    })
}

impl DatasetRecord {
    /// Rebuild the in-memory assembly this record was written from.
    pub fn to_assembly(&self) -> Assembly {
        Assembly {
            id: self.manifest.id.clone(),
            seed: self.manifest.seed,
            parts: self.manifest.parts.clone(),
            clouds: self.clouds.clone(),
            coupling_gt: self.manifest.coupling_gt.clone(),
            driver_index: self.manifest.driver_index,
            scale: self.manifest.scale,
        }
    }
}

/// Record directories of a dataset, sorted by name.
pub fn record_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("asm_"))
        })
        .collect();
    dirs.sort();
    Ok(dirs)
}

pub fn load_dataset(root: &Path) -> Result<Vec<DatasetRecord>> {
    let dirs = record_dirs(root)?;
    if dirs.is_empty() {
        return Err(Error::format(root, "no asm_* records found"));
    }
    dirs.par_iter().map(|d| read_record(d)).collect()
}

/// Build every assembly of `cfg` and its ground-truth motion in memory.
pub fn build_dataset(cfg: &GeneratorConfig, seed: u64) -> Result<Vec<(Assembly, Vec<MotionTrack>)>> {
    cfg.validate()?;
    let schedule = cfg.schedule(seed);
    schedule
        .par_iter()
        .enumerate()
        .map(|(i, &n_parts)| {
            let mut asm = build_assembly_with_parts(cfg, n_parts, assembly_seed(seed, i as u64))?;
            asm.id = format!("asm_{i:05}");
            let tracks = ground_truth_motion(&asm, cfg.n_frames, cfg.driver_step_deg)?;
            Ok((asm, tracks))
        })
        .collect()
}

pub fn summarize(cfg: &GeneratorConfig, seed: u64, assemblies: &[Assembly]) -> DatasetSummary {
    let mut histogram = BTreeMap::new();
    for a in assemblies {
        *histogram.entry(a.n_parts()).or_insert(0) += 1;
    }
    DatasetSummary {
        seed,
        n_assemblies: assemblies.len(),
        total_parts: assemblies.iter().map(Assembly::n_parts).sum(),
        n_racks: assemblies
            .iter()
            .flat_map(|a| &a.parts)
            .filter(|p| p.kind == PartKind::Rack)
            .count(),
        histogram,
        n_frames: cfg.n_frames,
    }
}

/// Generate and write a dataset; deterministic in `(cfg, seed)`.
pub fn generate_dataset(cfg: &GeneratorConfig, seed: u64, out_dir: &Path) -> Result<DatasetSummary> {
    let built = build_dataset(cfg, seed)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    built.par_iter().try_for_each(|(asm, tracks)| {
        write_record(&out_dir.join(&asm.id), asm, tracks, cfg.n_frames, cfg.driver_step_deg)
    })?;
    let assemblies: Vec<Assembly> = built.into_iter().map(|b| b.0).collect();
    let summary = summarize(cfg, seed, &assemblies);
    let path = out_dir.join("dataset.json");
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::format(&path, e.to_string()))?;
    write_text(&path, &(json + "\n"))?;
    write_text(&out_dir.join("generator.cfg"), &cfg.to_kv().render())?;
    Ok(summary)
}
