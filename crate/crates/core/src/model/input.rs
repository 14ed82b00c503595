//! Sampling and grouping precomputed once per part.
//!
//! Only constants feed the network: grouped relative coordinates, the index
//! map between the two grouped stages and the absolute coordinates of the
//! last centers.

use super::config::ModelConfig;
use crate::autodiff::{ball_query, farthest_point_sample};
use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::se3::Vec3;

/// Encoder inputs of one part.
#[derive(Debug, Clone, PartialEq)]
pub struct PartGrouping {
    /// `s1·k1 × 3`, neighbors relative to their center divided by the radius.
    pub rel1: Vec<f64>,
    /// `s2·k2` indices into the first-stage centers.
    pub idx2: Vec<usize>,
    /// `s2·k2 × 3`, first-stage centers relative to second-stage centers.
    pub rel2: Vec<f64>,
    /// `s2 × 3`, second-stage centers.
    pub abs2: Vec<f64>,
}

/// Explicit sampling choices for one part, used to build a [`PartGrouping`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sampling {
    pub centers1: Vec<usize>,
    /// `s1 × k1` point indices.
    pub groups1: Vec<usize>,
    /// Indices into `centers1`.
    pub centers2: Vec<usize>,
    /// `s2 × k2` indices into `centers1`.
    pub groups2: Vec<usize>,
}

impl Sampling {
    /// Farthest point sampling from index 0 followed by ball queries.
    pub fn compute(cloud: &[Vec3], cfg: &ModelConfig) -> Result<Self> {
        let [a, b] = &cfg.sa;
        let centers1 = farthest_point_sample(cloud, a.samples)?;
        let c1: Vec<Vec3> = centers1.iter().map(|&i| cloud[i]).collect();
        let groups1 = ball_query(cloud, &c1, a.radius, a.max_neighbors)?;
        let centers2 = farthest_point_sample(&c1, b.samples)?;
        let c2: Vec<Vec3> = centers2.iter().map(|&i| c1[i]).collect();
        let groups2 = ball_query(&c1, &c2, b.radius, b.max_neighbors)?;
        Ok(Self {
            centers1,
            groups1,
            centers2,
            groups2,
        })
    }
}

fn push(out: &mut Vec<f64>, v: Vec3) {
    out.extend_from_slice(&[v.x, v.y, v.z]);
}

impl PartGrouping {
    pub fn new(cloud: &[Vec3], cfg: &ModelConfig) -> Result<Self> {
        Ok(Self::from_sampling(cloud, &Sampling::compute(cloud, cfg)?, cfg))
    }

    pub fn from_sampling(cloud: &[Vec3], s: &Sampling, cfg: &ModelConfig) -> Self {
        let [a, b] = &cfg.sa;
        let c1: Vec<Vec3> = s.centers1.iter().map(|&i| cloud[i]).collect();
        let mut rel1 = Vec::with_capacity(s.groups1.len() * 3);
        for (g, &i) in s.groups1.iter().enumerate() {
            push(&mut rel1, (cloud[i] - c1[g / a.max_neighbors]) / a.radius);
        }
        let mut rel2 = Vec::with_capacity(s.groups2.len() * 3);
        for (g, &i) in s.groups2.iter().enumerate() {
            let center = c1[s.centers2[g / b.max_neighbors]];
            push(&mut rel2, (c1[i] - center) / b.radius);
        }
        let mut abs2 = Vec::with_capacity(s.centers2.len() * 3);
        for &i in &s.centers2 {
            push(&mut abs2, c1[i]);
        }
        Self {
            rel1,
            idx2: s.groups2.clone(),
            rel2,
            abs2,
        }
    }
}

/// Everything the network reads for one assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyInput {
    pub parts: Vec<PartGrouping>,
    pub coupling: CouplingMatrix,
}

impl AssemblyInput {
    /// Subsample each stored cloud to `points_per_part` and group it.
    pub fn new(clouds: &[Vec<Vec3>], coupling: CouplingMatrix, cfg: &ModelConfig) -> Result<Self> {
        if coupling.len() != clouds.len() {
            return Err(Error::ShapeMismatch {
                op: "assembly_input",
                left: vec![clouds.len()],
                right: vec![coupling.len(), coupling.len()],
            });
        }
        let parts = clouds
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let sub = subsample(c, cfg.points_per_part)?;
                PartGrouping::new(&sub, cfg).map_err(|e| e.with_part(k))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { parts, coupling })
    }

    pub fn n_parts(&self) -> usize {
        self.parts.len()
    }
}

/// Deterministic subsample by farthest point sampling from index 0.
pub fn subsample(cloud: &[Vec3], n: usize) -> Result<Vec<Vec3>> {
    if cloud.len() == n {
        return Ok(cloud.to_vec());
    }
    Ok(farthest_point_sample(cloud, n)?.into_iter().map(|i| cloud[i]).collect())
}

fn rotate_rows(xs: &[f64], c: f64, s: f64) -> Vec<f64> {
    xs.chunks_exact(3)
        .flat_map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]])
        .collect()
}

impl PartGrouping {
    /// The grouping of the same cloud turned by `angle` about the z axis.
    /// Sampling and grouping depend only on distances, so only coordinates
    /// change.
    pub fn rotated_z(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rel1: rotate_rows(&self.rel1, c, s),
            idx2: self.idx2.clone(),
            rel2: rotate_rows(&self.rel2, c, s),
            abs2: rotate_rows(&self.abs2, c, s),
        }
    }
}

impl AssemblyInput {
    pub fn rotated_z(&self, angle: f64) -> Self {
        Self {
            parts: self.parts.iter().map(|p| p.rotated_z(angle)).collect(),
            coupling: self.coupling.clone(),
        }
    }
}

/// Rotate flattened `[ω, v]` rows by `angle` about the z axis.
pub fn rotate_twists_z(flat: &[f64], angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    rotate_rows(flat, c, s)
}
