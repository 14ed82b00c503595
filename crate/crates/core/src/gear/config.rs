use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kv::KvDoc;

/// How many parts each assembly gets.
#[derive(Debug, Clone, PartialEq)]
pub enum PartCountRule {
    /// Exact `(parts, assemblies)` counts, shuffled over the assembly indices.
    Exact(Vec<(usize, usize)>),
    /// Independent draws per assembly with the given relative weights.
    Weighted(Vec<(usize, f64)>),
}

/// Which gear drives the assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriverRule {
    /// The gear with the fewest teeth; tooth counts are drawn so it is unique.
    Smallest,
    /// A uniformly chosen gear.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_assemblies: usize,
    pub part_counts: PartCountRule,
    pub tooth_min: u32,
    pub tooth_max: u32,
    /// Face width in modules.
    pub face_width: f64,
    /// Probability that an assembly contains a rack.
    pub rack_fraction: f64,
    /// Points stored per part.
    pub n_points: usize,
    pub n_frames: usize,
    pub driver_step_deg: f64,
    pub driver_rule: DriverRule,
    /// Normal flank gap of meshing teeth, in normalized units.
    pub mesh_gap: f64,
    /// Minimum distance between parts that do not mesh, normalized units.
    pub min_separation: f64,
    pub max_attempts: usize,
}

/// Counts of the published dataset, by number of parts.
pub const PAPER_PART_COUNTS: [(usize, usize); 6] =
    [(2, 187), (3, 214), (4, 127), (5, 98), (6, 38), (7, 29)];

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl GeneratorConfig {
    /// Desk-scale training set: 68 assemblies of 2 or 3 parts, 12 frames.
    pub fn desk() -> Self {
        Self {
            n_assemblies: 68,
            part_counts: PartCountRule::Exact(vec![(2, 34), (3, 34)]),
            tooth_min: 15,
            tooth_max: 30,
            face_width: 4.0,
            rack_fraction: 0.25,
            n_points: 1024,
            n_frames: 12,
            driver_step_deg: 10.0,
            driver_rule: DriverRule::Smallest,
            mesh_gap: 0.01,
            min_separation: 0.06,
            max_attempts: 100,
        }
    }

    /// Full-size part-count histogram with 36 frames per assembly.
    pub fn paper() -> Self {
        Self {
            n_assemblies: PAPER_PART_COUNTS.iter().map(|c| c.1).sum(),
            part_counts: PartCountRule::Exact(PAPER_PART_COUNTS.to_vec()),
            n_frames: 36,
            ..Self::desk()
        }
    }

    /// 100 assemblies of 2 or 3 parts over a full driver turn, used for audits.
    pub fn suite() -> Self {
        Self {
            n_assemblies: 100,
            part_counts: PartCountRule::Exact(vec![(2, 50), (3, 50)]),
            n_frames: 36,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            "suite" => Ok(Self::suite()),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }

    /// Same configuration with a different number of assemblies; exact
    /// histograms are rescaled by largest remainder.
    pub fn with_count(mut self, n: usize) -> Self {
        if let PartCountRule::Exact(counts) = &self.part_counts {
            let total: usize = counts.iter().map(|c| c.1).sum();
            if total != n && total > 0 {
                let mut scaled: Vec<(usize, usize, f64)> = counts
                    .iter()
                    .map(|&(p, c)| {
                        let exact = c as f64 * n as f64 / total as f64;
                        (p, exact.floor() as usize, exact - exact.floor())
                    })
                    .collect();
                let mut missing = n - scaled.iter().map(|s| s.1).sum::<usize>();
                let mut order: Vec<usize> = (0..scaled.len()).collect();
                order.sort_by(|&a, &b| scaled[b].2.total_cmp(&scaled[a].2).then(a.cmp(&b)));
                for i in order {
                    if missing == 0 {
                        break;
                    }
                    scaled[i].1 += 1;
                    missing -= 1;
                }
                self.part_counts =
                    PartCountRule::Exact(scaled.into_iter().map(|(p, c, _)| (p, c)).collect());
            }
        }
        self.n_assemblies = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_assemblies == 0 {
            return bad("n_assemblies must be positive");
        }
        let parts: Vec<usize> = match &self.part_counts {
            PartCountRule::Exact(c) => {
                if c.iter().map(|x| x.1).sum::<usize>() != self.n_assemblies {
                    return bad("part_counts must sum to n_assemblies");
                }
                c.iter().map(|x| x.0).collect()
            }
            PartCountRule::Weighted(w) => {
                if w.iter().any(|x| !(x.1 >= 0.0)) || w.iter().map(|x| x.1).sum::<f64>() <= 0.0 {
                    return bad("part_weights must be non-negative with a positive sum");
                }
                w.iter().map(|x| x.0).collect()
            }
        };
        if parts.is_empty() || parts.iter().any(|&p| !(2..=7).contains(&p)) {
            return bad("parts per assembly must lie in 2..=7");
        }
        if self.tooth_min < 8 || self.tooth_max > 60 || self.tooth_min >= self.tooth_max {
            return bad("tooth range must satisfy 8 <= tooth_min < tooth_max <= 60");
        }
        if !(128..=1024).contains(&self.n_points) {
            return bad("n_points must lie in 128..=1024");
        }
        if self.n_frames == 0 {
            return bad("n_frames must be positive");
        }
        if !(self.driver_step_deg > 0.0 && self.driver_step_deg < 180.0) {
            return bad("driver_step_deg must lie in (0, 180)");
        }
        if !(0.0..=1.0).contains(&self.rack_fraction) {
            return bad("rack_fraction must lie in [0, 1]");
        }
        if !(self.face_width > 0.0 && self.mesh_gap > 0.0 && self.min_separation > 0.0) {
            return bad("face_width, mesh_gap and min_separation must be positive");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        Ok(())
    }

    /// Part count of every assembly, in index order.
    pub fn schedule(&self, seed: u64) -> Vec<usize> {
        match &self.part_counts {
            PartCountRule::Exact(counts) => {
                let mut out: Vec<usize> = counts
                    .iter()
                    .flat_map(|&(p, c)| std::iter::repeat(p).take(c))
                    .collect();
                let mut rng = ChaCha8Rng::seed_from_u64(assembly_seed(seed, u64::MAX));
                out.shuffle(&mut rng);
                out
            }
            PartCountRule::Weighted(weights) => {
                let total: f64 = weights.iter().map(|w| w.1).sum();
                (0..self.n_assemblies)
                    .map(|i| {
                        let mut rng = ChaCha8Rng::seed_from_u64(assembly_seed(seed, i as u64) ^ 0x5a5a);
                        let mut pick = rng.gen::<f64>() * total;
                        for &(p, w) in weights {
                            if pick < w {
                                return p;
                            }
                            pick -= w;
                        }
                        weights.last().map(|w| w.0).unwrap_or(2)
                    })
                    .collect()
            }
        }
    }

    pub const KEYS: &'static [&'static str] = &[
        "n_assemblies",
        "part_counts",
        "part_weights",
        "tooth_min",
        "tooth_max",
        "face_width",
        "rack_fraction",
        "n_points",
        "n_frames",
        "driver_step_deg",
        "driver_rule",
        "mesh_gap",
        "min_separation",
        "max_attempts",
    ];

    /// Overlay the keys present in `doc` onto `self`.
    pub fn apply_kv(mut self, doc: &KvDoc) -> Result<Self> {
        doc.check_keys(Self::KEYS)?;
        let pairs = |key: &str| -> Result<Option<Vec<(usize, String)>>> {
            let Some(items) = doc.get_list::<String>(key)? else {
                return Ok(None);
            };
            items
                .iter()
                .map(|it| {
                    let (p, c) = it
                        .split_once(':')
                        .ok_or_else(|| Error::Config(format!("`{key}`: expected parts:value, got `{it}`")))?;
                    let p = p
                        .trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("`{key}`: bad part count `{p}`")))?;
                    Ok((p, c.trim().to_string()))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some)
        };
        let counts_given = doc.raw("part_counts").is_some();
        if counts_given && doc.raw("part_weights").is_some() {
            return Err(Error::Config("give part_counts or part_weights, not both".into()));
        }
        if let Some(p) = pairs("part_counts")? {
            let counts = p
                .into_iter()
                .map(|(k, v)| {
                    v.parse()
                        .map(|c| (k, c))
                        .map_err(|_| Error::Config(format!("`part_counts`: bad count `{v}`")))
                })
                .collect::<Result<Vec<(usize, usize)>>>()?;
            self.n_assemblies = counts.iter().map(|c| c.1).sum();
            self.part_counts = PartCountRule::Exact(counts);
        }
        if let Some(p) = pairs("part_weights")? {
            let weights = p
                .into_iter()
                .map(|(k, v)| {
                    v.parse()
                        .map(|w| (k, w))
                        .map_err(|_| Error::Config(format!("`part_weights`: bad weight `{v}`")))
                })
                .collect::<Result<Vec<(usize, f64)>>>()?;
            self.part_counts = PartCountRule::Weighted(weights);
        }
        if let Some(n) = doc.get::<usize>("n_assemblies")? {
            self = if counts_given && n != self.n_assemblies {
                return Err(Error::Config("n_assemblies disagrees with part_counts".into()));
            } else {
                self.with_count(n)
            };
        }
        macro_rules! field {
            ($name:ident) => {
                if let Some(v) = doc.get(stringify!($name))? {
                    self.$name = v;
                }
            };
        }
        field!(tooth_min);
        field!(tooth_max);
        field!(face_width);
        field!(rack_fraction);
        field!(n_points);
        field!(n_frames);
        field!(driver_step_deg);
        field!(mesh_gap);
        field!(min_separation);
        field!(max_attempts);
        if let Some(rule) = doc.raw("driver_rule") {
            self.driver_rule = match rule {
                "smallest" => DriverRule::Smallest,
                "random" => DriverRule::Random,
                other => return Err(Error::Config(format!("unknown driver_rule `{other}`"))),
            };
        }
        self.validate()?;
        Ok(self)
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::default();
        doc.set("n_assemblies", self.n_assemblies);
        match &self.part_counts {
            PartCountRule::Exact(c) => {
                let items: Vec<String> = c.iter().map(|(p, n)| format!("{p}:{n}")).collect();
                doc.set_list("part_counts", &items);
            }
            PartCountRule::Weighted(w) => {
                let items: Vec<String> = w.iter().map(|(p, x)| format!("{p}:{x}")).collect();
                doc.set_list("part_weights", &items);
            }
        }
        doc.set("tooth_min", self.tooth_min);
        doc.set("tooth_max", self.tooth_max);
        doc.set("face_width", self.face_width);
        doc.set("rack_fraction", self.rack_fraction);
        doc.set("n_points", self.n_points);
        doc.set("n_frames", self.n_frames);
        doc.set("driver_step_deg", self.driver_step_deg);
        doc.set(
            "driver_rule",
            match self.driver_rule {
                DriverRule::Smallest => "smallest",
                DriverRule::Random => "random",
            },
        );
        doc.set("mesh_gap", self.mesh_gap);
        doc.set("min_separation", self.min_separation);
        doc.set("max_attempts", self.max_attempts);
        doc
    }
}

/// Seed of assembly `index` under a global seed (SplitMix64 finalizer).
pub fn assembly_seed(global: u64, index: u64) -> u64 {
    let mut z = global
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["desk", "paper", "suite"] {
            GeneratorConfig::preset(name).unwrap().validate().unwrap();
        }
        assert_eq!(GeneratorConfig::paper().n_assemblies, 693);
    }

    #[test]
    fn exact_schedule_matches_histogram() {
        let cfg = GeneratorConfig::paper();
        let sched = cfg.schedule(3);
        assert_eq!(sched.len(), 693);
        for (p, c) in PAPER_PART_COUNTS {
            assert_eq!(sched.iter().filter(|&&x| x == p).count(), c);
        }
        let parts: usize = sched.iter().sum();
        assert_eq!(parts, 2445);
    }

    #[test]
    fn rescaling_keeps_the_total() {
        let cfg = GeneratorConfig::desk().with_count(60);
        assert_eq!(cfg.part_counts, PartCountRule::Exact(vec![(2, 30), (3, 30)]));
        let cfg = GeneratorConfig::paper().with_count(10);
        cfg.validate().unwrap();
        assert_eq!(cfg.schedule(1).len(), 10);
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = GeneratorConfig::suite();
        cfg.driver_rule = DriverRule::Random;
        let doc = cfg.to_kv();
        let back = GeneratorConfig::desk().apply_kv(&doc).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn kv_rejects_bad_values() {
        let doc = KvDoc::parse("tooth_min = 4").unwrap();
        assert!(GeneratorConfig::desk().apply_kv(&doc).is_err());
        let doc = KvDoc::parse("colour = red").unwrap();
        assert!(GeneratorConfig::desk().apply_kv(&doc).is_err());
    }

    #[test]
    fn seeds_differ_per_index() {
        let a: Vec<u64> = (0..100).map(|i| assembly_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(a.len(), b.len());
    }
}
