use crate::error::{Error, Result};
use crate::kv::KvDoc;

/// One grouped set-abstraction stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SaStage {
    pub samples: usize,
    pub radius: f64,
    pub max_neighbors: usize,
    pub mlp: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub points_per_part: usize,
    /// `C`, the part feature width and decoder model width.
    pub feature_dim: usize,
    /// The two grouped stages; a global stage over all remaining centers
    /// follows them.
    pub sa: [SaStage; 2],
    /// Widths of the global stage; the last must equal `feature_dim`.
    pub global_mlp: Vec<usize>,
    pub gnn_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub frames: usize,
    pub use_gnn: bool,
    /// Seed of the parameter initialization.
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            points_per_part: 256,
            feature_dim: 128,
            sa: [
                SaStage {
                    samples: 128,
                    radius: 0.1,
                    max_neighbors: 16,
                    mlp: vec![32, 32, 64],
                },
                SaStage {
                    samples: 32,
                    radius: 0.25,
                    max_neighbors: 16,
                    mlp: vec![64, 64, 128],
                },
            ],
            global_mlp: vec![128, 128],
            gnn_layers: 2,
            decoder_layers: 2,
            heads: 4,
            ff_dim: 256,
            frames: 12,
            use_gnn: true,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Narrower network used by the acceptance runs, sized so a desk-scale
    /// training run takes a couple of minutes on one core.
    pub fn fast() -> Self {
        Self {
            feature_dim: 64,
            sa: [
                SaStage {
                    samples: 64,
                    radius: 0.15,
                    max_neighbors: 16,
                    mlp: vec![16, 16, 32],
                },
                SaStage {
                    samples: 16,
                    radius: 0.35,
                    max_neighbors: 16,
                    mlp: vec![32, 32, 64],
                },
            ],
            global_mlp: vec![64, 64],
            ff_dim: 128,
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" | "desk" => Ok(Self::default()),
            "fast" => Ok(Self::fast()),
            other => Err(Error::Config(format!("unknown model preset `{other}`"))),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.feature_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.feature_dim == 0 || self.heads == 0 || self.feature_dim % self.heads != 0 {
            return fail(format!(
                "feature_dim {} must be a positive multiple of heads {}",
                self.feature_dim, self.heads
            ));
        }
        let counts = [self.points_per_part, self.sa[0].samples, self.sa[1].samples];
        if counts.windows(2).any(|w| w[1] >= w[0]) || counts[2] == 0 {
            return fail(format!("sample counts {counts:?} must be strictly decreasing and positive"));
        }
        for (i, s) in self.sa.iter().enumerate() {
            if !(s.radius > 0.0) || s.max_neighbors == 0 || s.mlp.is_empty() || s.mlp.contains(&0) {
                return fail(format!("set abstraction stage {i} is malformed"));
            }
        }
        if self.global_mlp.last() != Some(&self.feature_dim) || self.global_mlp.contains(&0) {
            return fail(format!(
                "global_mlp {:?} must end with feature_dim {}",
                self.global_mlp, self.feature_dim
            ));
        }
        if self.frames == 0 || self.ff_dim == 0 {
            return fail("frames and ff_dim must be positive".into());
        }
        Ok(())
    }

    pub const KEYS: &'static [&'static str] = &[
        "points_per_part",
        "feature_dim",
        "sa1_samples",
        "sa1_radius",
        "sa1_neighbors",
        "sa1_mlp",
        "sa2_samples",
        "sa2_radius",
        "sa2_neighbors",
        "sa2_mlp",
        "global_mlp",
        "gnn_layers",
        "decoder_layers",
        "heads",
        "ff_dim",
        "frames",
        "use_gnn",
        "init_seed",
    ];

    /// Overwrite fields present in `doc`; other keys are ignored.
    pub fn apply_kv(&mut self, doc: &KvDoc) -> Result<()> {
        macro_rules! take {
            ($key:expr, $field:expr) => {
                if let Some(v) = doc.get($key)? {
                    $field = v;
                }
            };
        }
        macro_rules! take_list {
            ($key:expr, $field:expr) => {
                if let Some(v) = doc.get_list($key)? {
                    $field = v;
                }
            };
        }
        take!("points_per_part", self.points_per_part);
        take!("feature_dim", self.feature_dim);
        for (i, s) in self.sa.iter_mut().enumerate() {
            let k = |f: &str| format!("sa{}_{f}", i + 1);
            take!(&k("samples"), s.samples);
            take!(&k("radius"), s.radius);
            take!(&k("neighbors"), s.max_neighbors);
            take_list!(&k("mlp"), s.mlp);
        }
        take_list!("global_mlp", self.global_mlp);
        take!("gnn_layers", self.gnn_layers);
        take!("decoder_layers", self.decoder_layers);
        take!("heads", self.heads);
        take!("ff_dim", self.ff_dim);
        take!("frames", self.frames);
        take!("use_gnn", self.use_gnn);
        take!("init_seed", self.init_seed);
        Ok(())
    }

    pub fn to_kv(&self, doc: &mut KvDoc) {
        doc.set("points_per_part", self.points_per_part);
        doc.set("feature_dim", self.feature_dim);
        for (i, s) in self.sa.iter().enumerate() {
            let k = |f: &str| format!("sa{}_{f}", i + 1);
            doc.set(&k("samples"), s.samples);
            doc.set(&k("radius"), s.radius);
            doc.set(&k("neighbors"), s.max_neighbors);
            doc.set_list(&k("mlp"), &s.mlp);
        }
        doc.set_list("global_mlp", &self.global_mlp);
        doc.set("gnn_layers", self.gnn_layers);
        doc.set("decoder_layers", self.decoder_layers);
        doc.set("heads", self.heads);
        doc.set("ff_dim", self.ff_dim);
        doc.set("frames", self.frames);
        doc.set("use_gnn", self.use_gnn);
        doc.set("init_seed", self.init_seed);
    }
}
