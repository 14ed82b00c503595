use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Rotation angle too close to π for a unique logarithm.
    #[error("rotation angle within 1e-6 of pi (trace = {trace}); reduce the frame step")]
    AngleNearPi { trace: f64 },

    #[error("axis is not unit length (norm = {norm})")]
    DegenerateAxis { norm: f64 },

    #[error("could not place assembly parts after {attempts} attempts")]
    PlacementFailed { attempts: usize },

    #[error("coupling loop gives part {part} two speeds ({first} vs {second})")]
    InconsistentLoop { part: usize, first: f64, second: f64 },

    #[error("driver part {0} is not a gear")]
    DriverNotGear(usize),

    #[error("coupling graph is not connected")]
    Disconnected,

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("ball query center {center} has no neighbors within radius {radius}{}", part_suffix(*.part))]
    EmptyNeighborhood {
        center: usize,
        radius: f64,
        part: Option<usize>,
    },

    #[error("point cloud is degenerate (singular values {0:?})")]
    DegenerateCloud([f64; 3]),

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("config: {0}")]
    Config(String),
}

fn part_suffix(part: Option<usize>) -> String {
    match part {
        Some(p) => format!(" (part {p})"),
        None => String::new(),
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Attach a part index to neighborhood failures raised deep in the encoder.
    pub fn with_part(self, idx: usize) -> Self {
        match self {
            Error::EmptyNeighborhood { center, radius, .. } => Error::EmptyNeighborhood {
                center,
                radius,
                part: Some(idx),
            },
            other => other,
        }
    }
}
