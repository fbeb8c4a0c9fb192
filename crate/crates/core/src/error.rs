use std::path::PathBuf;

use crate::kinematics::Frame;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("segment index {index} out of range 1..={n_segments}")]
    SegmentIndex { index: usize, n_segments: usize },

    #[error("joint {joint} deflection {deflection:.4} rad exceeds limit {limit:.4} rad")]
    JointLimit {
        joint: usize,
        deflection: f64,
        limit: f64,
    },

    #[error("expected a twist in the {expected:?} frame, got {found:?}")]
    FrameMismatch { expected: Frame, found: Frame },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("turning radius {radius} m is tighter than the minimum {r_min:.4} m")]
    InfeasibleRadius { radius: f64, r_min: f64 },

    #[error("M-configuration model requires 4 segments, chain has {n_segments}")]
    UnsupportedConfiguration { n_segments: usize },

    #[error("angle {value:.4} rad outside {expected}")]
    AngleRange { value: f64, expected: &'static str },

    #[error("slippage ratio undefined for zero screw speed")]
    UndefinedSlippage,

    #[error("slippage ratio {slip} leaves no traction (must be < 1)")]
    NoTraction { slip: f64 },

    #[error("segment {segment} sits on the rotation center; use it as the numerator")]
    SegmentOnCenter { segment: usize },

    #[error("invalid terrain profile: {0}")]
    InvalidTerrain(String),

    #[error("calibration underdetermined: {missing}")]
    Underdetermined { missing: String },

    #[error("time step {0} s outside (0, 0.1]")]
    InvalidTimestep(f64),

    #[error("non-finite velocity on segment {segment}")]
    SimulationFault { segment: usize },

    #[error("trajectory sweeps only {swept_deg:.2} deg of heading (need >= 90)")]
    InsufficientArc { swept_deg: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
