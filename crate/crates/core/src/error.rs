use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage an error originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Rotor,
    Dtw,
    Coherency,
    Netgraph,
    Spectral,
    Islanding,
    Swingsim,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Rotor => "rotor",
            Stage::Dtw => "dtw",
            Stage::Coherency => "coherency",
            Stage::Netgraph => "netgraph",
            Stage::Spectral => "spectral",
            Stage::Islanding => "islanding",
            Stage::Swingsim => "swingsim",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{what} references unknown bus {bus}")]
    UnknownBus { what: String, bus: u32 },

    #[error("unknown generator {0}")]
    UnknownGenerator(String),

    #[error("duplicate {0}")]
    Duplicate(String),

    #[error("generator {gen_id}: sample {index} has zero terminal voltage (unobservable)")]
    Unobservable { gen_id: String, index: usize },

    #[error("record {gen_id} has {len} samples, at least 2 are required")]
    TooShort { gen_id: String, len: usize },

    #[error("band {band} is narrower than the length difference {diff}; no warping path exists")]
    InfeasibleBand { band: usize, diff: usize },

    #[error("trajectory {0} is constant, correlation is undefined")]
    ConstantTrajectory(String),

    #[error("bus {0} is isolated (zero weighted degree)")]
    IsolatedBus(u32),

    #[error("constrained spectral problem infeasible: {0}")]
    Infeasible(String),

    #[error("coherency constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("singular network reduction: {0}")]
    SingularReduction(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    /// Best-effort attribution of the error to a pipeline stage.
    pub fn stage(&self) -> Stage {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::UnknownBus { .. }
            | Error::UnknownGenerator(_)
            | Error::Duplicate(_)
            | Error::Json(_)
            | Error::InvalidInput(_) => Stage::Ingest,
            Error::Unobservable { .. } | Error::TooShort { .. } => Stage::Rotor,
            Error::InfeasibleBand { .. } => Stage::Dtw,
            Error::ConstantTrajectory(_) => Stage::Coherency,
            Error::IsolatedBus(_) => Stage::Netgraph,
            Error::Infeasible(_) | Error::Numerical(_) => Stage::Spectral,
            Error::ConstraintViolation(_) => Stage::Islanding,
            Error::SingularReduction(_) => Stage::Swingsim,
        }
    }

    /// Short remedy hint suitable for CLI output.
    pub fn remedy(&self) -> &'static str {
        match self {
            Error::Io { .. } => "check that the path exists and is readable",
            Error::Parse { .. } => "fix the offending row; see the file format section of the README",
            Error::UnknownBus { .. } => "add the bus to the #BUS section or fix the reference",
            Error::UnknownGenerator(_) => "add the generator to the #GEN section",
            Error::Duplicate(_) => "remove the duplicated row",
            Error::Unobservable { .. } => "drop the sample or repair the phasor stream",
            Error::TooShort { .. } => "widen the analysis window or supply more samples",
            Error::InfeasibleBand { .. } => "widen --band or drop it for unconstrained warping",
            Error::ConstantTrajectory(_) => "exclude the flat trajectory from the baseline",
            Error::IsolatedBus(_) => "connect the bus or remove it from the case",
            Error::Infeasible(_) => "lower --beta or request fewer islands",
            Error::ConstraintViolation(_) => "revise the coherent groups or the network topology",
            Error::SingularReduction(_) => "reconnect the islanded part of the network",
            Error::Numerical(_) => "check the input matrices for NaN or extreme scaling",
            Error::InvalidInput(_) => "see --help for valid values",
            Error::Json(_) => "check the JSON document against the documented schema",
        }
    }
}
