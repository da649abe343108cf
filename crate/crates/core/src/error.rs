use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("delimited-text error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: header has no column `{column}`")]
    SchemaMismatch { path: PathBuf, column: String },

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("duplicate {kind}: {id}")]
    DuplicateId { kind: &'static str, id: String },

    #[error("node `{0}` is not in the graph")]
    UnknownNode(String),

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("partitions cover different node sets")]
    NodeSetMismatch,

    #[error("partition assigns {assigned} nodes but graph has {nodes}")]
    PartitionSize { assigned: usize, nodes: usize },

    #[error("LCC inventor `{0}` has no community assignment")]
    UnpartitionedNode(String),

    #[error("label propagation did not stabilise after {0} sweeps")]
    NotConverged(usize),

    #[error("empty sample")]
    EmptySample,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("log-normal fit did not converge after {0} iterations")]
    FitDiverged(usize),

    #[error("both samples have zero variance")]
    DegenerateSample,

    #[error("sample too small: need {need}, have {have}")]
    SampleTooSmall { need: usize, have: usize },

    #[error("histogram lacks the bins centred at 0 and +/-1 bin width")]
    MissingBins,

    #[error("infeasible synthetic config: {0}")]
    InfeasibleConfig(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(line: u64, reason: impl Into<String>) -> Self {
        Error::MalformedRow {
            line,
            reason: reason.into(),
        }
    }
}
