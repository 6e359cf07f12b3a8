use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("failed to decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("occlusion spec infeasible: {0}")]
    Infeasible(String),

    #[error("occlusion fraction {0:.4} exceeds 0.5")]
    OutOfRange(f64),

    #[error("degenerate detector scores ({g_occluded}, {g_clean})")]
    DegenerateScores { g_occluded: f64, g_clean: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("manifest error at line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Checkpoint(_) => 3,
            _ => 2,
        }
    }
}
