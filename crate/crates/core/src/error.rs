use thiserror::Error;

/// Errors raised by the tensor, fitting, diagnostic and projection routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid mode {0}; expected 1, 2 or 3")]
    InvalidMode(usize),

    #[error("zero-norm embedding for video `{video}` in phase `{phase}`")]
    ZeroNorm { video: String, phase: String },

    #[error("invalid embeddings: {0}")]
    InvalidEmbeddings(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("tensor slices are not symmetric: |x({i},{j},{k}) - x({j},{i},{k})| = {diff:e}")]
    NotSymmetric {
        i: usize,
        j: usize,
        k: usize,
        diff: f64,
    },

    #[error("mask is not symmetric in modes 1-2 at ({i},{j},{k})")]
    MaskNotSymmetric { i: usize, j: usize, k: usize },

    #[error("mask leaves the problem underdetermined: {0}")]
    Underdetermined(String),

    #[error("rank-deficient factor in mode {mode} (condition {cond:e})")]
    RankDeficient { mode: usize, cond: f64 },

    #[error("KL divergence undefined: q is zero where p = {p:e} at ({i},{j})")]
    ZeroQ { i: usize, j: usize, p: f64 },

    #[error("{0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
