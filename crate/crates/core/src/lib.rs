//! Multi-view similarity tensors and their non-negative symmetric CP analysis.
//!
//! The pipeline: per-(video, phase) embeddings are turned into an
//! `N x N x P` stack of cosine-similarity matrices ([`similarity`]), factored
//! as `sum_r lambda_r a_r o u_r o u_r` with non-negative factors
//! ([`sym_ncp`]), screened across ranks with core consistency, an error curve
//! and masked holdout ([`diagnostics`]), and the video loadings are embedded in
//! 2D with exact t-SNE ([`tsne`]).

pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod plot;
pub mod similarity;
pub mod sym_ncp;
pub mod synth;
pub mod tensor;
pub mod tsne;

pub use diagnostics::{
    corcondia, error_curve, holdout_mask, holdout_validate, rank_report, Corcondia,
    CorcondiaStatus, HoldoutConfig, HoldoutResult, RankReport, RankRow,
};
pub use error::{Error, Result};
pub use similarity::{
    build_similarity_tensor, cosine_similarity, EmbeddingSet, TensorManifest, TimeOfDay,
    VideoMetadata,
};
pub use sym_ncp::{fit, fit_with_warm_start, normalize_and_sort, CpFactors, FitConfig, SymCpModel};
pub use tensor::{
    cp_reconstruct, khatri_rao, masked_sse, refold, unfold, DenseTensor3, MaskTensor, Matrix,
};
pub use tsne::{kl_divergence, tsne_project, tsne_run, TsneConfig, TsneOutput};
