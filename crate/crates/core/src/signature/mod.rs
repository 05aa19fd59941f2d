//! Boundary-node identification, signature scoring and selection, compression
//! and the index commitment.

pub mod build;
pub mod commit;
pub mod kmeans;
pub mod scores;

pub use build::{build_signature, select_signature, SignatureSelection, SignatureSet};
pub use commit::{commit, fnv1a64, verify_commit};
pub use kmeans::{group_compress, kmeans};
pub use scores::{
    boundary_scores, hetero_score, margin_score, select_boundary, signature_scores, thickness_score, top_two,
    BoundaryConfig, MarginForm, SignatureScores,
};
