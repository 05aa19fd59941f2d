//! Ownership verification at the embedding and label levels.

pub mod metrics;
pub mod ot;

pub use metrics::{
    aruc, auc, match_embedding, match_label, normalize_scores, ru_curves, score_model, summarize, Level,
    MatchScore, RUCurve, VerificationReport, DEFAULT_THRESHOLDS,
};
pub use ot::{assignment, w2_exact, w2_sinkhorn, SinkhornResult};
