//! Matching scores, robustness/uniqueness curves, ARUC and AUC.

use serde::{Deserialize, Serialize};

use super::ot::w2_exact;
use crate::error::{Error, Result};
use crate::graph::SparseMatrix;
use crate::matrix::DenseMatrix;
use crate::nn::{forward, ModelParams, Provenance};
use crate::signature::SignatureSet;

/// Output level a verification runs at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Emb,
    Label,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Emb => "emb",
            Level::Label => "label",
        }
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub model_id: String,
    pub provenance: Provenance,
    pub level: Level,
    pub value: f64,
    pub normalized: f64,
}

impl MatchScore {
    pub fn new(model_id: impl Into<String>, provenance: Provenance, level: Level, value: f64) -> Self {
        Self {
            model_id: model_id.into(),
            provenance,
            level,
            value,
            normalized: f64::NAN,
        }
    }
}

/// Exact W₂ between the suspect's signature embeddings and the frozen
/// references. Lower means closer to the target.
pub fn match_embedding(suspect: &DenseMatrix, sig: &SignatureSet) -> Result<f64> {
    if suspect.cols() != sig.ref_embeddings.cols() {
        return Err(Error::DimMismatch {
            suspect: suspect.cols(),
            reference: sig.ref_embeddings.cols(),
        });
    }
    w2_exact(suspect, &sig.ref_embeddings)
}

/// Fraction of signature nodes where the suspect's label equals the reference.
pub fn match_label(suspect: &[usize], sig: &SignatureSet) -> Result<f64> {
    if suspect.len() != sig.ref_labels.len() {
        return Err(Error::SizeMismatch {
            left: suspect.len(),
            right: sig.ref_labels.len(),
        });
    }
    if suspect.is_empty() {
        return Ok(0.0);
    }
    let same = suspect.iter().zip(&sig.ref_labels).filter(|(a, b)| a == b).count();
    Ok(same as f64 / suspect.len() as f64)
}

/// Runs `p` on the whole graph and scores it on the signature rows.
pub fn score_model(
    p: &ModelParams,
    adj: &SparseMatrix,
    x: &DenseMatrix,
    sig: &SignatureSet,
    level: Level,
) -> Result<f64> {
    let out = forward(p, adj, x, None)?;
    match level {
        Level::Emb => match_embedding(&out.embeddings.select_rows(&sig.indices), sig),
        Level::Label => {
            let pred: Vec<usize> = sig.indices.iter().map(|&v| out.logits.row_argmax(v)).collect();
            match_label(&pred, sig)
        }
    }
}

/// Min-max over the pooled scores; a constant pool maps to 0.5.
pub fn normalize_scores(scores: &mut [MatchScore]) {
    let lo = scores.iter().map(|s| s.value).fold(f64::INFINITY, f64::min);
    let hi = scores.iter().map(|s| s.value).fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for s in scores.iter_mut() {
        s.normalized = if span > 0.0 { (s.value - lo) / span } else { 0.5 };
    }
}

/// Robustness and uniqueness at thresholds `τ'/r`, `τ' = 1..r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RUCurve {
    pub thresholds: Vec<f64>,
    pub robustness: Vec<f64>,
    pub uniqueness: Vec<f64>,
}

impl RUCurve {
    pub fn minima(&self) -> impl Iterator<Item = f64> + '_ {
        self.robustness.iter().zip(&self.uniqueness).map(|(r, u)| r.min(*u))
    }
}

fn frac(values: &[f64], pred: impl Fn(f64) -> bool) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| pred(v)).count() as f64 / values.len() as f64
}

/// Embedding level: `R = frac(pos < τ)`, `U = frac(neg ≥ τ)`.
/// Label level: `R = frac(pos > τ)`, `U = frac(neg ≤ τ)`.
pub fn ru_curves(pos: &[f64], neg: &[f64], level: Level, r: usize) -> RUCurve {
    let thresholds: Vec<f64> = (1..=r).map(|t| t as f64 / r as f64).collect();
    let (robustness, uniqueness) = thresholds
        .iter()
        .map(|&tau| match level {
            Level::Emb => (frac(pos, |v| v < tau), frac(neg, |v| v >= tau)),
            Level::Label => (frac(pos, |v| v > tau), frac(neg, |v| v <= tau)),
        })
        .unzip();
    RUCurve {
        thresholds,
        robustness,
        uniqueness,
    }
}

/// Mean over thresholds of `min(R, U)`.
pub fn aruc(curve: &RUCurve) -> f64 {
    let n = curve.robustness.len();
    if n == 0 {
        return 0.0;
    }
    curve.minima().sum::<f64>() / n as f64
}

/// Mann-Whitney AUC with half credit for ties. The score is the negative
/// distance at embedding level and the raw agreement at label level.
pub fn auc(pos: &[f64], neg: &[f64], level: Level) -> f64 {
    if pos.is_empty() || neg.is_empty() {
        return 0.0;
    }
    let s = |v: f64| match level {
        Level::Emb => -v,
        Level::Label => v,
    };
    let mut total = 0.0;
    for &a in pos {
        for &b in neg {
            let (sa, sb) = (s(a), s(b));
            if sa > sb {
                total += 1.0;
            } else if sa == sb {
                total += 0.5;
            }
        }
    }
    total / (pos.len() * neg.len()) as f64
}

pub const DEFAULT_THRESHOLDS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub level: Level,
    pub scores: Vec<MatchScore>,
    pub curve: RUCurve,
    pub aruc: f64,
    pub auc: f64,
}

impl VerificationReport {
    pub fn count(&self, provenance: Provenance) -> usize {
        self.scores.iter().filter(|s| s.provenance == provenance).count()
    }
}

/// Normalizes a pool's raw scores and computes the curve, ARUC and AUC.
/// Surrogates are the positives, independents the negatives.
pub fn summarize(mut scores: Vec<MatchScore>, level: Level, r: usize) -> VerificationReport {
    normalize_scores(&mut scores);
    let pick = |prov: Provenance, norm: bool| -> Vec<f64> {
        scores
            .iter()
            .filter(|s| s.provenance == prov)
            .map(|s| if norm { s.normalized } else { s.value })
            .collect()
    };
    let curve = ru_curves(&pick(Provenance::Surrogate, true), &pick(Provenance::Independent, true), level, r);
    let auc = auc(&pick(Provenance::Surrogate, false), &pick(Provenance::Independent, false), level);
    VerificationReport {
        level,
        aruc: aruc(&curve),
        auc,
        curve,
        scores,
    }
}
