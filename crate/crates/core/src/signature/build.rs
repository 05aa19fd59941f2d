use serde::{Deserialize, Serialize};

use super::commit::{commit, verify_commit};
use super::scores::{
    boundary_scores, fraction_count, select_boundary, signature_scores, BoundaryConfig, SignatureScores,
};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::DenseMatrix;
use crate::nn::ForwardOutputs;

/// Signature node set with the target's frozen outputs on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureSet {
    pub indices: Vec<usize>,
    pub ref_embeddings: DenseMatrix,
    pub ref_labels: Vec<usize>,
    #[serde(with = "hex_u64")]
    pub commitment: u64,
}

impl SignatureSet {
    /// Freezes the given model outputs on `indices` (sorted, unique).
    pub fn freeze(indices: Vec<usize>, outputs: &ForwardOutputs) -> Result<Self> {
        let commitment = commit(&indices)?;
        let n = outputs.embeddings.rows();
        if let Some(&bad) = indices.iter().find(|&&v| v >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        let ref_embeddings = outputs.embeddings.select_rows(&indices);
        let ref_labels = indices.iter().map(|&v| outputs.logits.row_argmax(v)).collect();
        Ok(Self {
            indices,
            ref_embeddings,
            ref_labels,
            commitment,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.ref_embeddings.rows() != self.indices.len() || self.ref_labels.len() != self.indices.len() {
            return Err(Error::ShapeMismatch("reference outputs vs signature size".into()));
        }
        if !verify_commit(&self.indices, self.commitment) {
            return Err(Error::InvalidConfig("commitment does not match indices".into()));
        }
        Ok(())
    }
}

/// Intermediate products of signature selection, kept for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureSelection {
    pub boundary: Vec<usize>,
    pub scores: SignatureScores,
    /// The ρ-quantile threshold, `None` when no candidate is selected.
    pub threshold: Option<f64>,
    pub indices: Vec<usize>,
}

/// Boundary set plus every candidate whose score is at most the lower
/// empirical `ρ`-quantile of candidate scores. Ties at the threshold are all
/// admitted.
pub fn select_signature(outputs: &ForwardOutputs, g: &Graph, cfg: &BoundaryConfig) -> Result<SignatureSelection> {
    cfg.validate()?;
    let z = &outputs.logits;
    let pred = outputs.predictions();
    let bscores = boundary_scores(z, cfg.lambda, cfg.margin_form);
    let boundary = select_boundary(&bscores, cfg.boundary_ratio);
    let scores = signature_scores(&outputs.embeddings, z, g, &pred, &boundary, cfg)?;

    let k = fraction_count(cfg.signature_ratio, scores.candidates.len());
    let threshold = (k > 0).then(|| {
        let mut sorted = scores.score.clone();
        sorted.sort_by(f64::total_cmp);
        sorted[k - 1]
    });
    let mut indices = boundary.clone();
    if let Some(tau) = threshold {
        indices.extend(
            scores
                .candidates
                .iter()
                .zip(&scores.score)
                .filter(|(_, &s)| s <= tau)
                .map(|(&v, _)| v),
        );
    }
    indices.sort_unstable();
    Ok(SignatureSelection {
        boundary,
        scores,
        threshold,
        indices,
    })
}

/// Selects the signature and freezes the model's outputs on it.
pub fn build_signature(outputs: &ForwardOutputs, g: &Graph, cfg: &BoundaryConfig) -> Result<SignatureSet> {
    let sel = select_signature(outputs, g, cfg)?;
    SignatureSet::freeze(sel.indices, outputs)
}

mod hex_u64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(s.trim_start_matches("0x"), 16).map_err(serde::de::Error::custom)
    }
}
