//! Per-node boundary scores and the three-part signature score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::{entropy, softmax, squared_distance, DenseMatrix};

/// How the logit margin enters the boundary score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginForm {
    /// `ReLU(z_top1 − z_top2)`, the nonnegative gap between the two largest logits.
    #[default]
    Gap,
    /// `ReLU(z_top2 − z_top1)`, which is identically zero; kept for comparison.
    Literal,
}

/// Indices of the largest and second-largest entries (lowest index on ties).
pub fn top_two(z: &[f64]) -> (usize, usize) {
    let mut p = 0;
    for i in 1..z.len() {
        if z[i] > z[p] {
            p = i;
        }
    }
    let mut q = if p == 0 { 1 } else { 0 };
    for i in 0..z.len() {
        if i != p && z[i] > z[q] {
            q = i;
        }
    }
    (p, q)
}

/// `s(v) = margin(v) − λ·H(softmax(z_v))`. Lower means closer to the boundary.
pub fn boundary_scores(z: &DenseMatrix, lambda: f64, form: MarginForm) -> Vec<f64> {
    (0..z.rows())
        .map(|v| {
            let row = z.row(v);
            let (p, q) = top_two(row);
            let margin = match form {
                MarginForm::Gap => (row[p] - row[q]).max(0.0),
                MarginForm::Literal => (row[q] - row[p]).max(0.0),
            };
            margin - lambda * entropy(&softmax(row))
        })
        .collect()
}

/// Number of items a fraction selects out of `n`: `⌈fraction·n⌉`, guarded
/// against representation error in the product.
pub fn fraction_count(fraction: f64, n: usize) -> usize {
    let raw = fraction * n as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// The `⌈m·n⌉` nodes with the smallest scores, lower index first on ties.
/// Returned sorted ascending by node index.
pub fn select_boundary(scores: &[f64], m: f64) -> Vec<usize> {
    let k = fraction_count(m, scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut picked = order[..k].to_vec();
    picked.sort_unstable();
    picked
}

/// Euclidean distance between embedding rows `i` and `j`.
pub fn margin_score(h: &DenseMatrix, i: usize, j: usize) -> f64 {
    squared_distance(h.row(i), h.row(j)).sqrt()
}

/// `‖t_i − t_j‖₂ · sigmoid(γ − (t_i[top] − t_j[top]))` with `t = softmax(z)`.
pub fn thickness_score(z: &DenseMatrix, i: usize, j: usize, gamma: f64) -> f64 {
    thickness_from_probs(&softmax(z.row(i)), &softmax(z.row(j)), gamma)
}

pub(crate) fn thickness_from_probs(ti: &[f64], tj: &[f64], gamma: f64) -> f64 {
    let conf = |t: &[f64]| t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dist = squared_distance(ti, tj).sqrt();
    dist * sigmoid(gamma - (conf(ti) - conf(tj)))
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Fraction of 1-hop neighbors with a different predicted label; isolated
/// nodes score 0.
pub fn hetero_score(g: &Graph, pred: &[usize], i: usize) -> f64 {
    let nb = g.neighbors(i);
    if nb.is_empty() {
        return 0.0;
    }
    let differ = nb.iter().filter(|&&j| pred[j] != pred[i]).count();
    differ as f64 / nb.len() as f64
}

/// Signature-score weights and selection ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConfig {
    pub lambda: f64,
    pub boundary_ratio: f64,
    pub signature_ratio: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub gamma: f64,
    #[serde(default)]
    pub margin_form: MarginForm,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self::from_weights(0.1, 0.8, 0.1)
    }
}

impl BoundaryConfig {
    /// Builds the config from relative (margin, thickness, heterogeneity)
    /// weights: `α1 = w_t / w_m`, `α2 = w_h / w_m`.
    pub fn from_weights(w_margin: f64, w_thickness: f64, w_hetero: f64) -> Self {
        Self {
            lambda: 1.0,
            boundary_ratio: 0.10,
            signature_ratio: 0.20,
            alpha1: w_thickness / w_margin,
            alpha2: w_hetero / w_margin,
            gamma: 0.1,
            margin_form: MarginForm::Gap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.boundary_ratio > 0.0 && self.boundary_ratio <= 1.0) {
            return bad("boundary_ratio must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.signature_ratio) {
            return bad("signature_ratio must lie in [0, 1]");
        }
        if !(self.lambda >= 0.0 && self.alpha1 >= 0.0 && self.alpha2 >= 0.0) {
            return bad("lambda, alpha1 and alpha2 must be nonnegative");
        }
        if !self.gamma.is_finite() {
            return bad("gamma must be finite");
        }
        Ok(())
    }
}

/// Per-candidate components and the aggregated score `ŝ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureScores {
    pub candidates: Vec<usize>,
    /// Raw nearest same-class boundary distance; `None` when the candidate's
    /// class has no boundary node.
    pub margin: Vec<Option<f64>>,
    pub thickness: Vec<Option<f64>>,
    pub hetero: Vec<f64>,
    pub score: Vec<f64>,
}

/// Min-max normalization; a constant (or empty) input maps to zeros.
fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / span).collect()
}

/// Normalizes the present entries; absent entries become 1.
fn min_max_optional(values: &[Option<f64>]) -> Vec<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let mut norm = min_max(&present).into_iter();
    values
        .iter()
        .map(|v| match v {
            Some(_) => norm.next().unwrap_or(0.0),
            None => 1.0,
        })
        .collect()
}

/// `ŝ(i) = m̂(i) + α1·t̂(i) − α2·ĥ(i)` for every node outside `boundary`.
///
/// `m̂` and `t̂` are minima over boundary nodes sharing the candidate's
/// predicted class; all three components are min-max normalized over the
/// candidates.
pub fn signature_scores(
    h: &DenseMatrix,
    z: &DenseMatrix,
    g: &Graph,
    pred: &[usize],
    boundary: &[usize],
    cfg: &BoundaryConfig,
) -> Result<SignatureScores> {
    if boundary.is_empty() {
        return Err(Error::EmptyBoundary);
    }
    let n = h.rows();
    let c = z.cols();
    let mut in_boundary = vec![false; n];
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for &b in boundary {
        in_boundary[b] = true;
        by_class[pred[b]].push(b);
    }
    let boundary_probs: Vec<(usize, Vec<f64>)> =
        boundary.iter().map(|&b| (b, softmax(z.row(b)))).collect();
    let prob_of = |b: usize| {
        let k = boundary_probs.partition_point(|(x, _)| *x < b);
        &boundary_probs[k].1
    };

    let candidates: Vec<usize> = (0..n).filter(|&v| !in_boundary[v]).collect();
    let mut margin = Vec::with_capacity(candidates.len());
    let mut thickness = Vec::with_capacity(candidates.len());
    let mut hetero = Vec::with_capacity(candidates.len());
    for &i in &candidates {
        let peers = &by_class[pred[i]];
        if peers.is_empty() {
            margin.push(None);
            thickness.push(None);
        } else {
            let ti = softmax(z.row(i));
            let mut best_m = f64::INFINITY;
            let mut best_t = f64::INFINITY;
            for &j in peers {
                best_m = best_m.min(margin_score(h, i, j));
                best_t = best_t.min(thickness_from_probs(&ti, prob_of(j), cfg.gamma));
            }
            margin.push(Some(best_m));
            thickness.push(Some(best_t));
        }
        hetero.push(hetero_score(g, pred, i));
    }

    let m_hat = min_max_optional(&margin);
    let t_hat = min_max_optional(&thickness);
    let h_hat = min_max(&hetero);
    let score = (0..candidates.len())
        .map(|k| m_hat[k] + cfg.alpha1 * t_hat[k] - cfg.alpha2 * h_hat[k])
        .collect();
    Ok(SignatureScores {
        candidates,
        margin,
        thickness,
        hetero,
        score,
    })
}
