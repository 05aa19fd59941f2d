//! Hand-derived gradients for the fixed two-layer architecture and the three
//! training objectives (cross-entropy, embedding regression, distillation).

use rand::Rng;

use super::model::{forward_cached, sample_dropout_mask, ForwardCache, Gradients, ModelParams};
use crate::error::{Error, Result};
use crate::graph::SparseMatrix;
use crate::matrix::{log_softmax, softmax, DenseMatrix};

/// Mean cross-entropy over `nodes` and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &DenseMatrix, nodes: &[usize], labels: &[usize]) -> (f64, DenseMatrix) {
    let inv = 1.0 / nodes.len() as f64;
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for &v in nodes {
        let lp = log_softmax(logits.row(v));
        let y = labels[v];
        loss -= lp[y] * inv;
        let g = grad.row_mut(v);
        for (k, (gk, l)) in g.iter_mut().zip(&lp).enumerate() {
            let t = if k == y { 1.0 } else { 0.0 };
            *gk += (l.exp() - t) * inv;
        }
    }
    (loss, grad)
}

/// Mean squared embedding error `mean_v ‖H_v − T_v‖²` over `nodes`.
/// `targets` row `i` belongs to `nodes[i]`.
pub fn embedding_mse(emb: &DenseMatrix, nodes: &[usize], targets: &DenseMatrix) -> (f64, DenseMatrix) {
    let inv = 1.0 / nodes.len() as f64;
    let mut grad = DenseMatrix::zeros(emb.rows(), emb.cols());
    let mut loss = 0.0;
    for (i, &v) in nodes.iter().enumerate() {
        let g = grad.row_mut(v);
        for ((gk, &h), &t) in g.iter_mut().zip(emb.row(v)).zip(targets.row(i)) {
            let d = h - t;
            loss += d * d * inv;
            *gk += 2.0 * d * inv;
        }
    }
    (loss, grad)
}

/// `T²·mean KL(softmax(teacher/T) ‖ softmax(student/T))` over `nodes`.
/// `teacher` row `i` belongs to `nodes[i]`.
pub fn distillation(
    logits: &DenseMatrix,
    nodes: &[usize],
    teacher: &DenseMatrix,
    temperature: f64,
) -> (f64, DenseMatrix) {
    let inv = 1.0 / nodes.len() as f64;
    let t = temperature;
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (i, &v) in nodes.iter().enumerate() {
        let ts: Vec<f64> = teacher.row(i).iter().map(|z| z / t).collect();
        let ss: Vec<f64> = logits.row(v).iter().map(|z| z / t).collect();
        let lpt = log_softmax(&ts);
        let lps = log_softmax(&ss);
        let mut kl = 0.0;
        for (a, b) in lpt.iter().zip(&lps) {
            kl += a.exp() * (a - b);
        }
        loss += t * t * kl * inv;
        let g = grad.row_mut(v);
        for ((gk, a), b) in g.iter_mut().zip(&lpt).zip(&lps) {
            *gk += t * (b.exp() - a.exp()) * inv;
        }
    }
    (loss, grad)
}

/// Backpropagates upstream gradients on the logits and/or embeddings through
/// the cached forward pass. The dropout mask used in the forward pass must be
/// passed again.
pub(crate) fn backward(
    p: &ModelParams,
    adj: &SparseMatrix,
    cache: &ForwardCache,
    grad_logits: Option<&DenseMatrix>,
    grad_emb: Option<&DenseMatrix>,
    dropout_mask: Option<&DenseMatrix>,
) -> Result<Gradients> {
    let (n, h) = cache.embeddings.shape();
    let mut grads = Gradients::zeros_like(p);

    let mut g_h = match grad_emb {
        Some(g) => g.clone(),
        None => DenseMatrix::zeros(n, h),
    };
    if let Some(gz) = grad_logits {
        grads.wc = cache.embeddings.t_matmul(gz)?;
        grads.bc = gz.column_sums();
        g_h.add_scaled(&gz.matmul_t(&p.wc)?, 1.0);
    }

    // through ReLU of the second layer
    let mut g_pre2 = g_h;
    for (g, &z) in g_pre2.as_mut_slice().iter_mut().zip(cache.pre2.as_slice()) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    grads.w2 = cache.ad.t_matmul(&g_pre2)?;
    grads.b2 = g_pre2.column_sums();

    // Â is symmetric, so Âᵀ·G = Â·G
    let g_ad = g_pre2.matmul_t(&p.w2)?;
    let mut g_pre1 = adj.spmm(&g_ad);
    if let Some(mask) = dropout_mask {
        g_pre1.hadamard_inplace(mask);
    }
    for (g, &z) in g_pre1.as_mut_slice().iter_mut().zip(cache.pre1.as_slice()) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    grads.w1 = cache.ax.t_matmul(&g_pre1)?;
    grads.b1 = g_pre1.column_sums();
    Ok(grads)
}

/// Cross-entropy over `mask` with a freshly sampled dropout mask, and exact
/// analytic gradients of every parameter under that mask.
pub fn loss_and_grads(
    p: &ModelParams,
    adj: &SparseMatrix,
    x: &DenseMatrix,
    labels: &[usize],
    mask: &[usize],
    dropout: f64,
    rng: &mut impl Rng,
) -> Result<(f64, Gradients)> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let drop = (dropout > 0.0).then(|| sample_dropout_mask(x.rows(), p.hidden_dim(), dropout, rng));
    loss_and_grads_with_mask(p, adj, x, labels, mask, drop.as_ref())
}

/// Same as [`loss_and_grads`] with an explicit (possibly absent) dropout mask.
pub fn loss_and_grads_with_mask(
    p: &ModelParams,
    adj: &SparseMatrix,
    x: &DenseMatrix,
    labels: &[usize],
    mask: &[usize],
    dropout_mask: Option<&DenseMatrix>,
) -> Result<(f64, Gradients)> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let cache = forward_cached(p, adj, x, dropout_mask)?;
    let (loss, gz) = cross_entropy(&cache.logits, mask, labels);
    let grads = backward(p, adj, &cache, Some(&gz), None, dropout_mask)?;
    Ok((loss, grads))
}

/// Softmax probabilities for every row.
pub fn softmax_rows(z: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(z.rows(), z.cols());
    for v in 0..z.rows() {
        out.row_mut(v).copy_from_slice(&softmax(z.row(v)));
    }
    out
}
