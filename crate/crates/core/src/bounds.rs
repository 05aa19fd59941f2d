//! Perturbation bounds: the closed-form deviation bound Δ_G, the proxy
//! variance σ², and Monte-Carlo checks of the deviation tail and the
//! prediction-agreement probability.

use std::f64::consts::E;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, Graph, SparseMatrix};
use crate::matrix::DenseMatrix;
use crate::nn::{forward, perturb_params, spectral_norm, ModelParams};
use crate::signature::top_two;

/// Slack when comparing `dC` against 1 and `eta` against `1/L`.
const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub layers: usize,
    pub spectral_norms: Vec<f64>,
    pub c_phi: f64,
    pub c_rho: f64,
    pub c_g: f64,
    pub d: f64,
    pub r: f64,
    pub eta: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.spectral_norms.len() < self.layers {
            return Err(Error::InvalidConfig(format!(
                "{} layers need as many spectral norms, got {}",
                self.layers,
                self.spectral_norms.len()
            )));
        }
        let nonneg = [self.c_phi, self.c_rho, self.c_g, self.d, self.r, self.eta];
        if nonneg.iter().chain(&self.spectral_norms).any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidConfig("bound inputs must be nonnegative".into()));
        }
        let limit = 1.0 / self.layers as f64;
        if self.eta > limit + UNIT_TOL {
            return Err(Error::HypothesisViolated { eta: self.eta, limit });
        }
        Ok(())
    }
}

/// `e·R·L·η·‖W₁‖·‖W_L‖·C_φ·((dC)^{L−1} − 1)/(dC − 1)` with
/// `C = C_φ·C_ρ·C_g·‖W₂‖`; the geometric factor becomes `L − 1` at `dC = 1`.
pub fn delta_g(b: &BoundInputs) -> Result<f64> {
    b.validate()?;
    let l = b.layers;
    let w = &b.spectral_norms;
    let w2 = w.get(1).copied().unwrap_or(0.0);
    let dc = b.d * b.c_phi * b.c_rho * b.c_g * w2;
    let geometric = if (dc - 1.0).abs() <= UNIT_TOL {
        (l - 1) as f64
    } else {
        (dc.powi(l as i32 - 1) - 1.0) / (dc - 1.0)
    };
    Ok(E * b.r * l as f64 * b.eta * w[0] * w[l - 1] * b.c_phi * geometric)
}

/// `σ² = (dη)²·(∏_{i<L} ‖W_i‖)²·Σ_{i≤L} (ρ_i/‖W_i‖)²`.
pub fn proxy_variance(spectral_norms: &[f64], rho: &[f64], eta: f64, d: f64, layers: usize) -> Result<f64> {
    if spectral_norms.len() < layers || rho.len() < layers {
        return Err(Error::InvalidConfig(format!("proxy variance needs {layers} norms and bounds")));
    }
    if let Some(i) = spectral_norms[..layers].iter().position(|&w| w == 0.0) {
        return Err(Error::DegenerateWeight(format!("layer {}", i + 1)));
    }
    let prod: f64 = spectral_norms[..layers - 1].iter().product();
    let sum: f64 = rho[..layers].iter().zip(spectral_norms).map(|(r, w)| (r / w).powi(2)).sum();
    Ok((d * eta).powi(2) * prod.powi(2) * sum)
}

/// Spectral norm of the symmetric propagation operator by power iteration on
/// `Â²`.
pub fn operator_norm(adj: &SparseMatrix) -> f64 {
    let n = adj.dim();
    if n == 0 {
        return 0.0;
    }
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i as f64 * 0.618_033_988_749_895) % 1.0)).collect();
    let normalize = |x: &mut Vec<f64>| {
        let s = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if s > 0.0 {
            x.iter_mut().for_each(|v| *v /= s);
        }
        s
    };
    normalize(&mut x);
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let mut y = adj.matvec(&adj.matvec(&x));
        let next = normalize(&mut y);
        x = y;
        if (next - lambda).abs() <= 1e-14 * next.max(1.0) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.sqrt()
}

/// Largest feature-row ℓ₂ norm (the input radius around `h₀ = 0`).
pub fn input_radius(x: &DenseMatrix) -> f64 {
    (0..x.rows())
        .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Constants of the bound for the first `layers` weight matrices of `p`
/// (2 for embeddings, 3 for logits). The measured form folds the degree into
/// the operator norm (`d = 1`, `C_g = ‖Â‖₂`); the generic form keeps `d` as
/// the maximum degree.
pub fn bound_inputs(p: &ModelParams, g: &Graph, eta: f64, layers: usize, measured: bool) -> BoundInputs {
    let adj = normalized_adjacency(g);
    let norms = p
        .weight_matrices()
        .iter()
        .take(layers)
        .map(|w| spectral_norm(w, 1000, 1e-14))
        .collect();
    BoundInputs {
        layers,
        spectral_norms: norms,
        c_phi: 1.0,
        c_rho: 1.0,
        c_g: operator_norm(&adj),
        d: if measured { 1.0 } else { g.max_degree() as f64 },
        r: input_radius(g.features()),
        eta,
    }
}

/// Sub-Gaussian tail check at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub lambda: f64,
    pub empirical: f64,
    pub bound: f64,
    /// `empirical + 1/trials ≥ bound`.
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    /// Δ_G with measured constants; violations count against this one.
    pub delta_g: f64,
    pub delta_g_generic: f64,
    pub sigma2: f64,
    pub trials: usize,
    pub deviations: Vec<f64>,
    pub max_observed_deviation: f64,
    pub violations: usize,
    pub tail: Vec<TailCheck>,
    /// Per-trial fraction of checked nodes whose prediction is unchanged.
    pub agreements: Vec<f64>,
    pub empirical_agreement: Option<f64>,
    pub theoretical_agreement_lb: Option<f64>,
    pub gamma_min: Option<f64>,
}

fn max_row_deviation(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    (0..a.rows())
        .map(|i| crate::matrix::squared_distance(a.row(i), b.row(i)).sqrt())
        .fold(0.0, f64::max)
}

const TAIL_GRID: usize = 10;

/// Perturbs `W₁, W₂` (and `W_c`, which cannot affect embeddings) `trials`
/// times at ratio `eta` and records the worst per-node embedding deviation.
/// Trial `t` uses seed `seed + t`.
pub fn empirical_perturbation_check(p: &ModelParams, g: &Graph, eta: f64, trials: usize, seed: u64) -> Result<BoundReport> {
    const LAYERS: usize = 2;
    let inputs = bound_inputs(p, g, eta, LAYERS, true);
    let delta = delta_g(&inputs)?;
    let generic = bound_inputs(p, g, eta, LAYERS, false);
    let delta_generic = delta_g(&generic)?;
    let adj = normalized_adjacency(g);
    let base = forward(p, &adj, g.features(), None)?;

    let runs = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let (q, rho) = perturb_params(p, eta, seed.wrapping_add(t))?;
            let out = forward(&q, &adj, g.features(), None)?;
            Ok((max_row_deviation(&base.embeddings, &out.embeddings), rho))
        })
        .collect::<Result<Vec<_>>>()?;

    let rho = runs.first().map(|(_, r)| r.clone()).unwrap_or_else(|| vec![0.0; 3]);
    let sigma2 = proxy_variance(&inputs.spectral_norms, &rho, eta, generic.d, LAYERS)?;
    let deviations: Vec<f64> = runs.into_iter().map(|(d, _)| d).collect();
    let violations = deviations.iter().filter(|&&d| d > delta).count();
    let max_dev = deviations.iter().copied().fold(0.0, f64::max);

    let tail = if delta > 0.0 && trials > 0 {
        (1..TAIL_GRID)
            .map(|k| {
                let lambda = delta * k as f64 / TAIL_GRID as f64;
                let empirical = deviations.iter().filter(|&&d| d < lambda).count() as f64 / trials as f64;
                let bound = if sigma2 > 0.0 {
                    1.0 - (-(delta - lambda).powi(2) / (2.0 * sigma2)).exp()
                } else {
                    1.0
                };
                TailCheck {
                    lambda,
                    empirical,
                    bound,
                    holds: empirical + 1.0 / trials as f64 >= bound,
                }
            })
            .collect()
    } else {
        Vec::new()
    };

    Ok(BoundReport {
        inputs,
        delta_g: delta,
        delta_g_generic: delta_generic,
        sigma2,
        trials,
        deviations,
        max_observed_deviation: max_dev,
        violations,
        tail,
        agreements: Vec::new(),
        empirical_agreement: None,
        theoretical_agreement_lb: None,
        gamma_min: None,
    })
}

/// `1 − (C − 1)·exp(−γ²/(8σ²))` clamped to `[0, 1]`.
pub fn agreement_bound(classes: usize, gamma: f64, sigma2: f64) -> f64 {
    if sigma2 == 0.0 {
        return if gamma > 0.0 { 1.0 } else { 0.0 };
    }
    let b = 1.0 - (classes as f64 - 1.0) * (-(gamma * gamma) / (8.0 * sigma2)).exp();
    b.clamp(0.0, 1.0)
}

/// Perturbs all three weight matrices and measures how often predictions on
/// `nodes` survive, against the per-node-averaged agreement bound.
pub fn agreement_check(
    p: &ModelParams,
    g: &Graph,
    nodes: &[usize],
    eta: f64,
    trials: usize,
    seed: u64,
) -> Result<BoundReport> {
    const LAYERS: usize = 3;
    if nodes.is_empty() {
        return Err(Error::EmptyMask);
    }
    if let Some(&v) = nodes.iter().find(|&&v| v >= g.num_nodes()) {
        return Err(Error::IndexOutOfRange {
            index: v,
            len: g.num_nodes(),
        });
    }
    let inputs = bound_inputs(p, g, eta, LAYERS, true);
    let delta = delta_g(&inputs)?;
    let generic = bound_inputs(p, g, eta, LAYERS, false);
    let delta_generic = delta_g(&generic)?;
    let adj = normalized_adjacency(g);
    let base = forward(p, &adj, g.features(), None)?;
    let pred: Vec<usize> = nodes.iter().map(|&v| base.logits.row_argmax(v)).collect();

    let runs = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let (q, rho) = perturb_params(p, eta, seed.wrapping_add(t))?;
            let out = forward(&q, &adj, g.features(), None)?;
            let kept = nodes
                .iter()
                .zip(&pred)
                .filter(|(&v, &c)| out.logits.row_argmax(v) == c)
                .count();
            Ok((kept as f64 / nodes.len() as f64, rho))
        })
        .collect::<Result<Vec<_>>>()?;

    let rho = runs.first().map(|(_, r)| r.clone()).unwrap_or_else(|| vec![0.0; 3]);
    let sigma2 = proxy_variance(&inputs.spectral_norms, &rho, eta, generic.d, LAYERS)?;
    let agreements: Vec<f64> = runs.into_iter().map(|(a, _)| a).collect();
    let empirical = if trials == 0 {
        1.0
    } else {
        agreements.iter().sum::<f64>() / trials as f64
    };
    let gammas: Vec<f64> = nodes
        .iter()
        .map(|&v| {
            let z = base.logits.row(v);
            let (a, b) = top_two(z);
            z[a] - z[b]
        })
        .collect();
    let classes = p.num_classes();
    let lb = gammas.iter().map(|&gm| agreement_bound(classes, gm, sigma2)).sum::<f64>() / gammas.len() as f64;

    Ok(BoundReport {
        inputs,
        delta_g: delta,
        delta_g_generic: delta_generic,
        sigma2,
        trials,
        deviations: Vec::new(),
        max_observed_deviation: 0.0,
        violations: 0,
        tail: Vec::new(),
        agreements,
        empirical_agreement: Some(empirical),
        theoretical_agreement_lb: Some(lb),
        gamma_min: gammas.iter().copied().reduce(f64::min),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(l: usize, d: f64, eta: f64) -> BoundInputs {
        BoundInputs {
            layers: l,
            spectral_norms: vec![1.0; l],
            c_phi: 1.0,
            c_rho: 1.0,
            c_g: 1.0,
            d,
            r: 1.0,
            eta,
        }
    }

    #[test]
    fn delta_g_fixtures() {
        assert_eq!(delta_g(&unit(2, 1.0, 0.0)).unwrap(), 0.0);
        assert!((delta_g(&unit(2, 1.0, 0.5)).unwrap() - E).abs() < 1e-12);
        // dC = 2, L = 3: geometric factor 3
        let b = unit(3, 2.0, 0.25);
        assert!((delta_g(&b).unwrap() - E * 3.0 * 0.25 * 3.0).abs() < 1e-12);
        assert!(matches!(delta_g(&unit(2, 1.0, 0.6)), Err(Error::HypothesisViolated { .. })));
    }

    #[test]
    fn proxy_variance_fixtures() {
        assert_eq!(proxy_variance(&[1.0, 1.0], &[0.0, 0.0], 0.5, 1.0, 2).unwrap(), 0.0);
        assert!((proxy_variance(&[1.0, 1.0], &[1.0, 1.0], 0.5, 1.0, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            proxy_variance(&[0.0, 1.0], &[1.0, 1.0], 0.5, 1.0, 2),
            Err(Error::DegenerateWeight(_))
        ));
    }

    #[test]
    fn agreement_bound_fixtures() {
        let s2 = 0.3;
        let b = agreement_bound(2, (8.0f64 * s2).sqrt(), s2);
        assert!((b - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!((agreement_bound(5, 1e6, 1.0) - 1.0).abs() < 1e-12);
        assert_eq!(agreement_bound(5, 0.0, 1.0), 0.0);
    }

    #[test]
    fn operator_norm_of_normalized_adjacency_is_one() {
        let g = crate::graph::build_graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], DenseMatrix::zeros(4, 1), vec![0; 4], 1)
            .unwrap();
        assert!((operator_norm(&normalized_adjacency(&g)) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn radius_is_largest_row_norm() {
        let x = DenseMatrix::from_rows(&[vec![3.0, 4.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(input_radius(&x), 5.0);
    }
}
