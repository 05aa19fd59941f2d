//! Parameter surgery: magnitude pruning and norm-controlled random perturbation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::model::{ModelParams, IS_WEIGHT, TENSOR_NAMES};
use super::spectral::spectral_norm;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Zeroes the `round(fraction·N)` weight entries of smallest magnitude across
/// all weight matrices; biases are never touched. Ties go to the entry that
/// comes first in canonical parameter order.
pub fn prune_weights(p: &ModelParams, fraction: f64) -> Result<ModelParams> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!("prune fraction {fraction} outside [0, 1]")));
    }
    let tensors = p.tensors();
    let mut entries: Vec<(f64, usize, usize)> = Vec::new();
    for (t, vals) in tensors.iter().enumerate() {
        if IS_WEIGHT[t] {
            entries.extend(vals.iter().enumerate().map(|(i, v)| (v.abs(), t, i)));
        }
    }
    let count = (fraction * entries.len() as f64).round() as usize;
    // stable sort keeps canonical order among equal magnitudes
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = p.clone();
    let dst = out.tensors_mut();
    for &(_, t, i) in &entries[..count] {
        dst[t][i] = 0.0;
    }
    Ok(out)
}

/// Adds to every weight matrix `W_i` a Gaussian matrix rescaled to spectral
/// norm exactly `eta·‖W_i‖₂`. Returns the perturbed model and the bounds
/// `ρ_i = eta·‖W_i‖₂` in layer order (W1, W2, Wc).
pub fn perturb_params(p: &ModelParams, eta: f64, seed: u64) -> Result<(ModelParams, Vec<f64>)> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidConfig(format!("eta {eta} must be nonnegative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = p.clone();
    let mut rhos = Vec::with_capacity(3);
    let names = TENSOR_NAMES.iter().zip(IS_WEIGHT).filter(|(_, w)| *w).map(|(n, _)| *n);
    let targets = [&mut out.w1, &mut out.w2, &mut out.wc];
    for (w, name) in targets.into_iter().zip(names) {
        let norm = spectral_norm(w, 1000, 1e-14);
        if norm == 0.0 {
            return Err(Error::DegenerateWeight(name.to_string()));
        }
        let rho = eta * norm;
        let mut u = DenseMatrix::from_fn(w.rows(), w.cols(), |_, _| StandardNormal.sample(&mut rng));
        let un = spectral_norm(&u, 1000, 1e-14);
        let scale = if un > 0.0 { rho / un } else { 0.0 };
        u.map_inplace(|x| x * scale);
        w.add_scaled(&u, 1.0);
        rhos.push(rho);
    }
    Ok((out, rhos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::init_params;

    #[test]
    fn prune_extremes() {
        let p = init_params(3, 4, 2, 3);
        assert_eq!(prune_weights(&p, 0.0).unwrap(), p);
        let mut p2 = p.clone();
        p2.b1 = vec![0.1; 4];
        let all = prune_weights(&p2, 1.0).unwrap();
        assert!(all.weight_matrices().iter().all(|w| w.as_slice().iter().all(|&x| x == 0.0)));
        assert_eq!(all.b1, p2.b1);
    }

    #[test]
    fn prune_picks_smallest_magnitudes() {
        // 1x2, 2x2, 2x2 gives exactly ten weights
        let mut p = init_params(1, 2, 2, 0);
        let vals = [0.5, -0.05, 0.9, 0.01, -0.3, 0.07, -0.8, 0.6, 0.2, -0.4];
        p.w1.as_mut_slice().copy_from_slice(&vals[..2]);
        p.w2.as_mut_slice().copy_from_slice(&vals[2..6]);
        p.wc.as_mut_slice().copy_from_slice(&vals[6..]);
        let q = prune_weights(&p, 0.3).unwrap();
        let mut sorted: Vec<f64> = vals.iter().map(|v: &f64| v.abs()).collect();
        sorted.sort_by(f64::total_cmp);
        let cut = sorted[2];
        let got: Vec<f64> = q.weight_matrices().iter().flat_map(|w| w.as_slice().to_vec()).collect();
        let zeroed = got.iter().filter(|&&x| x == 0.0).count();
        assert_eq!(zeroed, 3);
        for (g, v) in got.iter().zip(vals) {
            if v.abs() <= cut {
                assert_eq!(*g, 0.0);
            } else {
                assert_eq!(g.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn perturbation_ratio_is_exact() {
        let p = init_params(5, 6, 3, 8);
        let eta = 0.2;
        for seed in [1, 2] {
            let (q, rho) = perturb_params(&p, eta, seed).unwrap();
            for ((w, wq), r) in p.weight_matrices().iter().zip(q.weight_matrices()).zip(&rho) {
                let mut u = (*wq).clone();
                u.add_scaled(w, -1.0);
                let ratio = spectral_norm(&u, 1000, 1e-14) / spectral_norm(w, 1000, 1e-14);
                assert!((ratio - eta).abs() < 1e-8);
                assert!((r - eta * spectral_norm(w, 1000, 1e-14)).abs() < 1e-12);
            }
        }
        let (a, ra) = perturb_params(&p, eta, 1).unwrap();
        let (b, rb) = perturb_params(&p, eta, 2).unwrap();
        assert_ne!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn zero_weight_is_degenerate() {
        let mut p = init_params(3, 3, 2, 0);
        p.w1.as_mut_slice().fill(0.0);
        assert!(matches!(perturb_params(&p, 0.1, 0), Err(Error::DegenerateWeight(n)) if n == "W1"));
    }
}
