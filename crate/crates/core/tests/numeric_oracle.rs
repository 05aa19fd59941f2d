//! Spectral norm against a cyclic-Jacobi eigen-solver, softmax/entropy
//! bounds, and weight surgery against sort-based oracles.

mod common;

use proptest::prelude::*;
use rand::Rng;

use cited_core::matrix::{entropy, softmax};
use cited_core::nn::{init_params, perturb_params, prune_weights, spectral_norm, spectral_norm_default};
use cited_core::{forward, normalized_adjacency, DenseMatrix, Error};

/// Largest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_max_eigenvalue(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).fold(f64::NEG_INFINITY, f64::max)
}

fn gram(w: &DenseMatrix) -> Vec<Vec<f64>> {
    let c = w.cols();
    (0..c)
        .map(|i| (0..c).map(|j| (0..w.rows()).map(|r| w.get(r, i) * w.get(r, j)).sum()).collect())
        .collect()
}

#[test]
fn spectral_norm_matches_eigen_oracle() {
    let mut rng = common::rng(4);
    for _ in 0..30 {
        let w = common::random_matrix(5, 4, 1.0, &mut rng);
        let oracle = jacobi_max_eigenvalue(gram(&w)).sqrt();
        let est = spectral_norm(&w, 100, 1e-10);
        assert!((est - oracle).abs() < 1e-8, "{est} vs {oracle}");
    }
}

#[test]
fn spectral_norm_dominates_random_directions() {
    let mut rng = common::rng(6);
    let w = common::random_matrix(7, 6, 1.0, &mut rng);
    let s = spectral_norm_default(&w);
    for _ in 0..100 {
        let v: Vec<f64> = (0..6).map(|_| rng.random::<f64>() - 0.5).collect();
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let wv: f64 = (0..7).map(|i| w.row(i).iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().powi(2)).sum::<f64>().sqrt();
        assert!(s >= wv / nv - 1e-12);
    }
}

#[test]
fn prune_zeroes_the_smallest_weights() {
    let mut rng = common::rng(12);
    for seed in 0..10 {
        let mut p = init_params(3, 4, 2, seed);
        for b in [&mut p.b1, &mut p.b2, &mut p.bc] {
            b.iter_mut().for_each(|v| *v = rng.random::<f64>() - 0.5);
        }
        let q = prune_weights(&p, 0.3).unwrap();
        let before = p.tensors();
        let after = q.tensors();
        let mut mags: Vec<f64> = [0, 2, 4].iter().flat_map(|&t| before[t].iter().map(|v| v.abs())).collect();
        let total = mags.len();
        mags.sort_by(f64::total_cmp);
        let k = (0.3 * total as f64).round() as usize;
        let cut = mags[k - 1];
        let mut zeroed = 0;
        for t in 0..6 {
            for (a, b) in before[t].iter().zip(after[t]) {
                if t % 2 == 1 {
                    assert_eq!(a.to_bits(), b.to_bits(), "bias changed");
                } else if *b == 0.0 && *a != 0.0 {
                    zeroed += 1;
                    assert!(a.abs() <= cut);
                } else {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
        assert_eq!(zeroed, k);
    }
}

#[test]
fn perturbation_hits_the_requested_ratio() {
    let p = init_params(5, 6, 3, 1);
    for seed in [3, 4] {
        let (q, rho) = perturb_params(&p, 0.25, seed).unwrap();
        for (i, (w, wq)) in p.weight_matrices().iter().zip(q.weight_matrices()).enumerate() {
            let mut u = (*wq).clone();
            u.add_scaled(w, -1.0);
            let ratio = spectral_norm(&u, 1000, 1e-14) / spectral_norm(w, 1000, 1e-14);
            assert!((ratio - 0.25).abs() < 1e-8, "layer {i}: {ratio}");
            assert!((rho[i] - 0.25 * spectral_norm(w, 1000, 1e-14)).abs() < 1e-8);
        }
    }
    let (a, ra) = perturb_params(&p, 0.25, 3).unwrap();
    let (b, rb) = perturb_params(&p, 0.25, 4).unwrap();
    assert_ne!(a, b);
    assert_eq!(ra, rb);
    let mut zero = p.clone();
    zero.w1 = DenseMatrix::zeros(5, 6);
    assert!(matches!(perturb_params(&zero, 0.25, 0), Err(Error::DegenerateWeight { .. })));
}

#[test]
fn inference_is_pure() {
    let mut rng = common::rng(1);
    let g = common::random_graph(12, 3, 2, 0.3, &mut rng);
    let p = init_params(3, 4, 2, 5);
    let adj = normalized_adjacency(&g);
    assert_eq!(forward(&p, &adj, g.features(), None).unwrap(), forward(&p, &adj, g.features(), None).unwrap());
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(z in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let h = entropy(&p);
        prop_assert!(h >= 0.0 && h <= (z.len() as f64).ln() + 1e-12);
    }
}
