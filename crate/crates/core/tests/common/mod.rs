#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cited_core::{build_graph, DenseMatrix, Graph, SbmConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))
}

/// Erdős–Rényi graph with random features and labels.
pub fn random_graph(n: usize, d0: usize, classes: usize, p_edge: f64, rng: &mut impl Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p_edge {
                edges.push((u, v));
            }
        }
    }
    let x = random_matrix(n, d0, 1.0, rng);
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    build_graph(n, &edges, x, labels, classes).unwrap()
}

pub fn small_sbm(seed: u64) -> SbmConfig {
    SbmConfig {
        blocks: 3,
        nodes_per_block: 40,
        p_in: 0.3,
        p_out: 0.02,
        feat_dim: 8,
        class_mean_separation: 3.0,
        feat_noise_sigma: 0.5,
        seed,
        train_per_class: 10,
        val_per_class: 10,
    }
}

/// The fixed three-block, 60-nodes-per-block instance the calibration runs use.
pub fn acceptance_sbm(seed: u64) -> SbmConfig {
    SbmConfig {
        nodes_per_block: 60,
        train_per_class: 20,
        val_per_class: 20,
        ..small_sbm(seed)
    }
}
