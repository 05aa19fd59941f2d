//! Signature compression: k-means over the reference embeddings, keeping one
//! representative node per cluster.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::build::SignatureSet;
use super::commit::commit;
use super::scores::fraction_count;
use crate::error::{Error, Result};
use crate::matrix::{squared_distance, DenseMatrix};

pub const MAX_LLOYD_ITERS: usize = 50;

/// Lloyd's algorithm with k-means++ seeding. Returns `(centroids, assignment)`.
pub fn kmeans(points: &DenseMatrix, k: usize, seed: u64) -> (DenseMatrix, Vec<usize>) {
    let n = points.rows();
    let k = k.clamp(1, n.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<usize> = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(points.row(i), points.row(centers[0])))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        } else {
            // every point coincides with a chosen center
            (0..n).find(|i| !centers.contains(i)).unwrap_or(0)
        };
        centers.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), points.row(next)));
        }
    }
    let mut centroids = points.select_rows(&centers);
    let mut assign = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for (i, a) in assign.iter_mut().enumerate() {
            let best = nearest(centroids.row_iter(), points.row(i));
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = DenseMatrix::zeros(k, points.cols());
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, x) in sums.row_mut(a).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for (c, &cnt) in counts.iter().enumerate() {
            if cnt > 0 {
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s / cnt as f64;
                }
            }
        }
    }
    (centroids, assign)
}

fn nearest<'a>(rows: impl Iterator<Item = &'a [f64]>, p: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, row) in rows.enumerate() {
        let d = squared_distance(row, p);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

impl DenseMatrix {
    fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows()).map(move |i| self.row(i))
    }
}

/// Keeps `⌈keep_ratio·|sig|⌉` clusters' most central members.
pub fn group_compress(sig: &SignatureSet, keep_ratio: f64, seed: u64) -> Result<SignatureSet> {
    if !(keep_ratio > 0.0 && keep_ratio <= 1.0) {
        return Err(Error::InvalidConfig(format!("keep_ratio {keep_ratio} outside (0, 1]")));
    }
    let k = fraction_count(keep_ratio, sig.len()).max(1);
    if k >= sig.len() {
        return Ok(sig.clone());
    }
    let (centroids, assign) = kmeans(&sig.ref_embeddings, k, seed);
    let mut rep: Vec<Option<(f64, usize)>> = vec![None; k];
    // rows are in ascending node order, so strict `<` keeps the lower index on ties
    for (row, &c) in assign.iter().enumerate() {
        let d = squared_distance(sig.ref_embeddings.row(row), centroids.row(c));
        if rep[c].is_none_or(|(bd, _)| d < bd) {
            rep[c] = Some((d, row));
        }
    }
    let mut rows: Vec<usize> = rep.into_iter().flatten().map(|(_, r)| r).collect();
    rows.sort_unstable();
    let indices: Vec<usize> = rows.iter().map(|&r| sig.indices[r]).collect();
    Ok(SignatureSet {
        commitment: commit(&indices)?,
        ref_embeddings: sig.ref_embeddings.select_rows(&rows),
        ref_labels: rows.iter().map(|&r| sig.ref_labels[r]).collect(),
        indices,
    })
}
