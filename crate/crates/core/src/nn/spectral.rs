use crate::matrix::DenseMatrix;

pub const DEFAULT_ITERS: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-10;

/// Largest singular value by power iteration on `WᵀW`.
///
/// Stops once the relative change of the estimate drops below `tol`, or after
/// `iters` rounds.
pub fn spectral_norm(w: &DenseMatrix, iters: usize, tol: f64) -> f64 {
    let (rows, cols) = w.shape();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    // deterministic start with no special alignment
    let mut v: Vec<f64> = (0..cols)
        .map(|j| 1.0 + (j as f64 * 0.618_033_988_75).fract())
        .collect();
    normalize(&mut v);
    let mut sigma = 0.0;
    for _ in 0..iters.max(1) {
        let wv = apply(w, &v);
        let s = norm(&wv);
        if s == 0.0 {
            return 0.0;
        }
        let mut next = apply_t(w, &wv);
        normalize(&mut next);
        v = next;
        let done = (s - sigma).abs() <= tol * s;
        sigma = s;
        if done {
            break;
        }
    }
    norm(&apply(w, &v)).max(sigma)
}

pub fn spectral_norm_default(w: &DenseMatrix) -> f64 {
    spectral_norm(w, DEFAULT_ITERS, DEFAULT_TOL)
}

fn apply(w: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    (0..w.rows()).map(|i| crate::matrix::dot(w.row(i), v)).collect()
}

fn apply_t(w: &DenseMatrix, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    for (i, &ui) in u.iter().enumerate() {
        for (o, &x) in out.iter_mut().zip(w.row(i)) {
            *o += ui * x;
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        assert!((spectral_norm_default(&DenseMatrix::identity(3)) - 1.0).abs() < 1e-12);
        let d = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.5]]).unwrap();
        assert!((spectral_norm_default(&d) - 2.0).abs() < 1e-12);
        assert_eq!(spectral_norm_default(&DenseMatrix::zeros(2, 3)), 0.0);
    }
}
