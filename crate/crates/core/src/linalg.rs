//! Small dense factorization helpers shared by the GP and sampling code.

use nalgebra::{Cholesky, DMatrix, Dyn};

/// Relative jitter ladder: none first, then 1e-10 up to 1e-6 (times the scale).
pub(crate) const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky factorization of `a + jitter * I`, escalating the jitter along
/// [`JITTER_LADDER`] (relative to `scale`). Returns the factor and the
/// absolute jitter used, or `None` if every attempt failed.
pub(crate) fn cholesky_jittered(a: &DMatrix<f64>, scale: f64) -> Option<(Cholesky<f64, Dyn>, f64)> {
    for rel in JITTER_LADDER {
        let jitter = rel * scale;
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            if c.l_dirty().diagonal().iter().all(|v| v.is_finite() && *v > 0.0) {
                return Some((c, jitter));
            }
        }
    }
    None
}

/// Lower-triangular factor `L` with `L L^T ~= a` for a positive semidefinite
/// matrix. Pivots below `1e-12 * max(max_diag, scale)` are treated as exact
/// zeros so that degenerate directions (e.g. noise-free training points) are
/// reproduced without artificial noise; `scale` is the prior variance, which
/// sets the size of rounding errors in a posterior covariance. Falls back to
/// the jitter ladder when the matrix is materially indefinite.
pub(crate) fn psd_factor(a: &DMatrix<f64>, scale: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let reference = (0..n).map(|i| a[(i, i)]).fold(scale, f64::max);
    for rel in JITTER_LADDER {
        let jitter = rel * scale;
        if let Some(l) = try_psd_factor(a, jitter, reference) {
            return Some(l);
        }
    }
    None
}

fn try_psd_factor(a: &DMatrix<f64>, jitter: f64, reference: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let zero_tol = 1e-12 * reference;
    let neg_tol = 1e-9 * reference;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + jitter;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d > zero_tol {
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        } else if d < -neg_tol || !d.is_finite() {
            return None;
        }
    }
    Some(l)
}
