use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::kernel::KernelSpec;
use crate::error::{Error, Result};
use crate::linalg::cholesky_jittered;

/// Training data: `n x d` inputs, `n` observations and a homogeneous noise variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub points: DMatrix<f64>,
    pub observations: DVector<f64>,
    pub noise_variance: f64,
}

impl Design {
    pub fn new(points: DMatrix<f64>, observations: DVector<f64>, noise_variance: f64) -> Result<Self> {
        if points.nrows() != observations.len() {
            return Err(Error::DimensionMismatch {
                expected: points.nrows(),
                got: observations.len(),
            });
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(Error::InvalidHyperparameter(format!(
                "noise variance {noise_variance} must be nonnegative"
            )));
        }
        Ok(Self {
            points,
            observations,
            noise_variance,
        })
    }

    pub fn empty(dim: usize, noise_variance: f64) -> Self {
        Self {
            points: DMatrix::zeros(0, dim),
            observations: DVector::zeros(0),
            noise_variance,
        }
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Design with `points`/`obs` appended.
    pub fn extended(&self, points: &DMatrix<f64>, obs: &DVector<f64>) -> Result<Self> {
        if points.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: points.ncols(),
            });
        }
        if points.nrows() != obs.len() {
            return Err(Error::DimensionMismatch {
                expected: points.nrows(),
                got: obs.len(),
            });
        }
        let n = self.len();
        let q = points.nrows();
        let all = DMatrix::from_fn(n + q, self.dim(), |i, j| {
            if i < n {
                self.points[(i, j)]
            } else {
                points[(i - n, j)]
            }
        });
        let y = DVector::from_fn(n + q, |i, _| if i < n { self.observations[i] } else { obs[i - n] });
        Ok(Self {
            points: all,
            observations: y,
            noise_variance: self.noise_variance,
        })
    }
}

/// Posterior of a constant-mean Gaussian process conditioned on a [`Design`].
///
/// The posterior is immutable: [`GpPosterior::update`] returns a new value. The
/// cached factor `L` satisfies `L L^T = K_n + (tau^2 + jitter) I`.
#[derive(Clone, Debug)]
pub struct GpPosterior {
    kernel: KernelSpec,
    design: Design,
    prior_mean: f64,
    jitter: f64,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
}

impl GpPosterior {
    /// Prior process (no observations).
    pub fn prior(kernel: KernelSpec, prior_mean: f64, noise_variance: f64) -> Result<Self> {
        kernel.validate()?;
        let dim = kernel.dim();
        Self::fit(kernel, Design::empty(dim, noise_variance), prior_mean)
    }

    /// Exact conditioning on the whole design.
    pub fn fit(kernel: KernelSpec, design: Design, prior_mean: f64) -> Result<Self> {
        kernel.validate()?;
        if design.dim() != kernel.dim() {
            return Err(Error::DimensionMismatch {
                expected: kernel.dim(),
                got: design.dim(),
            });
        }
        let n = design.len();
        let mut k = kernel.gram(&design.points);
        for i in 0..n {
            k[(i, i)] += design.noise_variance;
        }
        let (chol, jitter) = match cholesky_jittered(&k, kernel.variance) {
            Some((c, j)) => (c.unpack(), j),
            None => {
                return Err(Error::SingularDesign {
                    pairs: near_duplicates(&design.points),
                })
            }
        };
        let resid = design.observations.map(|y| y - prior_mean);
        let alpha = solve_with_factor(&chol, &resid);
        Ok(Self {
            kernel,
            design,
            prior_mean,
            jitter,
            chol,
            alpha,
        })
    }

    /// Rank-q update with new observations. Extends the Cholesky factor by a
    /// block instead of refactoring, costing `O(q n^2 + q^3)`; falls back to a
    /// full refit when the Schur complement is not positive definite at the
    /// current jitter.
    pub fn update(&self, new_points: &DMatrix<f64>, new_obs: &DVector<f64>) -> Result<Self> {
        if new_points.nrows() == 0 {
            return Err(Error::InvalidArgument("update needs at least one point".into()));
        }
        let design = self.design.extended(new_points, new_obs)?;
        let n = self.design.len();
        let q = new_points.nrows();
        let cross = self.kernel.cross(&self.design.points, new_points);
        let w = if n > 0 {
            self.chol
                .solve_lower_triangular(&cross)
                .expect("factor has positive diagonal")
        } else {
            DMatrix::zeros(0, q)
        };
        let mut schur = self.kernel.gram(new_points);
        for i in 0..q {
            schur[(i, i)] += self.design.noise_variance + self.jitter;
        }
        schur -= w.transpose() * &w;
        let Some(block) = nalgebra::Cholesky::new(schur).map(|c| c.unpack()) else {
            return Self::fit(self.kernel.clone(), design, self.prior_mean);
        };
        let mut chol = DMatrix::zeros(n + q, n + q);
        chol.view_mut((0, 0), (n, n)).copy_from(&self.chol);
        chol.view_mut((n, 0), (q, n)).copy_from(&w.transpose());
        chol.view_mut((n, n), (q, q)).copy_from(&block);
        let resid = design.observations.map(|y| y - self.prior_mean);
        let alpha = solve_with_factor(&chol, &resid);
        Ok(Self {
            kernel: self.kernel.clone(),
            design,
            prior_mean: self.prior_mean,
            jitter: self.jitter,
            chol,
            alpha,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn noise_variance(&self) -> f64 {
        self.design.noise_variance
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// Short content hash of kernel, mean and design, used to tag derived artifacts.
    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{:?}|{}|", self.kernel, self.prior_mean).as_bytes());
        h.update(self.design.noise_variance.to_le_bytes());
        for v in self.design.points.iter().chain(self.design.observations.iter()) {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// `k(X_n, x)` for a single point.
    fn k_vec(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.design.len(), |i, _| self.kernel.eval_row(x, &self.design.points, i))
    }

    /// `L^{-1} k(X_n, points)`, an `n x m` matrix. Posterior quantities follow
    /// from it as `K_n(a, b) = k(a, b) - v_a^T v_b`.
    pub fn whiten(&self, points: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.kernel.cross(&self.design.points, points);
        if self.design.is_empty() {
            return k;
        }
        self.chol.solve_lower_triangular(&k).expect("factor has positive diagonal")
    }

    pub(crate) fn whiten_point(&self, x: &[f64]) -> DVector<f64> {
        let k = self.k_vec(x);
        if self.design.is_empty() {
            return k;
        }
        self.chol.solve_lower_triangular(&k).expect("factor has positive diagonal")
    }

    /// Posterior mean `m_n(x)`.
    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.prior_mean + self.k_vec(x).dot(&self.alpha))
    }

    /// Posterior covariance `K_n(x, x')`.
    pub fn cov(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        self.check_dim(y.len())?;
        let vx = self.whiten_point(x);
        let vy = self.whiten_point(y);
        Ok(self.kernel.eval_unchecked(x, y) - vx.dot(&vy))
    }

    /// Posterior variance clamped at zero.
    pub fn variance(&self, x: &[f64]) -> Result<f64> {
        Ok(self.cov(x, x)?.max(0.0))
    }

    /// Posterior standard deviation `s_n(x)`.
    pub fn sd(&self, x: &[f64]) -> Result<f64> {
        Ok(self.variance(x)?.sqrt())
    }

    /// Mean and clamped variance at every row of `points`.
    pub fn predict(&self, points: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_dim(points.ncols())?;
        let (mean, var, _) = self.predict_whitened(points);
        Ok((mean, var))
    }

    /// Mean, variance and the whitened cross-covariance of `points`.
    pub(crate) fn predict_whitened(&self, points: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>, DMatrix<f64>) {
        let k = self.kernel.cross(&self.design.points, points);
        let m = points.nrows();
        if self.design.is_empty() {
            return (
                DVector::from_element(m, self.prior_mean),
                DVector::from_element(m, self.kernel.variance),
                k,
            );
        }
        let mean = DVector::from_fn(m, |j, _| self.prior_mean + k.column(j).dot(&self.alpha));
        let v = self.chol.solve_lower_triangular(&k).expect("factor has positive diagonal");
        let var = DVector::from_fn(m, |j, _| (self.kernel.variance - v.column(j).norm_squared()).max(0.0));
        (mean, var, v)
    }

    /// Posterior cross-covariance `[K_n(a_i, b_j)]`.
    pub fn cross_cov(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(a.ncols())?;
        self.check_dim(b.ncols())?;
        let prior = self.kernel.cross(a, b);
        if self.design.is_empty() {
            return Ok(prior);
        }
        let va = self.whiten(a);
        let vb = self.whiten(b);
        Ok(prior - va.transpose() * vb)
    }

    /// Posterior covariance matrix of `points`, symmetrized.
    pub fn covariance(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(points.ncols())?;
        let prior = self.kernel.gram(points);
        if self.design.is_empty() {
            return Ok(prior);
        }
        let v = self.whiten(points);
        let c = prior - v.transpose() * &v;
        Ok((&c + c.transpose()) * 0.5)
    }
}

fn solve_with_factor(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if l.nrows() == 0 {
        return DVector::zeros(0);
    }
    let z = l.solve_lower_triangular(b).expect("factor has positive diagonal");
    l.tr_solve_lower_triangular(&z).expect("factor has positive diagonal")
}

fn near_duplicates(points: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = points.nrows();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..i {
            let d2: f64 = (0..points.ncols()).map(|c| (points[(i, c)] - points[(j, c)]).powi(2)).sum();
            if d2.sqrt() < 1e-8 {
                pairs.push((j, i));
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::MaternNu;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kernel2() -> KernelSpec {
        KernelSpec::new(MaternNu::FiveHalves, vec![0.3, 0.4], 1.3).unwrap()
    }

    fn random_design(n: usize, seed: u64, noise: f64) -> Design {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
        let y = DVector::from_fn(n, |i, _| (3.0 * pts[(i, 0)]).sin() + pts[(i, 1)]);
        Design::new(pts, y, noise).unwrap()
    }

    fn grid(m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m * m, 2, |i, j| if j == 0 { (i / m) as f64 } else { (i % m) as f64 } / (m - 1) as f64)
    }

    /// Posterior via a dense LU solve of the full system, independent of the factor.
    fn dense_oracle(k: &KernelSpec, d: &Design, mu: f64, pts: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let mut kk = k.gram(&d.points);
        for i in 0..d.len() {
            kk[(i, i)] += d.noise_variance;
        }
        let lu = kk.lu();
        let kx = k.cross(&d.points, pts);
        let r = d.observations.map(|y| y - mu);
        let a = lu.solve(&r).unwrap();
        let mean = DVector::from_fn(pts.nrows(), |j, _| mu + kx.column(j).dot(&a));
        let cov = k.gram(pts) - kx.transpose() * lu.solve(&kx).unwrap();
        (mean, cov)
    }

    #[test]
    fn empty_design_is_prior() {
        let p = GpPosterior::prior(kernel2(), 0.7, 0.0).unwrap();
        assert_eq!(p.mean(&[0.2, 0.3]).unwrap(), 0.7);
        assert!((p.sd(&[0.2, 0.3]).unwrap() - 1.3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn single_point_interpolates() {
        let d = Design::new(DMatrix::from_row_slice(1, 2, &[0.4, 0.6]), DVector::from_vec(vec![2.5]), 0.0).unwrap();
        let p = GpPosterior::fit(kernel2(), d, 0.0).unwrap();
        assert!((p.mean(&[0.4, 0.6]).unwrap() - 2.5).abs() < 1e-12);
        assert!(p.sd(&[0.4, 0.6]).unwrap() < 1e-6);
    }

    #[test]
    fn matches_dense_oracle() {
        let d = random_design(5, 1, 0.0);
        let p = GpPosterior::fit(kernel2(), d.clone(), 0.2).unwrap();
        let g = grid(6);
        let (m_or, c_or) = dense_oracle(&kernel2(), &d, 0.2, &g);
        let (m, _) = p.predict(&g).unwrap();
        let c = p.covariance(&g).unwrap();
        assert!((m - m_or).amax() < 1e-10);
        assert!((c - c_or).amax() < 1e-10);
    }

    #[test]
    fn update_matches_refit() {
        for (q, noise) in [(1, 0.0), (3, 0.0), (2, 0.05)] {
            let d = random_design(8 + q, 7 + q as u64, noise);
            let head = Design::new(
                d.points.rows(0, 8).into_owned(),
                d.observations.rows(0, 8).into_owned(),
                noise,
            )
            .unwrap();
            let p = GpPosterior::fit(kernel2(), head, 0.0).unwrap();
            let up = p
                .update(&d.points.rows(8, q).into_owned(), &d.observations.rows(8, q).into_owned())
                .unwrap();
            let full = GpPosterior::fit(kernel2(), d, 0.0).unwrap();
            let g = grid(10);
            let (m1, _) = up.predict(&g).unwrap();
            let (m2, _) = full.predict(&g).unwrap();
            assert!((m1 - m2).amax() <= 1e-8);
            let c1 = up.covariance(&g).unwrap();
            let c2 = full.covariance(&g).unwrap();
            assert!((c1 - c2).amax() <= 1e-8);
        }
    }

    #[test]
    fn batch_update_equals_sequential_updates() {
        let d = random_design(9, 3, 0.0);
        let head = Design::new(d.points.rows(0, 6).into_owned(), d.observations.rows(0, 6).into_owned(), 0.0).unwrap();
        let p = GpPosterior::fit(kernel2(), head, 0.0).unwrap();
        let batch = p
            .update(&d.points.rows(6, 3).into_owned(), &d.observations.rows(6, 3).into_owned())
            .unwrap();
        let mut seq = p.clone();
        for i in 6..9 {
            seq = seq
                .update(&d.points.rows(i, 1).into_owned(), &d.observations.rows(i, 1).into_owned())
                .unwrap();
        }
        let g = grid(8);
        assert!((batch.covariance(&g).unwrap() - seq.covariance(&g).unwrap()).amax() < 1e-10);
        assert!((batch.predict(&g).unwrap().0 - seq.predict(&g).unwrap().0).amax() < 1e-10);
    }

    #[test]
    fn repeated_noisy_point_reduces_variance() {
        let d = random_design(6, 11, 0.1);
        let p = GpPosterior::fit(kernel2(), d.clone(), 0.0).unwrap();
        let x: Vec<f64> = vec![d.points[(2, 0)], d.points[(2, 1)]];
        let before = p.variance(&x).unwrap();
        let up = p
            .update(&DMatrix::from_row_slice(1, 2, &x), &DVector::from_vec(vec![d.observations[2]]))
            .unwrap();
        assert!(up.variance(&x).unwrap() < before);
    }

    #[test]
    fn variance_nonincreasing_under_conditioning() {
        let d = random_design(12, 5, 0.0);
        let g = grid(9);
        let mut prev = GpPosterior::prior(kernel2(), 0.0, 0.0).unwrap();
        let (_, mut v_prev) = prev.predict(&g).unwrap();
        for i in 0..12 {
            prev = prev
                .update(&d.points.rows(i, 1).into_owned(), &d.observations.rows(i, 1).into_owned())
                .unwrap();
            let (_, v) = prev.predict(&g).unwrap();
            for j in 0..v.len() {
                assert!(v[j] <= v_prev[j] + 1e-10);
            }
            v_prev = v;
        }
    }

    #[test]
    fn duplicate_noise_free_points_are_absorbed_by_jitter() {
        let pts = DMatrix::from_row_slice(2, 2, &[0.3, 0.3, 0.3, 0.3]);
        let d = Design::new(pts, DVector::from_vec(vec![1.0, 1.0]), 0.0).unwrap();
        let p = GpPosterior::fit(kernel2(), d, 0.0).unwrap();
        assert!(p.jitter() > 0.0);
        assert!((p.mean(&[0.3, 0.3]).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let r = Design::new(DMatrix::zeros(3, 2), DVector::zeros(2), 0.0);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }
}
