use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothness of the one-dimensional Matérn factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaternNu {
    #[serde(rename = "3/2", alias = "1.5")]
    ThreeHalves,
    #[serde(rename = "5/2", alias = "2.5")]
    FiveHalves,
}

impl MaternNu {
    /// Unit-variance correlation at scaled distance `r >= 0`.
    #[inline]
    pub fn correlation(self, r: f64) -> f64 {
        match self {
            MaternNu::ThreeHalves => {
                let s = 3f64.sqrt() * r;
                (1.0 + s) * (-s).exp()
            }
            MaternNu::FiveHalves => {
                let s = 5f64.sqrt() * r;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }
}

impl std::str::FromStr for MaternNu {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "3/2" | "1.5" => Ok(MaternNu::ThreeHalves),
            "5/2" | "2.5" => Ok(MaternNu::FiveHalves),
            _ => Err(Error::InvalidHyperparameter(format!("unsupported Matérn smoothness {s}"))),
        }
    }
}

/// Tensor-product Matérn covariance `k(x, x') = s2 * prod_i k_nu(|x_i - x'_i| / theta_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub nu: MaternNu,
    pub lengthscales: Vec<f64>,
    pub variance: f64,
}

impl KernelSpec {
    pub fn new(nu: MaternNu, lengthscales: Vec<f64>, variance: f64) -> Result<Self> {
        let k = Self {
            nu,
            lengthscales,
            variance,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidHyperparameter("no lengthscales".into()));
        }
        if let Some(t) = self.lengthscales.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidHyperparameter(format!("lengthscale {t} must be positive")));
        }
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(Error::InvalidHyperparameter(format!(
                "variance {} must be positive",
                self.variance
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Checked evaluation of `k(x, x')`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.validate()?;
        for p in [x, y] {
            if p.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    got: p.len(),
                });
            }
        }
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut k = self.variance;
        for ((a, b), t) in x.iter().zip(y).zip(&self.lengthscales) {
            k *= self.nu.correlation((a - b).abs() / t);
        }
        k
    }

    /// Kernel between point `x` and row `i` of `points`.
    #[inline]
    pub(crate) fn eval_row(&self, x: &[f64], points: &DMatrix<f64>, i: usize) -> f64 {
        let mut k = self.variance;
        for (j, t) in self.lengthscales.iter().enumerate() {
            k *= self.nu.correlation((x[j] - points[(i, j)]).abs() / t);
        }
        k
    }

    /// Cross-covariance matrix `[k(a_i, b_j)]`.
    pub fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let rows_b: Vec<Vec<f64>> = (0..b.nrows()).map(|j| (0..d).map(|c| b[(j, c)]).collect()).collect();
        let mut out = DMatrix::zeros(a.nrows(), b.nrows());
        let mut xa = vec![0.0; d];
        for i in 0..a.nrows() {
            for (c, v) in xa.iter_mut().enumerate() {
                *v = a[(i, c)];
            }
            for (j, xb) in rows_b.iter().enumerate() {
                out[(i, j)] = self.eval_unchecked(&xa, xb);
            }
        }
        out
    }

    /// Symmetric Gram matrix of the rows of `points`.
    pub fn gram(&self, points: &DMatrix<f64>) -> DMatrix<f64> {
        let n = points.nrows();
        let d = self.dim();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..d).map(|c| points[(i, c)]).collect()).collect();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.variance;
            for j in 0..i {
                let v = self.eval_unchecked(&rows[i], &rows[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matern32_unit_distance() {
        // (1 + sqrt 3) exp(-sqrt 3), evaluated with an arbitrary-precision calculator
        let k = KernelSpec::new(MaternNu::ThreeHalves, vec![1.0], 1.0).unwrap();
        let v = k.eval(&[0.0], &[1.0]).unwrap();
        assert!((v - 0.483_357_724_596_507_65).abs() < 1e-14);
    }

    #[test]
    fn matern52_reference_value() {
        let k = KernelSpec::new(MaternNu::FiveHalves, vec![1.0], 1.0).unwrap();
        let v = k.eval(&[0.3], &[1.0]).unwrap();
        assert!((v - 0.706_942_681_904_097_75).abs() < 1e-14);
    }

    #[test]
    fn zero_distance_is_variance() {
        let k = KernelSpec::new(MaternNu::ThreeHalves, vec![0.2, 3.0], 2.5).unwrap();
        assert_eq!(k.eval(&[0.4, 0.1], &[0.4, 0.1]).unwrap(), 2.5);
    }

    #[test]
    fn tensor_product_with_zero_distance_factor() {
        let k1 = KernelSpec::new(MaternNu::FiveHalves, vec![1.0], 1.0).unwrap();
        let k2 = KernelSpec::new(MaternNu::FiveHalves, vec![1.0, 1.0], 1.0).unwrap();
        for r in [0.1, 0.7, 2.3] {
            let a = k1.eval(&[0.0], &[r]).unwrap();
            let b = k2.eval(&[0.0, 0.5], &[r, 0.5]).unwrap();
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(KernelSpec::new(MaternNu::ThreeHalves, vec![0.0], 1.0).is_err());
        assert!(KernelSpec::new(MaternNu::ThreeHalves, vec![1.0], -1.0).is_err());
        let k = KernelSpec::new(MaternNu::ThreeHalves, vec![1.0, 1.0], 1.0).unwrap();
        assert!(matches!(
            k.eval(&[0.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gram_is_psd() {
        let k = KernelSpec::new(MaternNu::ThreeHalves, vec![0.3, 0.5], 1.7).unwrap();
        let pts = DMatrix::from_fn(25, 2, |i, j| ((i * 7 + j * 13) % 25) as f64 / 25.0);
        let g = k.gram(&pts);
        let eig = g.symmetric_eigenvalues();
        assert!(eig.min() >= -1e-8 * 1.7);
        assert!((&g - g.transpose()).amax() == 0.0);
    }
}
