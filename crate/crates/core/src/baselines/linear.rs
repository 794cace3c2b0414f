use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::SupervisedWindowSet;

pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Relative pivot size below which the design matrix counts as rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// True when the ridge fallback produced the coefficients.
    pub regularized: bool,
}

impl LinearModel {
    /// Ordinary least squares with an intercept. Rank-deficient designs are
    /// solved with a tiny ridge penalty when `ridge_fallback` is set.
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], ridge_fallback: bool) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::EmptyInput(format!(
                "{} inputs for {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let p = inputs[0].len();
        if inputs.iter().any(|r| r.len() != p) {
            return Err(Error::Shape("ragged design matrix".into()));
        }
        let n = inputs.len();
        let x = DMatrix::from_fn(n, p + 1, |r, c| if c == p { 1.0 } else { inputs[r][c] });
        let y = DVector::from_column_slice(targets);

        if n > p {
            let qr = x.clone().qr();
            let r = qr.r();
            let scale = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let full_rank = scale > 0.0 && r.diagonal().iter().all(|v| v.abs() > RANK_TOLERANCE * scale);
            if full_rank {
                let qty = qr.q().transpose() * &y;
                let beta = r
                    .solve_upper_triangular(&qty)
                    .ok_or_else(|| Error::SingularSystem("triangular solve failed".into()))?;
                return Ok(Self::from_beta(&beta, p, false));
            }
        }
        if !ridge_fallback {
            return Err(Error::SingularSystem(format!(
                "{n}x{} design matrix is rank deficient",
                p + 1
            )));
        }
        let mut gram = x.transpose() * &x;
        for i in 0..p {
            gram[(i, i)] += RIDGE_LAMBDA;
        }
        let rhs = x.transpose() * &y;
        let beta = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                // intercept column can still be singular (e.g. n = 0 spread); damp it too
                gram[(p, p)] += RIDGE_LAMBDA;
                gram.cholesky()
                    .ok_or_else(|| Error::SingularSystem("ridge system not positive definite".into()))?
                    .solve(&rhs)
            }
        };
        Ok(Self::from_beta(&beta, p, true))
    }

    fn from_beta(beta: &DVector<f64>, p: usize, regularized: bool) -> Self {
        Self {
            weights: beta.iter().take(p).copied().collect(),
            intercept: beta[p],
            regularized,
        }
    }

    pub fn fit_windows(set: &SupervisedWindowSet, ridge_fallback: bool) -> Result<Self> {
        Self::fit(&set.inputs, &set.targets, ridge_fallback)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(n: usize, p: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (x, y)
    }

    /// Solves (XᵀX) β = Xᵀy by Gaussian elimination with partial pivoting.
    fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let p = x[0].len() + 1;
        let row = |r: &Vec<f64>| -> Vec<f64> { r.iter().copied().chain(std::iter::once(1.0)).collect() };
        let mut a = vec![vec![0.0; p + 1]; p];
        for (xi, yi) in x.iter().zip(y) {
            let xr = row(xi);
            for i in 0..p {
                for j in 0..p {
                    a[i][j] += xr[i] * xr[j];
                }
                a[i][p] += xr[i] * yi;
            }
        }
        for col in 0..p {
            let pivot = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, pivot);
            for r in 0..p {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=p {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        (0..p).map(|i| a[i][p] / a[i][i]).collect()
    }

    #[test]
    fn matches_normal_equations() {
        for seed in 0..5 {
            let (x, y) = random_data(60, 6, seed);
            let m = LinearModel::fit(&x, &y, false).unwrap();
            let oracle = normal_equations(&x, &y);
            for (a, b) in m.weights.iter().chain(std::iter::once(&m.intercept)).zip(&oracle) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
            assert!(!m.regularized);
        }
    }

    #[test]
    fn exact_linear_targets_interpolate() {
        let (x, _) = random_data(30, 3, 9);
        let y: Vec<f64> = x.iter().map(|r| 0.5 - 2.0 * r[0] + 0.25 * r[1] + r[2]).collect();
        let m = LinearModel::fit(&x, &y, false).unwrap();
        for (r, t) in x.iter().zip(&y) {
            assert!((m.predict(r) - t).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_targets_give_zero_model() {
        let (x, _) = random_data(20, 4, 3);
        let m = LinearModel::fit(&x, &[0.0; 20], false).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-14));
        assert!(m.intercept.abs() < 1e-14);
    }

    #[test]
    fn rank_deficiency_uses_fallback() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 1.0 + i as f64).collect();
        assert!(matches!(LinearModel::fit(&x, &y, false), Err(Error::SingularSystem(_))));
        let m = LinearModel::fit(&x, &y, true).unwrap();
        assert!(m.regularized);
        for (r, t) in x.iter().zip(&y) {
            assert!((m.predict(r) - t).abs() < 1e-6);
        }
        // fewer windows than features also falls back
        let (x, y) = random_data(3, 5, 1);
        assert!(LinearModel::fit(&x, &y, true).unwrap().regularized);
    }
}
