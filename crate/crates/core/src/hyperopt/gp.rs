//! Gaussian-process regression with a squared-exponential kernel.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const JITTER: f64 = 1e-6;
const LENGTH_SCALES: [f64; 7] = [0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.2];

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// GP posterior over standardised observations.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    inputs: Vec<Vec<f64>>,
    alpha: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    length_scale: f64,
    mean: f64,
    scale: f64,
}

impl GaussianProcess {
    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        (-0.5 * sq_dist(a, b) / (self.length_scale * self.length_scale)).exp()
    }

    fn gram(inputs: &[Vec<f64>], ls: f64) -> DMatrix<f64> {
        let n = inputs.len();
        DMatrix::from_fn(n, n, |i, j| {
            let k = (-0.5 * sq_dist(&inputs[i], &inputs[j]) / (ls * ls)).exp();
            if i == j {
                k + JITTER
            } else {
                k
            }
        })
    }

    /// Fits with unit signal variance, choosing the length scale from a fixed
    /// grid by marginal likelihood.
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::Optimization("GP needs matching, non-empty data".into()));
        }
        let n = targets.len() as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let y = DVector::from_iterator(targets.len(), targets.iter().map(|t| (t - mean) / scale));

        let mut best: Option<(f64, Self)> = None;
        for ls in LENGTH_SCALES {
            let Some(chol) = Self::gram(inputs, ls).cholesky() else { continue };
            let alpha = chol.solve(&y);
            let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
            let nll = 0.5 * y.dot(&alpha) + 0.5 * log_det;
            if best.as_ref().is_none_or(|(b, _)| nll < *b) {
                best = Some((
                    nll,
                    Self {
                        inputs: inputs.to_vec(),
                        alpha,
                        chol,
                        length_scale: ls,
                        mean,
                        scale,
                    },
                ));
            }
        }
        best.map(|(_, gp)| gp)
            .ok_or_else(|| Error::Optimization("kernel matrix is not positive definite".into()))
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    /// Posterior mean and standard deviation in the original units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|xi| self.kernel(xi, x)));
        let mu = k.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&k).unwrap_or_else(|| k.clone());
        let var = (1.0 - v.dot(&v)).max(0.0);
        (self.mean + self.scale * mu, self.scale * var.sqrt())
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement below `best` for a minimisation problem.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    if sigma <= 1e-12 {
        return (best - mu).max(0.0);
    }
    let z = (best - mu) / sigma;
    (best - mu) * normal_cdf(z) + sigma * normal_pdf(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_observations() {
        let x: Vec<Vec<f64>> = [0.1, 0.4, 0.7, 0.9].iter().map(|v| vec![*v]).collect();
        let y = [1.0, -0.5, 0.3, 2.0];
        let gp = GaussianProcess::fit(&x, &y).unwrap();
        for (xi, yi) in x.iter().zip(y) {
            let (m, s) = gp.predict(xi);
            assert!((m - yi).abs() < 1e-3, "{m} vs {yi}");
            assert!(s < 0.05);
        }
        let (_, far) = gp.predict(&[5.0]);
        assert!(far > 0.5);
    }

    #[test]
    fn cdf_and_ei_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
        // closed form at mu == best: sigma * phi(0)
        assert!((expected_improvement(1.0, 2.0, 1.0) - 2.0 * normal_pdf(0.0)).abs() < 1e-15);
        assert_eq!(expected_improvement(3.0, 0.0, 1.0), 0.0);
        assert!(expected_improvement(0.0, 0.1, 1.0) > expected_improvement(0.5, 0.1, 1.0));
    }
}
