//! Stagewise gradient boosting of shallow regression trees on squared error.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{RegressionTree, TreeParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub estimators: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub min_child_samples: usize,
    pub early_stopping_rounds: usize,
    pub max_depth: usize,
    /// Chronological tail held out for early stopping; 0 disables it.
    pub validation_fraction: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            estimators: 500,
            learning_rate: 0.01,
            subsample: 0.8,
            min_child_samples: 90,
            early_stopping_rounds: 400,
            max_depth: 3,
            validation_fraction: 0.2,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config("learning rate must be positive and subsample in (0, 1]".into()));
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return Err(Error::Config("validation fraction must lie in [0, 0.5)".into()));
        }
        if self.min_child_samples == 0 || self.early_stopping_rounds == 0 {
            return Err(Error::Config("min_child_samples and early_stopping_rounds must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    /// Training-part MSE after 0, 1, … trees.
    #[serde(default)]
    pub train_loss: Vec<f64>,
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len().max(1) as f64
}

impl GradientBoosting {
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], params: &GbtParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let n = targets.len();
        if n < 2 || inputs.len() != n {
            return Err(Error::InsufficientData(format!("boosting needs at least 2 windows, got {n}")));
        }
        let n_val = ((n as f64) * params.validation_fraction).round() as usize;
        let n_train = n - n_val.min(n - 1);
        let (x_train, x_val) = inputs.split_at(n_train);
        let (y_train, y_val) = targets.split_at(n_train);

        let mut min_child = params.min_child_samples;
        if min_child > n_train {
            log::warn!("min_child_samples {min_child} exceeds {n_train} training windows; clamping");
            min_child = n_train;
        }
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            max_leaves: usize::MAX,
            min_samples_leaf: min_child,
        };

        let base = y_train.iter().sum::<f64>() / n_train as f64;
        let mut pred_train = vec![base; n_train];
        let mut pred_val = vec![base; y_val.len()];
        let mut model = Self {
            base,
            learning_rate: params.learning_rate,
            trees: Vec::with_capacity(params.estimators),
            train_loss: vec![mse(&pred_train, y_train)],
        };
        let mut best = (mse(&pred_val, y_val), 0usize);
        let take = ((n_train as f64) * params.subsample).ceil().max(1.0) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut residuals = vec![0.0; n_train];
        for round in 1..=params.estimators {
            for i in 0..n_train {
                residuals[i] = y_train[i] - pred_train[i];
            }
            let mut rows = if take >= n_train {
                (0..n_train).collect::<Vec<_>>()
            } else {
                sample(&mut rng, n_train, take).into_vec()
            };
            rows.sort_unstable();
            let tree = RegressionTree::fit_subset(x_train, &residuals, &rows, &tree_params)?;
            for (p, x) in pred_train.iter_mut().zip(x_train) {
                *p += params.learning_rate * tree.predict(x);
            }
            for (p, x) in pred_val.iter_mut().zip(x_val) {
                *p += params.learning_rate * tree.predict(x);
            }
            model.trees.push(tree);
            model.train_loss.push(mse(&pred_train, y_train));
            if !y_val.is_empty() {
                let val = mse(&pred_val, y_val);
                if val < best.0 {
                    best = (val, round);
                } else if round - best.1 >= params.early_stopping_rounds {
                    break;
                }
            }
        }
        if !y_val.is_empty() {
            model.trees.truncate(best.1);
            model.train_loss.truncate(best.1 + 1);
        }
        Ok(model)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
        let y = x.iter().map(|r| (r[0] * 6.0).sin() + 0.5 * r[1]).collect();
        (x, y)
    }

    #[test]
    fn no_estimators_predicts_mean() {
        let (x, y) = data(40, 1);
        let p = GbtParams {
            estimators: 0,
            validation_fraction: 0.0,
            ..Default::default()
        };
        let m = GradientBoosting::fit(&x, &y, &p, 0).unwrap();
        let mean = y.iter().sum::<f64>() / 40.0;
        assert!((m.predict(&x[3]) - mean).abs() < 1e-15);
    }

    #[test]
    fn one_full_step_fits_exactly() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let y = vec![0.1, 0.9, 0.4, 0.4, 0.7, 0.2, 0.8, 0.3];
        let p = GbtParams {
            estimators: 1,
            learning_rate: 1.0,
            subsample: 1.0,
            min_child_samples: 1,
            max_depth: 8,
            validation_fraction: 0.0,
            ..Default::default()
        };
        let m = GradientBoosting::fit(&x, &y, &p, 0).unwrap();
        for (r, t) in x.iter().zip(&y) {
            assert!((m.predict(r) - t).abs() < 1e-12);
        }
    }

    #[test]
    fn full_sample_training_loss_never_rises() {
        let (x, y) = data(120, 2);
        let p = GbtParams {
            estimators: 60,
            learning_rate: 0.1,
            subsample: 1.0,
            min_child_samples: 5,
            validation_fraction: 0.0,
            ..Default::default()
        };
        let m = GradientBoosting::fit(&x, &y, &p, 0).unwrap();
        assert_eq!(m.train_loss.len(), 61);
        for w in m.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn oversized_min_child_is_clamped() {
        let (x, y) = data(30, 3);
        let m = GradientBoosting::fit(&x, &y, &GbtParams::default(), 0).unwrap();
        assert!(m.predict(&x[0]).is_finite());
        let a = GradientBoosting::fit(&x, &y, &GbtParams { min_child_samples: 2, ..Default::default() }, 9).unwrap();
        let b = GradientBoosting::fit(&x, &y, &GbtParams { min_child_samples: 2, ..Default::default() }, 9).unwrap();
        assert_eq!(a, b);
    }
}
