//! Bayesian optimisation: seeded random start, then a Gaussian-process
//! surrogate queried through expected improvement.

mod gp;
mod space;
mod tuning;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use gp::{expected_improvement, normal_cdf, normal_pdf, GaussianProcess};
pub use space::{Dimension, Domain, Point, SearchSpace, Value};
pub use tuning::{apply_point, default_space, tune_baseline, validation_rmse, TuningResult};

use crate::error::{Error, Result};

pub const INITIAL_RANDOM_TRIALS: usize = 5;
const RANDOM_CANDIDATES: usize = 512;
const LOCAL_STARTS: usize = 8;
const LOCAL_STEPS: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    /// Position in the evaluation sequence, failures included.
    pub index: usize,
    pub point: Point,
    pub objective: f64,
    /// 1 for the best successful trial.
    pub rank: usize,
    /// Best objective seen up to and including this trial.
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub index: usize,
    pub point: Point,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best: Trial,
    pub history: Vec<Trial>,
    pub failures: Vec<FailedTrial>,
}

impl OptimizationResult {
    /// One row per successful trial: index, each dimension, objective, incumbent.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let names: Vec<String> = self
            .history
            .first()
            .map(|t| t.point.values.iter().map(|(n, _)| n.clone()).collect())
            .unwrap_or_default();
        let mut header = vec!["trial".to_string()];
        header.extend(names.iter().cloned());
        header.extend(["objective".to_string(), "incumbent".to_string()]);
        w.write_record(&header)?;
        for t in &self.history {
            let mut row = vec![t.index.to_string()];
            row.extend(t.point.values.iter().map(|(_, v)| v.to_string()));
            row.push(format!("{}", t.objective));
            row.push(format!("{}", t.incumbent));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn propose<R: Rng>(space: &SearchSpace, xs: &[Vec<f64>], ys: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let gp = GaussianProcess::fit(xs, ys)?;
    let best = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let score = |u: &[f64]| {
        let (mu, sigma) = gp.predict(u);
        expected_improvement(mu, sigma, best)
    };
    let mut candidates: Vec<(f64, Vec<f64>)> = (0..RANDOM_CANDIDATES)
        .map(|_| {
            let u = space.sample_unit(rng);
            (score(&u), u)
        })
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let step = Normal::new(0.0, 0.05).map_err(|e| Error::Optimization(e.to_string()))?;
    let mut winner = candidates[0].clone();
    for (s0, u0) in candidates.into_iter().take(LOCAL_STARTS) {
        let (mut s, mut u) = (s0, u0);
        for _ in 0..LOCAL_STEPS {
            let trial: Vec<f64> = u.iter().map(|x| (x + step.sample(rng)).clamp(0.0, 1.0)).collect();
            let t = score(&trial);
            if t > s {
                s = t;
                u = trial;
            }
        }
        if s > winner.0 {
            winner = (s, u);
        }
    }
    Ok(winner.1)
}

/// Minimises `objective` over `space` with `budget` evaluations.
/// Evaluations that fail or return a non-finite value are logged and skipped.
pub fn bo_optimize<F>(mut objective: F, space: &SearchSpace, budget: usize, seed: u64) -> Result<OptimizationResult>
where
    F: FnMut(&Point) -> Result<f64>,
{
    space.validate()?;
    let budget = if space.is_singleton() { 1 } else { budget };
    if budget < INITIAL_RANDOM_TRIALS && !space.is_singleton() {
        return Err(Error::Config(format!(
            "budget {budget} is below the {INITIAL_RANDOM_TRIALS} initial trials"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut history: Vec<Trial> = Vec::new();
    let mut failures = Vec::new();
    let mut incumbent = f64::INFINITY;
    for index in 0..budget {
        let u = if index < INITIAL_RANDOM_TRIALS || ys.len() < 2 {
            space.sample_unit(&mut rng)
        } else {
            propose(space, &xs, &ys, &mut rng)?
        };
        let point = space.decode(&u);
        match objective(&point) {
            Ok(v) if v.is_finite() => {
                incumbent = incumbent.min(v);
                xs.push(space.encode(&point)?);
                ys.push(v);
                history.push(Trial {
                    index,
                    point,
                    objective: v,
                    rank: 0,
                    incumbent,
                });
            }
            Ok(v) => {
                log::warn!("trial {index} returned {v}; skipped");
                failures.push(FailedTrial {
                    index,
                    point,
                    error: format!("non-finite objective {v}"),
                });
            }
            Err(e) => {
                log::warn!("trial {index} failed: {e}");
                failures.push(FailedTrial {
                    index,
                    point,
                    error: e.to_string(),
                });
            }
        }
    }
    if history.is_empty() {
        return Err(Error::Optimization(format!("all {budget} trials failed")));
    }
    let mut order: Vec<usize> = (0..history.len()).collect();
    order.sort_by(|&a, &b| history[a].objective.total_cmp(&history[b].objective).then(a.cmp(&b)));
    for (rank, &i) in order.iter().enumerate() {
        history[i].rank = rank + 1;
    }
    let best = history[order[0]].clone();
    Ok(OptimizationResult {
        best,
        history,
        failures,
    })
}
