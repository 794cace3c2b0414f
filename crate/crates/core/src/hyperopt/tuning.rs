//! Tuning baselines on the tail of their own training slice.

use serde::{Deserialize, Serialize};

use super::space::{Dimension, Domain, Point, SearchSpace};
use super::{bo_optimize, OptimizationResult};
use crate::baselines::{Baseline, BaselineConfig, Hyperparams};
use crate::error::{Error, Result};
use crate::forecast::{ForecastModel, ModelId, TargetClock};
use crate::metrics::rmse;
use crate::series::TimeSeries;

pub const TUNING_VALIDATION_FRACTION: f64 = 0.2;

fn int(name: &str, center: i64) -> Dimension {
    Dimension {
        name: name.into(),
        domain: Domain::Integer {
            low: (center / 4).max(1),
            high: center * 4,
        },
    }
}

fn log(name: &str, center: f64) -> Dimension {
    Dimension {
        name: name.into(),
        domain: Domain::RealLog {
            low: center / 4.0,
            high: center * 4.0,
        },
    }
}

fn fraction(name: &str, center: f64) -> Dimension {
    Dimension {
        name: name.into(),
        domain: Domain::RealLinear {
            low: center / 4.0,
            high: (center * 4.0).min(1.0),
        },
    }
}

/// Ranges spanning a quarter to four times each benchmark setting.
/// `None` for models without tunable settings.
pub fn default_space(id: ModelId) -> Option<SearchSpace> {
    let dims = match id {
        ModelId::Tsfm | ModelId::Pm | ModelId::Lr => return None,
        ModelId::Rt => vec![int("max_depth", 4), int("max_leaves", 25)],
        ModelId::Gbt => vec![
            int("estimators", 500),
            log("learning_rate", 0.01),
            fraction("subsample", 0.8),
            int("min_child_samples", 90),
        ],
        ModelId::Mlp | ModelId::Lstm => vec![
            int("units", 16),
            log("learning_rate", 1e-3),
            int("epochs", 200),
            int("batch_size", 8),
        ],
    };
    SearchSpace::new(dims).ok()
}

/// Copies the values of `point` into a benchmark configuration.
pub fn apply_point(base: &BaselineConfig, point: &Point) -> Result<BaselineConfig> {
    let mut c = base.clone();
    let usize_of = |name: &str| -> Result<usize> { Ok(point.int(name)?.max(1) as usize) };
    match &mut c.hyperparams {
        Hyperparams::Pm | Hyperparams::Lr(_) => {}
        Hyperparams::Rt(p) => {
            p.max_depth = usize_of("max_depth")?;
            p.max_leaves = usize_of("max_leaves")?;
        }
        Hyperparams::Gbt(p) => {
            p.estimators = usize_of("estimators")?;
            p.learning_rate = point.real("learning_rate")?;
            p.subsample = point.real("subsample")?;
            p.min_child_samples = usize_of("min_child_samples")?;
        }
        Hyperparams::Mlp(p) => {
            let u = usize_of("units")?;
            p.hidden = vec![u; p.hidden.len()];
            p.schedule.learning_rate = point.real("learning_rate")?;
            p.schedule.epochs = usize_of("epochs")?;
            p.schedule.batch_size = usize_of("batch_size")?;
        }
        Hyperparams::Lstm(p) => {
            let u = usize_of("units")?;
            p.lstm_units = vec![u, (u / 2).max(1)];
            p.dense_units = vec![(u / 2).max(1)];
            p.schedule.learning_rate = point.real("learning_rate")?;
            p.schedule.epochs = usize_of("epochs")?;
            p.schedule.batch_size = usize_of("batch_size")?;
        }
    }
    c.validate()?;
    Ok(c)
}

/// Fits on the head of `train` and scores one-step forecasts over its last
/// `TUNING_VALIDATION_FRACTION`.
pub fn validation_rmse(model: &mut dyn ForecastModel, train: &TimeSeries) -> Result<f64> {
    let tail = (train.len() as f64 * TUNING_VALIDATION_FRACTION).round() as usize;
    let cut = train.len() - tail;
    let ctx = model.context_length();
    if tail == 0 || cut <= ctx {
        return Err(Error::InsufficientData(format!(
            "{} points leave no validation tail after a {ctx}-point context",
            train.len()
        )));
    }
    let head = train.slice(0, cut)?;
    model.fit(&head)?;
    let values = train.values();
    let mut forecasts = Vec::with_capacity(tail);
    for t in cut..train.len() {
        forecasts.push(model.predict_one_step(&values[t - ctx..t], TargetClock::at(train, t))?);
    }
    rmse(&values[cut..], &forecasts)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningResult {
    pub config: BaselineConfig,
    pub optimization: OptimizationResult,
}

/// Bayesian search around the benchmark settings of `id` on a normalised
/// training series.
pub fn tune_baseline(train: &TimeSeries, id: ModelId, budget: usize, seed: u64) -> Result<TuningResult> {
    let base = BaselineConfig::table_defaults(id)
        .ok_or_else(|| Error::Config(format!("{id} is not a baseline")))?
        .with_seed(seed);
    let space = default_space(id).ok_or_else(|| Error::Config(format!("{id} has nothing to tune")))?;
    let optimization = bo_optimize(
        |point| {
            let mut model = Baseline::new(apply_point(&base, point)?)?;
            validation_rmse(&mut model, train)
        },
        &space,
        budget,
        seed,
    )?;
    let config = apply_point(&base, &optimization.best.point)?;
    Ok(TuningResult {
        config,
        optimization,
    })
}
