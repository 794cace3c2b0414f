//! Point-forecast error metrics, multi-run averaging and percent reductions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Actuals with magnitude at or below this are rejected by [`mape`].
pub const MAPE_EPSILON: f64 = 1e-8;

fn check_pair(actual: &[f64], forecast: &[f64]) -> Result<()> {
    if actual.is_empty() {
        return Err(Error::EmptyInput("metric over an empty vector".into()));
    }
    if actual.len() != forecast.len() {
        return Err(Error::Shape(format!(
            "{} actual values vs {} forecasts",
            actual.len(),
            forecast.len()
        )));
    }
    if let Some(i) = actual
        .iter()
        .chain(forecast)
        .position(|v| !v.is_finite())
    {
        return Err(Error::Numeric(format!("metric input element {i}")));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    check_pair(actual, forecast)?;
    let sum: f64 = actual
        .iter()
        .zip(forecast)
        .map(|(y, yh)| (y - yh).abs())
        .sum();
    Ok(sum / actual.len() as f64)
}

/// Root mean squared error.
pub fn rmse(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    check_pair(actual, forecast)?;
    let sum: f64 = actual
        .iter()
        .zip(forecast)
        .map(|(y, yh)| (y - yh) * (y - yh))
        .sum();
    Ok((sum / actual.len() as f64).sqrt())
}

/// Mean absolute percentage error, as a fraction (0.05 means 5 %).
pub fn mape(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    check_pair(actual, forecast)?;
    if let Some((index, &value)) = actual
        .iter()
        .enumerate()
        .find(|(_, y)| y.abs() <= MAPE_EPSILON)
    {
        return Err(Error::ZeroActual { index, value });
    }
    let sum: f64 = actual
        .iter()
        .zip(forecast)
        .map(|(y, yh)| ((y - yh) / y).abs())
        .sum();
    Ok(sum / actual.len() as f64)
}

/// `100 * (baseline - candidate) / baseline`; negative when the candidate is worse.
pub fn percent_reduction(candidate: f64, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0) || !baseline.is_finite() || !candidate.is_finite() {
        return Err(Error::Domain(format!(
            "percent reduction needs a positive finite baseline, got {baseline}"
        )));
    }
    Ok(100.0 * (baseline - candidate) / baseline)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub rmse: f64,
    pub mae: f64,
    /// Fraction, not percent.
    pub mape: f64,
}

impl MetricTriple {
    pub fn evaluate(actual: &[f64], forecast: &[f64]) -> Result<Self> {
        Ok(Self {
            rmse: rmse(actual, forecast)?,
            mae: mae(actual, forecast)?,
            mape: mape(actual, forecast)?,
        })
    }

    pub fn get(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Rmse => self.rmse,
            Criterion::Mae => self.mae,
            Criterion::Mape => self.mape,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Rmse,
    Mae,
    Mape,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rmse" => Ok(Criterion::Rmse),
            "mae" => Ok(Criterion::Mae),
            "mape" => Ok(Criterion::Mape),
            _ => Err(Error::Config(format!("unknown criterion `{s}`"))),
        }
    }
}

/// Field-wise arithmetic mean over repeated runs.
pub fn aggregate_runs(per_run: &[MetricTriple]) -> Result<MetricTriple> {
    if per_run.is_empty() {
        return Err(Error::EmptyInput("no runs to aggregate".into()));
    }
    let n = per_run.len() as f64;
    let (r, a, p) = per_run.iter().fold((0.0, 0.0, 0.0), |(r, a, p), t| {
        (r + t.rmse, a + t.mae, p + t.mape)
    });
    Ok(MetricTriple {
        rmse: r / n,
        mae: a / n,
        mape: p / n,
    })
}
