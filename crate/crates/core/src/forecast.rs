//! The contract every forecaster implements, and recursive multi-step
//! forecasting on top of it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Model identifiers, declared in canonical order (used for tie-breaks and
/// report row order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Tsfm,
    Mlp,
    Lstm,
    Lr,
    Gbt,
    Rt,
    Pm,
}

impl ModelId {
    pub const ALL: [ModelId; 7] = [
        ModelId::Tsfm,
        ModelId::Mlp,
        ModelId::Lstm,
        ModelId::Lr,
        ModelId::Gbt,
        ModelId::Rt,
        ModelId::Pm,
    ];

    pub const BASELINES: [ModelId; 6] = [
        ModelId::Mlp,
        ModelId::Lstm,
        ModelId::Lr,
        ModelId::Gbt,
        ModelId::Rt,
        ModelId::Pm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Tsfm => "tsfm",
            ModelId::Mlp => "mlp",
            ModelId::Lstm => "lstm",
            ModelId::Lr => "lr",
            ModelId::Gbt => "gbt",
            ModelId::Rt => "rt",
            ModelId::Pm => "pm",
        }
    }

    /// Row label in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelId::Tsfm => "TSFM",
            ModelId::Mlp => "MLP",
            ModelId::Lstm => "LSTM",
            ModelId::Lr => "LR",
            ModelId::Gbt => "GBT",
            ModelId::Rt => "RT",
            ModelId::Pm => "PM",
        }
    }

    /// True when repeated runs cannot differ.
    pub fn is_deterministic(self) -> bool {
        matches!(self, ModelId::Pm | ModelId::Lr | ModelId::Rt)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tsfm" | "timegpt" | "transformer" => Ok(ModelId::Tsfm),
            "mlp" => Ok(ModelId::Mlp),
            "lstm" => Ok(ModelId::Lstm),
            "lr" => Ok(ModelId::Lr),
            "gbt" | "xgboost" => Ok(ModelId::Gbt),
            "rt" => Ok(ModelId::Rt),
            "pm" => Ok(ModelId::Pm),
            _ => Err(Error::Config(format!("unknown model `{s}`"))),
        }
    }
}

/// Hour of day of the first value a block forecast produces, plus the spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetClock {
    pub first_hour: f64,
    pub step_hours: f64,
}

impl TargetClock {
    pub fn hourly(first_hour: f64) -> Self {
        Self {
            first_hour: first_hour.rem_euclid(24.0),
            step_hours: 1.0,
        }
    }

    /// Clock for the point right after `series` ends.
    pub fn after(series: &TimeSeries) -> Self {
        Self::at(series, series.len())
    }

    /// Clock whose first target is point `index` of `series` (may be past the end).
    pub fn at(series: &TimeSeries, index: usize) -> Self {
        Self {
            first_hour: series.hour_of_day(index),
            step_hours: series.resolution_hours(),
        }
    }

    pub fn hour(&self, k: usize) -> f64 {
        (self.first_hour + k as f64 * self.step_hours).rem_euclid(24.0)
    }

    pub fn advance(&self, k: usize) -> Self {
        Self {
            first_hour: self.hour(k),
            step_hours: self.step_hours,
        }
    }
}

/// Shared fit / predict contract for the transformer and the six baselines.
///
/// All values are in normalised units; callers own the scaling.
pub trait ForecastModel: Send + Sync {
    fn id(&self) -> ModelId;

    /// Number of trailing values a block forecast consumes.
    fn context_length(&self) -> usize;

    /// Number of values one block forecast produces.
    fn native_horizon(&self) -> usize {
        1
    }

    /// Fits (or fine-tunes) on a normalised training series.
    fn fit(&mut self, train: &TimeSeries) -> Result<()>;

    /// Forecasts `native_horizon` values following `context`.
    fn predict_block(&self, context: &[f64], clock: TargetClock) -> Result<Vec<f64>>;

    fn predict_one_step(&self, context: &[f64], clock: TargetClock) -> Result<f64> {
        Ok(self.predict_block(context, clock)?[0])
    }
}

/// Covers `horizon` steps by feeding forecasts back into the context one
/// native block at a time.
pub fn recursive_forecast<M: ForecastModel + ?Sized>(
    model: &M,
    history: &[f64],
    clock: TargetClock,
    horizon: usize,
) -> Result<Vec<f64>> {
    let ctx_len = model.context_length();
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    if history.len() < ctx_len.max(1) {
        return Err(Error::InsufficientData(format!(
            "{} needs {ctx_len} context values, got {}",
            model.id(),
            history.len()
        )));
    }
    let mut buffer: Vec<f64> = history[history.len() - ctx_len..].to_vec();
    let mut out = Vec::with_capacity(horizon);
    while out.len() < horizon {
        let context = &buffer[buffer.len() - ctx_len..];
        let block = model.predict_block(context, clock.advance(out.len()))?;
        if block.is_empty() {
            return Err(Error::Shape(format!("{} produced an empty block", model.id())));
        }
        let take = block.len().min(horizon - out.len());
        out.extend_from_slice(&block[..take]);
        buffer.extend_from_slice(&block[..take]);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod stubs {
    use super::*;

    /// Repeats the last context value.
    pub struct Copier;

    impl ForecastModel for Copier {
        fn id(&self) -> ModelId {
            ModelId::Pm
        }
        fn context_length(&self) -> usize {
            3
        }
        fn native_horizon(&self) -> usize {
            2
        }
        fn fit(&mut self, _: &TimeSeries) -> Result<()> {
            Ok(())
        }
        fn predict_block(&self, context: &[f64], _: TargetClock) -> Result<Vec<f64>> {
            let last = *context.last().unwrap();
            Ok(vec![last; 2])
        }
    }

    /// Predicts last + 1, one step at a time.
    pub struct Incrementer;

    impl ForecastModel for Incrementer {
        fn id(&self) -> ModelId {
            ModelId::Lr
        }
        fn context_length(&self) -> usize {
            1
        }
        fn fit(&mut self, _: &TimeSeries) -> Result<()> {
            Ok(())
        }
        fn predict_block(&self, context: &[f64], _: TargetClock) -> Result<Vec<f64>> {
            Ok(vec![context[0] + 1.0])
        }
    }
}
