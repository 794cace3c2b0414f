use crate::error::{Error, Result};
use crate::forecast::{ForecastModel, ModelId, TargetClock};
use crate::series::TimeSeries;

/// Forecast every step as the last observed value.
pub fn pm_forecast(history: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let last = *history
        .last()
        .ok_or_else(|| Error::InsufficientData("persistence needs at least one value".into()))?;
    Ok(vec![last; horizon])
}

#[derive(Debug, Clone, Default)]
pub struct Persistence;

impl ForecastModel for Persistence {
    fn id(&self) -> ModelId {
        ModelId::Pm
    }

    fn context_length(&self) -> usize {
        1
    }

    fn fit(&mut self, _: &TimeSeries) -> Result<()> {
        Ok(())
    }

    fn predict_block(&self, context: &[f64], _: TargetClock) -> Result<Vec<f64>> {
        pm_forecast(context, 1)
    }
}
