use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::run::ModelFactory;
use crate::error::{Error, Result};
use crate::forecast::{ForecastModel, ModelId, TargetClock};
use crate::metrics::{Criterion, MetricTriple};
use crate::series::{NormalizationParams, TimeSeries};

pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionVerdict {
    pub chosen_model: ModelId,
    pub validation_scores: BTreeMap<ModelId, MetricTriple>,
    pub criterion: Criterion,
    /// Candidates that failed to fit or forecast.
    pub failures: BTreeMap<ModelId, String>,
}

/// Argmin of `criterion`; ties go to the earlier model in canonical order.
/// Non-finite scores never win.
pub fn choose(scores: &BTreeMap<ModelId, MetricTriple>, criterion: Criterion) -> Option<ModelId> {
    let mut best: Option<(ModelId, f64)> = None;
    for (&id, m) in scores {
        let v = m.get(criterion);
        if !v.is_finite() {
            continue;
        }
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((id, v));
        }
    }
    best.map(|(id, _)| id)
}

/// One-step rolling forecasts over `head.len()..values.len()`, in original units.
fn validation_scores(
    model: &dyn ForecastModel,
    history: &TimeSeries,
    scaled: &[f64],
    scaler: &NormalizationParams,
    cut: usize,
) -> Result<MetricTriple> {
    let ctx = model.context_length();
    let forecasts = (cut..scaled.len())
        .map(|t| {
            let start = t.saturating_sub(ctx.max(1));
            model.predict_one_step(&scaled[start..t], TargetClock::at(history, t))
        })
        .collect::<Result<Vec<f64>>>()?;
    MetricTriple::evaluate(&history.values()[cut..], &scaler.invert_all(&forecasts))
}

/// Splits `history` into a training head and a validation tail, fits every
/// candidate on the head and picks the one scoring lowest on the tail.
pub fn select_model(
    history: &TimeSeries,
    candidates: &[ModelId],
    criterion: Criterion,
    validation_fraction: f64,
    factory: &ModelFactory,
    seed: u64,
) -> Result<SelectionVerdict> {
    if candidates.is_empty() {
        return Err(Error::Config("no candidates to select from".into()));
    }
    if !(validation_fraction > 0.0 && validation_fraction < 0.5) {
        return Err(Error::Config(format!(
            "validation fraction must lie in (0, 0.5), got {validation_fraction}"
        )));
    }
    let tail = (history.len() as f64 * validation_fraction).round() as usize;
    let cut = history.len() - tail;
    if tail == 0 || cut < 2 {
        return Err(Error::InsufficientData(format!(
            "{} points leave no usable head/tail split",
            history.len()
        )));
    }
    let head = history.slice(0, cut)?;
    let scaler = NormalizationParams::fit(head.values())?;
    let head_scaled = scaler.normalize(&head)?;
    let scaled = scaler.apply_all(history.values());

    let mut validation_scores_map = BTreeMap::new();
    let mut failures = BTreeMap::new();
    let mut ids = candidates.to_vec();
    ids.sort();
    ids.dedup();
    for id in ids {
        let attempt = factory.prepare(id, seed, &head_scaled).and_then(|mut m| {
            if cut <= m.context_length() {
                return Err(Error::InsufficientData(format!(
                    "{id} needs more than {} head points, got {cut}",
                    m.context_length()
                )));
            }
            m.fit(&head_scaled)?;
            validation_scores(m.as_ref(), history, &scaled, &scaler, cut)
        });
        match attempt {
            Ok(s) => {
                validation_scores_map.insert(id, s);
            }
            Err(e) => {
                log::warn!("{id} dropped from selection: {e}");
                failures.insert(id, e.to_string());
            }
        }
    }
    let chosen_model = choose(&validation_scores_map, criterion).ok_or_else(|| {
        Error::InsufficientData(format!("no candidate could be scored: {failures:?}"))
    })?;
    Ok(SelectionVerdict {
        chosen_model,
        validation_scores: validation_scores_map,
        criterion,
        failures,
    })
}
