//! The six benchmark forecasters. Each consumes the same supervised windows
//! (24 loads plus hour-of-day features) and predicts one step ahead.

mod boosting;
mod linear;
mod lstm;
mod mlp;
mod neural;
mod persistence;
mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use boosting::{GbtParams, GradientBoosting};
pub use linear::{LinearModel, RIDGE_LAMBDA};
pub use lstm::{cell_step, CellIds, CellStep, Lstm, LstmParams};
pub use mlp::{Mlp, MlpParams};
pub use neural::NeuralSchedule;
pub use persistence::{pm_forecast, Persistence};
pub use tree::{best_split, Node, RegressionTree, Split, TreeParams};

use crate::error::{Error, Result};
use crate::forecast::{ForecastModel, ModelId, TargetClock};
use crate::nn::ParamStore;
use crate::series::{make_windows, window_features, SupervisedWindowSet, TimeSeries, DEFAULT_WINDOW};
use crate::tsfm::sidecar_path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrParams {
    pub ridge_fallback: bool,
}

impl Default for LrParams {
    fn default() -> Self {
        Self { ridge_fallback: true }
    }
}

/// Hyper-parameters per model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyperparams {
    Pm,
    Lr(LrParams),
    Rt(TreeParams),
    Gbt(GbtParams),
    Mlp(MlpParams),
    Lstm(LstmParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub hyperparams: Hyperparams,
    pub window_length: usize,
    pub seed: u64,
}

impl BaselineConfig {
    /// The benchmark settings for `id`; `None` for the transformer.
    pub fn table_defaults(id: ModelId) -> Option<Self> {
        let hyperparams = match id {
            ModelId::Tsfm => return None,
            ModelId::Pm => Hyperparams::Pm,
            ModelId::Lr => Hyperparams::Lr(LrParams::default()),
            ModelId::Rt => Hyperparams::Rt(TreeParams::default()),
            ModelId::Gbt => Hyperparams::Gbt(GbtParams::default()),
            ModelId::Mlp => Hyperparams::Mlp(MlpParams::default()),
            ModelId::Lstm => Hyperparams::Lstm(LstmParams::default()),
        };
        Some(Self {
            hyperparams,
            window_length: DEFAULT_WINDOW,
            seed: 0,
        })
    }

    pub fn model_id(&self) -> ModelId {
        match self.hyperparams {
            Hyperparams::Pm => ModelId::Pm,
            Hyperparams::Lr(_) => ModelId::Lr,
            Hyperparams::Rt(_) => ModelId::Rt,
            Hyperparams::Gbt(_) => ModelId::Gbt,
            Hyperparams::Mlp(_) => ModelId::Mlp,
            Hyperparams::Lstm(_) => ModelId::Lstm,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length == 0 {
            return Err(Error::Config("window length must be positive".into()));
        }
        match &self.hyperparams {
            Hyperparams::Pm | Hyperparams::Lr(_) => Ok(()),
            Hyperparams::Rt(p) => p.validate(),
            Hyperparams::Gbt(p) => p.validate(),
            Hyperparams::Mlp(p) => p.validate(),
            Hyperparams::Lstm(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone)]
enum Fitted {
    Pm,
    Lr(LinearModel),
    Rt(RegressionTree),
    Gbt(GradientBoosting),
    Mlp(Mlp),
    Lstm(Lstm),
}

/// Any of the six benchmarks behind the shared forecasting contract.
#[derive(Debug, Clone)]
pub struct Baseline {
    config: BaselineConfig,
    fitted: Option<Fitted>,
}

impl Baseline {
    pub fn new(config: BaselineConfig) -> Result<Self> {
        config.validate()?;
        let fitted = matches!(config.hyperparams, Hyperparams::Pm).then_some(Fitted::Pm);
        Ok(Self { config, fitted })
    }

    pub fn table_defaults(id: ModelId, seed: u64) -> Result<Self> {
        let config = BaselineConfig::table_defaults(id)
            .ok_or_else(|| Error::Config(format!("{id} is not a baseline")))?;
        Self::new(config.with_seed(seed))
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    /// Fits on supervised windows directly.
    pub fn fit_windows(&mut self, set: &SupervisedWindowSet) -> Result<()> {
        if set.is_empty() {
            return Err(Error::InsufficientData("no training windows".into()));
        }
        if set.window_length != self.config.window_length {
            return Err(Error::Shape(format!(
                "windows of {} values for a model expecting {}",
                set.window_length, self.config.window_length
            )));
        }
        let seed = self.config.seed;
        let extra = set.feature_count() - set.window_length;
        self.fitted = Some(match &self.config.hyperparams {
            Hyperparams::Pm => Fitted::Pm,
            Hyperparams::Lr(p) => Fitted::Lr(LinearModel::fit_windows(set, p.ridge_fallback)?),
            Hyperparams::Rt(p) => Fitted::Rt(RegressionTree::fit(&set.inputs, &set.targets, p)?),
            Hyperparams::Gbt(p) => Fitted::Gbt(GradientBoosting::fit(&set.inputs, &set.targets, p, seed)?),
            Hyperparams::Mlp(p) => {
                let mut m = Mlp::new(set.feature_count(), p, seed)?;
                m.fit(&set.inputs, &set.targets, &p.schedule, seed)?;
                Fitted::Mlp(m)
            }
            Hyperparams::Lstm(p) => {
                let mut m = Lstm::new(set.window_length, extra, p, seed)?;
                m.fit(&set.inputs, &set.targets, &p.schedule, seed)?;
                Fitted::Lstm(m)
            }
        });
        Ok(())
    }

    /// One-step prediction from a full feature row.
    pub fn predict_features(&self, x: &[f64]) -> Result<f64> {
        let fitted = self
            .fitted
            .as_ref()
            .ok_or_else(|| Error::State(format!("{} has not been fitted", self.id())))?;
        match fitted {
            Fitted::Pm => Ok(x[self.config.window_length - 1]),
            Fitted::Lr(m) => Ok(m.predict(x)),
            Fitted::Rt(m) => Ok(m.predict(x)),
            Fitted::Gbt(m) => Ok(m.predict(x)),
            Fitted::Mlp(m) => m.predict(x),
            Fitted::Lstm(m) => m.predict(x),
        }
    }

    /// Writes the parameter binary (empty for non-neural models) to `path`
    /// and the configuration plus any tree or linear structure to its JSON
    /// sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let fitted = self
            .fitted
            .as_ref()
            .ok_or_else(|| Error::State("cannot save an unfitted model".into()))?;
        let (store, structure) = match fitted {
            Fitted::Pm => (ParamStore::new(), FittedStructure::None),
            Fitted::Lr(m) => (ParamStore::new(), FittedStructure::Linear(m.clone())),
            Fitted::Rt(m) => (ParamStore::new(), FittedStructure::Tree(m.clone())),
            Fitted::Gbt(m) => (ParamStore::new(), FittedStructure::Ensemble(m.clone())),
            Fitted::Mlp(m) => (m.store.clone(), FittedStructure::None),
            Fitted::Lstm(m) => (m.store.clone(), FittedStructure::None),
        };
        store.save(path)?;
        let card = BaselineCard {
            format: BASELINE_FORMAT.into(),
            config: self.config.clone(),
            feature_count: self.config.window_length + 2,
            structure,
            fingerprint: store.fingerprint(),
        };
        let sidecar = sidecar_path(path);
        std::fs::write(&sidecar, serde_json::to_string_pretty(&card)?).map_err(|e| Error::io(&sidecar, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let sidecar = sidecar_path(path);
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let card: BaselineCard = serde_json::from_str(&text)?;
        if card.format != BASELINE_FORMAT {
            return Err(Error::Artifact(format!("unknown baseline format `{}`", card.format)));
        }
        card.config.validate()?;
        let store = ParamStore::load(path)?;
        if store.fingerprint() != card.fingerprint {
            return Err(Error::Artifact("weights do not match their sidecar".into()));
        }
        let w = card.config.window_length;
        let extra = card.feature_count.checked_sub(w).ok_or_else(|| Error::Artifact("feature count below window".into()))?;
        let fitted = match (&card.config.hyperparams, card.structure) {
            (Hyperparams::Pm, _) => Fitted::Pm,
            (Hyperparams::Lr(_), FittedStructure::Linear(m)) => Fitted::Lr(m),
            (Hyperparams::Rt(_), FittedStructure::Tree(m)) => Fitted::Rt(m),
            (Hyperparams::Gbt(_), FittedStructure::Ensemble(m)) => Fitted::Gbt(m),
            (Hyperparams::Mlp(p), _) => Fitted::Mlp(Mlp::from_store(store, card.feature_count, &p.hidden)?),
            (Hyperparams::Lstm(p), _) => Fitted::Lstm(Lstm::from_store(store, w, extra, p)?),
            _ => return Err(Error::Artifact("model structure does not match its kind".into())),
        };
        Ok(Self {
            config: card.config,
            fitted: Some(fitted),
        })
    }
}

const BASELINE_FORMAT: &str = "loadcast-baseline-v1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", content = "model", rename_all = "snake_case")]
enum FittedStructure {
    None,
    Linear(LinearModel),
    Tree(RegressionTree),
    Ensemble(GradientBoosting),
}

#[derive(Debug, Serialize, Deserialize)]
struct BaselineCard {
    format: String,
    config: BaselineConfig,
    feature_count: usize,
    structure: FittedStructure,
    fingerprint: u64,
}

impl ForecastModel for Baseline {
    fn id(&self) -> ModelId {
        self.config.model_id()
    }

    fn context_length(&self) -> usize {
        self.config.window_length
    }

    fn fit(&mut self, train: &TimeSeries) -> Result<()> {
        if matches!(self.config.hyperparams, Hyperparams::Pm) {
            return Ok(());
        }
        let set = make_windows(train, self.config.window_length, 1)?;
        self.fit_windows(&set)
    }

    fn predict_block(&self, context: &[f64], clock: TargetClock) -> Result<Vec<f64>> {
        let w = self.config.window_length;
        if context.len() < w {
            return Err(Error::InsufficientData(format!(
                "{} needs {w} context values, got {}",
                self.id(),
                context.len()
            )));
        }
        let x = window_features(&context[context.len() - w..], clock.hour(0));
        Ok(vec![self.predict_features(&x)?])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn load_like(n: usize) -> TimeSeries {
        let start = NaiveDate::from_ymd_opt(2024, 3, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let values = (0..n)
            .map(|t| 0.5 + 0.3 * (std::f64::consts::TAU * t as f64 / 24.0).sin() + 0.01 * ((t * 7919) % 13) as f64 / 13.0)
            .collect();
        TimeSeries::hourly("load", start, values).unwrap()
    }

    fn quick(id: ModelId) -> Baseline {
        let mut c = BaselineConfig::table_defaults(id).unwrap().with_seed(3);
        match &mut c.hyperparams {
            Hyperparams::Mlp(p) => p.schedule.epochs = 5,
            Hyperparams::Lstm(p) => p.schedule.epochs = 2,
            Hyperparams::Gbt(p) => p.estimators = 20,
            _ => {}
        }
        Baseline::new(c).unwrap()
    }

    #[test]
    fn every_baseline_fits_and_predicts() {
        let train = load_like(96);
        let ctx = &train.values()[72..96];
        for id in ModelId::BASELINES {
            let mut m = quick(id);
            assert_eq!(m.id(), id);
            m.fit(&train).unwrap();
            let p = m.predict_one_step(ctx, TargetClock::after(&train)).unwrap();
            assert!(p.is_finite(), "{id}");
            let mut again = quick(id);
            again.fit(&train).unwrap();
            assert_eq!(again.predict_one_step(ctx, TargetClock::after(&train)).unwrap(), p, "{id}");
        }
    }

    #[test]
    fn persistence_copies_context() {
        let m = Baseline::table_defaults(ModelId::Pm, 0).unwrap();
        assert_eq!(m.predict_one_step(&[0.3; 24], TargetClock::hourly(0.0)).unwrap(), 0.3);
        let mut ctx = vec![0.0; 24];
        ctx[23] = 0.8;
        assert_eq!(m.predict_one_step(&ctx, TargetClock::hourly(5.0)).unwrap(), 0.8);
    }

    #[test]
    fn unfitted_prediction_is_a_state_error() {
        let m = Baseline::table_defaults(ModelId::Lr, 0).unwrap();
        assert!(matches!(m.predict_one_step(&[0.0; 24], TargetClock::hourly(0.0)), Err(Error::State(_))));
        assert!(Baseline::table_defaults(ModelId::Tsfm, 0).is_err());
    }

    #[test]
    fn artifacts_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let train = load_like(96);
        let ctx = &train.values()[72..96];
        let clock = TargetClock::after(&train);
        for id in ModelId::BASELINES {
            let mut m = quick(id);
            m.fit(&train).unwrap();
            let path = dir.path().join(format!("{id}.bin"));
            m.save(&path).unwrap();
            let back = Baseline::load(&path).unwrap();
            assert_eq!(
                back.predict_one_step(ctx, clock).unwrap(),
                m.predict_one_step(ctx, clock).unwrap(),
                "{id}"
            );
        }
    }
}
