use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baselines::BaselineConfig;
use crate::error::{Error, Result};
use crate::forecast::ModelId;
use crate::series::{load_csv, CaseId, TimeSeries};
use crate::tsfm::FineTuneOptions;

pub const HORIZONS: [usize; 5] = [1, 4, 6, 12, 24];
pub const DEFAULT_RUNS: usize = 30;

/// Load-like hourly data: a daily cycle, a weaker weekly cycle, a linear
/// drift and Gaussian noise around a positive base level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticLoad {
    pub days: usize,
    pub base: f64,
    pub daily_amplitude: f64,
    pub weekly_amplitude: f64,
    /// Change in level per day.
    pub drift: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticLoad {
    fn default() -> Self {
        Self {
            days: 60,
            base: 100.0,
            daily_amplitude: 20.0,
            weekly_amplitude: 5.0,
            drift: 0.0,
            noise_std: 2.0,
            seed: 0,
        }
    }
}

impl SyntheticLoad {
    pub fn generate(&self) -> Result<TimeSeries> {
        if self.days == 0 || !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(Error::Config("synthetic load needs days > 0 and a finite noise_std >= 0".into()));
        }
        let noise = Normal::new(0.0, self.noise_std).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let tau = std::f64::consts::TAU;
        let values = (0..self.days * 24)
            .map(|t| {
                let t = t as f64;
                self.base
                    + self.drift * t / 24.0
                    + self.daily_amplitude * (tau * (t - 6.0) / 24.0).sin()
                    + self.weekly_amplitude * (tau * t / 168.0).sin()
                    + noise.sample(&mut rng)
            })
            .collect();
        let start = NaiveDate::from_ymd_opt(2023, 1, 1)
            .and_then(|d| d.and_hms_opt(0, 0, 0))
            .ok_or_else(|| Error::Config("bad synthetic start".into()))?;
        TimeSeries::hourly(format!("synthetic-{}", self.seed), start, values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Path(PathBuf),
    Synthetic(SyntheticLoad),
}

impl DatasetSource {
    pub fn load(&self) -> Result<TimeSeries> {
        match self {
            DatasetSource::Path(p) => load_csv(p),
            DatasetSource::Synthetic(s) => s.generate(),
        }
    }
}

fn default_cases() -> Vec<CaseId> {
    CaseId::ALL.to_vec()
}

fn default_horizons() -> Vec<usize> {
    HORIZONS.to_vec()
}

fn default_models() -> Vec<ModelId> {
    ModelId::ALL.to_vec()
}

fn default_runs() -> usize {
    DEFAULT_RUNS
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub dataset: Option<DatasetSource>,
    #[serde(default = "default_cases")]
    pub cases: Vec<CaseId>,
    #[serde(default = "default_horizons")]
    pub horizons_hours: Vec<usize>,
    #[serde(default = "default_models")]
    pub models: Vec<ModelId>,
    #[serde(default = "default_runs")]
    pub runs_per_model: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "yes")]
    pub fine_tune: bool,
    #[serde(default)]
    pub pretrained_artifact: Option<PathBuf>,
    /// Caps the rolling origins scored per cell, counted from the start of
    /// the test slice. `None` scores the whole test slice.
    #[serde(default)]
    pub max_origins: Option<usize>,
    #[serde(default)]
    pub fine_tune_options: Option<FineTuneOptions>,
    /// Replaces the benchmark settings of the listed baselines.
    #[serde(default)]
    pub baseline_configs: Vec<BaselineConfig>,
    /// Bayesian tuning budget per baseline fit; `None` keeps fixed settings.
    #[serde(default)]
    pub tune_budget: Option<usize>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            dataset: None,
            cases: default_cases(),
            horizons_hours: default_horizons(),
            models: default_models(),
            runs_per_model: DEFAULT_RUNS,
            master_seed: 0,
            fine_tune: true,
            pretrained_artifact: None,
            max_origins: None,
            fine_tune_options: None,
            baseline_configs: Vec::new(),
            tune_budget: None,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.runs_per_model == 0 {
            return Err(Error::Config("runs_per_model must be at least 1".into()));
        }
        if self.horizons_hours.is_empty() || self.horizons_hours.contains(&0) {
            return Err(Error::Config("horizons must be a nonempty set of positive hours".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models listed".into()));
        }
        if self.cases.is_empty() {
            return Err(Error::Config("no cases listed".into()));
        }
        if self.max_origins == Some(0) {
            return Err(Error::Config("max_origins must be positive".into()));
        }
        for c in &self.baseline_configs {
            c.validate()?;
        }
        Ok(())
    }

    /// Reads a JSON spec; relative paths inside it resolve against the
    /// spec's own directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: Self = serde_json::from_str(&text)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        if let Some(DatasetSource::Path(p)) = &mut spec.dataset {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        if let Some(p) = &mut spec.pretrained_artifact {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Cases, horizons and models sorted and deduplicated.
    pub fn normalized(&self) -> Self {
        let mut s = self.clone();
        s.cases.sort();
        s.cases.dedup();
        s.horizons_hours.sort();
        s.horizons_hours.dedup();
        s.models.sort();
        s.models.dedup();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_takes_defaults() {
        let spec: ExperimentSpec = serde_json::from_str(r#"{"models": ["pm", "lr"], "runs_per_model": 2}"#).unwrap();
        assert_eq!(spec.cases.len(), 5);
        assert_eq!(spec.horizons_hours, HORIZONS);
        assert!(spec.fine_tune);
        spec.validate().unwrap();
    }

    #[test]
    fn invalid_specs_rejected() {
        let zero_runs = ExperimentSpec {
            runs_per_model: 0,
            ..Default::default()
        };
        assert!(zero_runs.validate().is_err());
        let no_horizons = ExperimentSpec {
            horizons_hours: vec![],
            ..Default::default()
        };
        assert!(no_horizons.validate().is_err());
        let no_models = ExperimentSpec {
            models: vec![],
            ..Default::default()
        };
        assert!(no_models.validate().is_err());
    }

    #[test]
    fn dataset_forms_parse() {
        let p: DatasetSource = serde_json::from_str(r#"{"path": "x.csv"}"#).unwrap();
        assert_eq!(p, DatasetSource::Path("x.csv".into()));
        let s: DatasetSource = serde_json::from_str(r#"{"synthetic": {"days": 10, "seed": 3}}"#).unwrap();
        let DatasetSource::Synthetic(s) = s else { panic!() };
        assert_eq!((s.days, s.seed, s.base), (10, 3, 100.0));
    }

    #[test]
    fn synthetic_load_is_seeded_and_daily() {
        let spec = SyntheticLoad {
            noise_std: 0.0,
            weekly_amplitude: 0.0,
            ..Default::default()
        };
        let s = spec.generate().unwrap();
        assert_eq!(s.len(), 60 * 24);
        let v = s.values();
        for t in 0..v.len() - 24 {
            assert!((v[t] - v[t + 24]).abs() < 1e-9);
        }
        let noisy = SyntheticLoad::default();
        assert_eq!(noisy.generate().unwrap(), noisy.generate().unwrap());
    }
}
