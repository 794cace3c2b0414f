use std::sync::Arc;

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::ExperimentSpec;
use crate::baselines::{Baseline, BaselineConfig};
use crate::error::{Error, Result};
use crate::forecast::{recursive_forecast, ForecastModel, ModelId, TargetClock};
use crate::hyperopt::tune_baseline;
use crate::metrics::{aggregate_runs, MetricTriple};
use crate::series::{split_case, CaseId, NormalizationParams, TimeSeries};
use crate::tsfm::{FineTuneOptions, TransformerForecaster, TsfmModel};

/// Longest stretch of test data kept per cell for plotting.
pub const TRACE_LIMIT: usize = 168;

/// Builds ready-to-fit forecasters.
#[derive(Debug, Clone)]
pub struct ModelFactory {
    pub pretrained: Option<Arc<TransformerForecaster>>,
    pub fine_tune: bool,
    pub fine_tune_options: FineTuneOptions,
    pub baseline_configs: Vec<BaselineConfig>,
    pub tune_budget: Option<usize>,
}

impl Default for ModelFactory {
    fn default() -> Self {
        Self {
            pretrained: None,
            fine_tune: true,
            fine_tune_options: FineTuneOptions::default(),
            baseline_configs: Vec::new(),
            tune_budget: None,
        }
    }
}

impl ModelFactory {
    pub fn from_spec(spec: &ExperimentSpec, pretrained: Option<Arc<TransformerForecaster>>) -> Self {
        Self {
            pretrained,
            fine_tune: spec.fine_tune,
            fine_tune_options: spec.fine_tune_options.clone().unwrap_or_default(),
            baseline_configs: spec.baseline_configs.clone(),
            tune_budget: spec.tune_budget,
        }
    }

    fn baseline_config(&self, id: ModelId) -> Option<BaselineConfig> {
        self.baseline_configs
            .iter()
            .find(|c| c.model_id() == id)
            .cloned()
            .or_else(|| BaselineConfig::table_defaults(id))
    }

    /// An unfitted model for `id`. When tuning is on, baselines are tuned on
    /// `train` first, which is the only data this call sees.
    pub fn prepare(&self, id: ModelId, seed: u64, train: &TimeSeries) -> Result<Box<dyn ForecastModel>> {
        if id == ModelId::Tsfm {
            let base = self
                .pretrained
                .clone()
                .ok_or_else(|| Error::Config("the transformer needs a pretrained artifact".into()))?;
            return Ok(if self.fine_tune {
                let mut m = TsfmModel::new(base, self.fine_tune_options.clone());
                m.set_seed(seed);
                Box::new(m)
            } else {
                Box::new(TsfmModel::zero_shot(base))
            });
        }
        let config = self
            .baseline_config(id)
            .ok_or_else(|| Error::Config(format!("no configuration for {id}")))?
            .with_seed(seed);
        let config = match self.tune_budget {
            Some(budget) if crate::hyperopt::default_space(id).is_some() => {
                tune_baseline(train, id, budget, seed)?.config.with_seed(seed)
            }
            _ => config,
        };
        Ok(Box::new(Baseline::new(config)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessPurpose {
    Normalize,
    Prepare,
    Fit,
}

/// One hand-over of series data to a fitting step.
#[derive(Debug, Clone, PartialEq)]
pub struct DataAccess {
    pub model: ModelId,
    pub case: CaseId,
    pub run: usize,
    pub purpose: AccessPurpose,
    pub first: NaiveDateTime,
    pub last: NaiveDateTime,
    pub first_test: NaiveDateTime,
}

/// Sees every series handed to normalisation, preparation and fitting.
pub trait AccessObserver: Send + Sync {
    fn observe(&self, access: &DataAccess);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Ok {
        mean: MetricTriple,
        rmse_std: f64,
        runs: Vec<MetricTriple>,
    },
    Err {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub model: ModelId,
    pub case: CaseId,
    pub horizon: usize,
    #[serde(flatten)]
    pub outcome: CellOutcome,
}

impl CellResult {
    pub fn mean(&self) -> Option<&MetricTriple> {
        match &self.outcome {
            CellOutcome::Ok { mean, .. } => Some(mean),
            CellOutcome::Err { .. } => None,
        }
    }
}

/// Back-to-back forecasts from origins spaced one horizon apart, from the
/// first run of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub model: ModelId,
    pub case: CaseId,
    pub horizon: usize,
    pub start: NaiveDateTime,
    pub actual: Vec<f64>,
    pub forecast: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    pub master_seed: u64,
    pub runs_per_model: usize,
    /// Grid order: model, then case, then horizon.
    pub cells: Vec<CellResult>,
    #[serde(default)]
    pub traces: Vec<Trace>,
}

impl MetricReport {
    pub fn cell(&self, model: ModelId, case: CaseId, horizon: usize) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.case == case && c.horizon == horizon)
    }

    pub fn trace(&self, model: ModelId, case: CaseId, horizon: usize) -> Option<&Trace> {
        self.traces
            .iter()
            .find(|t| t.model == model && t.case == case && t.horizon == horizon)
    }

    pub fn error_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.outcome, CellOutcome::Err { .. }))
            .count()
    }

    pub fn is_fully_failed(&self) -> bool {
        !self.cells.is_empty() && self.error_count() == self.cells.len()
    }

    pub fn models(&self) -> Vec<ModelId> {
        let mut m: Vec<ModelId> = self.cells.iter().map(|c| c.model).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn cases(&self) -> Vec<CaseId> {
        let mut c: Vec<CaseId> = self.cells.iter().map(|c| c.case).collect();
        c.sort();
        c.dedup();
        c
    }

    pub fn horizons(&self) -> Vec<usize> {
        let mut h: Vec<usize> = self.cells.iter().map(|c| c.horizon).collect();
        h.sort();
        h.dedup();
        h
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one run of one (model, case) pair.
pub fn derive_seed(master: u64, model: ModelId, case: CaseId, run: usize) -> u64 {
    [model as u64, case as u64, run as u64]
        .iter()
        .fold(splitmix(master), |acc, &x| splitmix(acc ^ x))
}

/// Rolling-origin forecasts on normalised `values`: one recursive
/// trajectory per origin in `origins`, each as long as the remaining data
/// allows up to `max_horizon`.
pub fn rolling_forecasts(
    model: &dyn ForecastModel,
    series: &TimeSeries,
    values: &[f64],
    origins: std::ops::Range<usize>,
    max_horizon: usize,
) -> Result<Vec<Vec<f64>>> {
    origins
        .map(|o| {
            let len = max_horizon.min(values.len() - o);
            recursive_forecast(model, &values[..o], TargetClock::at(series, o), len)
        })
        .collect()
}

/// Metrics for look-ahead `horizon` pooled over steps 1..=horizon of every
/// origin that has a full horizon of actuals.
pub fn score_horizon(
    actual: &[f64],
    first_origin: usize,
    trajectories: &[Vec<f64>],
    horizon: usize,
) -> Result<MetricTriple> {
    let mut a = Vec::new();
    let mut f = Vec::new();
    for (k, traj) in trajectories.iter().enumerate() {
        let o = first_origin + k;
        if traj.len() < horizon || o + horizon > actual.len() {
            continue;
        }
        a.extend_from_slice(&actual[o..o + horizon]);
        f.extend_from_slice(&traj[..horizon]);
    }
    if a.is_empty() {
        return Err(Error::InsufficientData(format!("test slice is shorter than {horizon} hours")));
    }
    MetricTriple::evaluate(&a, &f)
}

struct RunOutput {
    metrics: Vec<Result<MetricTriple>>,
    traces: Vec<Trace>,
}

struct Job {
    model: ModelId,
    case: CaseId,
    run: usize,
}

fn run_job(
    job: &Job,
    spec: &ExperimentSpec,
    series: &TimeSeries,
    factory: &ModelFactory,
    observer: Option<&dyn AccessObserver>,
) -> Result<RunOutput> {
    let split = split_case(series, job.case)?;
    let offset = split.test_offset();
    let first_test = split.test.start();
    let notify = |purpose, s: &TimeSeries| {
        if let Some(obs) = observer {
            obs.observe(&DataAccess {
                model: job.model,
                case: job.case,
                run: job.run,
                purpose,
                first: s.start(),
                last: s.end(),
                first_test,
            });
        }
    };

    notify(AccessPurpose::Normalize, &split.train);
    let scaler = NormalizationParams::fit(split.train.values())?;
    let train = scaler.normalize(&split.train)?;
    let seed = derive_seed(spec.master_seed, job.model, job.case, job.run);
    notify(AccessPurpose::Prepare, &train);
    let mut model = factory.prepare(job.model, seed, &train)?;
    notify(AccessPurpose::Fit, &train);
    model.fit(&train)?;

    let scaled = scaler.apply_all(series.values());
    let actual = series.values();
    let max_h = spec.horizons_hours.iter().copied().max().unwrap_or(1);
    let last_origin = series.len();
    let end = spec.max_origins.map_or(last_origin, |cap| (offset + cap).min(last_origin));
    let trajectories: Vec<Vec<f64>> = rolling_forecasts(model.as_ref(), series, &scaled, offset..end, max_h)?
        .into_iter()
        .map(|t| scaler.invert_all(&t))
        .collect();
    let metrics = spec
        .horizons_hours
        .iter()
        .map(|&h| score_horizon(actual, offset, &trajectories, h))
        .collect();

    let mut traces = Vec::new();
    if job.run == 0 {
        for &h in &spec.horizons_hours {
            let mut fc = Vec::new();
            let mut o = offset;
            while o + h <= series.len() && fc.len() + h <= TRACE_LIMIT.max(h) {
                let t = recursive_forecast(model.as_ref(), &scaled[..o], TargetClock::at(series, o), h)?;
                fc.extend(scaler.invert_all(&t));
                o += h;
            }
            traces.push(Trace {
                model: job.model,
                case: job.case,
                horizon: h,
                start: first_test,
                actual: actual[offset..offset + fc.len()].to_vec(),
                forecast: fc,
            });
        }
    }
    Ok(RunOutput { metrics, traces })
}

/// Runs the (model, case, horizon) grid on `series`. Model failures become
/// errored cells; only invalid specs fail the whole call.
pub fn run_on_series(
    spec: &ExperimentSpec,
    series: &TimeSeries,
    pretrained: Option<Arc<TransformerForecaster>>,
    observer: Option<&dyn AccessObserver>,
) -> Result<MetricReport> {
    spec.validate()?;
    let spec = spec.normalized();
    let factory = ModelFactory::from_spec(&spec, pretrained);
    let jobs: Vec<Job> = spec
        .models
        .iter()
        .flat_map(|&model| {
            spec.cases
                .iter()
                .flat_map(move |&case| (0..spec.runs_per_model).map(move |run| Job { model, case, run }))
        })
        .collect();
    let outputs: Vec<Result<RunOutput>> = jobs
        .par_iter()
        .map(|job| run_job(job, &spec, series, &factory, observer))
        .collect();

    let mut cells = Vec::new();
    let mut traces = Vec::new();
    let per_pair = spec.runs_per_model;
    for (pair, chunk) in outputs.chunks(per_pair).enumerate() {
        let job = &jobs[pair * per_pair];
        for (hi, &horizon) in spec.horizons_hours.iter().enumerate() {
            let mut runs = Vec::with_capacity(per_pair);
            let mut failure = None;
            for out in chunk {
                match out {
                    Ok(o) => match &o.metrics[hi] {
                        Ok(m) => runs.push(*m),
                        Err(e) => failure = failure.or(Some(e.to_string())),
                    },
                    Err(e) => failure = failure.or(Some(e.to_string())),
                }
            }
            let outcome = match failure {
                Some(message) => {
                    log::warn!("{} {} {}h failed: {message}", job.model, job.case, horizon);
                    CellOutcome::Err { message }
                }
                None => {
                    let mean = aggregate_runs(&runs)?;
                    let n = runs.len() as f64;
                    let pairs: f64 = runs
                        .iter()
                        .enumerate()
                        .flat_map(|(i, a)| runs[i + 1..].iter().map(move |b| (a.rmse - b.rmse).powi(2)))
                        .sum();
                    let var = pairs / (n * n);
                    CellOutcome::Ok {
                        mean,
                        rmse_std: var.sqrt(),
                        runs,
                    }
                }
            };
            cells.push(CellResult {
                model: job.model,
                case: job.case,
                horizon,
                outcome,
            });
        }
        if let Some(Ok(first)) = chunk.first() {
            traces.extend(first.traces.iter().cloned());
        }
    }
    Ok(MetricReport {
        dataset: series.name().to_string(),
        master_seed: spec.master_seed,
        runs_per_model: spec.runs_per_model,
        cells,
        traces,
    })
}

/// Loads the dataset and (when the transformer is listed) the pretrained
/// artifact named by `spec`, then runs the grid.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<MetricReport> {
    spec.validate()?;
    let series = spec
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Config("spec names no dataset".into()))?
        .load()?;
    let pretrained = if spec.models.contains(&ModelId::Tsfm) {
        let path = spec
            .pretrained_artifact
            .as_ref()
            .ok_or_else(|| Error::Config("the transformer is listed but no pretrained_artifact is given".into()))?;
        Some(Arc::new(TransformerForecaster::load(path)?))
    } else {
        None
    };
    run_on_series(spec, &series, pretrained, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::spec::SyntheticLoad;
    use std::sync::Mutex;

    fn sine_series(days: usize) -> TimeSeries {
        let start = chrono::NaiveDate::from_ymd_opt(2024, 3, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let values = (0..days * 24)
            .map(|t| 10.0 + 3.0 * (std::f64::consts::TAU * t as f64 / 24.0).sin())
            .collect();
        TimeSeries::hourly("sine", start, values).unwrap()
    }

    fn spec(models: Vec<ModelId>, runs: usize) -> ExperimentSpec {
        ExperimentSpec {
            models,
            runs_per_model: runs,
            cases: vec![CaseId::Case1, CaseId::Case2],
            horizons_hours: vec![1, 4],
            max_origins: Some(48),
            ..Default::default()
        }
    }

    #[test]
    fn persistence_matches_lag_one_oracle() {
        let series = sine_series(10);
        let s = ExperimentSpec {
            max_origins: None,
            ..spec(vec![ModelId::Pm], 1)
        };
        let report = run_on_series(&s, &series, None, None).unwrap();
        let v = series.values();
        for case in [CaseId::Case1, CaseId::Case2] {
            let off = case.train_days() * 24;
            let sq: f64 = (off..v.len()).map(|t| (v[t] - v[t - 1]).powi(2)).sum();
            let oracle = (sq / (v.len() - off) as f64).sqrt();
            let got = report.cell(ModelId::Pm, case, 1).unwrap().mean().unwrap().rmse;
            assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
        }
    }

    #[test]
    fn deterministic_models_have_zero_spread() {
        let series = SyntheticLoad { days: 12, ..Default::default() }.generate().unwrap();
        let report = run_on_series(&spec(vec![ModelId::Pm, ModelId::Lr, ModelId::Rt], 3), &series, None, None).unwrap();
        assert_eq!(report.error_count(), 0);
        for cell in &report.cells {
            let CellOutcome::Ok { rmse_std, runs, .. } = &cell.outcome else { panic!() };
            assert_eq!(*rmse_std, 0.0);
            assert!(runs.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn single_run_mean_is_that_run() {
        let series = SyntheticLoad { days: 12, ..Default::default() }.generate().unwrap();
        let report = run_on_series(&spec(vec![ModelId::Lr], 1), &series, None, None).unwrap();
        for cell in &report.cells {
            let CellOutcome::Ok { mean, runs, .. } = &cell.outcome else { panic!() };
            assert_eq!(runs.len(), 1);
            assert_eq!(*mean, runs[0]);
        }
    }

    #[test]
    fn missing_transformer_artifact_errors_only_its_cells() {
        let series = SyntheticLoad { days: 12, ..Default::default() }.generate().unwrap();
        let report = run_on_series(&spec(vec![ModelId::Tsfm, ModelId::Pm], 1), &series, None, None).unwrap();
        assert_eq!(report.error_count(), 4);
        assert!(report.cells.iter().all(|c| (c.model == ModelId::Tsfm) == c.mean().is_none()));
        assert!(!report.is_fully_failed());
    }

    #[test]
    fn grid_order_and_reproducibility() {
        let series = SyntheticLoad { days: 12, ..Default::default() }.generate().unwrap();
        let s = spec(vec![ModelId::Rt, ModelId::Pm], 2);
        let a = run_on_series(&s, &series, None, None).unwrap();
        let b = run_on_series(&s, &series, None, None).unwrap();
        assert_eq!(a, b);
        let keys: Vec<_> = a.cells.iter().map(|c| (c.model, c.case, c.horizon)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(a.traces.len(), 2 * 2 * 2);
    }

    struct Recorder(Mutex<Vec<DataAccess>>);

    impl AccessObserver for Recorder {
        fn observe(&self, access: &DataAccess) {
            self.0.lock().unwrap().push(access.clone());
        }
    }

    #[test]
    fn fitting_never_sees_test_data() {
        let series = SyntheticLoad { days: 12, ..Default::default() }.generate().unwrap();
        let rec = Recorder(Mutex::new(Vec::new()));
        run_on_series(&spec(vec![ModelId::Lr, ModelId::Pm], 2), &series, None, Some(&rec)).unwrap();
        let log = rec.0.into_inner().unwrap();
        assert_eq!(log.len(), 2 * 2 * 2 * 3);
        assert!(log.iter().all(|a| a.last < a.first_test));
    }

    #[test]
    fn seeds_differ_across_runs() {
        let a = derive_seed(0, ModelId::Mlp, CaseId::Case1, 0);
        let b = derive_seed(0, ModelId::Mlp, CaseId::Case1, 1);
        let c = derive_seed(0, ModelId::Lstm, CaseId::Case1, 0);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, derive_seed(0, ModelId::Mlp, CaseId::Case1, 0));
    }
}
