use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TransformerConfig;
use super::model::{init_params, ForwardBuilder, Layout};
use crate::error::{Error, Result};
use crate::forecast::{recursive_forecast, ForecastModel, ModelId, TargetClock};
use crate::nn::{grad_check, Adam, Graph, ParamId, ParamStore, Tensor2};
use crate::series::{NormalizationParams, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingState {
    Untrained,
    Pretrained,
    FineTuned,
}

/// Where the weights came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub init_seed: u64,
    pub corpus_master_seed: Option<u64>,
    pub corpus_series: usize,
    pub pretrain_seed: Option<u64>,
    pub pretrain_epochs: usize,
    pub fine_tune_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Windows drawn from each series per epoch; `None` uses all of them.
    pub windows_per_series: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            windows_per_series: Some(16),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Share of the series, taken from its end, used for early stopping.
    pub validation_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Cap on training windows visited per epoch.
    pub max_windows_per_epoch: Option<usize>,
}

impl Default for FineTuneOptions {
    fn default() -> Self {
        Self::from_pretrain(&TrainOptions::default())
    }
}

impl FineTuneOptions {
    /// Defaults derived from a pretraining schedule: a tenth of its rate.
    pub fn from_pretrain(pretrain: &TrainOptions) -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.1 * pretrain.learning_rate,
            batch_size: 8,
            seed: pretrain.seed,
            validation_fraction: 0.2,
            patience: 5,
            max_windows_per_epoch: Some(128),
        }
    }
}

/// Per-epoch losses. For fine-tuning, `validation_loss[0]` is measured
/// before the first update and `best_epoch` indexes into it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Window {
    series: usize,
    start: usize,
    target_len: usize,
}

/// The encoder-decoder forecaster together with its weights and state.
#[derive(Debug, Clone)]
pub struct TransformerForecaster {
    config: TransformerConfig,
    params: ParamStore,
    layout: Arc<Layout>,
    normalizer: Option<NormalizationParams>,
    state: TrainingState,
    provenance: Provenance,
}

/// Min-max scales a pretraining series; flat series map to 0.5.
fn scale_for_training(values: &[f64]) -> Vec<f64> {
    match NormalizationParams::fit(values) {
        Ok(n) => n.apply_all(values),
        Err(_) => vec![0.5; values.len()],
    }
}

impl TransformerForecaster {
    pub fn new(config: TransformerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_params(&config, &mut rng)?;
        let layout = Arc::new(Layout::resolve(&params, &config)?);
        Ok(Self {
            config,
            params,
            layout,
            normalizer: None,
            state: TrainingState::Untrained,
            provenance: Provenance {
                init_seed: seed,
                ..Default::default()
            },
        })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn normalizer(&self) -> Option<NormalizationParams> {
        self.normalizer
    }

    pub fn state(&self) -> TrainingState {
        self.state
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn set_corpus_provenance(&mut self, master_seed: u64, series: usize) {
        self.provenance.corpus_master_seed = Some(master_seed);
        self.provenance.corpus_series = series;
    }

    pub fn fingerprint(&self) -> u64 {
        self.params.fingerprint()
    }

    fn builder(&self) -> ForwardBuilder<'_> {
        ForwardBuilder {
            config: &self.config,
            store: &self.params,
            layout: &self.layout,
            maps: None,
        }
    }

    /// Teacher-forced pass: predictions for every decoder position given the
    /// normalised `context` and the `previous` targets (shifted right behind
    /// the start token). Returns `previous.len() + 1` values.
    pub fn forward(&self, context: &[f64], previous: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let mut b = self.builder();
        let memory = b.encode(&mut g, context)?;
        let out = b.decode(&mut g, memory, previous)?;
        Ok(g.value(out).data().to_vec())
    }

    /// Finite-difference check of the teacher-forced MSE on `targets` over
    /// `probes` random parameters. Returns the largest relative error; the
    /// model's own weights are not touched.
    pub fn gradient_check(&self, context: &[f64], targets: &[f64], probes: usize, seed: u64) -> Result<f64> {
        if targets.is_empty() {
            return Err(Error::EmptyInput("gradient check needs targets".into()));
        }
        let mut store = self.params.clone();
        let layout = &self.layout;
        let config = &self.config;
        let target = Tensor2::column(targets)?;
        grad_check(&mut store, probes, seed, |g, s| {
            let mut b = ForwardBuilder {
                config,
                store: s,
                layout,
                maps: None,
            };
            let memory = b.encode(g, context)?;
            let pred = b.decode(g, memory, &targets[..targets.len() - 1])?;
            g.mse(pred, target.clone())
        })
    }

    /// Every attention weight matrix of one forward pass, encoder layers
    /// first, heads in order within each block.
    pub fn attention_maps(&self, context: &[f64], previous: &[f64]) -> Result<Vec<Tensor2>> {
        let mut g = Graph::new();
        let mut b = self.builder();
        b.maps = Some(Vec::new());
        let memory = b.encode(&mut g, context)?;
        b.decode(&mut g, memory, previous)?;
        Ok(b.maps
            .unwrap_or_default()
            .into_iter()
            .map(|v| g.value(v).clone())
            .collect())
    }

    /// Autoregressive generation of `steps` normalised values (at most the
    /// native horizon) from a normalised context.
    pub fn generate(&self, context: &[f64], steps: usize) -> Result<Vec<f64>> {
        if steps == 0 || steps > self.config.horizon_length {
            return Err(Error::Config(format!(
                "can generate 1..={} steps in one pass, asked for {steps}",
                self.config.horizon_length
            )));
        }
        let mut g = Graph::new();
        let mut b = self.builder();
        let memory = b.encode(&mut g, context)?;
        let mut produced = Vec::with_capacity(steps);
        for _ in 0..steps {
            let out = b.decode(&mut g, memory, &produced)?;
            let next = *g.value(out).data().last().expect("decoder output is non-empty");
            produced.push(next);
        }
        Ok(produced)
    }

    /// Forecasts `horizon` values after `history` in original units. Uses
    /// the fine-tuning normaliser when there is one, otherwise scales by
    /// the history itself. Never touches the weights.
    pub fn forecast(&self, history: &TimeSeries, horizon: usize) -> Result<Vec<f64>> {
        let c = self.config.context_length;
        if history.len() < c {
            return Err(Error::InsufficientData(format!(
                "history has {} points, context needs {c}",
                history.len()
            )));
        }
        let normalizer = match self.normalizer {
            Some(n) => n,
            None => NormalizationParams::fit(&history.values()[history.len() - c..])
                .or_else(|_| NormalizationParams::fit(history.values()))?,
        };
        let scaled = normalizer.apply_all(history.values());
        let view = NormalizedView(self);
        let out = recursive_forecast(&view, &scaled, TargetClock::after(history), horizon)?;
        Ok(normalizer.invert_all(&out))
    }

    fn check_series_len(&self, len: usize, need: usize, what: &str) -> Result<()> {
        if len < need {
            return Err(Error::InsufficientData(format!(
                "{what} has {len} points, needs at least {need}"
            )));
        }
        Ok(())
    }

    fn window_loss_and_grads(
        &self,
        data: &[Vec<f64>],
        w: Window,
    ) -> Result<(f64, Vec<(ParamId, Tensor2)>)> {
        let c = self.config.context_length;
        let series = &data[w.series];
        let context = &series[w.start..w.start + c];
        let targets = &series[w.start + c..w.start + c + w.target_len];
        let mut g = Graph::new();
        let mut b = self.builder();
        let memory = b.encode(&mut g, context)?;
        let pred = b.decode(&mut g, memory, &targets[..w.target_len - 1])?;
        let loss = g.mse(pred, Tensor2::column(targets)?)?;
        g.backward(loss)?;
        Ok((g.scalar(loss), g.param_grads()))
    }

    fn window_loss(&self, data: &[Vec<f64>], w: Window) -> Result<f64> {
        let c = self.config.context_length;
        let series = &data[w.series];
        let targets = &series[w.start + c..w.start + c + w.target_len];
        let pred = self.forward(&series[w.start..w.start + c], &targets[..w.target_len - 1])?;
        Ok(pred.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / targets.len() as f64)
    }

    fn mean_loss(&self, data: &[Vec<f64>], windows: &[Window]) -> Result<f64> {
        let losses = windows
            .par_iter()
            .map(|&w| self.window_loss(data, w))
            .collect::<Result<Vec<_>>>()?;
        Ok(losses.iter().sum::<f64>() / losses.len() as f64)
    }

    /// One Adam step on the mean loss of `batch`; returns that loss.
    fn train_batch(&mut self, data: &[Vec<f64>], batch: &[Window], adam: &mut Adam) -> Result<f64> {
        let results = batch
            .par_iter()
            .map(|&w| self.window_loss_and_grads(data, w))
            .collect::<Result<Vec<_>>>()?;
        self.params.zero_grads();
        let mut total = 0.0;
        for (loss, grads) in &results {
            total += loss;
            for (id, grad) in grads {
                self.params.accumulate_grad(*id, grad)?;
            }
        }
        let n = batch.len() as f64;
        self.params.scale_grads(1.0 / n);
        adam.step(&mut self.params)?;
        Ok(total / n)
    }

    fn run_epoch(
        &mut self,
        data: &[Vec<f64>],
        windows: &[Window],
        batch_size: usize,
        adam: &mut Adam,
    ) -> Result<f64> {
        let mut total = 0.0;
        for batch in windows.chunks(batch_size.max(1)) {
            total += self.train_batch(data, batch, adam)? * batch.len() as f64;
        }
        Ok(total / windows.len() as f64)
    }

    /// Trains on a corpus by minimising MSE over shuffled windows, each
    /// series min-max scaled on its own. Returns the per-epoch mean loss.
    pub fn pretrain(&mut self, corpus: &[TimeSeries], options: &TrainOptions) -> Result<TrainingCurve> {
        if corpus.is_empty() {
            return Err(Error::EmptyInput("pretraining corpus is empty".into()));
        }
        if options.learning_rate <= 0.0 || options.batch_size == 0 {
            return Err(Error::Config("learning rate and batch size must be positive".into()));
        }
        let (c, h) = (self.config.context_length, self.config.horizon_length);
        for s in corpus {
            self.check_series_len(s.len(), c + h, &format!("series `{}`", s.name()))?;
        }
        let mut curve = TrainingCurve::default();
        if options.epochs == 0 {
            return Ok(curve);
        }
        let data: Vec<Vec<f64>> = corpus.iter().map(|s| scale_for_training(s.values())).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let mut adam = Adam::new(options.learning_rate);
        self.params.reset_optimizer();
        for _ in 0..options.epochs {
            let mut windows = Vec::new();
            for (i, series) in data.iter().enumerate() {
                let count = series.len() - c - h + 1;
                let mut starts: Vec<usize> = (0..count).collect();
                if let Some(k) = options.windows_per_series {
                    if k < count {
                        starts.partial_shuffle(&mut rng, k);
                        starts.truncate(k);
                    }
                }
                windows.extend(starts.into_iter().map(|start| Window {
                    series: i,
                    start,
                    target_len: h,
                }));
            }
            windows.shuffle(&mut rng);
            let loss = self.run_epoch(&data, &windows, options.batch_size, &mut adam)?;
            curve.train_loss.push(loss);
        }
        self.state = TrainingState::Pretrained;
        self.provenance.pretrain_seed = Some(options.seed);
        self.provenance.pretrain_epochs += options.epochs;
        Ok(curve)
    }

    /// Adapts a pretrained model to one target series. The normaliser is
    /// fitted on `series`; the last `validation_fraction` of it drives early
    /// stopping, and the best weights seen (the starting ones included) are
    /// kept.
    pub fn fine_tune(&mut self, series: &TimeSeries, options: &FineTuneOptions) -> Result<TrainingCurve> {
        if self.state == TrainingState::Untrained {
            return Err(Error::State("fine-tuning needs a pretrained model".into()));
        }
        let normalizer = NormalizationParams::fit(series.values())?;
        let scaled = normalizer.apply_all(series.values());
        let curve = self.fine_tune_scaled(scaled, options)?;
        self.normalizer = Some(normalizer);
        Ok(curve)
    }

    fn fine_tune_scaled(&mut self, values: Vec<f64>, options: &FineTuneOptions) -> Result<TrainingCurve> {
        if self.state == TrainingState::Untrained {
            return Err(Error::State("fine-tuning needs a pretrained model".into()));
        }
        if options.learning_rate <= 0.0 || options.batch_size == 0 {
            return Err(Error::Config("learning rate and batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&options.validation_fraction) {
            return Err(Error::Config("validation fraction must lie in [0, 1)".into()));
        }
        let (c, h) = (self.config.context_length, self.config.horizon_length);
        let len = values.len();
        self.check_series_len(len, c + 1, "fine-tuning series")?;
        let mut curve = TrainingCurve::default();
        if options.epochs == 0 {
            return Ok(curve);
        }

        let tail = (len as f64 * options.validation_fraction).round() as usize;
        let cut = len - tail;
        let windows_before = |end: usize| -> Vec<Window> {
            (0..end.saturating_sub(c))
                .map(|start| Window {
                    series: 0,
                    start,
                    target_len: h.min(end - start - c),
                })
                .collect()
        };
        let (train, validation) = if tail > 0 && cut > c {
            let val = (cut - c..len - c)
                .map(|start| Window {
                    series: 0,
                    start,
                    target_len: h.min(len - start - c),
                })
                .collect();
            (windows_before(cut), val)
        } else {
            (windows_before(len), Vec::new())
        };
        let data = vec![values];

        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let mut adam = Adam::new(options.learning_rate);
        self.params.reset_optimizer();
        let mut best = self.params.clone();
        let mut best_loss = f64::INFINITY;
        if !validation.is_empty() {
            best_loss = self.mean_loss(&data, &validation)?;
            curve.validation_loss.push(best_loss);
            curve.best_epoch = Some(0);
        }
        let mut stale = 0;
        for epoch in 1..=options.epochs {
            let mut order = train.clone();
            order.shuffle(&mut rng);
            if let Some(cap) = options.max_windows_per_epoch {
                order.truncate(cap.max(1));
            }
            let loss = self.run_epoch(&data, &order, options.batch_size, &mut adam)?;
            curve.train_loss.push(loss);
            if validation.is_empty() {
                continue;
            }
            let val = self.mean_loss(&data, &validation)?;
            curve.validation_loss.push(val);
            if val < best_loss {
                best_loss = val;
                best.copy_values_from(&self.params)?;
                curve.best_epoch = Some(epoch);
                stale = 0;
            } else {
                stale += 1;
                if stale >= options.patience.max(1) {
                    break;
                }
            }
        }
        if !validation.is_empty() {
            self.params.copy_values_from(&best)?;
        }
        self.params.reset_optimizer();
        self.state = TrainingState::FineTuned;
        self.provenance.fine_tune_seed = Some(options.seed);
        Ok(curve)
    }

    /// Writes the weights to `path` and a JSON sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.params.save(path)?;
        let card = ModelCard {
            format: CARD_FORMAT.to_string(),
            config: self.config.clone(),
            normalizer: self.normalizer,
            state: self.state,
            provenance: self.provenance.clone(),
            fingerprint: self.fingerprint(),
        };
        let sidecar = sidecar_path(path);
        let json = serde_json::to_string_pretty(&card)?;
        std::fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let sidecar = sidecar_path(path);
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let card: ModelCard = serde_json::from_str(&text)?;
        if card.format != CARD_FORMAT {
            return Err(Error::Artifact(format!("unknown model format `{}`", card.format)));
        }
        card.config.validate()?;
        let params = ParamStore::load(path)?;
        let layout = Arc::new(Layout::resolve(&params, &card.config)?);
        if params.fingerprint() != card.fingerprint {
            return Err(Error::Artifact("weights do not match their sidecar".into()));
        }
        Ok(Self {
            config: card.config,
            params,
            layout,
            normalizer: card.normalizer,
            state: card.state,
            provenance: card.provenance,
        })
    }
}

const CARD_FORMAT: &str = "loadcast-transformer-v1";

#[derive(Debug, Serialize, Deserialize)]
struct ModelCard {
    format: String,
    config: TransformerConfig,
    normalizer: Option<NormalizationParams>,
    state: TrainingState,
    provenance: Provenance,
    fingerprint: u64,
}

/// `model.bin` → `model.bin.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Adapter that forecasts in normalised units for the recursion helper.
struct NormalizedView<'a>(&'a TransformerForecaster);

impl ForecastModel for NormalizedView<'_> {
    fn id(&self) -> ModelId {
        ModelId::Tsfm
    }
    fn context_length(&self) -> usize {
        self.0.config.context_length
    }
    fn native_horizon(&self) -> usize {
        self.0.config.horizon_length
    }
    fn fit(&mut self, _: &TimeSeries) -> Result<()> {
        Err(Error::State("read-only view".into()))
    }
    fn predict_block(&self, context: &[f64], _: TargetClock) -> Result<Vec<f64>> {
        self.0.generate(context, self.0.config.horizon_length)
    }
}

/// The transformer under the shared forecasting contract. `fit` restarts
/// from the pretrained weights and fine-tunes on the (already normalised)
/// training series, or leaves them untouched in zero-shot mode.
#[derive(Debug, Clone)]
pub struct TsfmModel {
    base: Arc<TransformerForecaster>,
    model: TransformerForecaster,
    options: FineTuneOptions,
    zero_shot: bool,
}

impl TsfmModel {
    pub fn new(base: Arc<TransformerForecaster>, options: FineTuneOptions) -> Self {
        Self {
            model: (*base).clone(),
            base,
            options,
            zero_shot: false,
        }
    }

    pub fn zero_shot(base: Arc<TransformerForecaster>) -> Self {
        Self {
            model: (*base).clone(),
            base,
            options: FineTuneOptions::default(),
            zero_shot: true,
        }
    }

    pub fn forecaster(&self) -> &TransformerForecaster {
        &self.model
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.options.seed = seed;
    }
}

impl ForecastModel for TsfmModel {
    fn id(&self) -> ModelId {
        ModelId::Tsfm
    }

    fn context_length(&self) -> usize {
        self.model.config.context_length
    }

    fn native_horizon(&self) -> usize {
        self.model.config.horizon_length
    }

    fn fit(&mut self, train: &TimeSeries) -> Result<()> {
        self.model = (*self.base).clone();
        if self.zero_shot {
            return Ok(());
        }
        self.model.fine_tune_scaled(train.values().to_vec(), &self.options)?;
        Ok(())
    }

    fn predict_block(&self, context: &[f64], _: TargetClock) -> Result<Vec<f64>> {
        self.model.generate(context, self.model.config.horizon_length)
    }

    fn predict_one_step(&self, context: &[f64], _: TargetClock) -> Result<f64> {
        Ok(self.model.generate(context, 1)?[0])
    }
}
