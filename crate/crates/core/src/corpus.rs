//! Synthetic pretraining corpus: trend, seasonality, noise, outliers and
//! random walks mixed across cycle lengths.

use std::fmt;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

pub const MIN_LENGTH: usize = 64;
pub const MAX_OUTLIER_RATE: f64 = 0.05;
pub const DEFAULT_SERIES_LENGTH: usize = 512;
pub const DEFAULT_CORPUS_SIZE: usize = 200;
pub const PERIODS: [usize; 3] = [12, 24, 168];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Trend,
    Seasonal,
    TrendSeasonal,
    Noisy,
    OutlierSpiked,
    RandomWalk,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Trend,
        Family::Seasonal,
        Family::TrendSeasonal,
        Family::Noisy,
        Family::OutlierSpiked,
        Family::RandomWalk,
    ];

    pub fn is_seasonal(self) -> bool {
        matches!(
            self,
            Family::Seasonal | Family::TrendSeasonal | Family::Noisy | Family::OutlierSpiked
        )
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Trend => "trend",
            Family::Seasonal => "seasonal",
            Family::TrendSeasonal => "trend_seasonal",
            Family::Noisy => "noisy",
            Family::OutlierSpiked => "outlier_spiked",
            Family::RandomWalk => "random_walk",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Family::ALL
            .into_iter()
            .find(|f| f.to_string() == key)
            .ok_or_else(|| Error::Config(format!("unknown family `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    pub length: usize,
    pub period: Option<usize>,
    /// Level change per step.
    pub trend_slope: f64,
    pub noise_std: f64,
    pub outlier_rate: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length < MIN_LENGTH {
            return Err(Error::Config(format!(
                "series length {} is below the minimum of {MIN_LENGTH}",
                self.length
            )));
        }
        if !(0.0..=MAX_OUTLIER_RATE).contains(&self.outlier_rate) {
            return Err(Error::Config(format!(
                "outlier rate {} outside [0, {MAX_OUTLIER_RATE}]",
                self.outlier_rate
            )));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() || !self.trend_slope.is_finite() {
            return Err(Error::Config("noise_std must be finite and non-negative".into()));
        }
        if self.family.is_seasonal() && !matches!(self.period, Some(p) if p >= 2) {
            return Err(Error::Config(format!("{} series need a period of at least 2", self.family)));
        }
        Ok(())
    }
}

fn corpus_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2020, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid constant date")
}

/// Independent random stream `stream` of a spec's seed, so that e.g. the
/// outlier draw never shifts the noise draw.
fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministic series for `spec`, starting 2020-01-01 00:00, hourly.
pub fn generate_series(spec: &GeneratorSpec) -> Result<TimeSeries> {
    spec.validate()?;
    let n = spec.length;
    let mut shape = stream(spec.seed, 0);
    let level = 2.0 + shape.random::<f64>();
    let amplitude = 0.5 + shape.random::<f64>();
    let phase = shape.random::<f64>() * std::f64::consts::TAU;
    let harmonic = 0.3 * shape.random::<f64>();
    let seasonal = |t: usize| -> f64 {
        let p = spec.period.unwrap_or(1) as f64;
        let x = std::f64::consts::TAU * t as f64 / p + phase;
        amplitude * (x.sin() + harmonic * (2.0 * x).sin())
    };

    let normal = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut noise_rng = stream(spec.seed, 1);
    let mut noise = move || {
        if spec.noise_std == 0.0 {
            0.0
        } else {
            normal.sample(&mut noise_rng)
        }
    };

    let mut values = Vec::with_capacity(n);
    let mut walk = level;
    for t in 0..n {
        let trend = spec.trend_slope * t as f64;
        let v = match spec.family {
            Family::Trend => level + trend + noise(),
            Family::Seasonal | Family::OutlierSpiked => level + seasonal(t) + noise(),
            Family::TrendSeasonal => level + trend + seasonal(t) + noise(),
            Family::Noisy => level + 0.3 * seasonal(t) + noise(),
            Family::RandomWalk => {
                walk += spec.trend_slope + noise();
                walk
            }
        };
        values.push(v);
    }

    if spec.outlier_rate > 0.0 {
        let mut spikes = stream(spec.seed, 2);
        let mut budget = (n as f64 * spec.outlier_rate * 3.0).ceil() as usize;
        for v in &mut values {
            if budget > 0 && spikes.random::<f64>() < spec.outlier_rate {
                *v *= spikes.random_range(2.0..=4.0);
                budget -= 1;
            }
        }
    }
    TimeSeries::hourly(format!("{}-{:016x}", spec.family, spec.seed), corpus_start(), values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusOptions {
    pub count: usize,
    pub length: usize,
    pub master_seed: u64,
    /// Families left out of the draw (e.g. to hold one out for evaluation).
    pub exclude: Vec<Family>,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            count: DEFAULT_CORPUS_SIZE,
            length: DEFAULT_SERIES_LENGTH,
            master_seed: 0,
            exclude: Vec::new(),
        }
    }
}

/// Draws `options.count` specs, cycling through the included families so
/// each is represented equally.
pub fn corpus_specs(options: &CorpusOptions) -> Result<Vec<GeneratorSpec>> {
    if options.count == 0 {
        return Err(Error::Config("corpus needs at least one series".into()));
    }
    let families: Vec<Family> = Family::ALL
        .into_iter()
        .filter(|f| !options.exclude.contains(f))
        .collect();
    if families.is_empty() {
        return Err(Error::Config("every family is excluded".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.master_seed);
    let specs = (0..options.count)
        .map(|i| {
            let family = families[i % families.len()];
            let period = PERIODS[rng.random_range(0..PERIODS.len())];
            let slope = rng.random_range(-1.0..1.0) * 2.0 / options.length as f64;
            let (trend_slope, noise_std, outlier_rate) = match family {
                Family::Trend | Family::TrendSeasonal => (slope, rng.random_range(0.02..0.15), 0.0),
                Family::Seasonal => (0.0, rng.random_range(0.02..0.15), 0.0),
                Family::Noisy => (0.0, rng.random_range(0.2..0.5), 0.0),
                Family::OutlierSpiked => (0.0, rng.random_range(0.02..0.1), rng.random_range(0.01..=MAX_OUTLIER_RATE)),
                Family::RandomWalk => (slope * 0.1, rng.random_range(0.02..0.1), 0.0),
            };
            let spec = GeneratorSpec {
                family,
                length: options.length,
                period: family.is_seasonal().then_some(period),
                trend_slope,
                noise_std,
                outlier_rate,
                seed: rng.next_u64(),
            };
            spec.validate().map(|_| spec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(specs)
}

/// Generates every spec (in parallel), returned in spec order.
pub fn generate_all(specs: &[GeneratorSpec]) -> Result<Vec<TimeSeries>> {
    specs.par_iter().map(generate_series).collect()
}

/// `count` series of the default length drawn from `master_seed`.
pub fn build_corpus(count: usize, master_seed: u64) -> Result<Vec<TimeSeries>> {
    let options = CorpusOptions {
        count,
        master_seed,
        ..Default::default()
    };
    generate_all(&corpus_specs(&options)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    options: CorpusOptions,
    files: Vec<String>,
    specs: Vec<GeneratorSpec>,
}

/// Writes one CSV per series plus `manifest.json` into `dir`.
pub fn export_corpus(dir: &Path, options: &CorpusOptions) -> Result<Vec<TimeSeries>> {
    let specs = corpus_specs(options)?;
    let series = generate_all(&specs)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(series.len());
    for (i, s) in series.iter().enumerate() {
        let name = format!("series_{i:04}.csv");
        s.write_csv(&dir.join(&name))?;
        files.push(name);
    }
    let manifest = Manifest {
        options: options.clone(),
        files,
        specs,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(series)
}
