//! Score several models over all five training cases and write the reports.
//!
//! Run with: cargo run --release --example run_experiment -- [out_dir]

use std::path::PathBuf;
use std::sync::Arc;

use loadcast::forecast::ModelId;
use loadcast::harness::{emit_report, render_text, run_on_series, ExperimentSpec, ReportFormat, SyntheticLoad};
use loadcast::corpus::{corpus_specs, generate_all, CorpusOptions};
use loadcast::tsfm::{FineTuneOptions, TrainOptions, TransformerConfig, TransformerForecaster};

fn main() -> loadcast::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("loadcast-report"));

    let corpus = generate_all(&corpus_specs(&CorpusOptions { count: 30, length: 256, ..Default::default() })?)?;
    let mut base = TransformerForecaster::new(TransformerConfig::default(), 0)?;
    base.pretrain(&corpus, &TrainOptions { epochs: 2, ..Default::default() })?;

    let series = SyntheticLoad { days: 36, seed: 7, ..Default::default() }.generate()?;
    let spec = ExperimentSpec {
        models: vec![ModelId::Tsfm, ModelId::Lr, ModelId::Rt, ModelId::Pm],
        horizons_hours: vec![1, 6, 24],
        runs_per_model: 2,
        max_origins: Some(48),
        fine_tune_options: Some(FineTuneOptions { epochs: 3, ..Default::default() }),
        ..Default::default()
    };
    let report = run_on_series(&spec, &series, Some(Arc::new(base)), None)?;
    for format in ReportFormat::ALL {
        emit_report(&report, format, &out)?;
    }
    print!("{}", render_text(&report));
    println!("reports in {}", out.display());
    Ok(())
}
