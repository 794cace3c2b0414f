//! Overlay forecast traces from a run on the actual load as an SVG.
//!
//! Run with: cargo run --release --example plot_forecasts -- [out.svg]

use std::collections::BTreeMap;
use std::path::PathBuf;

use loadcast::forecast::ModelId;
use loadcast::harness::{emit_plot, run_on_series, ExperimentSpec, SyntheticLoad};
use loadcast::series::CaseId;

fn main() -> loadcast::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("loadcast-plot.svg"));
    let series = SyntheticLoad { days: 12, seed: 4, ..Default::default() }.generate()?;
    let spec = ExperimentSpec {
        models: vec![ModelId::Lr, ModelId::Rt, ModelId::Pm],
        cases: vec![CaseId::Case2],
        horizons_hours: vec![24],
        runs_per_model: 1,
        max_origins: Some(96),
        ..Default::default()
    };
    let report = run_on_series(&spec, &series, None, None)?;
    let traces: Vec<_> = report.traces.iter().filter(|t| t.horizon == 24).collect();
    let actual = traces[0].actual.clone();
    let forecasts: BTreeMap<String, Vec<f64>> = traces
        .iter()
        .map(|t| (t.model.label().to_string(), t.forecast.clone()))
        .collect();
    emit_plot("day-ahead forecasts, 5-day history", &actual, &forecasts, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
