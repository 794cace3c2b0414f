//! Experiment orchestration: case splits, rolling-origin scoring over the
//! look-ahead horizons, repeated seeded runs, comparison, model selection
//! and report/plot output.

mod compare;
mod plot;
mod report;
mod run;
mod select;
mod spec;

pub use compare::{compare_models, ComparisonTable, Reduction};
pub use plot::{emit_plot, render_svg};
pub use report::{emit_report, load_report, render, render_csv, render_text, ReportFormat, ERR_TOKEN};
pub use run::{
    derive_seed, rolling_forecasts, run_experiment, run_on_series, score_horizon, AccessObserver, AccessPurpose,
    CellOutcome, CellResult, DataAccess, MetricReport, ModelFactory, Trace, TRACE_LIMIT,
};
pub use select::{choose, select_model, SelectionVerdict, DEFAULT_VALIDATION_FRACTION};
pub use spec::{DatasetSource, ExperimentSpec, SyntheticLoad, DEFAULT_RUNS, HORIZONS};
