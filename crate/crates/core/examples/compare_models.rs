//! Percent error reduction of one model against the rest, per case and horizon.
//!
//! Run with: cargo run --release --example compare_models

use loadcast::forecast::ModelId;
use loadcast::harness::{compare_models, run_on_series, ExperimentSpec, SyntheticLoad};
use loadcast::metrics::Criterion;
use loadcast::series::CaseId;

fn main() -> loadcast::Result<()> {
    let series = SyntheticLoad { days: 20, seed: 3, ..Default::default() }.generate()?;
    let spec = ExperimentSpec {
        models: vec![ModelId::Lr, ModelId::Rt, ModelId::Gbt, ModelId::Pm],
        cases: vec![CaseId::Case1, CaseId::Case3, CaseId::Case4],
        horizons_hours: vec![1, 12],
        runs_per_model: 1,
        max_origins: Some(72),
        ..Default::default()
    };
    let report = run_on_series(&spec, &series, None, None)?;
    for criterion in [Criterion::Rmse, Criterion::Mape] {
        println!("LR against the others, {criterion:?}:");
        print!("{}", compare_models(&report, ModelId::Lr, criterion)?.render());
        println!();
    }
    Ok(())
}
