//! Pick a forecaster for a short history by scoring candidates on its tail.
//!
//! Run with: cargo run --release --example select_model -- [days]

use loadcast::forecast::ModelId;
use loadcast::harness::{select_model, ModelFactory, SyntheticLoad, DEFAULT_VALIDATION_FRACTION};
use loadcast::metrics::Criterion;

fn main() -> loadcast::Result<()> {
    let days = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let history = SyntheticLoad { days, noise_std: 4.0, seed: 8, ..Default::default() }.generate()?;
    let candidates = [ModelId::Pm, ModelId::Lr, ModelId::Rt, ModelId::Gbt];
    let verdict = select_model(
        &history,
        &candidates,
        Criterion::Rmse,
        DEFAULT_VALIDATION_FRACTION,
        &ModelFactory::default(),
        0,
    )?;
    for (id, m) in &verdict.validation_scores {
        println!("{:<4} rmse {:.3}", id.label(), m.rmse);
    }
    println!("chosen: {}", verdict.chosen_model);
    Ok(())
}
