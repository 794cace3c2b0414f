//! Bayesian search over tree and boosting settings on a fifteen-day history.
//!
//! Run with: cargo run --release --example tune_hyperparameters -- [budget]

use loadcast::forecast::ModelId;
use loadcast::harness::SyntheticLoad;
use loadcast::hyperopt::tune_baseline;
use loadcast::series::{split_case, CaseId};

fn main() -> loadcast::Result<()> {
    let budget = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let series = SyntheticLoad { days: 20, seed: 5, ..Default::default() }.generate()?;
    let train = split_case(&series, CaseId::Case4)?.train;

    for id in [ModelId::Rt, ModelId::Gbt] {
        let tuned = tune_baseline(&train, id, budget, 0)?;
        let opt = &tuned.optimization;
        println!("{id}: best validation rmse {:.5} after {} trials", opt.best.objective, opt.history.len());
        for t in &opt.history {
            println!("  #{:<3} {:.5}  incumbent {:.5}", t.index, t.objective, t.incumbent);
        }
        println!("  chosen {:?}", tuned.config.hyperparams);
    }
    Ok(())
}
