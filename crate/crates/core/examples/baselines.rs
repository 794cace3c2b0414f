//! Fit the six benchmark forecasters on a week of hourly load and forecast a day.
//!
//! Run with: cargo run --release --example baselines

use loadcast::baselines::Baseline;
use loadcast::forecast::{recursive_forecast, ForecastModel, ModelId, TargetClock};
use loadcast::harness::SyntheticLoad;
use loadcast::metrics::MetricTriple;
use loadcast::series::{split_case, CaseId, NormalizationParams};

fn main() -> loadcast::Result<()> {
    let series = SyntheticLoad { days: 10, seed: 2, ..Default::default() }.generate()?;
    let split = split_case(&series, CaseId::Case3)?;
    let scaler = NormalizationParams::fit(split.train.values())?;
    let train = scaler.normalize(&split.train)?;
    let actual = &split.test.values()[..24];

    println!("{:<6} {:>8} {:>8} {:>8}", "model", "rmse", "mae", "mape%");
    for id in ModelId::ALL.into_iter().filter(|&m| m != ModelId::Tsfm) {
        let mut model = Baseline::table_defaults(id, 0)?;
        model.fit(&train)?;
        let scaled = recursive_forecast(&model, train.values(), TargetClock::after(&train), 24)?;
        let m = MetricTriple::evaluate(actual, &scaler.invert_all(&scaled))?;
        println!("{:<6} {:>8.3} {:>8.3} {:>8.2}", id.label(), m.rmse, m.mae, 100.0 * m.mape);
    }
    Ok(())
}
