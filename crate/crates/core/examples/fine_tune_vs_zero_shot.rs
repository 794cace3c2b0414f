//! Fine-tuning on three days of a family the model never saw, against
//! forecasting with the pretrained weights as they are.
//!
//! Run with: cargo run --release --example fine_tune_vs_zero_shot

use loadcast::corpus::{corpus_specs, generate_all, generate_series, CorpusOptions, Family, GeneratorSpec};
use loadcast::metrics::rmse;
use loadcast::series::NormalizationParams;
use loadcast::tsfm::{FineTuneOptions, TrainOptions, TransformerConfig, TransformerForecaster};

fn one_step(model: &TransformerForecaster, scaled: &[f64], from: usize, to: usize) -> loadcast::Result<Vec<f64>> {
    let c = model.config().context_length;
    (from..to).map(|t| Ok(model.generate(&scaled[t - c..t], 1)?[0])).collect()
}

fn main() -> loadcast::Result<()> {
    let options = CorpusOptions {
        count: 80,
        length: 256,
        exclude: vec![Family::Seasonal],
        ..Default::default()
    };
    let corpus = generate_all(&corpus_specs(&options)?)?;
    let mut base = TransformerForecaster::new(TransformerConfig::default(), 1)?;
    base.pretrain(&corpus, &TrainOptions { epochs: 5, ..Default::default() })?;

    for seed in 0..3 {
        let series = generate_series(&GeneratorSpec {
            family: Family::Seasonal,
            length: 256,
            period: Some(24),
            trend_slope: 0.0,
            noise_std: 0.05,
            outlier_rate: 0.0,
            seed: 500 + seed,
        })?;
        let train = series.slice(0, 72)?;
        let scaler = NormalizationParams::fit(train.values())?;
        let scaled = scaler.apply_all(series.values());

        let mut tuned = base.clone();
        let curve = tuned.fine_tune(&train, &FineTuneOptions { seed, ..Default::default() })?;
        let zero = rmse(&scaled[72..144], &one_step(&base, &scaled, 72, 144)?)?;
        let fine = rmse(&scaled[72..144], &one_step(&tuned, &scaled, 72, 144)?)?;
        println!(
            "series {seed}: zero-shot {zero:.4}  fine-tuned {fine:.4}  ({} epochs, best {:?})",
            curve.train_loss.len(),
            curve.best_epoch
        );
    }
    Ok(())
}
