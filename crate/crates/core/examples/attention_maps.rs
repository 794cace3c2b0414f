//! Print the decoder cross-attention of a freshly pretrained model as a heat strip.
//!
//! Run with: cargo run --release --example attention_maps

use loadcast::corpus::{corpus_specs, generate_all, CorpusOptions};
use loadcast::tsfm::{TrainOptions, TransformerConfig, TransformerForecaster};

const SHADES: [char; 5] = [' ', '.', ':', '*', '#'];

fn main() -> loadcast::Result<()> {
    let corpus = generate_all(&corpus_specs(&CorpusOptions { count: 30, length: 256, ..Default::default() })?)?;
    let mut model = TransformerForecaster::new(TransformerConfig::default(), 0)?;
    model.pretrain(&corpus, &TrainOptions { epochs: 2, ..Default::default() })?;

    let c = model.config().context_length;
    let context: Vec<f64> = (0..c)
        .map(|t| 0.5 + 0.4 * (std::f64::consts::TAU * t as f64 / 24.0).sin())
        .collect();
    let previous = vec![context[c - 1]; 3];
    let maps = model.attention_maps(&context, &previous)?;
    println!("{} maps; last map, one row per decoder position:", maps.len());
    let last = maps.last().expect("at least one map");
    for r in 0..last.rows() {
        let row = last.row(r);
        let peak = row.iter().cloned().fold(0.0, f64::max);
        let strip: String = row
            .iter()
            .map(|w| SHADES[((w / peak) * 4.0).round() as usize])
            .collect();
        println!("{r:>2} |{strip}| sum {:.6}", row.iter().sum::<f64>());
    }
    Ok(())
}
