//! Pretrain the transformer on a synthetic corpus, save it, and load it back.
//!
//! Run with: cargo run --release --example pretrain_corpus -- [series] [epochs] [out]

use std::path::PathBuf;

use loadcast::corpus::{corpus_specs, generate_all, CorpusOptions, Family};
use loadcast::tsfm::{TrainOptions, TransformerConfig, TransformerForecaster};

fn main() -> loadcast::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let series = args.first().and_then(|s| s.parse().ok()).unwrap_or(40);
    let epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let out = args
        .get(2)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("loadcast-pretrained.bin"));

    let options = CorpusOptions {
        count: series,
        length: 256,
        ..Default::default()
    };
    let corpus = generate_all(&corpus_specs(&options)?)?;
    for family in Family::ALL {
        let n = corpus.iter().filter(|s| s.name().starts_with(&format!("{family}-"))).count();
        println!("{:<14} {n} series", family.to_string());
    }

    let mut model = TransformerForecaster::new(TransformerConfig::default(), 0)?;
    let curve = model.pretrain(&corpus, &TrainOptions { epochs, ..Default::default() })?;
    for (epoch, loss) in curve.train_loss.iter().enumerate() {
        println!("epoch {:>2}  loss {loss:.5}", epoch + 1);
    }
    model.set_corpus_provenance(options.master_seed, corpus.len());
    model.save(&out)?;

    let reloaded = TransformerForecaster::load(&out)?;
    assert_eq!(reloaded.fingerprint(), model.fingerprint());
    println!("saved {} ({:016x})", out.display(), model.fingerprint());
    Ok(())
}
