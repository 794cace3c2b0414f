use std::sync::Arc;

use chrono::NaiveDate;

use super::model::{ForwardBuilder, Layout};
use super::*;
use crate::error::Error;
use crate::forecast::{ForecastModel, TargetClock};
use crate::nn::{grad_check, Graph, Tensor2};
use crate::series::TimeSeries;

fn series(name: &str, values: Vec<f64>) -> TimeSeries {
    let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    TimeSeries::hourly(name, start, values).unwrap()
}

fn sine(len: usize, period: f64, phase: f64) -> Vec<f64> {
    (0..len)
        .map(|t| 0.5 + 0.4 * (2.0 * std::f64::consts::PI * t as f64 / period + phase).sin())
        .collect()
}

fn tiny(seed: u64) -> TransformerForecaster {
    TransformerForecaster::new(TransformerConfig::tiny(), seed).unwrap()
}

fn context(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 * 0.7).sin() * 0.5 + 0.5).collect()
}

#[test]
fn end_to_end_gradient_check() {
    let model = tiny(3);
    let config = model.config().clone();
    let mut store = model.params().clone();
    let layout = Layout::resolve(&store, &config).unwrap();
    let ctx = context(config.context_length);
    let targets = [0.3, 0.8, 0.1];
    let err = grad_check(&mut store, 400, 11, |g: &mut Graph, s| {
        let mut b = ForwardBuilder {
            config: &config,
            store: s,
            layout: &layout,
            maps: None,
        };
        let memory = b.encode(g, &ctx)?;
        let pred = b.decode(g, memory, &targets[..2])?;
        g.mse(pred, Tensor2::column(&targets)?)
    })
    .unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn decoder_is_causal() {
    let model = tiny(4);
    let ctx = context(8);
    let prev = [0.2, 0.4, 0.6, 0.8];
    let base = model.forward(&ctx, &prev).unwrap();
    assert_eq!(base.len(), 5);
    for k in 0..prev.len() {
        let mut changed = prev;
        changed[k] += 0.37;
        let out = model.forward(&ctx, &changed).unwrap();
        // token k sits at decoder position k + 1
        assert_eq!(&out[..=k], &base[..=k], "perturbing token {k}");
        assert_ne!(out[k + 1], base[k + 1]);
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let model = tiny(5);
    let maps = model.attention_maps(&context(8), &[0.1, 0.2]).unwrap();
    let c = model.config();
    assert_eq!(maps.len(), c.head_count * (c.encoder_layers + 2 * c.decoder_layers));
    for m in &maps {
        for r in 0..m.rows() {
            let s: f64 = m.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn forward_is_deterministic() {
    let a = tiny(6);
    let b = tiny(6);
    let ctx = context(8);
    assert_eq!(a.forward(&ctx, &[0.5]).unwrap(), a.forward(&ctx, &[0.5]).unwrap());
    assert_eq!(a.generate(&ctx, 3).unwrap(), b.generate(&ctx, 3).unwrap());
}

#[test]
fn zero_head_outputs_bias() {
    let mut model = tiny(7);
    let w = model.params().expect_id("head.w").unwrap();
    let b = model.params().expect_id("head.b").unwrap();
    model.params_mut().value_mut(w).fill(0.0);
    model.params_mut().value_mut(b).fill(0.123);
    let out = model.generate(&context(8), 3).unwrap();
    assert_eq!(out, vec![0.123; 3]);
}

#[test]
fn shape_contracts() {
    let model = tiny(8);
    assert_eq!(model.generate(&context(8), 3).unwrap().len(), 3);
    assert!(matches!(model.forward(&context(7), &[]), Err(Error::Shape(_))));
    assert!(model.generate(&context(8), 4).is_err());
}

#[test]
fn zero_shot_forecast_leaves_weights_alone() {
    let model = tiny(9);
    let before = model.fingerprint();
    let history = series("h", sine(40, 24.0, 0.0));
    let out = model.forecast(&history, 7).unwrap();
    assert_eq!(out.len(), 7);
    assert!(out.iter().all(|v| v.is_finite()));
    assert_eq!(model.fingerprint(), before);
}

#[test]
fn horizon_one_is_first_generated_value() {
    let model = tiny(10);
    let values = sine(30, 24.0, 0.3);
    let history = series("h", values.clone());
    let n = crate::series::NormalizationParams::fit(&values[values.len() - 8..]).unwrap();
    let ctx = n.apply_all(&values[values.len() - 8..]);
    let expected = n.invert(model.generate(&ctx, 3).unwrap()[0]);
    let got = model.forecast(&history, 1).unwrap();
    assert!((got[0] - expected).abs() < 1e-12);
    assert!(matches!(
        model.forecast(&series("s", vec![1.0, 2.0]), 1),
        Err(Error::InsufficientData(_))
    ));
}

fn full_windows() -> TrainOptions {
    TrainOptions {
        windows_per_series: None,
        ..Default::default()
    }
}

#[test]
fn zero_epochs_change_nothing() {
    let mut model = tiny(11);
    let before = model.fingerprint();
    let curve = model
        .pretrain(
            &[series("s", sine(64, 24.0, 0.0))],
            &TrainOptions {
                epochs: 0,
                ..full_windows()
            },
        )
        .unwrap();
    assert!(curve.train_loss.is_empty());
    assert_eq!(model.fingerprint(), before);
    assert_eq!(model.state(), TrainingState::Untrained);
}

#[test]
fn short_series_rejected() {
    let mut model = tiny(12);
    let err = model.pretrain(&[series("s", vec![0.0; 10])], &full_windows());
    assert!(matches!(err, Err(Error::InsufficientData(_))));
    assert!(matches!(model.pretrain(&[], &full_windows()), Err(Error::EmptyInput(_))));
}

#[test]
fn memorises_a_constant_series() {
    let mut model = tiny(13);
    let curve = model
        .pretrain(
            &[series("c", vec![3.0; 40])],
            &TrainOptions {
                epochs: 60,
                learning_rate: 1e-2,
                batch_size: 8,
                ..full_windows()
            },
        )
        .unwrap();
    let last = *curve.train_loss.last().unwrap();
    assert!(last < 1e-4, "final loss {last}");
    assert_eq!(model.state(), TrainingState::Pretrained);
}

#[test]
fn sine_loss_falls_over_first_epochs() {
    let mut model = tiny(14);
    let curve = model
        .pretrain(
            &[series("s", sine(96, 24.0, 0.0))],
            &TrainOptions {
                epochs: 50,
                learning_rate: 1e-3,
                batch_size: 16,
                seed: 1,
                windows_per_series: None,
            },
        )
        .unwrap();
    assert_eq!(curve.train_loss.len(), 50);
    for w in curve.train_loss[..5].windows(2) {
        assert!(w[1] < w[0], "{:?}", &curve.train_loss[..5]);
    }
}

fn pretrained(seed: u64) -> TransformerForecaster {
    let mut model = tiny(seed);
    let corpus: Vec<TimeSeries> = (0..4)
        .map(|i| series("s", sine(80, 12.0 + 4.0 * i as f64, 0.5 * i as f64)))
        .collect();
    model
        .pretrain(
            &corpus,
            &TrainOptions {
                epochs: 3,
                learning_rate: 3e-3,
                batch_size: 16,
                seed,
                windows_per_series: Some(16),
            },
        )
        .unwrap();
    model
}

#[test]
fn fine_tune_needs_pretraining() {
    let mut model = tiny(15);
    let err = model.fine_tune(&series("t", sine(48, 24.0, 0.0)), &FineTuneOptions::default());
    assert!(matches!(err, Err(Error::State(_))));
}

#[test]
fn fine_tune_zero_epochs_and_determinism() {
    let base = pretrained(16);
    let target = series("t", sine(48, 24.0, 1.0));
    let mut a = base.clone();
    a.fine_tune(
        &target,
        &FineTuneOptions {
            epochs: 0,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(a.fingerprint(), base.fingerprint());

    let opts = FineTuneOptions {
        epochs: 3,
        seed: 2,
        ..Default::default()
    };
    let mut b = base.clone();
    let mut c = base.clone();
    b.fine_tune(&target, &opts).unwrap();
    c.fine_tune(&target, &opts).unwrap();
    assert_eq!(b.fingerprint(), c.fingerprint());
    assert_eq!(b.state(), TrainingState::FineTuned);
    assert!(b.normalizer().is_some());
}

#[test]
fn fine_tune_never_worsens_validation_tail() {
    let base = pretrained(17);
    let target = series("t", sine(60, 24.0, 2.0));
    let mut model = base.clone();
    let curve = model
        .fine_tune(
            &target,
            &FineTuneOptions {
                epochs: 10,
                learning_rate: 1e-3,
                ..Default::default()
            },
        )
        .unwrap();
    let best = curve.best_epoch.unwrap();
    let zero_shot = curve.validation_loss[0];
    assert!(curve.validation_loss[best] <= zero_shot);
    assert!(curve.validation_loss.iter().all(|v| *v >= curve.validation_loss[best]));
}

#[test]
fn tsfm_model_contract() {
    let base = Arc::new(pretrained(18));
    let mut m = TsfmModel::new(base.clone(), FineTuneOptions { epochs: 2, ..Default::default() });
    assert_eq!(m.native_horizon(), 3);
    m.fit(&series("t", sine(40, 24.0, 0.0))).unwrap();
    let ctx = context(8);
    let block = m.predict_block(&ctx, TargetClock::hourly(0.0)).unwrap();
    assert_eq!(block.len(), 3);
    assert_eq!(m.predict_one_step(&ctx, TargetClock::hourly(0.0)).unwrap(), block[0]);

    let mut z = TsfmModel::zero_shot(base.clone());
    z.fit(&series("t", sine(40, 24.0, 0.0))).unwrap();
    assert_eq!(z.forecaster().fingerprint(), base.fingerprint());
}

#[test]
fn artifact_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let mut model = pretrained(19);
    model.set_corpus_provenance(42, 4);
    model.save(&path).unwrap();
    let back = TransformerForecaster::load(&path).unwrap();
    assert_eq!(back.fingerprint(), model.fingerprint());
    assert_eq!(back.state(), TrainingState::Pretrained);
    assert_eq!(back.provenance().corpus_master_seed, Some(42));
    let ctx = context(8);
    assert_eq!(back.generate(&ctx, 3).unwrap(), model.generate(&ctx, 3).unwrap());

    // a sidecar that disagrees with the weights' shapes is rejected
    let sidecar = sidecar_path(&path);
    let text = std::fs::read_to_string(&sidecar).unwrap();
    std::fs::write(&sidecar, text.replace("\"d_model\": 8", "\"d_model\": 4")).unwrap();
    assert!(matches!(TransformerForecaster::load(&path), Err(Error::Artifact(_))));
}
