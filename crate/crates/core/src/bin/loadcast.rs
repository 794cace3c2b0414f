use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use loadcast::corpus::{corpus_specs, generate_all, CorpusOptions, Family};
use loadcast::forecast::ModelId;
use loadcast::harness::{
    compare_models, emit_plot, emit_report, load_report, run_experiment, select_model, DatasetSource, ExperimentSpec,
    ModelFactory, ReportFormat, DEFAULT_VALIDATION_FRACTION,
};
use loadcast::metrics::Criterion;
use loadcast::series::{load_csv, CaseId};
use loadcast::tsfm::{TrainOptions, TransformerConfig, TransformerForecaster};
use loadcast::{Error, Result};

#[derive(Parser)]
#[command(name = "loadcast", version, about = "Load forecasting with scarce history")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain the transformer on a synthetic corpus and save it.
    Pretrain {
        #[arg(long)]
        corpus_seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        series: usize,
        #[arg(long, default_value_t = 512)]
        length: usize,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        /// Seed for weight initialisation and window sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Families to leave out of the corpus (repeatable).
        #[arg(long)]
        exclude: Vec<Family>,
    },
    /// Run an experiment spec and write report.{csv,json,txt}.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the dataset named in the spec.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Percent reductions of a reference model against every other model.
    Compare {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "tsfm")]
        reference: ModelId,
        #[arg(long, default_value = "rmse")]
        criterion: Criterion,
    },
    /// Pick the candidate that scores best on the tail of a history.
    Select {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        candidates: Vec<ModelId>,
        #[arg(long, default_value = "rmse")]
        criterion: Criterion,
        #[arg(long, default_value_t = DEFAULT_VALIDATION_FRACTION)]
        validation_fraction: f64,
        /// Pretrained transformer, needed when tsfm is a candidate.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        zero_shot: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Plot one report cell, e.g. `tsfm:case1:24h`, as SVG.
    Plot {
        #[arg(long)]
        cell: String,
        #[arg(long, default_value = "report")]
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overlay every other model at the same case and horizon.
        #[arg(long)]
        peers: bool,
    },
}

fn parse_cell(s: &str) -> Result<(ModelId, CaseId, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    let [m, c, h] = parts.as_slice() else {
        return Err(Error::Config(format!("cell `{s}` is not model:case:horizon")));
    };
    let h = h
        .trim_end_matches(['h', 'H'])
        .parse()
        .map_err(|_| Error::Config(format!("bad horizon in `{s}`")))?;
    Ok((m.parse()?, c.parse()?, h))
}

fn pretrain(
    corpus_seed: u64,
    out: &Path,
    series: usize,
    length: usize,
    epochs: usize,
    seed: u64,
    exclude: Vec<Family>,
) -> Result<()> {
    let options = CorpusOptions {
        count: series,
        length,
        master_seed: corpus_seed,
        exclude,
    };
    let corpus = generate_all(&corpus_specs(&options)?)?;
    let mut model = TransformerForecaster::new(TransformerConfig::default(), seed)?;
    let curve = model.pretrain(
        &corpus,
        &TrainOptions {
            epochs,
            seed,
            ..Default::default()
        },
    )?;
    model.set_corpus_provenance(corpus_seed, corpus.len());
    model.save(out)?;
    if let Some(last) = curve.train_loss.last() {
        println!("final training loss {last:.6}");
    }
    println!("saved {} (fingerprint {:016x})", out.display(), model.fingerprint());
    Ok(())
}

fn run(spec: &Path, data: Option<PathBuf>, out: &Path) -> Result<ExitCode> {
    let mut spec = ExperimentSpec::load(spec)?;
    if let Some(d) = data {
        spec.dataset = Some(DatasetSource::Path(d));
    }
    let report = run_experiment(&spec)?;
    for f in ReportFormat::ALL {
        emit_report(&report, f, out)?;
    }
    print!("{}", loadcast::harness::render_text(&report));
    Ok(if report.error_count() > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn select(
    data: &Path,
    candidates: &[ModelId],
    criterion: Criterion,
    fraction: f64,
    model: Option<PathBuf>,
    zero_shot: bool,
    seed: u64,
) -> Result<()> {
    let history = load_csv(data)?;
    let pretrained = model.map(|p| TransformerForecaster::load(&p)).transpose()?.map(Arc::new);
    if candidates.contains(&ModelId::Tsfm) && pretrained.is_none() {
        return Err(Error::Config("tsfm is a candidate but no --model was given".into()));
    }
    let factory = ModelFactory {
        pretrained,
        fine_tune: !zero_shot,
        ..Default::default()
    };
    let verdict = select_model(&history, candidates, criterion, fraction, &factory, seed)?;
    for (id, m) in &verdict.validation_scores {
        println!("{:<6} rmse {:.6}  mae {:.6}  mape {:.4}%", id.label(), m.rmse, m.mae, 100.0 * m.mape);
    }
    for (id, e) in &verdict.failures {
        println!("{:<6} failed: {e}", id.label());
    }
    println!("chosen {}", verdict.chosen_model);
    Ok(())
}

fn plot(cell: &str, report_dir: &Path, out: Option<PathBuf>, peers: bool) -> Result<()> {
    let (model, case, horizon) = parse_cell(cell)?;
    let report = load_report(report_dir)?;
    let trace = report
        .trace(model, case, horizon)
        .ok_or_else(|| Error::Config(format!("report has no trace for {cell}")))?;
    let mut forecasts = BTreeMap::from([(model.label().to_string(), trace.forecast.clone())]);
    if peers {
        for t in report.traces.iter().filter(|t| t.case == case && t.horizon == horizon && t.model != model) {
            if t.forecast.len() == trace.forecast.len() {
                forecasts.insert(t.model.label().to_string(), t.forecast.clone());
            }
        }
    }
    let out = out.unwrap_or_else(|| report_dir.join(format!("plot_{model}_{case}_{horizon}h.svg")));
    let title = format!("{} {case}, look-ahead {horizon}h, from {}", report.dataset, trace.start);
    emit_plot(&title, &trace.actual, &forecasts, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pretrain {
            corpus_seed,
            out,
            series,
            length,
            epochs,
            seed,
            exclude,
        } => pretrain(corpus_seed, &out, series, length, epochs, seed, exclude).map(|_| ExitCode::SUCCESS),
        Command::Run { spec, data, out } => run(&spec, data, &out),
        Command::Compare {
            report,
            reference,
            criterion,
        } => load_report(&report)
            .and_then(|r| compare_models(&r, reference, criterion))
            .map(|t| {
                print!("{}", t.render());
                ExitCode::SUCCESS
            }),
        Command::Select {
            data,
            candidates,
            criterion,
            validation_fraction,
            model,
            zero_shot,
            seed,
        } => select(&data, &candidates, criterion, validation_fraction, model, zero_shot, seed).map(|_| ExitCode::SUCCESS),
        Command::Plot {
            cell,
            report,
            out,
            peers,
        } => plot(&cell, &report, out, peers).map(|_| ExitCode::SUCCESS),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}
