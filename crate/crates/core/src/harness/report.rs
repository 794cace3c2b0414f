use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::run::{CellOutcome, MetricReport};
use crate::error::{Error, Result};

pub const ERR_TOKEN: &str = "ERR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Text,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Text];

    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Csv => "report.csv",
            ReportFormat::Json => "report.json",
            ReportFormat::Text => "report.txt",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "text" | "txt" | "text-table" => Ok(ReportFormat::Text),
            _ => Err(Error::Config(format!("unknown report format `{s}`"))),
        }
    }
}

pub fn render_csv(report: &MetricReport) -> String {
    let mut out = String::from("model,case,horizon_h,rmse,mae,mape,rmse_std,runs,error\n");
    for c in &report.cells {
        let _ = write!(out, "{},{},{},", c.model, c.case, c.horizon);
        match &c.outcome {
            CellOutcome::Ok { mean, rmse_std, runs } => {
                let _ = writeln!(out, "{},{},{},{},{},", mean.rmse, mean.mae, mean.mape, rmse_std, runs.len());
            }
            CellOutcome::Err { message } => {
                let clean = message.replace(['"', '\n', ','], " ");
                let _ = writeln!(out, "{ERR_TOKEN},{ERR_TOKEN},{ERR_TOKEN},{ERR_TOKEN},0,\"{clean}\"");
            }
        }
    }
    out
}

/// One block per case; columns grouped by horizon with RMSE, MAE and MAPE
/// (MAPE in percent) under each.
pub fn render_text(report: &MetricReport) -> String {
    let horizons = report.horizons();
    let mut out = format!(
        "dataset {}  seed {}  runs {}\n",
        report.dataset, report.master_seed, report.runs_per_model
    );
    for case in report.cases() {
        let _ = write!(out, "\n{case}\n{:<8}", "");
        for h in &horizons {
            let _ = write!(out, "| {:^26}", format!("look-ahead {h}h"));
        }
        let _ = write!(out, "\n{:<8}", "model");
        for _ in &horizons {
            let _ = write!(out, "| {:>8}{:>8}{:>9} ", "RMSE", "MAE", "MAPE%");
        }
        out.push('\n');
        for model in report.models() {
            let _ = write!(out, "{:<8}", model.label());
            for &h in &horizons {
                match report.cell(model, case, h).map(|c| &c.outcome) {
                    Some(CellOutcome::Ok { mean, .. }) => {
                        let _ = write!(out, "| {:>8.4}{:>8.4}{:>9.2} ", mean.rmse, mean.mae, 100.0 * mean.mape);
                    }
                    Some(CellOutcome::Err { .. }) => {
                        let _ = write!(out, "| {ERR_TOKEN:>8}{ERR_TOKEN:>8}{ERR_TOKEN:>9} ");
                    }
                    None => {
                        let _ = write!(out, "| {:>8}{:>8}{:>9} ", "-", "-", "-");
                    }
                }
            }
            out.push('\n');
        }
    }
    let _ = writeln!(out, "\nerrored cells: {}", report.error_count());
    out
}

pub fn render(report: &MetricReport, format: ReportFormat) -> Result<String> {
    Ok(match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
        ReportFormat::Text => render_text(report),
    })
}

/// Writes the report in `format` under `dir` and returns the file path.
pub fn emit_report(report: &MetricReport, format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    if report.cells.is_empty() {
        return Err(Error::EmptyInput("report has no cells".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format.file_name());
    std::fs::write(&path, render(report, format)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads back a `report.json` written by [`emit_report`].
pub fn load_report(dir_or_file: &Path) -> Result<MetricReport> {
    let path = if dir_or_file.is_dir() {
        dir_or_file.join(ReportFormat::Json.file_name())
    } else {
        dir_or_file.to_path_buf()
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::ModelId;
    use crate::harness::run::CellResult;
    use crate::metrics::MetricTriple;
    use crate::series::CaseId;

    fn one_cell(outcome: CellOutcome) -> MetricReport {
        MetricReport {
            dataset: "d".into(),
            master_seed: 1,
            runs_per_model: 1,
            cells: vec![CellResult {
                model: ModelId::Pm,
                case: CaseId::Case1,
                horizon: 1,
                outcome,
            }],
            traces: vec![],
        }
    }

    fn ok() -> CellOutcome {
        let m = MetricTriple { rmse: 0.5, mae: 0.25, mape: 0.125 };
        CellOutcome::Ok { mean: m, rmse_std: 0.0, runs: vec![m] }
    }

    #[test]
    fn one_cell_one_row() {
        let csv = render_csv(&one_cell(ok()));
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().nth(1).unwrap(), "pm,case1,1,0.5,0.25,0.125,0,1,");
        let text = render_text(&one_cell(ok()));
        assert!(text.contains("PM      |   0.5000  0.2500    12.50"));
        assert!(text.ends_with("errored cells: 0\n"));
    }

    #[test]
    fn errored_cell_renders_token_and_count() {
        let r = one_cell(CellOutcome::Err { message: "fit failed, badly".into() });
        for f in ReportFormat::ALL {
            let s = render(&r, f).unwrap();
            assert!(s.contains(ERR_TOKEN) || f == ReportFormat::Json);
        }
        assert!(render_text(&r).ends_with("errored cells: 1\n"));
    }

    #[test]
    fn files_are_byte_identical_and_json_round_trips() {
        let r = one_cell(ok());
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for f in ReportFormat::ALL {
            let pa = emit_report(&r, f, a.path()).unwrap();
            let pb = emit_report(&r, f, b.path()).unwrap();
            assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
        }
        assert_eq!(load_report(a.path()).unwrap(), r);
        let empty = MetricReport { cells: vec![], ..r };
        assert!(emit_report(&empty, ReportFormat::Csv, a.path()).is_err());
    }
}
