use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::run::MetricReport;
use crate::error::{Error, Result};
use crate::forecast::ModelId;
use crate::metrics::{percent_reduction, Criterion};
use crate::series::CaseId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub case: CaseId,
    pub horizon: usize,
    pub peer: ModelId,
    /// Percent by which the reference undercuts the peer; `None` when either
    /// cell is missing or errored.
    pub percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub reference: ModelId,
    pub criterion: Criterion,
    pub rows: Vec<Reduction>,
}

impl ComparisonTable {
    pub fn get(&self, case: CaseId, horizon: usize, peer: ModelId) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.case == case && r.horizon == horizon && r.peer == peer)
            .and_then(|r| r.percent)
    }

    /// One line per (case, horizon), one column per peer; `--` marks absent
    /// entries.
    pub fn render(&self) -> String {
        let mut peers: Vec<ModelId> = self.rows.iter().map(|r| r.peer).collect();
        peers.sort();
        peers.dedup();
        let mut out = format!(
            "{} reduction of {} vs peers (%)\n{:<8}{:>6}",
            criterion_label(self.criterion),
            self.reference.label(),
            "case",
            "h"
        );
        for p in &peers {
            let _ = write!(out, "{:>9}", p.label());
        }
        out.push('\n');
        let mut keys: Vec<(CaseId, usize)> = self.rows.iter().map(|r| (r.case, r.horizon)).collect();
        keys.dedup();
        for (case, h) in keys {
            let _ = write!(out, "{:<8}{:>6}", case.to_string(), h);
            for &p in &peers {
                match self.get(case, h, p) {
                    Some(v) => {
                        let _ = write!(out, "{v:>9.2}");
                    }
                    None => {
                        let _ = write!(out, "{:>9}", "--");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn criterion_label(c: Criterion) -> &'static str {
    match c {
        Criterion::Rmse => "RMSE",
        Criterion::Mae => "MAE",
        Criterion::Mape => "MAPE",
    }
}

/// Percent reduction of `reference` against every other model, per cell.
pub fn compare_models(report: &MetricReport, reference: ModelId, criterion: Criterion) -> Result<ComparisonTable> {
    if !report.cells.iter().any(|c| c.model == reference) {
        return Err(Error::Config(format!("{reference} is not in the report")));
    }
    let peers: Vec<ModelId> = report.models().into_iter().filter(|&m| m != reference).collect();
    let mut rows = Vec::new();
    for case in report.cases() {
        for horizon in report.horizons() {
            let ref_value = report
                .cell(reference, case, horizon)
                .and_then(|c| c.mean())
                .map(|m| m.get(criterion));
            for &peer in &peers {
                let peer_value = report.cell(peer, case, horizon).and_then(|c| c.mean()).map(|m| m.get(criterion));
                let percent = match (ref_value, peer_value) {
                    (Some(r), Some(p)) => percent_reduction(r, p).ok(),
                    _ => None,
                };
                rows.push(Reduction {
                    case,
                    horizon,
                    peer,
                    percent,
                });
            }
        }
    }
    Ok(ComparisonTable {
        reference,
        criterion,
        rows,
    })
}
