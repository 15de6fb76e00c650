use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compute_metrics, run_scenario, HarnessError, MetricsOptions, MetricsReport, ScenarioConfig};
use crate::sysid::fmt17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    Diverged { step: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub controller: &'static str,
    pub status: RunStatus,
    pub metrics: Option<MetricsReport>,
    /// 1-based ISE rank among completed runs.
    pub rank: Option<usize>,
}

/// Rows in input order; `rank` orders completed runs by ISE.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

/// Runs each scenario (in parallel) and tabulates metrics. A diverged run is
/// reported in its row; invalid configurations are errors.
pub fn compare(scenarios: &[ScenarioConfig]) -> Result<ComparisonReport, HarnessError> {
    if scenarios.len() < 2 {
        return Err(HarnessError::InvalidScenario("comparison needs at least two scenarios".into()));
    }
    let first = &scenarios[0];
    for s in scenarios {
        s.validate()?;
        if s.reference != first.reference || s.duration != first.duration || s.period != first.period {
            return Err(HarnessError::InvalidScenario(format!(
                "scenario `{}` does not share the reference/duration/period of `{}`",
                s.label, first.label
            )));
        }
    }

    let results: Vec<Result<(RunStatus, Option<MetricsReport>), HarnessError>> = scenarios
        .par_iter()
        .map(|s| {
            let options = MetricsOptions {
                band_radius: s.controller.monitor_gains().default_band_radius(),
                ..MetricsOptions::default()
            };
            match run_scenario(s) {
                Ok(trace) => Ok((RunStatus::Completed, Some(compute_metrics(&trace, &options)))),
                Err(HarnessError::Diverged { step, .. }) => Ok((RunStatus::Diverged { step }, None)),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut rows = Vec::with_capacity(scenarios.len());
    for (s, res) in scenarios.iter().zip(results) {
        let (status, metrics) = res?;
        rows.push(ComparisonRow {
            label: s.label.clone(),
            controller: s.controller.name(),
            status,
            metrics,
            rank: None,
        });
    }
    let mut order: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].metrics.is_some()).collect();
    order.sort_by(|&a, &b| {
        let ia = rows[a].metrics.unwrap().ise;
        let ib = rows[b].metrics.unwrap().ise;
        ia.total_cmp(&ib).then(a.cmp(&b))
    });
    for (rank, i) in order.into_iter().enumerate() {
        rows[i].rank = Some(rank + 1);
    }
    Ok(ComparisonReport { rows })
}

impl ComparisonReport {
    pub fn row(&self, label: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| std::io::Error::other(e);
        w.write_record([
            "label",
            "controller",
            "status",
            "rank",
            "ise",
            "settling_time",
            "max_abs_sigma2_steady",
            "sarpturk_violations",
        ])
        .map_err(io)?;
        for r in &self.rows {
            let status = match r.status {
                RunStatus::Completed => "ok".to_string(),
                RunStatus::Diverged { step } => format!("diverged@{step}"),
            };
            let rank = r.rank.map(|v| v.to_string()).unwrap_or_default();
            let fields = match &r.metrics {
                Some(m) => [
                    fmt17(m.ise),
                    m.settling_time.seconds().map(fmt17).unwrap_or_else(|| "not-settled".into()),
                    fmt17(m.max_abs_sigma2_steady),
                    m.sarpturk_violations.to_string(),
                ],
                None => Default::default(),
            };
            let mut record = vec![r.label.clone(), r.controller.to_string(), status, rank];
            record.extend(fields);
            w.write_record(&record).map_err(io)?;
        }
        w.flush()
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let header = ["rank", "label", "ctrl", "ISE", "settling[s]", "max|s2| ss", "reach viol"];
        let mut cells: Vec<[String; 7]> = vec![header.map(String::from)];
        for r in &self.rows {
            let rank = r.rank.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
            let row = match (&r.metrics, r.status) {
                (Some(m), _) => [
                    rank,
                    r.label.clone(),
                    r.controller.to_string(),
                    format!("{:.4}", m.ise),
                    m.settling_time.to_string(),
                    format!("{:.4}", m.max_abs_sigma2_steady),
                    m.sarpturk_violations.to_string(),
                ],
                (None, RunStatus::Diverged { step }) => [
                    rank,
                    r.label.clone(),
                    r.controller.to_string(),
                    format!("diverged at step {step}"),
                    String::new(),
                    String::new(),
                    String::new(),
                ],
                (None, RunStatus::Completed) => unreachable!("completed rows carry metrics"),
            };
            cells.push(row);
        }
        let widths: Vec<usize> = (0..7).map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}
