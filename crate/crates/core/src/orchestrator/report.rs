//! Matrix reports: per-cell rates, per-deployment averages, and renderings
//! as text tables, CSV and JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Experiment;
use crate::model::TransportErrorKind;
use crate::workload::Rates;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub deployment: String,
    pub strategy: usize,
    pub requests: u64,
    /// `None` when the cell failed.
    pub rates: Option<Rates>,
    pub errors: BTreeMap<TransportErrorKind, u64>,
    /// SHA-256 of the cell's JSON-lines verdict log.
    pub log_digest: Option<String>,
    pub log_file: Option<String>,
    pub failed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub deployment: String,
    pub rates: Rates,
    /// Cells contributing to the average.
    pub cells: usize,
}

/// Resource columns are not measured for simulated nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceColumns {
    pub cpu_percent: Option<f64>,
    pub ram_mb: Option<f64>,
    pub disk_mb: Option<f64>,
    pub note: String,
}

impl Default for ResourceColumns {
    fn default() -> Self {
        ResourceColumns {
            cpu_percent: None,
            ram_mb: None,
            disk_mb: None,
            note: "simulated nodes: CPU, RAM and disk usage are not measured".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub deployments: Vec<String>,
    pub strategies: Vec<usize>,
    pub cells: Vec<CellReport>,
    pub averages: Vec<AverageRow>,
    pub resources: ResourceColumns,
}

impl ExperimentReport {
    pub fn from_cells(experiment: &Experiment, cells: Vec<CellReport>) -> Self {
        let deployments: Vec<String> = experiment
            .deployments
            .iter()
            .map(|d| d.label.clone())
            .collect();
        let strategies = experiment.strategies.iter().map(|s| s.index).collect();
        let averages = deployments
            .iter()
            .map(|label| {
                let rates: Vec<Rates> = cells
                    .iter()
                    .filter(|c| &c.deployment == label)
                    .filter_map(|c| c.rates)
                    .collect();
                let n = rates.len().max(1) as f64;
                AverageRow {
                    deployment: label.clone(),
                    rates: Rates {
                        available: rates.iter().map(|r| r.available).sum::<f64>() / n,
                        degraded: rates.iter().map(|r| r.degraded).sum::<f64>() / n,
                        unavailable: rates.iter().map(|r| r.unavailable).sum::<f64>() / n,
                    },
                    cells: rates.len(),
                }
            })
            .collect();
        ExperimentReport {
            deployments,
            strategies,
            cells,
            averages,
            resources: ResourceColumns::default(),
        }
    }

    pub fn cell(&self, deployment: &str, strategy: usize) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.deployment == deployment && c.strategy == strategy)
    }

    pub fn average(&self, deployment: &str) -> Option<&AverageRow> {
        self.averages.iter().find(|a| a.deployment == deployment)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellReport> {
        self.cells.iter().filter(|c| c.failed.is_some())
    }
}

const GROUP: usize = 4;

fn best_available<'a>(rows: impl Iterator<Item = (&'a str, Option<Rates>)>) -> Option<&'a str> {
    let mut best: Option<(&str, f64)> = None;
    for (label, rates) in rows {
        if let Some(r) = rates {
            if best.is_none_or(|(_, b)| r.available > b) {
                best = Some((label, r.available));
            }
        }
    }
    best.map(|(l, _)| l)
}

fn cell_text(rates: Option<Rates>, best: bool) -> String {
    match rates {
        Some(r) => format!(
            "{:.4}{} {:.4} {:.4}",
            r.available,
            if best { "✓" } else { " " },
            r.degraded,
            r.unavailable
        ),
        None => format!("{:^22}", "FAILED"),
    }
}

/// Availability tables, four deployments per block. Each row marks with ✓
/// the deployment with the highest available rate across all deployments.
pub fn render_tables(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let width = 23;
    for group in report.deployments.chunks(GROUP) {
        let _ = write!(out, "{:<8}", "");
        for d in group {
            let _ = write!(out, "| {:^width$}", d);
        }
        out.push('\n');
        let _ = write!(out, "{:<8}", "strategy");
        for _ in group {
            let _ = write!(out, "| {:<width$}", "A       D      U");
        }
        out.push('\n');
        out.push_str(&"-".repeat(8 + group.len() * (width + 2)));
        out.push('\n');
        for &k in &report.strategies {
            let best = best_available(
                report
                    .deployments
                    .iter()
                    .map(|d| (d.as_str(), report.cell(d, k).and_then(|c| c.rates))),
            );
            let _ = write!(out, "{:<8}", format!("FI{k}"));
            for d in group {
                let rates = report.cell(d, k).and_then(|c| c.rates);
                let _ = write!(
                    out,
                    "| {:<width$}",
                    cell_text(rates, best == Some(d.as_str()))
                );
            }
            out.push('\n');
        }
        let best = best_available(
            report
                .averages
                .iter()
                .map(|a| (a.deployment.as_str(), (a.cells > 0).then_some(a.rates))),
        );
        let _ = write!(out, "{:<8}", "Avg");
        for d in group {
            let rates = report
                .average(d)
                .and_then(|a| (a.cells > 0).then_some(a.rates));
            let _ = write!(
                out,
                "| {:<width$}",
                cell_text(rates, best == Some(d.as_str()))
            );
        }
        out.push_str("\n\n");
    }

    let _ = writeln!(
        out,
        "{:<36} {:>9} {:>9} {:>11} {:>9} {:>6} {:>6} {:>6}",
        "deployment", "available", "degraded", "unavailable", "A+D", "CPU", "RAM", "Disk"
    );
    for a in &report.averages {
        let r = a.rates;
        let _ = writeln!(
            out,
            "{:<36} {:>9.4} {:>9.4} {:>11.4} {:>9.4} {:>6} {:>6} {:>6}",
            a.deployment,
            r.available,
            r.degraded,
            r.unavailable,
            r.available + r.degraded,
            "n/a",
            "n/a",
            "n/a"
        );
    }
    let _ = writeln!(out, "\n{}", report.resources.note);
    let failures: Vec<_> = report.failures().collect();
    if !failures.is_empty() {
        let _ = writeln!(out, "\nfailed cells:");
        for c in failures {
            let _ = writeln!(
                out,
                "  {} FI{}: {}",
                c.deployment,
                c.strategy,
                c.failed.as_deref().unwrap_or("")
            );
        }
    }
    out
}

/// One CSV row per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub strategy: usize,
    pub deployment: String,
    pub requests: u64,
    pub available: Option<f64>,
    pub degraded: Option<f64>,
    pub unavailable: Option<f64>,
    pub failed: Option<String>,
}

pub fn render_csv(report: &ExperimentReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in &report.cells {
        w.serialize(CsvRow {
            strategy: c.strategy,
            deployment: c.deployment.clone(),
            requests: c.requests,
            available: c.rates.map(|r| r.available),
            degraded: c.rates.map(|r| r.degraded),
            unavailable: c.rates.map(|r| r.unavailable),
            failed: c.failed.clone(),
        })
        .expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect()
}

pub fn render_json(report: &ExperimentReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

/// Writes `matrix.csv`, `matrix.json` and `tables.txt` into `dir`.
pub fn write_report(dir: &Path, report: &ExperimentReport) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("matrix.csv"), render_csv(report))?;
    std::fs::write(dir.join("matrix.json"), render_json(report))?;
    std::fs::write(dir.join("tables.txt"), render_tables(report))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> ExperimentReport {
        let rates = |a: f64, d: f64| Rates {
            available: a,
            degraded: d,
            unavailable: 1.0 - a - d,
        };
        let cell = |dep: &str, k: usize, r: Option<Rates>| CellReport {
            deployment: dep.into(),
            strategy: k,
            requests: if r.is_some() { 10_000 } else { 0 },
            rates: r,
            errors: BTreeMap::new(),
            log_digest: None,
            log_file: None,
            failed: r.is_none().then(|| "boom".to_string()),
        };
        ExperimentReport {
            deployments: vec!["a".into(), "b".into()],
            strategies: vec![1, 2],
            cells: vec![
                cell("a", 1, Some(rates(0.1234567891, 0.3))),
                cell("a", 2, Some(rates(0.9, 0.05))),
                cell("b", 1, Some(rates(0.7, 0.1))),
                cell("b", 2, None),
            ],
            averages: vec![
                AverageRow {
                    deployment: "a".into(),
                    rates: rates(0.5, 0.2),
                    cells: 2,
                },
                AverageRow {
                    deployment: "b".into(),
                    rates: rates(0.7, 0.1),
                    cells: 1,
                },
            ],
            resources: ResourceColumns::default(),
        }
    }

    #[test]
    fn csv_round_trips_rates_exactly() {
        let r = report();
        let rows = parse_csv(&render_csv(&r)).unwrap();
        assert_eq!(rows.len(), r.cells.len());
        for (row, cell) in rows.iter().zip(&r.cells) {
            assert_eq!(row.available, cell.rates.map(|x| x.available));
            assert_eq!(row.degraded, cell.rates.map(|x| x.degraded));
            assert_eq!(row.unavailable, cell.rates.map(|x| x.unavailable));
            assert_eq!(row.failed, cell.failed);
        }
    }

    #[test]
    fn json_has_null_resource_columns() {
        let v: serde_json::Value = serde_json::from_str(&render_json(&report())).unwrap();
        assert!(v["resources"]["cpu_percent"].is_null());
        assert!(v["resources"]["note"]
            .as_str()
            .unwrap()
            .contains("not measured"));
        let back: ExperimentReport = serde_json::from_str(&render_json(&report())).unwrap();
        assert_eq!(back, report());
    }

    #[test]
    fn tables_mark_row_best_and_show_failures() {
        let t = render_tables(&report());
        let fi1 = t.lines().find(|l| l.starts_with("FI1 ")).unwrap();
        assert!(fi1.contains("0.7000✓"));
        assert!(!fi1.contains("0.1235✓"));
        let fi2 = t.lines().find(|l| l.starts_with("FI2 ")).unwrap();
        assert!(fi2.contains("0.9000✓") && fi2.contains("FAILED"));
        let avg = t.lines().find(|l| l.starts_with("Avg")).unwrap();
        assert!(avg.contains("0.7000✓"));
        assert!(t.contains("b FI2: boom"));
        assert!(t.contains("n/a"));
    }
}
