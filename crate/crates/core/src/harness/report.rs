//! Result persistence and rendering: per-run JSON lines, a summary CSV with
//! full precision, and a human table with `mean (std)` cells.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::MethodSpec;
use crate::churn::{pairwise_stats, pareto_frontier, ChurnReport, RunRecord, Stat};
use crate::error::{Error, Result};

use super::SweepEntry;

/// One method's runs and aggregated report.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: MethodSpec,
    pub records: Vec<RunRecord>,
    pub report: ChurnReport,
}

/// The rendered artifacts, also written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub csv: String,
    pub table: String,
}

/// A line of `runs.jsonl`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum JsonlLine {
    /// Ground-truth classes of the shared test set; always the first line.
    Meta { truth: Vec<usize> },
    Run {
        #[serde(flatten)]
        record: RunRecord,
    },
    /// A sweep point that failed; kept so reruns are auditable.
    Error { method: String, message: String },
}

fn to_json(line: &JsonlLine) -> Result<String> {
    serde_json::to_string(line).map_err(|e| Error::Config(format!("serialize record: {e}")))
}

/// Streams run records to disk as sweep points complete, in grid order.
pub struct IncrementalJsonl {
    writer: BufWriter<File>,
    deferred_error: Option<Error>,
}

impl IncrementalJsonl {
    pub fn create(path: &Path, truth: &[usize]) -> Result<Self> {
        let mut writer = BufWriter::new(File::create(path)?);
        let line = to_json(&JsonlLine::Meta {
            truth: truth.to_vec(),
        })?;
        writeln!(writer, "{line}")?;
        Ok(IncrementalJsonl {
            writer,
            deferred_error: None,
        })
    }

    /// Append one sweep point's records (or its error) and flush.
    pub fn record_entry(&mut self, entry: &SweepEntry) {
        if self.deferred_error.is_some() {
            return;
        }
        let mut write = || -> Result<()> {
            match &entry.outcome {
                Ok(outcome) => {
                    for record in &outcome.records {
                        let line = to_json(&JsonlLine::Run {
                            record: record.clone(),
                        })?;
                        writeln!(self.writer, "{line}")?;
                    }
                }
                Err(e) => {
                    let line = to_json(&JsonlLine::Error {
                        method: entry.method.to_string(),
                        message: e.to_string(),
                    })?;
                    writeln!(self.writer, "{line}")?;
                }
            }
            self.writer.flush()?;
            Ok(())
        };
        if let Err(e) = write() {
            self.deferred_error = Some(e);
        }
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.deferred_error.take() {
            return Err(e);
        }
        self.writer.flush()?;
        Ok(())
    }
}

/// `"knn_ls(k=10,a=1,b=0.5)"` -> `("knn_ls", "k=10,a=1,b=0.5")`.
fn split_fingerprint(fingerprint: &str) -> (String, String) {
    match fingerprint.find('(') {
        Some(i) => (
            fingerprint[..i].to_string(),
            fingerprint[i + 1..fingerprint.len() - 1].to_string(),
        ),
        None => (fingerprint.to_string(), String::new()),
    }
}

/// One row of the summary outputs.
#[derive(Debug, Clone)]
struct SummaryRow {
    method: String,
    hyperparams: String,
    report: ChurnReport,
}

fn rows_from_results(results: &[MethodResult]) -> Vec<SummaryRow> {
    results
        .iter()
        .map(|r| {
            let (method, hyperparams) = split_fingerprint(&r.method.to_string());
            SummaryRow {
                method,
                hyperparams,
                report: r.report.clone(),
            }
        })
        .collect()
}

/// Pareto membership over (accuracy mean, churn mean), one flag per row.
fn pareto_flags(rows: &[SummaryRow]) -> Vec<bool> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.report.accuracy.mean, r.report.churn.mean))
        .collect();
    let frontier = pareto_frontier(&points).unwrap_or_default();
    let mut flags = vec![false; rows.len()];
    for i in frontier {
        flags[i] = true;
    }
    flags
}

fn render(rows: &[SummaryRow]) -> Result<RenderedReport> {
    let flags = pareto_flags(rows);
    Ok(RenderedReport {
        csv: summary_csv(rows, &flags)?,
        table: summary_table(rows, &flags),
    })
}

fn summary_csv(rows: &[SummaryRow], flags: &[bool]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let map_err = |e: csv::Error| Error::Config(format!("summary csv: {e}"));
    writer
        .write_record([
            "method",
            "hyperparams",
            "accuracy_mean",
            "accuracy_std",
            "churn_mean",
            "churn_std",
            "churn_correct_mean",
            "churn_correct_std",
            "churn_incorrect_mean",
            "churn_incorrect_std",
            "pareto_flag",
        ])
        .map_err(map_err)?;
    let opt_mean = |s: &Option<Stat>| s.map(|v| v.mean.to_string()).unwrap_or_default();
    let opt_std = |s: &Option<Stat>| s.map(|v| v.std.to_string()).unwrap_or_default();
    for (row, flag) in rows.iter().zip(flags) {
        let r = &row.report;
        writer
            .write_record([
                row.method.clone(),
                row.hyperparams.clone(),
                r.accuracy.mean.to_string(),
                r.accuracy.std.to_string(),
                r.churn.mean.to_string(),
                r.churn.std.to_string(),
                opt_mean(&r.churn_correct),
                opt_std(&r.churn_correct),
                opt_mean(&r.churn_incorrect),
                opt_std(&r.churn_incorrect),
                flag.to_string(),
            ])
            .map_err(map_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Config(format!("summary csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(format!("summary csv utf-8: {e}")))
}

/// `mean (std)` rounded to two decimals; `-` when absent.
fn cell(stat: &Option<Stat>) -> String {
    match stat {
        Some(s) => format!("{:.2} ({:.2})", s.mean, s.std),
        None => "-".to_string(),
    }
}

fn summary_table(rows: &[SummaryRow], flags: &[bool]) -> String {
    let header = [
        "method",
        "hyperparams",
        "accuracy %",
        "churn %",
        "churn correct",
        "churn incorrect",
        "pareto",
    ];
    let mut body: Vec<[String; 7]> = Vec::with_capacity(rows.len());
    for (row, flag) in rows.iter().zip(flags) {
        let r = &row.report;
        body.push([
            row.method.clone(),
            row.hyperparams.clone(),
            cell(&Some(r.accuracy)),
            cell(&Some(r.churn)),
            cell(&r.churn_correct),
            cell(&r.churn_incorrect),
            if *flag {
                "*".to_string()
            } else {
                String::new()
            },
        ]);
    }
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(cell.len());
        }
    }
    let fmt_row = |cells: &[String]| -> String {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = String::new();
    out.push_str(&fmt_row(
        &header.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
    ));
    out.push('\n');
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-+-"),
    );
    out.push('\n');
    for row in &body {
        out.push_str(&fmt_row(row));
        out.push('\n');
    }
    out
}

/// Write `summary.csv` and `summary_table.txt` under `out_dir`.
pub fn write_summaries(results: &[MethodResult], out_dir: &Path) -> Result<RenderedReport> {
    let rows = rows_from_results(results);
    let rendered = render(&rows)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("summary.csv"), &rendered.csv)?;
    std::fs::write(out_dir.join("summary_table.txt"), &rendered.table)?;
    Ok(rendered)
}

/// Write the full report: `runs.jsonl` (the test-set truth followed by every
/// run record), `summary.csv`, and `summary_table.txt`.
pub fn write_report(
    results: &[MethodResult],
    truth: &[usize],
    out_dir: &Path,
) -> Result<RenderedReport> {
    if results.is_empty() {
        return Err(Error::param(
            "write_report needs at least one result".to_string(),
        ));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut writer = BufWriter::new(File::create(out_dir.join("runs.jsonl"))?);
    writeln!(
        writer,
        "{}",
        to_json(&JsonlLine::Meta {
            truth: truth.to_vec()
        })?
    )?;
    for result in results {
        for record in &result.records {
            writeln!(
                writer,
                "{}",
                to_json(&JsonlLine::Run {
                    record: record.clone()
                })?
            )?;
        }
    }
    writer.flush()?;
    write_summaries(results, out_dir)
}

/// Rebuild the summary outputs from a persisted `runs.jsonl` by re-running
/// the churn aggregation on its run records.
pub fn rerender_from_jsonl(jsonl: &Path, out_dir: &Path) -> Result<RenderedReport> {
    let reader = BufReader::new(File::open(jsonl)?);
    let mut truth: Option<Vec<usize>> = None;
    let mut groups: Vec<(String, Vec<RunRecord>)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: JsonlLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            row: i + 1,
            col: 1,
            msg: format!("bad JSONL line: {e}"),
        })?;
        match parsed {
            JsonlLine::Meta { truth: t } => truth = Some(t),
            JsonlLine::Run { record } => {
                match groups.iter_mut().find(|(fp, _)| *fp == record.method) {
                    Some((_, records)) => records.push(record),
                    None => groups.push((record.method.clone(), vec![record])),
                }
            }
            JsonlLine::Error { .. } => {}
        }
    }
    let truth =
        truth.ok_or_else(|| Error::config(format!("{} has no meta line", jsonl.display())))?;
    if groups.is_empty() {
        return Err(Error::config(format!(
            "{} has no run records",
            jsonl.display()
        )));
    }
    let rows = groups
        .into_iter()
        .map(|(fingerprint, records)| {
            let report = pairwise_stats(&records, &truth)?;
            let (method, hyperparams) = split_fingerprint(&fingerprint);
            Ok(SummaryRow {
                method,
                hyperparams,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rendered = render(&rows)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("summary.csv"), &rendered.csv)?;
    std::fs::write(out_dir.join("summary_table.txt"), &rendered.table)?;
    Ok(rendered)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_report(acc: f64, churn: f64, incorrect: Option<f64>) -> ChurnReport {
        ChurnReport {
            n_runs: 5,
            n_pairs: 10,
            accuracy: Stat {
                mean: acc,
                std: 0.33,
            },
            churn: Stat {
                mean: churn,
                std: 0.28,
            },
            churn_correct: Some(Stat {
                mean: 4.64,
                std: 0.29,
            }),
            churn_incorrect: incorrect.map(|m| Stat { mean: m, std: 1.22 }),
        }
    }

    #[test]
    fn table_cells_use_table_one_format() {
        let rows = vec![SummaryRow {
            method: "knn_ls".to_string(),
            hyperparams: "k=10,a=1,b=0.9".to_string(),
            report: fake_report(88.98, 10.98, Some(62.23)),
        }];
        let table = summary_table(&rows, &[true]);
        assert!(table.contains("88.98 (0.33)"), "table:\n{table}");
        assert!(table.contains("10.98 (0.28)"));
        assert!(table.contains("62.23 (1.22)"));
    }

    #[test]
    fn absent_slice_renders_dash_and_empty_csv_cell() {
        let rows = vec![SummaryRow {
            method: "control".to_string(),
            hyperparams: String::new(),
            report: fake_report(99.0, 0.5, None),
        }];
        let table = summary_table(&rows, &[true]);
        assert!(
            table.lines().nth(2).unwrap().contains(" - "),
            "table:\n{table}"
        );
        let csv = summary_csv(&rows, &[true]).unwrap();
        let line = csv.lines().nth(1).unwrap();
        assert!(line.ends_with(",,,true"), "csv line: {line}");
    }

    #[test]
    fn fingerprints_split_back_into_columns() {
        assert_eq!(
            split_fingerprint("knn_ls(k=10,a=1,b=0.5)"),
            ("knn_ls".to_string(), "k=10,a=1,b=0.5".to_string())
        );
        assert_eq!(
            split_fingerprint("control"),
            ("control".to_string(), String::new())
        );
    }

    #[test]
    fn pareto_flags_mark_exactly_the_frontier() {
        let rows: Vec<SummaryRow> = [(90.0, 10.0), (88.0, 8.0), (91.0, 12.0), (85.0, 20.0)]
            .into_iter()
            .map(|(acc, ch)| SummaryRow {
                method: "m".to_string(),
                hyperparams: String::new(),
                report: fake_report(acc, ch, None),
            })
            .collect();
        assert_eq!(pareto_flags(&rows), vec![true, true, true, false]);
    }
}
