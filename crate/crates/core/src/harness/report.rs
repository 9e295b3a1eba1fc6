//! On-disk reports: one CSV per table plus a JSON envelope per run. Nothing
//! time- or host-dependent is written, so reruns are byte-identical.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::experiment::{Comparison, ComparisonTable, RunReport, SweepReport};
use crate::error::{Error, Result};
use crate::metrics::{format_improvement, AggregateTable, Metric, UNDEFINED_MARKER};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(Error::from)
}

fn long_rows(w: &mut csv::Writer<fs::File>, run: &str, table: &AggregateTable) -> Result<()> {
    for row in &table.rows {
        for metric in Metric::ALL {
            w.write_record([
                run,
                &row.turn.to_string(),
                &metric.to_string(),
                &row.get(metric).to_string(),
            ])?;
        }
    }
    Ok(())
}

/// Writes `report.json`, `aggregate.csv`, `per_turn.csv`, `per_target.csv`
/// and `switches.csv` into `dir`.
pub fn write_run(dir: &Path, report: &RunReport) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join("report.json"), report)?;

    let mut w = csv_writer(&dir.join("aggregate.csv"))?;
    w.write_record(["run", "turn", "metric", "value"])?;
    long_rows(&mut w, &report.label, &report.report)?;
    if let Some(rj) = &report.rejudged {
        long_rows(&mut w, &format!("{}/rejudged", report.label), &rj.report)?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(&dir.join("per_turn.csv"))?;
    w.write_record(["run", "turn", "metric", "value"])?;
    long_rows(&mut w, &report.label, &report.per_turn)?;
    if let Some(rj) = &report.rejudged {
        long_rows(&mut w, &format!("{}/rejudged", report.label), &rj.per_turn)?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(&dir.join("per_target.csv"))?;
    w.write_record(["target", "turn", "sr", "ndcg", "mrr", "saturated"])?;
    for s in &report.series {
        for m in &s.metrics {
            w.write_record([
                s.target.as_str(),
                &m.turn.to_string(),
                &m.sr_at_1.to_string(),
                &m.ndcg_at_10.to_string(),
                &m.mrr_at_10.to_string(),
                &m.saturated.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(&dir.join("switches.csv"))?;
    w.write_record(["turn", "count"])?;
    for c in &report.switch_counts {
        w.write_record([c.turn.to_string(), c.count.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))
}

/// The w/o, w/ and improvement rows in a wide layout, one column per
/// `(metric, turn)`.
pub fn write_comparison_table(path: &Path, table: &ComparisonTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["system".to_owned(), "row".to_owned()];
    header.extend(
        table
            .columns
            .iter()
            .map(|&(m, t)| format!("{} t{t}", m.label(table.cutoffs))),
    );
    w.write_record(&header)?;
    for row in &table.rows {
        let mut record = vec![table.system.clone(), row.label.clone()];
        let improv = row.label.starts_with('%');
        record.extend(row.cells.iter().map(|c| match (c, improv) {
            (_, true) => format_improvement(*c),
            (Some(v), false) => format!("{v:.3}"),
            (None, false) => UNDEFINED_MARKER.to_owned(),
        }));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `without/` and `with/` run directories plus `comparison.csv` and
/// `comparison.json`.
pub fn write_comparison(dir: &Path, cmp: &Comparison) -> Result<()> {
    create_dir(dir)?;
    write_run(&dir.join("without"), &cmp.without)?;
    write_run(&dir.join("with"), &cmp.with)?;
    write_comparison_table(&dir.join("comparison.csv"), &cmp.table)?;
    write_json(&dir.join("comparison.json"), &cmp.table)
}

/// `sweep.json`, long-format `sweep_series.csv` (for plotting),
/// `ranking_table.csv` and `switch_counts.csv`.
pub fn write_sweep(dir: &Path, sweep: &SweepReport) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join("sweep.json"), sweep)?;

    let metric = Metric::Ndcg.label(sweep.cutoffs);
    let mut w = csv_writer(&dir.join("sweep_series.csv"))?;
    w.write_record(["system", "tolerance", "turn", "metric", "value"])?;
    for s in &sweep.series {
        let tol = s.tolerance.map_or_else(|| "none".to_owned(), |t| t.to_string());
        for (i, v) in s.ndcg.iter().enumerate() {
            w.write_record([&s.system, &tol, &(i + 1).to_string(), &metric, &v.to_string()])?;
        }
        if let Some(rj) = &s.rejudged_ndcg {
            for (i, v) in rj.iter().enumerate() {
                w.write_record([&s.system, "none-rejudged", &(i + 1).to_string(), &metric, &v.to_string()])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(&dir.join("ranking_table.csv"))?;
    w.write_record(["condition", "position", "system", "value"])?;
    for row in &sweep.ranking {
        for (i, (system, v)) in row.systems.iter().enumerate() {
            w.write_record([&row.condition, &(i + 1).to_string(), system, &format!("{v:.3}")])?;
        }
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(&dir.join("switch_counts.csv"))?;
    w.write_record(["system", "tolerance", "turn", "count"])?;
    for s in &sweep.switch_counts {
        for c in &s.counts {
            w.write_record([&s.system, &s.tolerance.to_string(), &c.turn.to_string(), &c.count.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(dir, e))
}
