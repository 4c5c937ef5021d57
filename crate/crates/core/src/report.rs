//! Result tables: one row per appliance, one column group per architecture
//! and scheme, plus a mean row.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::metrics::Metrics;
use crate::models::ArchitectureKind;
use crate::pipeline::Scheme;

pub const MISSING: &str = "—";
pub const METRIC_NAMES: [&str; 3] = ["MAE (W)", "SAE", "EpD (kWh)"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub appliance: String,
    pub architecture: ArchitectureKind,
    pub scheme: Scheme,
    /// Metrics on success, the error message otherwise.
    pub outcome: std::result::Result<Metrics, String>,
}

impl Cell {
    fn values(&self) -> [Option<f64>; 3] {
        match &self.outcome {
            Ok(m) => [Some(m.mae), m.sae, Some(m.epd)],
            Err(_) => [None; 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub label: String,
    /// `[column][metric]`.
    pub values: Vec<[Option<f64>; 3]>,
    /// Index of the best (lowest) column per metric.
    pub best: [Option<usize>; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub columns: Vec<(ArchitectureKind, Scheme)>,
    pub rows: Vec<Row>,
    pub mean: Row,
}

fn best_of(values: &[[Option<f64>; 3]], metric: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(x) = v[metric] {
            if best.is_none_or(|(_, b)| x < b) {
                best = Some((i, x));
            }
        }
    }
    best.map(|(i, _)| i)
}

fn row(label: String, values: Vec<[Option<f64>; 3]>) -> Row {
    let best = [0, 1, 2].map(|m| best_of(&values, m));
    Row { label, values, best }
}

fn column_label(c: &(ArchitectureKind, Scheme)) -> String {
    format!("{}-{}", c.0, c.1)
}

/// Builds the table. Appliance rows keep first-appearance order; columns
/// follow architecture then scheme order. Missing metrics are left out of
/// the mean.
pub fn emit_report(cells: &[Cell]) -> Report {
    let mut columns: Vec<(ArchitectureKind, Scheme)> = cells.iter().map(|c| (c.architecture, c.scheme)).collect();
    columns.sort();
    columns.dedup();
    let mut appliances: Vec<&str> = Vec::new();
    for c in cells {
        if !appliances.contains(&c.appliance.as_str()) {
            appliances.push(&c.appliance);
        }
    }
    let rows: Vec<Row> = appliances
        .iter()
        .map(|a| {
            let values = columns
                .iter()
                .map(|col| {
                    cells
                        .iter()
                        .find(|c| c.appliance == *a && (c.architecture, c.scheme) == *col)
                        .map(Cell::values)
                        .unwrap_or([None; 3])
                })
                .collect();
            row(a.to_string(), values)
        })
        .collect();
    let mean_values = (0..columns.len())
        .map(|j| {
            [0, 1, 2].map(|m| {
                let present: Vec<f64> = rows.iter().filter_map(|r| r.values[j][m]).collect();
                (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
            })
        })
        .collect();
    Report {
        mean: row("mean".into(), mean_values),
        columns,
        rows,
    }
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or(MISSING.to_string(), |x| x.to_string())
}

impl Report {
    fn header(&self) -> Vec<String> {
        let mut h = vec!["appliance".to_string()];
        for c in &self.columns {
            for m in METRIC_NAMES {
                h.push(format!("{} {m}", column_label(c)));
            }
        }
        h.extend(METRIC_NAMES.iter().map(|m| format!("best {m}")));
        h
    }

    fn all_rows(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().chain(std::iter::once(&self.mean))
    }

    /// Full-precision CSV; the trailing columns name the best column per
    /// metric.
    pub fn to_csv(&self) -> String {
        let mut out = self.header().join(",");
        out.push('\n');
        for r in self.all_rows() {
            let mut fields = vec![r.label.clone()];
            for v in &r.values {
                fields.extend(v.iter().map(|x| fmt_value(*x)));
            }
            fields.extend(
                r.best
                    .iter()
                    .map(|b| b.map_or(MISSING.to_string(), |i| column_label(&self.columns[i]))),
            );
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Markdown table with two decimals and the best value per metric in
    /// bold.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| App. |");
        for c in &self.columns {
            for m in METRIC_NAMES {
                let _ = write!(out, " {} {m} |", column_label(c));
            }
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(3 * self.columns.len()));
        out.push('\n');
        for r in self.all_rows() {
            let _ = write!(out, "| {} |", r.label);
            for (j, v) in r.values.iter().enumerate() {
                for m in 0..3 {
                    let text = v[m].map_or(MISSING.to_string(), |x| format!("{x:.2}"));
                    if r.best[m] == Some(j) {
                        let _ = write!(out, " **{text}** |");
                    } else {
                        let _ = write!(out, " {text} |");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Long-form per-cell listing including failures.
pub fn cells_csv(cells: &[Cell]) -> String {
    let mut out = String::from("appliance,architecture,scheme,status,mae_w,sae,epd_kwh_per_day,message\n");
    for c in cells {
        let v = c.values();
        let (status, msg) = match &c.outcome {
            Ok(_) => ("ok", String::new()),
            Err(e) => ("failed", format!("\"{}\"", e.replace('"', "'"))),
        };
        let _ = writeln!(
            out,
            "{},{},{},{status},{},{},{},{msg}",
            c.appliance,
            c.architecture.label(),
            c.scheme,
            fmt_value(v[0]),
            fmt_value(v[1]),
            fmt_value(v[2]),
        );
    }
    out
}

/// True versus predicted energy per appliance and scheme.
pub fn energy_csv(cells: &[Cell]) -> String {
    let mut out = String::from("appliance,architecture,scheme,true_kwh,predicted_kwh,days\n");
    for c in cells {
        if let Ok(m) = &c.outcome {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.appliance,
                c.architecture.label(),
                c.scheme,
                m.true_kwh,
                m.pred_kwh,
                m.days
            );
        }
    }
    out
}
