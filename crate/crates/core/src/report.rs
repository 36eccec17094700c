//! Evaluation of scorers on test instances and the result tables.

use crate::diving::{default_d_max, dive, DivingError, Scorer};
use crate::dsl::Program;
use crate::evolution::{PortfolioEntry, TrainInstance};
use crate::metrics::{diversity_index, primal_gap, summarize};
use crate::parallel::par_map;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PORTFOLIO_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("bad scorer spec: {0}")]
    Scorer(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("no rows")]
    Empty,
}

impl From<DivingError> for ReportError {
    fn from(e: DivingError) -> Self {
        ReportError::Scorer(e.to_string())
    }
}

/// `builtin:<name>` or DSL program text.
pub fn scorer_from_spec(spec: &str) -> Result<Scorer, ReportError> {
    match spec.trim().strip_prefix("builtin:") {
        Some(name) => Ok(Scorer::builtin(name.trim())?),
        None => Program::parse(spec).map(Scorer::Dsl).map_err(|e| ReportError::Scorer(e.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedScorer {
    pub name: String,
    pub scorer: String,
}

/// Heuristics to evaluate, as written by `evolve` or by hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioFile {
    pub schema_version: u32,
    pub heuristics: Vec<NamedScorer>,
}

impl PortfolioFile {
    pub fn from_entries(prefix: &str, entries: &[PortfolioEntry]) -> Self {
        PortfolioFile {
            schema_version: PORTFOLIO_SCHEMA,
            heuristics: entries
                .iter()
                .enumerate()
                .map(|(i, e)| NamedScorer { name: format!("{prefix}_{}", i + 1), scorer: e.scorer.clone() })
                .collect(),
        }
    }
}

/// One dive of one method on one test instance. `gamma_p` is capped at the
/// penalty and equals it when the dive found nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub method: String,
    pub instance: String,
    pub found: bool,
    pub objective: Option<f64>,
    pub z_ref: f64,
    pub gamma_p: f64,
    pub lp_resolves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    pub di: f64,
}

pub fn evaluate_methods(
    methods: &[(String, Scorer)],
    instances: &[TrainInstance],
    d_max: Option<usize>,
    gap_cap: f64,
) -> Vec<InstanceRow> {
    let work: Vec<(usize, usize)> =
        (0..methods.len()).flat_map(|m| (0..instances.len()).map(move |i| (m, i))).collect();
    par_map(&work, |&(m, i)| {
        let (name, scorer) = &methods[m];
        let t = &instances[i];
        let z_ref = t.reference.objective;
        let r = dive(&t.instance, scorer, d_max.unwrap_or_else(|| default_d_max(&t.instance)));
        InstanceRow {
            method: name.clone(),
            instance: t.id.clone(),
            found: r.best_objective.is_some(),
            objective: r.best_objective,
            z_ref,
            gamma_p: r.best_objective.map_or(gap_cap, |z| primal_gap(z, z_ref).min(gap_cap)),
            lp_resolves: r.lp_resolves,
        }
    })
}

/// Per-method mean, standard error and diversity of `gamma_p`, in order of
/// first appearance.
pub fn summarize_rows(rows: &[InstanceRow]) -> Vec<SummaryRow> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.method.as_str()) {
            order.push(&r.method);
        }
    }
    order
        .into_iter()
        .map(|m| {
            let g: Vec<f64> = rows.iter().filter(|r| r.method == m).map(|r| r.gamma_p).collect();
            let s = summarize(&g);
            SummaryRow { method: m.to_string(), n: g.len(), mean: s.mean, se: s.std_error, di: diversity_index(&g) }
        })
        .collect()
}

fn write_csv<T: Serialize>(rows: &[T]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn read_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, ReportError> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().map(|r| r.map_err(ReportError::from)).collect()
}

pub fn instance_csv(rows: &[InstanceRow]) -> Result<String, ReportError> {
    write_csv(rows)
}

pub fn read_instance_csv(text: &str) -> Result<Vec<InstanceRow>, ReportError> {
    read_csv(text)
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String, ReportError> {
    write_csv(rows)
}

pub fn read_summary_csv(text: &str) -> Result<Vec<SummaryRow>, ReportError> {
    read_csv(text)
}

/// Summaries recomputed from a per-instance CSV.
pub fn recompute_from_csv(text: &str) -> Result<Vec<SummaryRow>, ReportError> {
    let rows = read_instance_csv(text)?;
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    Ok(summarize_rows(&rows))
}

/// Aligned markdown table with `mean (SE)` cells.
pub fn markdown(rows: &[SummaryRow]) -> String {
    let header = ["Method", "N", "Primal gap mean (SE)", "DI"];
    let body: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            [r.method.clone(), r.n.to_string(), format!("{:.4} ({:.4})", r.mean, r.se), format!("{:.3}", r.di)]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &body {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let inner: Vec<String> = cells.iter().zip(width).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("| {} |\n", inner.join(" | "))
    };
    let mut out = line(&header.map(String::from));
    out.push_str(&format!("|{}|\n", width.map(|w| "-".repeat(w + 2)).join("|")));
    for row in &body {
        out.push_str(&line(row));
    }
    out
}
