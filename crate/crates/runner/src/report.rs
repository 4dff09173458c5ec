//! US × DS tables over finished experiments, with a User Spread row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use todsim_core::dialogue_systems::Architecture;
use todsim_core::evaluation::{us_spread, ReportSummary, RobustnessInput};

use crate::experiment::{ExperimentManifest, ExperimentReport};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no experiment directories given")]
    Empty,
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("incompatible grids: {0}")]
    Incompatible(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Booking,
    Inform,
}

impl Metric {
    fn rate(self, s: &ReportSummary) -> Option<BigRational> {
        let (hits, total) = match self {
            Metric::Booking => (s.dialogue_booking, s.booking_scored),
            Metric::Inform => (s.dialogue_inform, s.dialogues),
        };
        (total > 0).then(|| BigRational::new(BigInt::from(hits), BigInt::from(total)))
    }
}

pub struct LoadedExperiment {
    pub dir: PathBuf,
    pub manifest: ExperimentManifest,
    pub report: ExperimentReport,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ReportError> {
    let err = |message: String| ReportError::Read { path: path.into(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

pub fn load_experiment(dir: &Path) -> Result<LoadedExperiment, ReportError> {
    Ok(LoadedExperiment {
        dir: dir.into(),
        manifest: read_json(&dir.join("experiment.json"))?,
        report: read_json(&dir.join("report.json"))?,
    })
}

/// One DS configuration: a column of the table.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Column {
    pub system: String,
    pub architecture: Architecture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub metric: Metric,
    pub columns: Vec<Column>,
    pub rows: Vec<(String, Vec<Option<BigRational>>)>,
    /// Max minus min over each column's present cells.
    pub spread: Vec<Option<BigRational>>,
}

fn arch_code(a: Architecture) -> &'static str {
    match a {
        Architecture::Monolithic => "M",
        Architecture::ModularProg => "MP",
        Architecture::ModularLlm => "ML",
    }
}

fn arch_rank(a: Architecture) -> u8 {
    match a {
        Architecture::Monolithic => 0,
        Architecture::ModularProg => 1,
        Architecture::ModularLlm => 2,
    }
}

/// Decimal with `places` digits, rounding half up. Rates are non-negative.
pub fn fixed(x: &BigRational, places: u32) -> String {
    let scale = BigInt::from(10).pow(places);
    let scaled = (x * BigRational::from_integer(scale.clone()) + BigRational::new(1.into(), 2.into())).floor();
    let n = scaled.to_integer();
    let (int, frac) = (&n / &scale, &n % &scale);
    if places == 0 {
        return int.to_string();
    }
    format!("{int}.{:0>width$}", frac.to_string(), width = places as usize)
}

pub fn build_table(experiments: &[LoadedExperiment], metric: Metric) -> Result<ReportTable, ReportError> {
    let first = experiments.first().ok_or(ReportError::Empty)?;
    let mut goal_set = first.manifest.goal_ids.clone();
    goal_set.sort();
    let mut system_order: Vec<String> = Vec::new();
    let mut user_order: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String, u8), Option<BigRational>> = BTreeMap::new();
    let mut archs: BTreeMap<(String, u8), Architecture> = BTreeMap::new();
    for e in experiments {
        let m = &e.manifest;
        let mut ids = m.goal_ids.clone();
        ids.sort();
        if ids != goal_set {
            return Err(ReportError::Incompatible(format!(
                "{} uses a different goal set than {}",
                e.dir.display(),
                first.dir.display()
            )));
        }
        if !system_order.contains(&m.system_label) {
            system_order.push(m.system_label.clone());
        }
        if !user_order.contains(&m.user_label) {
            user_order.push(m.user_label.clone());
        }
        let key = (m.user_label.clone(), m.system_label.clone(), arch_rank(m.architecture));
        if cells.insert(key, metric.rate(&e.report.summary)).is_some() {
            return Err(ReportError::Incompatible(format!(
                "two experiments fill the cell US={} DS={} {}",
                m.user_label, m.system_label, m.architecture
            )));
        }
        archs.insert((m.system_label.clone(), arch_rank(m.architecture)), m.architecture);
    }

    let mut columns = Vec::new();
    for system in &system_order {
        for ((s, _), a) in archs.range((system.clone(), 0)..=(system.clone(), u8::MAX)) {
            debug_assert_eq!(s, system);
            columns.push(Column { system: system.clone(), architecture: *a });
        }
    }
    let rows: Vec<(String, Vec<Option<BigRational>>)> = user_order
        .iter()
        .map(|u| {
            let values = columns
                .iter()
                .map(|c| {
                    cells.get(&(u.clone(), c.system.clone(), arch_rank(c.architecture))).cloned().flatten()
                })
                .collect();
            (u.clone(), values)
        })
        .collect();
    let spread = (0..columns.len())
        .map(|col| {
            let present: Vec<(String, BigRational)> =
                rows.iter().filter_map(|(u, v)| v[col].clone().map(|r| (u.clone(), r))).collect();
            if present.is_empty() {
                return None;
            }
            us_spread(&RobustnessInput::new(present)).ok()
        })
        .collect();
    Ok(ReportTable { metric, columns, rows, spread })
}

impl ReportTable {
    pub fn render(&self) -> String {
        let cell = |v: &Option<BigRational>| v.as_ref().map_or_else(|| "-".to_string(), |r| fixed(r, 2));
        let label_width = self
            .rows
            .iter()
            .map(|(u, _)| u.len())
            .chain(["Model (US)".len(), "User Spread".len()])
            .max()
            .unwrap_or(0);
        let col_width = 6;

        // group header: one span per DS model
        let mut groups: Vec<(String, usize)> = Vec::new();
        for c in &self.columns {
            match groups.last_mut() {
                Some((s, n)) if *s == c.system => *n += 1,
                _ => groups.push((c.system.clone(), 1)),
            }
        }
        let mut out = String::new();
        let _ = write!(out, "{:<label_width$}", "Model (US)");
        for (system, span) in &groups {
            let width = span * (col_width + 1) - 1;
            let _ = write!(out, " | {:<width$}", format!("{system} (DS)"));
        }
        out.push('\n');
        let _ = write!(out, "{:<label_width$}", "");
        let mut i = 0;
        for (_, span) in &groups {
            out.push_str(" |");
            for c in &self.columns[i..i + span] {
                let _ = write!(out, " {:>col_width$}", arch_code(c.architecture));
            }
            i += span;
        }
        out.push('\n');
        let rule = out.lines().map(str::len).max().unwrap_or(0);
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        let mut line = |label: &str, values: &[Option<BigRational>]| {
            let _ = write!(out, "{label:<label_width$}");
            let mut i = 0;
            for (_, span) in &groups {
                out.push_str(" |");
                for v in &values[i..i + span] {
                    let _ = write!(out, " {:>col_width$}", cell(v));
                }
                i += span;
            }
            out.push('\n');
        };
        for (u, values) in &self.rows {
            line(u, values);
        }
        line("User Spread", &self.spread);
        out
    }

    /// Exact fractions for machine consumption.
    pub fn to_json(&self) -> serde_json::Value {
        let frac = |v: &Option<BigRational>| match v {
            Some(r) => serde_json::json!({ "exact": r.to_string(), "value": r.to_f64() }),
            None => serde_json::Value::Null,
        };
        serde_json::json!({
            "metric": self.metric,
            "columns": self.columns,
            "rows": self.rows.iter().map(|(u, v)| serde_json::json!({
                "user": u, "values": v.iter().map(frac).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "user_spread": self.spread.iter().map(frac).collect::<Vec<_>>(),
        })
    }
}

pub fn report_tables(dirs: &[PathBuf], metric: Metric) -> Result<ReportTable, ReportError> {
    let experiments = dirs.iter().map(|d| load_experiment(d)).collect::<Result<Vec<_>, _>>()?;
    build_table(&experiments, metric)
}
