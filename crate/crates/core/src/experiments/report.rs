//! Benchmark reports and their on-disk bundle.
//!
//! A bundle directory holds `results.csv`, `aggregate.json`, one
//! `plot_<name>.csv` per figure table, `manifest.json`, and the raw material
//! needed to rebuild all of them: `layouts/<condition>_g<k>.json` and
//! `logs/<condition>_g<k>.jsonl`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::study::Cell;
use super::ExperimentError;
use crate::conditions::{ConditionKind, Study};
use crate::env::{EpisodeLog, StepRecord};
use crate::layout::Layout;
use crate::metrics::{aggregate, mann_whitney, Aggregate, Comparison, MetricRecord};

pub const METRICS: [&str; 8] = [
    "steps",
    "clicks",
    "success",
    "first_click_correct",
    "lostness",
    "returns",
    "revisits",
    "steps_before_first_select",
];

/// Metrics compared between condition pairs.
const COMPARED: [&str; 5] = ["steps", "clicks", "lostness", "first_click_correct", "revisits"];

pub fn metric_value(r: &MetricRecord, metric: &str) -> Option<f64> {
    let b = |v: bool| if v { 1.0 } else { 0.0 };
    Some(match metric {
        "steps" => f64::from(r.steps),
        "clicks" => f64::from(r.clicks),
        "success" => b(r.success),
        "first_click_correct" => b(r.first_click_correct),
        "lostness" => r.lostness,
        "returns" => f64::from(r.returns),
        "revisits" => f64::from(r.revisits),
        "steps_before_first_select" => f64::from(r.steps_before_first_select),
        "selection_accuracy" => r.selection_accuracy(),
        "reward" => r.reward,
        _ => return None,
    })
}

/// Mann–Whitney comparison of `metric` between two record groups.
pub fn compare(
    a: &[MetricRecord],
    b: &[MetricRecord],
    metric: &str,
) -> Result<Comparison, ExperimentError> {
    let values = |rs: &[MetricRecord]| -> Result<Vec<f64>, ExperimentError> {
        rs.iter()
            .map(|r| {
                metric_value(r, metric)
                    .ok_or_else(|| ExperimentError::Config(format!("unknown metric {metric:?}")))
            })
            .collect()
    };
    Ok(mann_whitney(&values(a)?, &values(b)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub condition: ConditionKind,
    pub goal_index: u8,
    pub episode: usize,
    pub record: MetricRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub a: ConditionKind,
    pub b: ConditionKind,
    pub metric: String,
    #[serde(flatten)]
    pub result: Comparison,
}

/// A CSV table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Shortest decimal rendering that round-trips.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub study: Study,
    pub rows: Vec<ResultRow>,
    /// Per condition, per metric.
    pub aggregates: BTreeMap<String, BTreeMap<String, Aggregate>>,
    pub comparisons: Vec<ComparisonRow>,
    pub plots: BTreeMap<String, Table>,
    pub notes: Vec<String>,
}

/// Condition pairs compared in each study.
pub fn comparison_pairs(study: Study) -> Vec<(ConditionKind, ConditionKind)> {
    let c = study.conditions();
    match study {
        Study::Difficulty => vec![(c[0], c[1]), (c[1], c[2]), (c[0], c[2])],
        Study::Depth => vec![(c[0], c[1])],
        Study::Position => vec![(c[0], c[1]), (c[2], c[3])],
    }
}

impl Report {
    /// Builds the full report from evaluated cells. This is the only
    /// constructor, so a report rebuilt from stored logs matches the
    /// original exactly.
    pub fn from_cells(study: Study, cells: &[Cell]) -> Result<Self, ExperimentError> {
        let mut rows = Vec::new();
        let mut by_cond: BTreeMap<ConditionKind, Vec<MetricRecord>> = BTreeMap::new();
        for cell in cells {
            for (e, r) in cell.records.iter().enumerate() {
                rows.push(ResultRow {
                    condition: cell.kind,
                    goal_index: cell.goal_index,
                    episode: e,
                    record: r.clone(),
                });
            }
            by_cond.entry(cell.kind).or_default().extend(cell.records.iter().cloned());
        }
        for kind in study.conditions() {
            if !by_cond.contains_key(&kind) {
                return Err(ExperimentError::MissingCondition(kind.name().to_owned()));
            }
        }

        let mut aggregates = BTreeMap::new();
        for (kind, recs) in &by_cond {
            let mut per_metric = BTreeMap::new();
            for m in METRICS {
                let v: Vec<f64> = recs.iter().map(|r| metric_value(r, m).unwrap()).collect();
                per_metric.insert(m.to_owned(), aggregate(&v)?);
            }
            aggregates.insert(kind.name().to_owned(), per_metric);
        }

        let mut comparisons = Vec::new();
        for (a, b) in comparison_pairs(study) {
            for m in COMPARED {
                comparisons.push(ComparisonRow {
                    a,
                    b,
                    metric: m.to_owned(),
                    result: compare(&by_cond[&a], &by_cond[&b], m)?,
                });
            }
        }

        let mut plot = Table::new(&["condition", "metric", "mean", "std", "ci_low", "ci_high", "n"]);
        for kind in study.conditions() {
            for m in METRICS {
                let a = &aggregates[kind.name()][m];
                plot.push(vec![
                    kind.name().to_owned(),
                    m.to_owned(),
                    fmt_f64(a.mean),
                    fmt_f64(a.std),
                    fmt_f64(a.ci_low),
                    fmt_f64(a.ci_high),
                    a.n.to_string(),
                ]);
            }
        }
        let mut plots = BTreeMap::new();
        plots.insert(study.name().to_owned(), plot);

        Ok(Self {
            study,
            rows,
            aggregates,
            comparisons,
            plots,
            notes: vec![
                "One policy is trained per study across that study's conditions.".into(),
                "Comparisons: two-sided Mann-Whitney U, normal approximation with tie and continuity correction.".into(),
            ],
        })
    }

    pub fn mean(&self, kind: ConditionKind, metric: &str) -> Option<f64> {
        self.aggregates.get(kind.name())?.get(metric).map(|a| a.mean)
    }

    pub fn comparison(&self, a: ConditionKind, b: ConditionKind, metric: &str) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.a == a && c.b == b && c.metric == metric)
            .map(|c| &c.result)
    }

    pub fn results_csv(&self) -> String {
        let mut s = String::from(
            "condition,goal_index,episode,steps,clicks,success,first_click_correct,lostness,returns,revisits,steps_before_first_select\n",
        );
        for row in &self.rows {
            let r = &row.record;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                row.condition,
                row.goal_index,
                row.episode,
                r.steps,
                r.clicks,
                r.success,
                r.first_click_correct,
                fmt_f64(r.lostness),
                r.returns,
                r.revisits,
                r.steps_before_first_select
            );
        }
        s
    }

    pub fn aggregate_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            study: Study,
            aggregates: &'a BTreeMap<String, BTreeMap<String, Aggregate>>,
            comparisons: &'a [ComparisonRow],
            notes: &'a [String],
        }
        serde_json::to_string_pretty(&Out {
            study: self.study,
            aggregates: &self.aggregates,
            comparisons: &self.comparisons,
            notes: &self.notes,
        })
        .expect("report serializes")
    }

    /// One line per condition: name, mean steps, success rate.
    pub fn summary_lines(&self) -> Vec<String> {
        self.study
            .conditions()
            .into_iter()
            .filter_map(|k| {
                Some(format!(
                    "{}: mean_steps={:.2} success_rate={:.3}",
                    k.name(),
                    self.mean(k, "steps")?,
                    self.mean(k, "success")?
                ))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub study: Study,
    pub config_sha256: String,
    pub master_seed: u64,
    pub train_seed: u64,
    pub episodes_per_goal: usize,
    pub cells: Vec<CellEntry>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub condition: ConditionKind,
    pub goal_index: u8,
    pub layout: String,
    pub log: String,
}

#[derive(Serialize, Deserialize)]
struct LogLine {
    episode: usize,
    #[serde(flatten)]
    record: StepRecord,
}

fn cell_stem(kind: ConditionKind, goal: u8) -> String {
    format!("{}_g{}", kind.name(), goal)
}

fn logs_to_jsonl(logs: &[EpisodeLog]) -> String {
    let mut s = String::new();
    for (episode, log) in logs.iter().enumerate() {
        for r in &log.records {
            let line = LogLine {
                episode,
                record: r.clone(),
            };
            s.push_str(&serde_json::to_string(&line).expect("log line serializes"));
            s.push('\n');
        }
    }
    s
}

fn logs_from_jsonl(s: &str) -> Result<Vec<EpisodeLog>, ExperimentError> {
    let mut logs: Vec<EpisodeLog> = Vec::new();
    for (i, l) in s.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line: LogLine = serde_json::from_str(l)
            .map_err(|e| ExperimentError::Parse(format!("log line {}: {e}", i + 1)))?;
        if line.episode > logs.len() {
            return Err(ExperimentError::Parse(format!(
                "log line {}: episode {} out of order",
                i + 1,
                line.episode
            )));
        }
        if line.episode == logs.len() {
            logs.push(EpisodeLog::default());
        }
        logs[line.episode].records.push(line.record);
    }
    Ok(logs)
}

/// Writes the derived files of `report` (everything except logs, layouts
/// and manifest).
fn write_derived(dir: &Path, report: &Report) -> Result<(), ExperimentError> {
    std::fs::write(dir.join("results.csv"), report.results_csv())?;
    std::fs::write(dir.join("aggregate.json"), report.aggregate_json())?;
    for (name, table) in &report.plots {
        std::fs::write(dir.join(format!("plot_{name}.csv")), table.to_csv())?;
    }
    Ok(())
}

/// Writes a complete bundle for `cells` and returns its report.
pub fn write_bundle(
    dir: &Path,
    study: Study,
    cells: &[Cell],
    config_sha256: &str,
    master_seed: u64,
    train_seed: u64,
) -> Result<Report, ExperimentError> {
    let report = Report::from_cells(study, cells)?;
    std::fs::create_dir_all(dir.join("logs"))?;
    std::fs::create_dir_all(dir.join("layouts"))?;
    let mut entries = Vec::new();
    for cell in cells {
        let stem = cell_stem(cell.kind, cell.goal_index);
        let layout = format!("layouts/{stem}.json");
        let log = format!("logs/{stem}.jsonl");
        std::fs::write(dir.join(&layout), cell.layout.to_json())?;
        std::fs::write(dir.join(&log), logs_to_jsonl(&cell.logs))?;
        entries.push(CellEntry {
            condition: cell.kind,
            goal_index: cell.goal_index,
            layout,
            log,
        });
    }
    let manifest = Manifest {
        study,
        config_sha256: config_sha256.to_owned(),
        master_seed,
        train_seed,
        episodes_per_goal: cells.first().map_or(0, |c| c.logs.len()),
        cells: entries,
        version: env!("CARGO_PKG_VERSION").to_owned(),
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    write_derived(dir, &report)?;
    Ok(report)
}

/// Rebuilds the report of a bundle from its stored layouts and logs and
/// rewrites the derived files.
pub fn regenerate(dir: &Path, n_max: usize) -> Result<Report, ExperimentError> {
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)
        .map_err(|e| ExperimentError::Parse(format!("manifest: {e}")))?;
    let mut cells = Vec::with_capacity(manifest.cells.len());
    for entry in &manifest.cells {
        let layout = Layout::from_json(&std::fs::read_to_string(dir.join(&entry.layout))?, n_max)?;
        let logs = logs_from_jsonl(&std::fs::read_to_string(dir.join(&entry.log))?)?;
        cells.push(Cell::from_logs(
            entry.condition,
            entry.goal_index,
            Arc::new(layout),
            logs,
        )?);
    }
    let report = Report::from_cells(manifest.study, &cells)?;
    write_derived(dir, &report)?;
    Ok(report)
}
