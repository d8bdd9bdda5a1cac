//! Persisted run records and the aggregate tables derived from them.
//!
//! Aggregation reads only what is persisted per run (`run.json` and
//! `trace.csv`), so `report` regenerates the same tables as `run`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::active_learning::Strategy;
use crate::evaluation::{relative_cost, review_cost, NamedCost, PhaseCounts, RunResult};
use crate::stats::{assign_bins, bonferroni, paired_t_test, PairedSample, SIGNIFICANCE_LEVEL};

pub const RUN_FILE: &str = "run.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SIGNIFICANCE_FILE: &str = "significance.csv";
pub const RELATIVE_COST_FILE: &str = "relative_costs.csv";
pub const BINS_FILE: &str = "bins.csv";
pub const BIN_SUMMARY_FILE: &str = "bin_summary.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const META_FILE: &str = "meta.json";
pub const POOLS_DIR: &str = "pools";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub dataset: String,
    pub topic: String,
    pub strategy: Strategy,
    pub classifier: String,
    pub pretrain_epochs: Option<u32>,
    pub r: usize,
    pub pool_size: usize,
    pub seed_doc: String,
    pub run_seed: u64,
    pub status: RunStatus,
    pub error: Option<String>,
}

/// One persisted trace row. Costs are derived, not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub n_reviewed: usize,
    pub t_p: usize,
    pub t_n: usize,
    pub r_precision: f64,
    /// `(m_p, m_n)` per target recall.
    pub second_phase: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub meta: RunMeta,
    /// Empty for failed runs.
    pub trace: Vec<TraceRow>,
    pub wall_clock_seconds: Option<f64>,
}

impl RunRecord {
    pub fn from_result(meta: RunMeta, result: &RunResult, wall_clock_seconds: Option<f64>) -> Self {
        let trace = result
            .iterations
            .iter()
            .map(|(rec, ev)| TraceRow {
                iteration: rec.iteration,
                n_reviewed: rec.n_reviewed,
                t_p: rec.t_p,
                t_n: rec.t_n,
                r_precision: ev.r_precision,
                second_phase: ev.second_phase.clone(),
            })
            .collect();
        Self {
            meta,
            trace,
            wall_clock_seconds,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.meta.status == RunStatus::Ok
    }

    pub fn variant(&self) -> Variant {
        (self.meta.classifier.clone(), self.meta.pretrain_epochs)
    }

    fn cost_at(&self, row: &TraceRow, cs: &NamedCost, k: usize) -> f64 {
        let (m_p, m_n) = row.second_phase[k];
        review_cost(
            PhaseCounts {
                t_p: row.t_p,
                t_n: row.t_n,
                m_p,
                m_n,
            },
            &cs.structure,
        )
        .total
    }

    /// Minimum total cost over the trace at target-recall index `k`.
    pub fn min_cost(&self, cs: &NamedCost, k: usize) -> Option<f64> {
        self.trace.iter().map(|row| self.cost_at(row, cs, k)).reduce(f64::min)
    }

    pub fn final_r_precision(&self) -> Option<f64> {
        self.trace.last().map(|row| row.r_precision)
    }
}

/// `(classifier, pretrain_epochs)`.
pub type Variant = (String, Option<u32>);

/// What aggregation needs besides the run records; stored in `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSettings {
    pub dataset: String,
    pub target_recalls: Vec<f64>,
    pub cost_structures: Vec<NamedCost>,
    /// Baseline classifier name.
    pub baseline: Option<String>,
    pub summary_wall_clock: bool,
}

/// Column suffix for a target recall: 0.8 → "80", 0.975 → "97.5".
pub fn recall_label(rho: f64) -> String {
    let pct = (rho * 1e6).round() / 1e4;
    format!("{pct}")
}

fn epochs_cell(e: Option<u32>) -> String {
    e.map(|e| e.to_string()).unwrap_or_default()
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl ToString) -> ExperimentError {
    ExperimentError::Format {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| format_err(path, e);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| format_err(path, e))?;
    fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| format_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e))
}

fn trace_header(settings: &ReportSettings) -> Vec<String> {
    let rhos = &settings.target_recalls;
    let costs = &settings.cost_structures;
    let primary = recall_label(rhos[0]);
    let mut h: Vec<String> = ["iteration", "n_reviewed", "t_p", "t_n", "r_precision"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.push(format!("m_p_u{primary}"));
    h.push(format!("m_n_u{primary}"));
    h.extend(costs.iter().map(|c| format!("cost_{}", c.name)));
    for rho in &rhos[1..] {
        let l = recall_label(*rho);
        h.push(format!("m_p_u{l}"));
        h.push(format!("m_n_u{l}"));
        h.extend(costs.iter().map(|c| format!("cost_{}_u{l}", c.name)));
    }
    h
}

/// Writes `run.json` and `trace.csv` under `out/<run_id>/`.
pub fn write_run(out: &Path, settings: &ReportSettings, record: &RunRecord) -> Result<(), ExperimentError> {
    let dir = out.join(&record.meta.run_id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_json(&dir.join(RUN_FILE), &record.meta)?;

    let rows: Vec<Vec<String>> = record
        .trace
        .iter()
        .map(|row| {
            let mut cells = vec![
                row.iteration.to_string(),
                row.n_reviewed.to_string(),
                row.t_p.to_string(),
                row.t_n.to_string(),
                row.r_precision.to_string(),
            ];
            for k in 0..settings.target_recalls.len() {
                let (m_p, m_n) = row.second_phase[k];
                cells.push(m_p.to_string());
                cells.push(m_n.to_string());
                for cs in &settings.cost_structures {
                    cells.push(record.cost_at(row, cs, k).to_string());
                }
            }
            cells
        })
        .collect();
    write_csv(&dir.join(TRACE_FILE), &trace_header(settings), &rows)
}

fn read_trace(path: &Path, settings: &ReportSettings) -> Result<Vec<TraceRow>, ExperimentError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| format_err(path, e))?;
    let header = reader.headers().map_err(|e| format_err(path, e))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format_err(path, format!("missing column {name}")))
    };
    let fixed = [col("iteration")?, col("n_reviewed")?, col("t_p")?, col("t_n")?];
    let rp = col("r_precision")?;
    let phase_cols = settings
        .target_recalls
        .iter()
        .map(|rho| {
            let l = recall_label(*rho);
            Ok((col(&format!("m_p_u{l}"))?, col(&format!("m_n_u{l}"))?))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;

    let mut rows = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| format_err(path, e))?;
        let line = n + 2;
        let int = |i: usize| {
            rec[i]
                .parse::<usize>()
                .map_err(|e| format_err(path, format!("line {line}, column {}: {e}", &header[i])))
        };
        let [iteration, n_reviewed, t_p, t_n] = [int(fixed[0])?, int(fixed[1])?, int(fixed[2])?, int(fixed[3])?];
        let r_precision = rec[rp]
            .parse::<f64>()
            .map_err(|e| format_err(path, format!("line {line}, column r_precision: {e}")))?;
        let second_phase = phase_cols
            .iter()
            .map(|&(p, q)| Ok((int(p)?, int(q)?)))
            .collect::<Result<Vec<_>, ExperimentError>>()?;
        rows.push(TraceRow {
            iteration,
            n_reviewed,
            t_p,
            t_n,
            r_precision,
            second_phase,
        });
    }
    Ok(rows)
}

/// Loads every run under `out`, sorted by run id.
pub fn read_runs(out: &Path, settings: &ReportSettings) -> Result<Vec<RunRecord>, ExperimentError> {
    let timings = read_timings(&out.join(TIMINGS_FILE))?;
    let mut run_files = Vec::new();
    collect_run_files(out, out, &mut run_files)?;
    let mut records = Vec::with_capacity(run_files.len());
    for path in run_files {
        let meta: RunMeta = read_json(&path)?;
        let trace_path = path.with_file_name(TRACE_FILE);
        let trace = if meta.status == RunStatus::Ok {
            read_trace(&trace_path, settings)?
        } else {
            Vec::new()
        };
        let wall_clock_seconds = timings.get(&meta.run_id).copied();
        records.push(RunRecord {
            meta,
            trace,
            wall_clock_seconds,
        });
    }
    records.sort_by(|a, b| a.meta.run_id.cmp(&b.meta.run_id));
    Ok(records)
}

fn collect_run_files(root: &Path, dir: &Path, found: &mut Vec<PathBuf>) -> Result<(), ExperimentError> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if path.is_dir() {
            if dir == root && entry.file_name() == POOLS_DIR {
                continue;
            }
            collect_run_files(root, &path, found)?;
        } else if entry.file_name() == RUN_FILE {
            found.push(path);
        }
    }
    Ok(())
}

pub fn write_timings(path: &Path, records: &[RunRecord]) -> Result<(), ExperimentError> {
    let header = ["run_id".to_string(), "wall_clock_seconds".to_string()];
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| vec![r.meta.run_id.clone(), opt_cell(r.wall_clock_seconds)])
        .collect();
    write_csv(path, &header, &rows)
}

fn read_timings(path: &Path) -> Result<BTreeMap<String, f64>, ExperimentError> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| format_err(path, e))?;
    let mut out = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| format_err(path, e))?;
        if let (Some(id), Some(Ok(secs))) = (rec.get(0), rec.get(1).map(str::parse::<f64>)) {
            out.insert(id.to_string(), secs);
        }
    }
    Ok(out)
}

/// A per-run scalar reported in the summary and compared across variants.
struct Metric {
    name: String,
    /// `None` for final R-Precision, otherwise `(cost index, recall index)`.
    cost: Option<(usize, usize)>,
}

impl Metric {
    fn value(&self, record: &RunRecord, settings: &ReportSettings) -> Option<f64> {
        match self.cost {
            None => record.final_r_precision(),
            Some((c, k)) => record.min_cost(&settings.cost_structures[c], k),
        }
    }
}

/// Min-cost metrics, in summary column order.
fn cost_metrics(settings: &ReportSettings) -> Vec<Metric> {
    let mut out: Vec<Metric> = settings
        .cost_structures
        .iter()
        .enumerate()
        .map(|(c, cs)| Metric {
            name: format!("min_cost_{}", cs.name),
            cost: Some((c, 0)),
        })
        .collect();
    for (k, rho) in settings.target_recalls.iter().enumerate().skip(1) {
        let l = recall_label(*rho);
        for (c, cs) in settings.cost_structures.iter().enumerate() {
            out.push(Metric {
                name: format!("min_cost_{}_u{l}", cs.name),
                cost: Some((c, k)),
            });
        }
    }
    out
}

/// Counts reported after writing the tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSummary {
    pub n_runs: usize,
    pub failed: Vec<String>,
}

/// Writes summary, significance, relative-cost and bin tables.
pub fn write_tables(
    out: &Path,
    settings: &ReportSettings,
    records: &[RunRecord],
) -> Result<TableSummary, ExperimentError> {
    let costs = cost_metrics(settings);
    write_summary(&out.join(SUMMARY_FILE), settings, records, &costs)?;

    let mut metrics = vec![Metric {
        name: "r_precision".into(),
        cost: None,
    }];
    metrics.extend(cost_metrics(settings));
    let values = per_topic_values(settings, records, &metrics);
    write_significance(&out.join(SIGNIFICANCE_FILE), settings, &metrics, &values)?;
    write_relative_costs(&out.join(RELATIVE_COST_FILE), settings, &metrics, &values)?;
    write_bins(out, settings, records)?;

    let failed: Vec<String> = records
        .iter()
        .filter(|r| !r.is_ok())
        .map(|r| r.meta.run_id.clone())
        .collect();
    Ok(TableSummary {
        n_runs: records.len(),
        failed,
    })
}

fn write_summary(
    path: &Path,
    settings: &ReportSettings,
    records: &[RunRecord],
    costs: &[Metric],
) -> Result<(), ExperimentError> {
    // The primary uniform and expensive columns come first; the rest trail
    // wall_clock_seconds so the leading columns keep a fixed layout.
    let (lead, trail) = costs.split_at(2.min(costs.len()));
    let mut header: Vec<String> = [
        "run_id",
        "topic",
        "strategy",
        "classifier",
        "pretrain_epochs",
        "final_r_precision",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(lead.iter().map(|m| m.name.clone()));
    header.push("wall_clock_seconds".into());
    header.extend(trail.iter().map(|m| m.name.clone()));
    header.push("status".into());

    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let m = &r.meta;
            let mut row = vec![
                m.run_id.clone(),
                m.topic.clone(),
                m.strategy.to_string(),
                m.classifier.clone(),
                epochs_cell(m.pretrain_epochs),
                opt_cell(r.final_r_precision()),
            ];
            row.extend(lead.iter().map(|c| opt_cell(c.value(r, settings))));
            row.push(if settings.summary_wall_clock {
                opt_cell(r.wall_clock_seconds)
            } else {
                String::new()
            });
            row.extend(trail.iter().map(|c| opt_cell(c.value(r, settings))));
            row.push(match m.status {
                RunStatus::Ok => "ok".into(),
                RunStatus::Failed => "failed".into(),
            });
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// strategy → metric index → variant → topic → value, over successful runs.
type Values = BTreeMap<Strategy, Vec<BTreeMap<Variant, BTreeMap<String, f64>>>>;

fn per_topic_values(settings: &ReportSettings, records: &[RunRecord], metrics: &[Metric]) -> Values {
    let mut values: Values = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        let per_metric = values
            .entry(r.meta.strategy)
            .or_insert_with(|| (0..metrics.len()).map(|_| BTreeMap::new()).collect());
        for (i, m) in metrics.iter().enumerate() {
            if let Some(v) = m.value(r, settings) {
                per_metric[i]
                    .entry(r.variant())
                    .or_default()
                    .insert(r.meta.topic.clone(), v);
            }
        }
    }
    values
}

fn baseline_variant<'a>(
    settings: &ReportSettings,
    variants: &'a BTreeMap<Variant, BTreeMap<String, f64>>,
) -> Option<&'a Variant> {
    let name = settings.baseline.as_deref()?;
    variants.keys().find(|(c, _)| c == name)
}

/// Restricts two per-topic maps to their shared topics.
fn common_topics(
    a: &BTreeMap<String, f64>,
    b: &BTreeMap<String, f64>,
) -> (BTreeMap<String, f64>, BTreeMap<String, f64>) {
    let shared: BTreeSet<&String> = a.keys().filter(|k| b.contains_key(*k)).collect();
    let pick = |m: &BTreeMap<String, f64>| {
        m.iter()
            .filter(|(k, _)| shared.contains(k))
            .map(|(k, v)| (k.clone(), *v))
            .collect()
    };
    (pick(a), pick(b))
}

fn write_significance(
    path: &Path,
    settings: &ReportSettings,
    metrics: &[Metric],
    values: &Values,
) -> Result<(), ExperimentError> {
    let header: Vec<String> = [
        "dataset",
        "strategy",
        "metric",
        "classifier",
        "pretrain_epochs",
        "t",
        "p",
        "p_bonferroni",
        "family_size",
        "significant_at_0.05",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut rows = Vec::new();
    for (strategy, per_metric) in values {
        for (metric, variants) in metrics.iter().zip(per_metric) {
            let Some(base) = baseline_variant(settings, variants) else {
                continue;
            };
            let tests: Vec<(&Variant, Option<crate::stats::TTest>)> = variants
                .iter()
                .filter(|(v, _)| *v != base)
                .map(|(v, topics)| {
                    let (c, b) = common_topics(topics, &variants[base]);
                    let test = PairedSample::from_topics(&c, &b)
                        .and_then(|s| paired_t_test(&s))
                        .map_err(|e| {
                            log::info!(
                                "no t-test for {strategy}/{}/{}/{}: {e}",
                                metric.name,
                                v.0,
                                epochs_cell(v.1)
                            )
                        })
                        .ok();
                    (v, test)
                })
                .collect();
            let family = tests.iter().filter(|(_, t)| t.is_some()).count();
            for (v, test) in tests {
                let mut row = vec![
                    settings.dataset.clone(),
                    strategy.to_string(),
                    metric.name.clone(),
                    v.0.clone(),
                    epochs_cell(v.1),
                ];
                match test {
                    Some(t) => {
                        let adj = bonferroni(t.p, family).expect("family has at least this test");
                        row.extend([
                            t.t.to_string(),
                            t.p.to_string(),
                            adj.to_string(),
                            family.to_string(),
                            (adj < SIGNIFICANCE_LEVEL).to_string(),
                        ]);
                    }
                    None => {
                        row.extend(std::iter::repeat_n(String::new(), 3).chain([family.to_string(), String::new()]))
                    }
                }
                rows.push(row);
            }
        }
    }
    write_csv(path, &header, &rows)
}

fn write_relative_costs(
    path: &Path,
    settings: &ReportSettings,
    metrics: &[Metric],
    values: &Values,
) -> Result<(), ExperimentError> {
    let header: Vec<String> = [
        "dataset",
        "strategy",
        "metric",
        "classifier",
        "pretrain_epochs",
        "mean_of_ratios",
        "ratio_of_sums",
        "n_topics",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut rows = Vec::new();
    for (strategy, per_metric) in values {
        for (metric, variants) in metrics.iter().zip(per_metric) {
            if metric.cost.is_none() {
                continue;
            }
            let Some(base) = baseline_variant(settings, variants) else {
                continue;
            };
            for (v, topics) in variants {
                let (c, b) = common_topics(topics, &variants[base]);
                match relative_cost(&c, &b) {
                    Ok(rc) => rows.push(vec![
                        settings.dataset.clone(),
                        strategy.to_string(),
                        metric.name.clone(),
                        v.0.clone(),
                        epochs_cell(v.1),
                        rc.mean_of_ratios.to_string(),
                        rc.ratio_of_sums.to_string(),
                        rc.n_topics.to_string(),
                    ]),
                    Err(e) => log::warn!(
                        "no relative cost for {strategy}/{}/{}/{}: {e}",
                        metric.name,
                        v.0,
                        epochs_cell(v.1)
                    ),
                }
            }
        }
    }
    write_csv(path, &header, &rows)
}

fn write_bins(out: &Path, settings: &ReportSettings, records: &[RunRecord]) -> Result<(), ExperimentError> {
    let topics: BTreeMap<String, usize> = records.iter().map(|r| (r.meta.topic.clone(), r.meta.r)).collect();
    let list: Vec<(String, usize)> = topics.iter().map(|(t, r)| (t.clone(), *r)).collect();
    let bins = assign_bins(&list);

    let header: Vec<String> = ["topic", "r", "difficulty", "prevalence"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = bins
        .iter()
        .map(|(t, (d, p))| vec![t.clone(), topics[t].to_string(), d.to_string(), p.to_string()])
        .collect();
    write_csv(&out.join(BINS_FILE), &header, &rows)?;

    // Cell means of the headline metrics per variant.
    let costs = cost_metrics(settings);
    let lead = &costs[..2.min(costs.len())];
    let mut cells: BTreeMap<(Strategy, Variant, String, String), Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        let (d, p) = bins[&r.meta.topic];
        cells
            .entry((r.meta.strategy, r.variant(), d.to_string(), p.to_string()))
            .or_default()
            .push(r);
    }
    let mut header: Vec<String> = [
        "strategy",
        "classifier",
        "pretrain_epochs",
        "difficulty",
        "prevalence",
        "n_topics",
        "mean_final_r_precision",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(lead.iter().map(|m| format!("mean_{}", m.name)));
    let mean = |xs: Vec<f64>| xs.iter().sum::<f64>() / xs.len() as f64;
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|((s, v, d, p), rs)| {
            let mut row = vec![
                s.to_string(),
                v.0.clone(),
                epochs_cell(v.1),
                d.clone(),
                p.clone(),
                rs.len().to_string(),
                mean(rs.iter().filter_map(|r| r.final_r_precision()).collect()).to_string(),
            ];
            for m in lead {
                row.push(mean(rs.iter().filter_map(|r| m.value(r, settings)).collect()).to_string());
            }
            row
        })
        .collect();
    write_csv(&out.join(BIN_SUMMARY_FILE), &header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> ReportSettings {
        ReportSettings {
            dataset: "d".into(),
            target_recalls: vec![0.8, 0.95],
            cost_structures: vec![NamedCost::uniform(), NamedCost::expensive()],
            baseline: Some("lr".into()),
            summary_wall_clock: false,
        }
    }

    fn record(topic: &str, classifier: &str, epochs: Option<u32>, t_p: usize) -> RunRecord {
        let e = epochs.map(|e| e.to_string()).unwrap_or("na".into());
        RunRecord {
            meta: RunMeta {
                run_id: format!("d/{topic}/relevance/{classifier}/{e}"),
                dataset: "d".into(),
                topic: topic.into(),
                strategy: Strategy::RelevanceFeedback,
                classifier: classifier.into(),
                pretrain_epochs: epochs,
                r: 10,
                pool_size: 100,
                seed_doc: "x".into(),
                run_seed: 1,
                status: RunStatus::Ok,
                error: None,
            },
            trace: vec![
                TraceRow {
                    iteration: 1,
                    n_reviewed: 1,
                    t_p: 1,
                    t_n: 0,
                    r_precision: 0.1,
                    second_phase: vec![(7, 20), (9, 30)],
                },
                TraceRow {
                    iteration: 2,
                    n_reviewed: 11,
                    t_p,
                    t_n: 11 - t_p,
                    r_precision: 0.5,
                    second_phase: vec![(8 - t_p.min(8), 3), (10 - t_p, 5)],
                },
            ],
            wall_clock_seconds: Some(0.5),
        }
    }

    #[test]
    fn recall_labels() {
        assert_eq!(recall_label(0.8), "80");
        assert_eq!(recall_label(0.95), "95");
        assert_eq!(recall_label(0.975), "97.5");
        assert_eq!(recall_label(1.0), "100");
    }

    #[test]
    fn min_cost_over_trace() {
        let r = record("t", "lr", None, 4);
        // Iteration 1: 1 + 0 + 7 + 20 = 28; iteration 2: 4 + 7 + 4 + 3 = 18.
        assert_eq!(r.min_cost(&NamedCost::uniform(), 0), Some(18.0));
        // Expensive: 10 + 27 = 37 and 40 + 70 + 7 = 117.
        assert_eq!(r.min_cost(&NamedCost::expensive(), 0), Some(37.0));
    }

    #[test]
    fn runs_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = settings();
        let mut failed = record("t2", "lr", None, 3);
        failed.meta.status = RunStatus::Failed;
        failed.meta.error = Some("boom".into());
        failed.trace.clear();
        let records = vec![record("t1", "lr", None, 4), failed];
        for r in &records {
            write_run(dir.path(), &s, r).unwrap();
        }
        write_timings(&dir.path().join(TIMINGS_FILE), &records).unwrap();
        let back = read_runs(dir.path(), &s).unwrap();
        assert_eq!(back, records);
        let header = fs::read_to_string(dir.path().join("d/t1/relevance/lr/na").join(TRACE_FILE)).unwrap();
        assert!(header.starts_with(
            "iteration,n_reviewed,t_p,t_n,r_precision,m_p_u80,m_n_u80,cost_uniform,cost_expensive,m_p_u95,m_n_u95,cost_uniform_u95,cost_expensive_u95\n"
        ));
    }

    #[test]
    fn tables_compare_against_baseline() {
        let dir = tempfile::tempdir().unwrap();
        let s = settings();
        let records = vec![
            record("a", "bert", Some(0), 5),
            record("a", "lr", None, 4),
            record("b", "bert", Some(0), 6),
            record("b", "lr", None, 4),
            record("c", "bert", Some(0), 8),
            record("c", "lr", None, 5),
        ];
        let summary = write_tables(dir.path(), &s, &records).unwrap();
        assert!(summary.failed.is_empty());
        let sig = fs::read_to_string(dir.path().join(SIGNIFICANCE_FILE)).unwrap();
        // One candidate per (strategy, metric) table: r_precision plus four costs.
        assert_eq!(sig.lines().count(), 1 + 5);
        assert!(sig.lines().all(|l| !l.contains(",lr,")));
        let rel = fs::read_to_string(dir.path().join(RELATIVE_COST_FILE)).unwrap();
        assert!(rel.contains("d,relevance,min_cost_uniform,lr,,1,1,3\n"), "{rel}");
        let summary_csv = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        let head = summary_csv.lines().next().unwrap();
        assert_eq!(
            head,
            "run_id,topic,strategy,classifier,pretrain_epochs,final_r_precision,min_cost_uniform,min_cost_expensive,wall_clock_seconds,min_cost_uniform_u95,min_cost_expensive_u95,status"
        );
    }
}
