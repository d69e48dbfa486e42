//! Factorial grid over shot count × model × seed, with resumable JSONL
//! run records and Table-style summaries.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatBackend};
use crate::corpus::{Corpus, Split};
use crate::parser::Fallback;
use crate::prompt::{sample_demos, Mode};
use crate::run::{classify_with_demos, parallel_try_map, ClassifyOptions};
use crate::stats::{DataTable, DesignError, EXAMPLE_COUNT, MODEL_SIZE, MODEL_TYPE, RESPONSE};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidSpec(String),
    #[error("corpus has no {0} subjects")]
    MissingSplit(Split),
    #[error("run records {path}: {reason}")]
    Store { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// Family tag used as the categorical model type, e.g. `gemma`.
    pub model_type: String,
    /// Parameters in billions.
    pub size_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub shot_counts: Vec<usize>,
    pub models: Vec<ModelSpec>,
    pub seeds: Vec<u64>,
    pub mode: Mode,
    #[serde(default)]
    pub balanced_demos: bool,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), GridError> {
        if self.shot_counts.is_empty() || self.models.is_empty() || self.seeds.is_empty() {
            return Err(GridError::InvalidSpec(
                "shot_counts, models and seeds must be nonempty".into(),
            ));
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(GridError::InvalidSpec("model names must be unique".into()));
        }
        Ok(())
    }

    /// Cells in grid order: shot count, then model, then seed.
    pub fn cells(&self) -> Vec<(usize, &ModelSpec, u64)> {
        let mut out = Vec::new();
        for &k in &self.shot_counts {
            for model in &self.models {
                for &seed in &self.seeds {
                    out.push((k, model, seed));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    ContextOverflow,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub k: usize,
    pub model_name: String,
    pub seed: u64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub k: usize,
    pub model_name: String,
    pub model_type: String,
    pub model_size_b: f64,
    pub seed: u64,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f1: Option<f64>,
    pub status: CellStatus,
    pub demo_ids: Vec<String>,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn key(&self) -> CellKey {
        CellKey {
            k: self.k,
            model_name: self.model_name.clone(),
            seed: self.seed,
            mode: self.mode,
        }
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Always reports the same instant.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime<Utc>);

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

/// Append-only run-record log, optionally backed by a JSONL file.
#[derive(Debug, Default)]
pub struct RecordStore {
    path: Option<PathBuf>,
    records: Vec<RunRecord>,
}

impl RecordStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or prepares to create) a JSONL record file.
    pub fn open(path: &Path) -> Result<Self, GridError> {
        let records = if path.exists() { load_records(path)? } else { Vec::new() };
        Ok(Self {
            path: Some(path.to_path_buf()),
            records,
        })
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    /// Latest record for each cell.
    pub fn latest(&self) -> HashMap<CellKey, &RunRecord> {
        self.records.iter().map(|r| (r.key(), r)).collect()
    }

    pub fn append(&mut self, record: RunRecord) -> Result<(), GridError> {
        if let Some(path) = &self.path {
            let store_err = |e: std::io::Error| GridError::Store {
                path: path.display().to_string(),
                reason: e.to_string(),
            };
            let mut line = serde_json::to_vec(&record).expect("record serializes");
            line.push(b'\n');
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(store_err)?;
            file.write_all(&line).map_err(store_err)?;
            file.flush().map_err(store_err)?;
        }
        self.records.push(record);
        Ok(())
    }
}

pub fn load_records(path: &Path) -> Result<Vec<RunRecord>, GridError> {
    let text = fs::read_to_string(path).map_err(|e| GridError::Store {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| GridError::Store {
                path: path.display().to_string(),
                reason: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GridOptions {
    /// Re-run cells that already have a record.
    pub force: bool,
    /// Cells executed concurrently.
    pub cell_workers: usize,
    /// Backend calls in flight within one cell.
    pub request_workers: usize,
    pub fallback: Fallback,
    pub split: Split,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            force: false,
            cell_workers: 4,
            request_workers: 1,
            fallback: Fallback::AtRisk,
            split: Split::Dev,
        }
    }
}

pub type BackendFactory<'a> = dyn Fn(&ModelSpec) -> Result<Arc<dyn ChatBackend>, BackendError> + Sync + 'a;

fn run_cell(
    corpus: &Corpus,
    spec: &GridSpec,
    backend: Result<&Arc<dyn ChatBackend>, &BackendError>,
    (k, model, seed): (usize, &ModelSpec, u64),
    opts: &GridOptions,
    clock: &dyn Clock,
) -> RunRecord {
    let started = clock.now();
    let mut record = RunRecord {
        k,
        model_name: model.name.clone(),
        model_type: model.model_type.clone(),
        model_size_b: model.size_b,
        seed,
        mode: spec.mode,
        accuracy: None,
        f1: None,
        status: CellStatus::Failed,
        demo_ids: Vec::new(),
        started,
        finished: started,
        error: None,
    };
    let backend = match backend {
        Ok(b) => b,
        Err(e) => {
            record.error = Some(e.to_string());
            record.finished = clock.now();
            return record;
        }
    };
    let demos = match sample_demos(corpus, k, seed, spec.balanced_demos) {
        Ok(d) => d,
        Err(e) => {
            record.error = Some(e.to_string());
            record.finished = clock.now();
            return record;
        }
    };
    record.demo_ids = demos.iter().map(|d| d.subject.subject_id.clone()).collect();
    let classify_opts = ClassifyOptions {
        mode: spec.mode,
        k,
        seed,
        balanced: spec.balanced_demos,
        fallback: opts.fallback,
        split: opts.split,
        workers: opts.request_workers,
    };
    match classify_with_demos(corpus, backend.as_ref(), &demos, &classify_opts) {
        Ok(outcome) => {
            record.status = CellStatus::Ok;
            record.accuracy = Some(outcome.report.accuracy);
            record.f1 = Some(outcome.report.f1);
        }
        Err(e) if e.is_context_overflow() => {
            record.status = CellStatus::ContextOverflow;
            record.error = Some(e.to_string());
        }
        Err(e) => {
            record.error = Some(e.to_string());
        }
    }
    record.finished = clock.now();
    record
}

/// Runs every missing cell (or all of them with `force`), appending one
/// record per finished cell. Returns the latest record of every grid cell,
/// in grid order.
pub fn run_grid(
    spec: &GridSpec,
    corpus: &Corpus,
    factory: &BackendFactory<'_>,
    store: &mut RecordStore,
    opts: &GridOptions,
    clock: &dyn Clock,
) -> Result<Vec<RunRecord>, GridError> {
    spec.validate()?;
    for split in [Split::Train, opts.split] {
        if corpus.split_size(split) == 0 {
            return Err(GridError::MissingSplit(split));
        }
    }

    let backends: HashMap<&str, Result<Arc<dyn ChatBackend>, BackendError>> =
        spec.models.iter().map(|m| (m.name.as_str(), factory(m))).collect();

    let existing = store.latest();
    let pending: Vec<_> = spec
        .cells()
        .into_iter()
        .filter(|(k, m, seed)| {
            opts.force
                || !existing.contains_key(&CellKey {
                    k: *k,
                    model_name: m.name.clone(),
                    seed: *seed,
                    mode: spec.mode,
                })
        })
        .collect();
    drop(existing);

    let shared = Mutex::new(&mut *store);
    parallel_try_map(&pending, opts.cell_workers, |&cell| {
        let backend = backends[cell.1.name.as_str()].as_ref();
        let record = run_cell(corpus, spec, backend, cell, opts, clock);
        log::info!(
            "cell k={} model={} seed={} -> {:?}",
            record.k,
            record.model_name,
            record.seed,
            record.status
        );
        shared.lock().expect("record store poisoned").append(record)
    })?;

    let latest = store.latest();
    Ok(spec
        .cells()
        .into_iter()
        .filter_map(|(k, m, seed)| {
            latest
                .get(&CellKey {
                    k,
                    model_name: m.name.clone(),
                    seed,
                    mode: spec.mode,
                })
                .map(|r| (*r).clone())
        })
        .collect())
}

/// Mean and sample standard deviation of one (k, model) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub k: usize,
    pub model_name: String,
    pub n_ok: usize,
    pub n_total: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

impl SummaryCell {
    /// `"0.60 (.07)"`, `"0.60 (—)"` for a single run, `"N/A"` without runs.
    pub fn display(&self) -> String {
        match (self.mean, self.sd) {
            (None, _) => "N/A".into(),
            (Some(m), None) => format!("{m:.2} (—)"),
            (Some(m), Some(sd)) => {
                let sd = format!("{sd:.2}");
                let sd = sd.strip_prefix('0').unwrap_or(&sd);
                format!("{m:.2} ({sd})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub cells: Vec<SummaryCell>,
}

/// Groups by (k, model) and summarizes accuracy over the Ok runs.
pub fn summarize_grid(records: &[RunRecord]) -> GridSummary {
    let mut order: Vec<(usize, String)> = Vec::new();
    let mut model_order: Vec<String> = Vec::new();
    let mut groups: HashMap<(usize, String), Vec<&RunRecord>> = HashMap::new();
    // Later records for the same cell replace earlier ones.
    let mut latest: Vec<&RunRecord> = Vec::new();
    let mut index: HashMap<CellKey, usize> = HashMap::new();
    for r in records {
        match index.get(&r.key()) {
            Some(&i) => latest[i] = r,
            None => {
                index.insert(r.key(), latest.len());
                latest.push(r);
            }
        }
    }
    for r in latest {
        if !model_order.contains(&r.model_name) {
            model_order.push(r.model_name.clone());
        }
        let key = (r.k, r.model_name.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order.sort_by_key(|(k, m)| (*k, model_order.iter().position(|x| x == m)));
    let cells = order
        .into_iter()
        .map(|key| {
            let members = &groups[&key];
            let acc: Vec<f64> = members
                .iter()
                .filter(|r| r.status == CellStatus::Ok)
                .filter_map(|r| r.accuracy)
                .collect();
            let n = acc.len();
            let mean = (n > 0).then(|| acc.iter().sum::<f64>() / n as f64);
            let sd = mean
                .filter(|_| n > 1)
                .map(|m| (acc.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
            SummaryCell {
                k: key.0,
                model_name: key.1,
                n_ok: n,
                n_total: members.len(),
                mean,
                sd,
            }
        })
        .collect();
    GridSummary { cells }
}

impl GridSummary {
    pub fn get(&self, k: usize, model_name: &str) -> Option<&SummaryCell> {
        self.cells.iter().find(|c| c.k == k && c.model_name == model_name)
    }

    fn models(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.model_name.as_str()) {
                out.push(&c.model_name);
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "k",
            "model_name",
            "n_ok",
            "n_total",
            "mean_accuracy",
            "sd_accuracy",
            "display",
        ])
        .expect("in-memory csv");
        for c in &self.cells {
            w.write_record([
                c.k.to_string(),
                c.model_name.clone(),
                c.n_ok.to_string(),
                c.n_total.to_string(),
                c.mean.map(|v| format!("{v:.6}")).unwrap_or_default(),
                c.sd.map(|v| format!("{v:.6}")).unwrap_or_default(),
                c.display(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    /// Shot counts down, models across.
    pub fn to_text(&self) -> String {
        let models = self.models();
        let width = models.iter().map(|m| m.chars().count()).max().unwrap_or(0).max(11) + 2;
        let mut ks: Vec<usize> = self.cells.iter().map(|c| c.k).collect();
        ks.dedup();
        let mut out = format!("{:>5}", "k");
        for m in &models {
            out.push_str(&format!("{m:>width$}"));
        }
        out.push('\n');
        for k in ks {
            out.push_str(&format!("{k:>5}"));
            for m in &models {
                let cell = self.get(k, m).map_or_else(|| "".to_string(), SummaryCell::display);
                out.push_str(&format!("{cell:>width$}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Ok runs as a table with `accuracy`, `example_count`, `model_type` and
/// `model_size` columns; other statuses are dropped.
pub fn records_to_table(records: &[RunRecord]) -> Result<DataTable<f64>, DesignError> {
    let ok: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.status == CellStatus::Ok && r.accuracy.is_some())
        .collect();
    DataTable::new(ok.len())
        .with_numeric(RESPONSE, ok.iter().map(|r| r.accuracy.unwrap_or_default()).collect())?
        .with_numeric(EXAMPLE_COUNT, ok.iter().map(|r| r.k as f64).collect())?
        .with_numeric(MODEL_SIZE, ok.iter().map(|r| r.model_size_b).collect())?
        .with_categorical(MODEL_TYPE, ok.iter().map(|r| r.model_type.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(k: usize, model: &str, seed: u64, acc: Option<f64>, status: CellStatus) -> RunRecord {
        let t = DateTime::<Utc>::from_timestamp(0, 0).unwrap();
        RunRecord {
            k,
            model_name: model.into(),
            model_type: "gemma".into(),
            model_size_b: 9.0,
            seed,
            mode: Mode::FewShot,
            accuracy: acc,
            f1: acc,
            status,
            demo_ids: vec![],
            started: t,
            finished: t,
            error: None,
        }
    }

    #[test]
    fn table_display_convention() {
        let recs = vec![
            record(4, "g9", 1, Some(0.53), CellStatus::Ok),
            record(4, "g9", 2, Some(0.60), CellStatus::Ok),
            record(4, "g9", 3, Some(0.67), CellStatus::Ok),
        ];
        let s = summarize_grid(&recs);
        let c = s.get(4, "g9").unwrap();
        assert!((c.mean.unwrap() - 0.60).abs() < 1e-12);
        assert!((c.sd.unwrap() - 0.07).abs() < 1e-12);
        assert_eq!(c.display(), "0.60 (.07)");
    }

    #[test]
    fn single_seed_and_na() {
        let recs = vec![
            record(0, "g9", 1, Some(0.52), CellStatus::Ok),
            record(128, "g9", 1, None, CellStatus::ContextOverflow),
            record(128, "g9", 2, None, CellStatus::ContextOverflow),
        ];
        let s = summarize_grid(&recs);
        assert_eq!(s.get(0, "g9").unwrap().display(), "0.52 (—)");
        assert_eq!(s.get(128, "g9").unwrap().display(), "N/A");
        assert!(s.to_text().contains("N/A"));
        assert!(s.to_csv().lines().count() == 3);
    }

    #[test]
    fn later_record_replaces_earlier() {
        let recs = vec![
            record(1, "g9", 1, None, CellStatus::Failed),
            record(1, "g9", 1, Some(0.5), CellStatus::Ok),
        ];
        let c = summarize_grid(&recs).cells[0].clone();
        assert_eq!((c.n_ok, c.n_total), (1, 1));
    }

    #[test]
    fn record_json_omits_absent_metrics() {
        let r = record(128, "g9", 1, None, CellStatus::ContextOverflow);
        let json = serde_json::to_string(&r).unwrap();
        assert!(!json.contains("accuracy"));
        assert!(json.contains("\"status\":\"context_overflow\""));
        assert!(json.contains("\"model_size_b\":9.0"));
    }

    #[test]
    fn table_drops_non_ok() {
        let recs = vec![
            record(1, "g9", 1, Some(0.5), CellStatus::Ok),
            record(2, "g9", 1, None, CellStatus::Failed),
        ];
        assert_eq!(records_to_table(&recs).unwrap().len(), 1);
    }
}
