use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context as _};
use serde::{Deserialize, Serialize};

use super::config::{BackendKind, BackendSection, RunConfig};
use super::{
    invalid, resolve_format, runtime, AblateArgs, BackendArgs, BaselineArgs, ClassifyArgs, Failure, ReportArgs,
    SplitArgs, StatsArgs, SynthArgs, EXIT_FAILURE,
};
use crate::ablation::{
    load_records, records_to_table, run_grid, summarize_grid, CellStatus, GridError, GridOptions, ModelSpec,
    RecordStore, SystemClock,
};
use crate::backend::{BackendError, ChatBackend, HttpBackend, MockBackend};
use crate::corpus::synthetic::{generate, SyntheticConfig};
use crate::corpus::{load_corpus, save_corpus, stratified_split, Corpus, Fractions, Split};
use crate::embeddings::{
    classify_subject, load_embeddings, save_embeddings, synthetic_embeddings, train_logistic, training_slices,
    EmbeddingError, LogisticModel, Pooling, TaskTag, TrainOptions,
};
use crate::eval::{evaluate, EvalReport};
use crate::parser::{ParseStatus, PredictionRecord};
use crate::run::{self, ClassifyOptions, RunError};
use crate::stats::{fit_ablation_model, fit_design};

pub struct Context {
    pub config: RunConfig,
    pub run_dir: Option<PathBuf>,
}

impl Context {
    fn corpus_path(&self) -> Result<&Path, Failure> {
        self.config
            .corpus
            .path
            .as_deref()
            .ok_or_else(|| invalid(anyhow!("no corpus given; pass --corpus or set [corpus] path")))
    }

    fn load_corpus(&self) -> Result<Corpus, Failure> {
        let path = self.corpus_path()?;
        let format = resolve_format(path, self.config.corpus.format.as_deref())?;
        load_corpus(path, format).map_err(invalid)
    }

    /// Creates the run directory and snapshots the resolved configuration.
    fn prepare_run_dir(&self, command: &str) -> Result<PathBuf, Failure> {
        let dir = match &self.run_dir {
            Some(dir) => dir.clone(),
            None => {
                let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
                self.config.output_dir.join(format!("{command}-{stamp}"))
            }
        };
        fs::create_dir_all(&dir)
            .with_context(|| format!("creating run directory {}", dir.display()))
            .map_err(runtime)?;
        write(&dir.join("config.toml"), self.config.to_toml())?;
        log::info!("run directory {}", dir.display());
        Ok(dir)
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|item| serde_json::to_string(item).expect("record serializes") + "\n")
        .collect()
}

/// Parses `a,b,c` where each term is a decimal or a ratio `p/q`. Terms that
/// do not sum to one are treated as weights and normalized.
pub(crate) fn parse_fractions(text: &str) -> Result<Fractions, Failure> {
    let terms = text
        .split(',')
        .map(|t| {
            let t = t.trim();
            match t.split_once('/') {
                Some((p, q)) => Ok(p.trim().parse::<f64>()? / q.trim().parse::<f64>()?),
                None => t.parse::<f64>(),
            }
        })
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| invalid(anyhow!("bad fractions {text:?}: {e}")))?;
    let [train, dev, test] = terms[..] else {
        return Err(invalid(anyhow!("expected three fractions, got {text:?}")));
    };
    let sum = train + dev + test;
    let (train, dev, test) = if (sum - 1.0).abs() <= 1e-9 {
        (train, dev, test)
    } else {
        (train / sum, dev / sum, test / sum)
    };
    Fractions::new(train, dev, test).map_err(invalid)
}

pub fn synth(ctx: Context, args: SynthArgs) -> Result<i32, Failure> {
    let config = SyntheticConfig {
        n: args.n,
        at_risk: args.at_risk.unwrap_or(args.n / 2),
        female: args.female.unwrap_or(args.n * 7 / 10),
        label_noise: args.label_noise,
        seed: args.seed,
    };
    if config.n == 0 || config.at_risk > config.n || config.female > config.n {
        return Err(invalid(anyhow!("need 0 < n and at_risk, female <= n")));
    }
    if !(0.0..=1.0).contains(&config.label_noise) {
        return Err(invalid(anyhow!("label_noise must lie in [0, 1]")));
    }
    let corpus = generate(config);
    let format = resolve_format(&args.out, ctx.config.corpus.format.as_deref())?;
    save_corpus(&corpus, &args.out, format).map_err(runtime)?;
    if let Some(path) = &args.embeddings {
        if args.dim == 0 {
            return Err(invalid(anyhow!("--dim must be positive")));
        }
        let sets = synthetic_embeddings(&corpus, args.dim, 4, 1.0, 0.5, args.seed);
        save_embeddings(&sets, path).map_err(runtime)?;
    }
    print!("{}", corpus.characteristics_table());
    Ok(0)
}

pub fn split(ctx: Context, args: SplitArgs) -> Result<i32, Failure> {
    let corpus = ctx.load_corpus()?;
    let fractions = parse_fractions(&args.fractions)?;
    let assigned = stratified_split(&corpus, fractions, &args.strata, args.seed).map_err(invalid)?;
    let source = ctx.corpus_path()?;
    let format = resolve_format(source, ctx.config.corpus.format.as_deref())?;
    let dir = ctx.prepare_run_dir("split")?;
    let ext = match format {
        crate::corpus::CorpusFormat::Jsonl => "jsonl",
        crate::corpus::CorpusFormat::Csv => "csv",
    };
    save_corpus(&assigned, &dir.join(format!("corpus.{ext}")), format).map_err(runtime)?;
    if let Some(out) = &args.out {
        let out_format = resolve_format(out, None).unwrap_or(format);
        save_corpus(&assigned, out, out_format).map_err(runtime)?;
    }
    let table = assigned.characteristics_table();
    write(&dir.join("characteristics.txt"), &table)?;
    print!("{table}");
    Ok(0)
}

fn apply_backend_args(section: &mut BackendSection, args: &BackendArgs) {
    if let Some(kind) = args.backend {
        section.kind = kind;
    }
    if let Some(model) = &args.model {
        section.model_name = model.clone();
    }
    if let Some(url) = &args.base_url {
        section.base_url = url.clone();
    }
    if let Some(n) = args.concurrency {
        section.concurrency = n;
    }
}

fn make_backend(
    section: &BackendSection,
    model_name: &str,
    base_url: Option<&str>,
    context_limit: Option<usize>,
) -> Result<Arc<dyn ChatBackend>, BackendError> {
    match section.kind {
        BackendKind::Mock => Ok(Arc::new(
            MockBackend::new(section.mock.rules.clone(), section.mock.default_completion.clone())
                .with_model_name(model_name)
                .with_context_limit(context_limit.or(section.mock.context_limit)),
        )),
        BackendKind::Http => Ok(Arc::new(HttpBackend::new(section.endpoint(model_name, base_url))?)),
    }
}

fn classify_failure(e: RunError) -> Failure {
    match e {
        RunError::Prompt(_) | RunError::EmptySplit(_) => invalid(e),
        _ => runtime(e),
    }
}

pub fn classify(mut ctx: Context, args: ClassifyArgs) -> Result<i32, Failure> {
    apply_backend_args(&mut ctx.config.backend, &args.backend);
    let run = &mut ctx.config.run;
    run.mode = args.mode.unwrap_or(run.mode);
    run.k = args.k.unwrap_or(run.k);
    run.seed = args.seed.unwrap_or(run.seed);
    run.balanced |= args.balanced;
    run.fallback = args.fallback.unwrap_or(run.fallback);
    run.split = args.split.unwrap_or(run.split);
    if ctx.config.backend.kind == BackendKind::Mock && ctx.config.backend.model_name.is_empty() {
        ctx.config.backend.model_name = "mock".into();
    }

    let corpus = ctx.load_corpus()?;
    let backend = make_backend(&ctx.config.backend, &ctx.config.backend.model_name, None, None).map_err(invalid)?;
    let run = &ctx.config.run;
    let opts = ClassifyOptions {
        mode: run.mode,
        k: run.k,
        seed: run.seed,
        balanced: run.balanced,
        fallback: run.fallback,
        split: run.split,
        workers: ctx.config.backend.concurrency.max(1),
    };
    let outcome = run::classify(&corpus, backend.as_ref(), &opts).map_err(classify_failure)?;
    for p in outcome
        .predictions
        .iter()
        .filter(|p| p.parse_status == ParseStatus::FallbackApplied)
    {
        log::warn!(
            "{}: completion not parseable, fell back to {}",
            p.subject_id,
            p.predicted.token()
        );
    }

    let dir = ctx.prepare_run_dir("classify")?;
    write(&dir.join("predictions.jsonl"), to_jsonl(&outcome.predictions))?;
    write(&dir.join("report.json"), to_json(&outcome.report))?;
    write(&dir.join("report.txt"), outcome.report.to_text())?;
    print!("{}", outcome.report.to_text());
    println!(
        "demos: {}",
        if outcome.demo_ids.is_empty() {
            "-".into()
        } else {
            outcome.demo_ids.join(", ")
        }
    );
    Ok(0)
}

pub fn ablate(mut ctx: Context, args: AblateArgs) -> Result<i32, Failure> {
    apply_backend_args(&mut ctx.config.backend, &args.backend);
    if let Some(fallback) = args.fallback {
        ctx.config.run.fallback = fallback;
    }
    if let Some(split) = args.split {
        ctx.config.run.split = split;
    }
    let grid = ctx
        .config
        .grid
        .clone()
        .ok_or_else(|| invalid(anyhow!("no [grid] section in the configuration")))?;
    let spec = grid.spec();
    spec.validate().map_err(invalid)?;
    let corpus = ctx.load_corpus()?;
    let dir = ctx.prepare_run_dir("ablate")?;
    let mut store = RecordStore::open(&dir.join("records.jsonl")).map_err(runtime)?;

    let section = ctx.config.backend.clone();
    let overrides: HashMap<String, _> = grid
        .models
        .iter()
        .map(|m| (m.name.clone(), (m.base_url.clone(), m.context_limit)))
        .collect();
    let factory = move |model: &ModelSpec| {
        let (base_url, limit) = overrides.get(&model.name).cloned().unwrap_or_default();
        make_backend(&section, &model.name, base_url.as_deref(), limit)
    };
    let opts = GridOptions {
        force: args.force,
        cell_workers: ctx.config.backend.concurrency.max(1),
        request_workers: 1,
        fallback: ctx.config.run.fallback,
        split: ctx.config.run.split,
    };
    let records = run_grid(&spec, &corpus, &factory, &mut store, &opts, &SystemClock).map_err(|e| match e {
        GridError::Store { .. } => runtime(e),
        _ => invalid(e),
    })?;

    let summary = summarize_grid(&records);
    write(&dir.join("summary.csv"), summary.to_csv())?;
    write(&dir.join("summary.txt"), summary.to_text())?;
    print!("{}", summary.to_text());
    for r in records.iter().filter(|r| r.status == CellStatus::Failed) {
        eprintln!(
            "failed: k={} model={} seed={}: {}",
            r.k,
            r.model_name,
            r.seed,
            r.error.as_deref().unwrap_or("unknown error")
        );
    }
    let any_ok = records.iter().any(|r| r.status == CellStatus::Ok);
    let any_failed = records.iter().any(|r| r.status == CellStatus::Failed);
    Ok(if any_ok && !any_failed { 0 } else { EXIT_FAILURE })
}

#[derive(Debug, Serialize, Deserialize)]
struct PoolingResult {
    pooling: String,
    report: EvalReport,
}

#[derive(Debug, Serialize, Deserialize)]
struct Skipped {
    subject_id: String,
    reason: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct BaselineOutput {
    tasks: Vec<TaskTag>,
    threshold: f64,
    results: Vec<PoolingResult>,
    best: String,
    skipped: Vec<Skipped>,
    model: LogisticModel<f64>,
}

pub fn baseline(mut ctx: Context, args: BaselineArgs) -> Result<i32, Failure> {
    let cfg = &mut ctx.config.baseline;
    if args.embeddings.is_some() {
        cfg.embeddings = args.embeddings.clone();
    }
    if !args.pooling.is_empty() {
        cfg.pooling = args.pooling.clone();
    }
    if !args.tasks.is_empty() {
        cfg.tasks = args.tasks.clone();
    }
    cfg.threshold = args.threshold.unwrap_or(cfg.threshold);
    cfg.l2_lambda = args.l2_lambda.unwrap_or(cfg.l2_lambda);
    cfg.split = args.split.unwrap_or(cfg.split);
    let cfg = ctx.config.baseline.clone();

    let poolings = cfg
        .pooling
        .iter()
        .map(|s| {
            s.parse::<Pooling<f64>>()
                .map_err(|e| invalid(anyhow!("pooling {s:?}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if poolings.is_empty() {
        return Err(invalid(anyhow!("no pooling specs given")));
    }
    if cfg.tasks.is_empty() {
        return Err(invalid(anyhow!("no tasks selected")));
    }
    let path = cfg.embeddings.as_deref().ok_or_else(|| {
        invalid(anyhow!(
            "no embeddings given; pass --embeddings or set [baseline] embeddings"
        ))
    })?;
    let corpus = ctx.load_corpus()?;
    let sets = load_embeddings(path).map_err(invalid)?;
    let train = training_slices(&corpus, &sets, Split::Train, &cfg.tasks).map_err(invalid)?;
    let options = TrainOptions {
        l2_lambda: cfg.l2_lambda,
        seed: cfg.seed,
        max_iters: cfg.max_iters,
        ..Default::default()
    };
    let model = train_logistic(&train, &options).map_err(invalid)?;
    if !model.meta.converged {
        log::warn!(
            "logistic training stopped after {} iterations without converging",
            model.meta.iterations
        );
    }

    let by_id: HashMap<&str, _> = sets.iter().map(|s| (s.subject_id.as_str(), s)).collect();
    let mut skipped = Vec::new();
    let mut scored = Vec::new();
    for subject in corpus.in_split(cfg.split) {
        match by_id.get(subject.subject_id.as_str()) {
            None => skipped.push(Skipped {
                subject_id: subject.subject_id.clone(),
                reason: "no embeddings".into(),
            }),
            Some(set) if set.for_tasks(&cfg.tasks).next().is_none() => skipped.push(Skipped {
                subject_id: subject.subject_id.clone(),
                reason: EmbeddingError::NoSlicesForTasks(subject.subject_id.clone()).to_string(),
            }),
            Some(set) => scored.push((subject.clone(), *set)),
        }
    }
    if scored.is_empty() {
        return Err(invalid(anyhow!(
            "no {} subject has embeddings for the selected tasks",
            cfg.split
        )));
    }
    let eval_corpus = Corpus::new(
        scored.iter().map(|(s, _)| s.clone()).collect(),
        corpus.provenance.clone(),
    )
    .map_err(runtime)?;

    let mut results = Vec::new();
    for pooling in &poolings {
        let predictions = scored
            .iter()
            .map(|(s, set)| {
                classify_subject(&model, set, &cfg.tasks, pooling, cfg.threshold)
                    .map(|(label, _)| PredictionRecord::direct(&s.subject_id, label))
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(invalid)?;
        let report = evaluate(&predictions, &eval_corpus, cfg.split).map_err(runtime)?;
        results.push(PoolingResult {
            pooling: pooling.to_string(),
            report,
        });
    }
    let best = results
        .iter()
        .fold(None::<&PoolingResult>, |best, r| match best {
            Some(b) if b.report.accuracy >= r.report.accuracy => Some(b),
            _ => Some(r),
        })
        .map(|r| r.pooling.clone())
        .expect("at least one pooling");

    let mut text = format!("{:<20}{:>10}{:>10}{:>6}\n", "pooling", "accuracy", "f1", "n");
    for r in &results {
        let mark = if r.pooling == best { " *" } else { "" };
        text.push_str(&format!(
            "{:<20}{:>10.4}{:>10.4}{:>6}{mark}\n",
            r.pooling, r.report.accuracy, r.report.f1, r.report.n
        ));
    }
    for s in &skipped {
        text.push_str(&format!("skipped {}: {}\n", s.subject_id, s.reason));
    }
    let output = BaselineOutput {
        tasks: cfg.tasks.clone(),
        threshold: cfg.threshold,
        results,
        best,
        skipped,
        model,
    };
    let dir = ctx.prepare_run_dir("baseline")?;
    write(&dir.join("baseline.json"), to_json(&output))?;
    write(&dir.join("baseline.txt"), &text)?;
    print!("{text}");
    Ok(0)
}

pub fn stats(mut ctx: Context, args: StatsArgs) -> Result<i32, Failure> {
    if args.records.is_some() {
        ctx.config.stats.records = args.records.clone();
    }
    let path = ctx
        .config
        .stats
        .records
        .clone()
        .ok_or_else(|| invalid(anyhow!("no run records given; pass --records or set [stats] records")))?;
    let records = load_records(&path).map_err(invalid)?;
    let table = records_to_table(&records).map_err(invalid)?;
    if table.is_empty() {
        return Err(invalid(anyhow!("{} holds no successful run records", path.display())));
    }
    let fitted = match &ctx.config.stats.design {
        Some(spec) => fit_design(&table, spec),
        None => fit_ablation_model(&table),
    }
    .map_err(invalid)?;
    let report = fitted.report();
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let dir = ctx.prepare_run_dir("stats")?;
    write(&dir.join("fit.json"), to_json(&report))?;
    write(&dir.join("fit.txt"), report.to_text())?;
    print!("{}", report.to_text());
    Ok(0)
}

pub fn report(ctx: Context, args: ReportArgs) -> Result<i32, Failure> {
    let records_path = args.from.join("records.jsonl");
    let predictions_path = args.from.join("predictions.jsonl");
    let mut produced = false;
    if records_path.exists() {
        let records = load_records(&records_path).map_err(invalid)?;
        let summary = summarize_grid(&records);
        write(&args.from.join("summary.csv"), summary.to_csv())?;
        write(&args.from.join("summary.txt"), summary.to_text())?;
        print!("{}", summary.to_text());
        produced = true;
    }
    if predictions_path.exists() {
        let text = fs::read_to_string(&predictions_path)
            .with_context(|| format!("reading {}", predictions_path.display()))
            .map_err(runtime)?;
        let predictions = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str::<PredictionRecord>)
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("parsing {}", predictions_path.display()))
            .map_err(invalid)?;
        let previous: Option<EvalReport> = fs::read_to_string(args.from.join("report.json"))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        let split = previous.as_ref().map_or(ctx.config.run.split, |r| r.split);
        let corpus = ctx.load_corpus()?;
        let mut report = evaluate(&predictions, &corpus, split).map_err(invalid)?;
        report.run_meta = previous.and_then(|r| r.run_meta);
        write(&args.from.join("report.json"), to_json(&report))?;
        write(&args.from.join("report.txt"), report.to_text())?;
        print!("{}", report.to_text());
        produced = true;
    }
    if !produced {
        return Err(invalid(anyhow!(
            "{} has neither records.jsonl nor predictions.jsonl",
            args.from.display()
        )));
    }
    Ok(0)
}
