//! Runs one classification configuration over a split.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatBackend};
use crate::corpus::{Corpus, Split};
use crate::eval::{evaluate, EvalError, EvalReport, RunMeta};
use crate::parser::{parse_completion, ExchangeMeta, Fallback, ParseError, PredictionRecord};
use crate::prompt::{render_prompt, sample_demos, Demo, Mode, PromptError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("subject {subject_id}: {source}")]
    Backend {
        subject_id: String,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("corpus has no {0} subjects")]
    EmptySplit(Split),
}

impl RunError {
    pub fn is_context_overflow(&self) -> bool {
        matches!(
            self,
            RunError::Backend {
                source: BackendError::ContextOverflow(_),
                ..
            }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub mode: Mode,
    pub k: usize,
    pub seed: u64,
    pub balanced: bool,
    pub fallback: Fallback,
    pub split: Split,
    pub workers: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            mode: Mode::FewShot,
            k: 4,
            seed: 0,
            balanced: false,
            fallback: Fallback::AtRisk,
            split: Split::Dev,
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyOutcome {
    pub predictions: Vec<PredictionRecord>,
    pub report: EvalReport,
    pub demo_ids: Vec<String>,
}

/// Applies `f` to every item on at most `workers` threads; results keep
/// input order. Stops handing out work once `f` returns an error and
/// reports the error of the lowest index that failed.
pub fn parallel_try_map<T, R, E, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<R, E>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let result = f(&items[i]);
                if result.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                slots.lock().expect("result slots poisoned")[i] = Some(result);
            });
        }
    });
    let slots = slots.into_inner().expect("result slots poisoned");
    let mut out = Vec::with_capacity(items.len());
    let mut first_err = None;
    for slot in slots {
        match slot {
            Some(Ok(r)) => out.push(r),
            Some(Err(e)) => {
                first_err = Some(e);
                break;
            }
            // Skipped after a failure elsewhere; an error must exist later.
            None => continue,
        }
    }
    match first_err {
        Some(e) => Err(e),
        None if out.len() == items.len() => Ok(out),
        None => unreachable!("work was skipped without an error"),
    }
}

/// Classifies every subject of `opts.split` with a fixed demo set.
pub fn classify_with_demos(
    corpus: &Corpus,
    backend: &dyn ChatBackend,
    demos: &[Demo],
    opts: &ClassifyOptions,
) -> Result<ClassifyOutcome, RunError> {
    let targets: Vec<_> = corpus.in_split(opts.split).collect();
    if targets.is_empty() {
        return Err(RunError::EmptySplit(opts.split));
    }
    let predictions = parallel_try_map(&targets, opts.workers, |subject| {
        let bundle = render_prompt(subject, demos, opts.mode, opts.seed)?;
        let exchange = backend.complete(&bundle).map_err(|source| RunError::Backend {
            subject_id: subject.subject_id.clone(),
            source,
        })?;
        let mut record = parse_completion(&subject.subject_id, &exchange.response_text, bundle.mode, opts.fallback)?;
        if record.parse_status != crate::parser::ParseStatus::Clean {
            log::info!("{}: parse status {:?}", subject.subject_id, record.parse_status);
        }
        record.exchange = Some(ExchangeMeta {
            latency_ms: exchange.latency_ms,
            attempts: exchange.attempt_count,
        });
        Ok::<_, RunError>(record)
    })?;
    let mode = if demos.is_empty() { Mode::ZeroShot } else { opts.mode };
    let report = evaluate(&predictions, corpus, opts.split)?.with_meta(RunMeta {
        mode,
        k: demos.len(),
        seed: opts.seed,
        model_name: backend.model_name().to_string(),
    });
    Ok(ClassifyOutcome {
        predictions,
        report,
        demo_ids: demos.iter().map(|d| d.subject.subject_id.clone()).collect(),
    })
}

/// Samples demos with `opts.seed` and classifies the split.
pub fn classify(
    corpus: &Corpus,
    backend: &dyn ChatBackend,
    opts: &ClassifyOptions,
) -> Result<ClassifyOutcome, RunError> {
    let k = if opts.mode == Mode::ZeroShot { 0 } else { opts.k };
    let demos = sample_demos(corpus, k, opts.seed, opts.balanced)?;
    classify_with_demos(corpus, backend, &demos, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u32> = (0..50).collect();
        let out = parallel_try_map(&items, 7, |x| Ok::<_, ()>(x * 2)).unwrap();
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn parallel_map_reports_error() {
        let items: Vec<u32> = (0..20).collect();
        let err = parallel_try_map(&items, 1, |&x| if x == 5 { Err(x) } else { Ok(x) }).unwrap_err();
        assert_eq!(err, 5);
    }

    #[test]
    fn empty_input() {
        let out: Vec<u32> = parallel_try_map(&[] as &[u32], 4, |&x| Ok::<_, ()>(x)).unwrap();
        assert!(out.is_empty());
    }
}
