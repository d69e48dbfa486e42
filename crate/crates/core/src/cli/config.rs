//! TOML run configuration. Every key is optional; flags override it and the
//! API key only ever comes from the environment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ablation::{GridSpec, ModelSpec};
use crate::backend::{BackendConfig, MockRule};
use crate::corpus::Split;
use crate::embeddings::TaskTag;
use crate::parser::Fallback;
use crate::prompt::Mode;
use crate::stats::DesignSpec;

pub const API_KEY_ENV: &str = "TRANSCRIPT_RISK_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub corpus: CorpusSection,
    pub backend: BackendSection,
    pub run: RunSection,
    pub baseline: BaselineSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    pub stats: StatsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("runs"),
            corpus: CorpusSection::default(),
            backend: BackendSection::default(),
            run: RunSection::default(),
            baseline: BaselineSection::default(),
            grid: None,
            stats: StatsSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| anyhow::anyhow!("parsing config {}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// `jsonl` or `csv`; inferred from the extension when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_timeout_secs: f64,
    pub max_retries: u32,
    pub retry_backoff_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub request_seed: Option<u64>,
    /// Backend calls in flight at once.
    pub concurrency: usize,
    pub mock: MockSection,
}

impl Default for BackendSection {
    fn default() -> Self {
        let base = BackendConfig::new("http://localhost:8000", "");
        Self {
            kind: BackendKind::Http,
            base_url: base.base_url,
            model_name: base.model_name,
            temperature: base.temperature,
            max_output_tokens: base.max_output_tokens,
            request_timeout_secs: base.request_timeout_secs,
            max_retries: base.max_retries,
            retry_backoff_secs: base.retry_backoff_secs,
            request_seed: None,
            concurrency: 4,
            mock: MockSection::default(),
        }
    }
}

impl BackendSection {
    /// Endpoint settings for `model_name`, with the key read from the environment.
    pub fn endpoint(&self, model_name: &str, base_url: Option<&str>) -> BackendConfig {
        BackendConfig {
            base_url: base_url.unwrap_or(&self.base_url).to_string(),
            model_name: model_name.to_string(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            request_timeout_secs: self.request_timeout_secs,
            max_retries: self.max_retries,
            retry_backoff_secs: self.retry_backoff_secs,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            request_seed: self.request_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSection {
    pub default_completion: String,
    pub rules: Vec<MockRule>,
    /// Prompt size limit in characters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context_limit: Option<usize>,
}

impl Default for MockSection {
    fn default() -> Self {
        Self {
            default_completion: "[[ ## answer ## ]]\nno\n\n[[ ## completed ## ]]".into(),
            rules: Vec::new(),
            context_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub mode: Mode,
    pub k: usize,
    pub seed: u64,
    pub balanced: bool,
    pub fallback: Fallback,
    pub split: Split,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            mode: Mode::FewShot,
            k: 4,
            seed: 0,
            balanced: false,
            fallback: Fallback::AtRisk,
            split: Split::Dev,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    /// Pooling specs such as `mean`, `max`, `mellowmax(1.0)`.
    pub pooling: Vec<String>,
    pub tasks: Vec<TaskTag>,
    pub threshold: f64,
    pub l2_lambda: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub split: Split,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            embeddings: None,
            pooling: vec!["mean".into(), "max".into(), "mellowmax(1.0)".into()],
            tasks: vec![TaskTag::Task1, TaskTag::Task2],
            threshold: 0.5,
            l2_lambda: crate::embeddings::DEFAULT_L2_LAMBDA,
            max_iters: 1000,
            seed: 0,
            split: Split::Dev,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridModel {
    pub name: String,
    pub model_type: String,
    pub size_b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    /// Mock only: prompt size limit in characters for this model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub shot_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_grid_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub balanced_demos: bool,
    pub models: Vec<GridModel>,
}

fn default_grid_mode() -> Mode {
    Mode::FewShot
}

impl GridSection {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            shot_counts: self.shot_counts.clone(),
            models: self
                .models
                .iter()
                .map(|m| ModelSpec {
                    name: m.name.clone(),
                    model_type: m.model_type.clone(),
                    size_b: m.size_b,
                })
                .collect(),
            seeds: self.seeds.clone(),
            mode: self.mode,
            balanced_demos: self.balanced_demos,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<PathBuf>,
    /// Custom model; the shot-count ablation model is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSpec>,
}
