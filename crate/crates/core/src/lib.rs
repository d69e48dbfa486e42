//! Suicide-risk screening from interview transcripts: in-context LLM
//! classification, slice-embedding baselines, ablation grids and the
//! regression analysis over them.

pub mod ablation;
pub mod backend;
pub mod cli;
pub mod corpus;
pub mod embeddings;
pub mod eval;
pub mod parser;
pub mod prompt;
pub mod run;
pub mod scalar;
pub mod stats;

pub use scalar::Real;

pub type OlsFitF64 = stats::OlsFit<f64>;
pub type OlsFitF32 = stats::OlsFit<f32>;
pub type LogisticModelF64 = embeddings::LogisticModel<f64>;
pub type LogisticModelF32 = embeddings::LogisticModel<f32>;
pub type PoolingF64 = embeddings::Pooling<f64>;
pub type PoolingF32 = embeddings::Pooling<f32>;
pub type SliceEmbeddingSetF64 = embeddings::SliceEmbeddingSet<f64>;
pub type SliceEmbeddingSetF32 = embeddings::SliceEmbeddingSet<f32>;
pub type DataTableF64 = stats::DataTable<f64>;
