//! Episode runner, evaluation, demonstrations, dataset ingestion and
//! on-disk records.

mod demo;
mod episode;
mod evaluate;
mod ingest;
mod io;

pub use demo::{expert_rollout, synthesize_demos};
pub use episode::{run_episode, Describer, EpisodeResult, StepRecord};
pub use evaluate::{
    build_actor, evaluate, metrics, probe_optimum, render_table, EvaluationOutput, Report, Variant, VariantMetrics,
};
pub use ingest::ingest_external_trajectories;
pub use io::{read_json, read_jsonl, sha256_file, write_json, write_jsonl, Manifest};

use thiserror::Error;

use crate::actor::ActorError;
use crate::arrangement::EnvError;
use crate::config::ConfigError;
use crate::domain::DomainError;
use crate::learning::LearningError;
use crate::selector::SelectorError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}:{line}: field `{field}`: {message}")]
    Schema { path: String, line: usize, field: String, message: String },
    #[error("{0} contains no records")]
    EmptyDataset(String),
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("unknown selector variant {0:?}")]
    UnknownVariant(String),
    #[error("variant {0:?} needs a trained value model")]
    MissingModel(String),
    #[error("variant `zeroshot` needs a remote actor")]
    NeedsRemote,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Actor(#[from] ActorError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl HarnessError {
    /// Process exit code: 2 for configuration and schema problems, 1 for
    /// everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_)
            | HarnessError::Schema { .. }
            | HarnessError::EmptyDataset(_)
            | HarnessError::UnknownVariant(_)
            | HarnessError::ZeroBudget => 2,
            HarnessError::Learning(LearningError::Config(_)) => 2,
            _ => 1,
        }
    }
}
