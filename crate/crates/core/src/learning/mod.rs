//! Reward, value-dataset collection and value-model training.

mod collect;
mod featurize;
mod model;
mod train;

pub use collect::{collect_value_dataset, expected_reward, reward, upsample, Trajectory};
pub use featurize::{tokenize, FeaturizerConfig, HashedFeaturizer, SparseVector};
pub use model::{Checkpoint, LinearValueModel, Link, ValueFunction, CHECKPOINT_FORMAT};
pub use train::{
    fit_value_model, train, train_with, Loss, Optimizer, ParamDistance, Regularizer, SquaredError, TrainReport, Unregularized,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actor::ActorError;
use crate::config::ConfigError;
use crate::domain::{Description, DomainError, ExpertStep, TaskSpec};

#[derive(Debug, Error)]
pub enum LearningError {
    #[error("description is not a subset of the step's feature set: {0}")]
    NotSubset(#[from] DomainError),
    #[error(transparent)]
    Actor(#[from] ActorError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("expert dataset is empty")]
    NoSteps,
    #[error("expert step {0} has an empty feature set")]
    EmptyFeatureSet(usize),
    #[error("value dataset is empty")]
    EmptyDataset,
    #[error("example {example} points at missing step {step}")]
    DanglingExample { example: usize, step: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {learning_rate}); lower the learning rate")]
    NonFiniteLoss { epoch: usize, batch: usize, learning_rate: f64 },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

/// One training record: a description prefix labeled with its trajectory's
/// Monte Carlo return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueExample {
    pub task: TaskSpec,
    pub prefix: Description,
    pub label: f64,
    /// Index of the anchoring step in [`ValueDataset::steps`].
    pub source_step: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValueDataset {
    pub steps: Vec<ExpertStep>,
    pub examples: Vec<ValueExample>,
}

/// Line record of a persisted [`ValueDataset`]: all steps, then all examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum DatasetRecord {
    Step(ExpertStep),
    Example(ValueExample),
}

impl ValueDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn to_records(&self) -> impl Iterator<Item = DatasetRecord> + '_ {
        self.steps.iter().cloned().map(DatasetRecord::Step).chain(self.examples.iter().cloned().map(DatasetRecord::Example))
    }

    pub fn from_records(records: impl IntoIterator<Item = DatasetRecord>) -> Result<Self, LearningError> {
        let mut ds = ValueDataset::default();
        for r in records {
            match r {
                DatasetRecord::Step(s) => ds.steps.push(s),
                DatasetRecord::Example(e) => ds.examples.push(e),
            }
        }
        ds.validate()?;
        Ok(ds)
    }

    /// Every example references an existing step, its prefix is a valid
    /// subset of that step's features, and its label is a probability.
    pub fn validate(&self) -> Result<(), LearningError> {
        for (i, e) in self.examples.iter().enumerate() {
            let step = self.steps.get(e.source_step).ok_or(LearningError::DanglingExample { example: i, step: e.source_step })?;
            e.prefix.validate(&step.feature_set)?;
            if !(0.0..=1.0).contains(&e.label) {
                return Err(LearningError::Checkpoint(format!("example {i} has label {} outside [0, 1]", e.label)));
            }
        }
        Ok(())
    }

    pub fn step_of(&self, example: &ValueExample) -> &ExpertStep {
        &self.steps[example.source_step]
    }
}
