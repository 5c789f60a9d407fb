//! Downstream decision makers: map a rendered state description and a task
//! to a distribution over admissible actions.

mod remote;
mod scripted;

pub use remote::{RemoteActor, RemoteActorConfig, ScoreRequest, ScoreResponse, ENDPOINT_ENV};
pub use scripted::{scripted_score, split_sentences, ScriptedActor, ScriptedActorSpec, TaskRule};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ActionLabel, TaskSpec};

#[derive(Debug, Error)]
pub enum ActorError {
    #[error("query has no admissible actions")]
    NoActions,
    #[error("no scripted rule for task {0:?}")]
    UnknownTask(String),
    #[error("scripted actor needs the reference action for this query")]
    MissingReference,
    #[error("reference action {0:?} is not admissible")]
    ReferenceNotAdmissible(String),
    #[error("invalid scripted actor parameters: {0}")]
    BadSpec(String),
    #[error("actor endpoint unreachable after {attempts} attempts: {message}")]
    Unreachable { attempts: usize, message: String },
    #[error("malformed actor response: {0}")]
    Malformed(String),
}

/// Input to an actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorQuery {
    pub state_text: String,
    pub task: TaskSpec,
    pub admissible: Vec<ActionLabel>,
    #[serde(default)]
    pub fewshot: Vec<String>,
    /// The demonstrated action for this state, when known. Only the scripted
    /// oracle reads it; it is never sent to a remote endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_action: Option<ActionLabel>,
}

/// Probabilities over the admissible actions, in admissible-list order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub probs: Vec<(ActionLabel, f64)>,
}

impl ActionDistribution {
    /// Normalizes non-negative weights. Non-finite or negative weights count
    /// as zero; an all-zero vector yields the uniform distribution.
    pub fn from_weights(actions: &[ActionLabel], weights: &[f64]) -> Result<Self, ActorError> {
        if actions.is_empty() {
            return Err(ActorError::NoActions);
        }
        debug_assert_eq!(actions.len(), weights.len());
        let clean: Vec<f64> = weights.iter().map(|&w| if w.is_finite() && w > 0.0 { w } else { 0.0 }).collect();
        let total: f64 = clean.iter().sum();
        let probs = if total > 0.0 && total.is_finite() {
            clean.iter().map(|w| w / total).collect::<Vec<_>>()
        } else {
            vec![1.0 / actions.len() as f64; actions.len()]
        };
        Ok(Self { probs: actions.iter().cloned().zip(probs).collect() })
    }

    /// Softmax over per-action scores. Non-finite scores get zero mass.
    pub fn softmax(actions: &[ActionLabel], scores: &[f64]) -> Result<Self, ActorError> {
        let max = scores.iter().copied().filter(|s| s.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores.iter().map(|&s| if s.is_finite() { (s - max).exp() } else { 0.0 }).collect();
        Self::from_weights(actions, &weights)
    }

    pub fn prob(&self, action: &ActionLabel) -> f64 {
        self.probs.iter().find(|(a, _)| a == action).map_or(0.0, |(_, p)| *p)
    }

    /// Most likely action; ties go to the lexicographically smallest label.
    pub fn argmax(&self) -> &ActionLabel {
        let mut best = &self.probs[0];
        for entry in &self.probs[1..] {
            if entry.1 > best.1 || (entry.1 == best.1 && entry.0 < best.0) {
                best = entry;
            }
        }
        &best.0
    }
}

pub trait Actor: Send + Sync {
    fn score_actions(&self, query: &ActorQuery) -> Result<ActionDistribution, ActorError>;
}

impl<A: Actor + ?Sized> Actor for &A {
    fn score_actions(&self, query: &ActorQuery) -> Result<ActionDistribution, ActorError> {
        (**self).score_actions(query)
    }
}

impl<A: Actor + ?Sized> Actor for Box<A> {
    fn score_actions(&self, query: &ActorQuery) -> Result<ActionDistribution, ActorError> {
        (**self).score_actions(query)
    }
}

/// Draws an action, or takes the argmax when `greedy` is set.
pub fn sample_action<R: Rng + ?Sized>(dist: &ActionDistribution, rng: &mut R, greedy: bool) -> ActionLabel {
    if greedy {
        return dist.argmax().clone();
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (action, p) in &dist.probs {
        acc += p;
        if u < acc {
            return action.clone();
        }
    }
    // rounding left a sliver above the last cumulative sum
    dist.probs.iter().rev().find(|(_, p)| *p > 0.0).unwrap_or(&dist.probs[dist.probs.len() - 1]).0.clone()
}
