//! JSON-over-HTTP client for an external scoring endpoint.
//!
//! Wire contract: `POST <url>` with
//! `{"state_text": .., "task_description": .., "actions": [..], "fewshot": [..]}`
//! answered by `{"scores": [..]}`, one score per action in request order.
//! Any monotone per-action score works (mean token logit, log-probability);
//! scores are softmax-normalized locally.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ActionDistribution, Actor, ActorError, ActorQuery};
use crate::domain::ActionLabel;

/// Environment variable naming the endpoint URL.
pub const ENDPOINT_ENV: &str = "STATEBRIEF_ACTOR_URL";

const SUMMARIZE_INSTRUCTION: &str = "Summarize the state features that are relevant to the task: ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub state_text: String,
    pub task_description: String,
    pub actions: Vec<String>,
    #[serde(default)]
    pub fewshot: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteActorConfig {
    pub url: String,
    pub timeout_ms: u64,
    pub max_attempts: usize,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for RemoteActorConfig {
    fn default() -> Self {
        Self { url: String::new(), timeout_ms: 30_000, max_attempts: 3, backoff_ms: 200, max_in_flight: 8 }
    }
}

impl RemoteActorConfig {
    /// Fills an empty URL from [`ENDPOINT_ENV`].
    pub fn with_env(mut self) -> Self {
        if self.url.is_empty() {
            if let Ok(url) = std::env::var(ENDPOINT_ENV) {
                self.url = url;
            }
        }
        self
    }
}

struct Permits {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut n = self.available.lock().expect("permit lock poisoned");
        while *n == 0 {
            n = self.freed.wait(n).expect("permit lock poisoned");
        }
        *n -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().expect("permit lock poisoned") += 1;
        self.0.freed.notify_one();
    }
}

pub struct RemoteActor {
    config: RemoteActorConfig,
    client: reqwest::blocking::Client,
    permits: Permits,
}

impl RemoteActor {
    pub fn new(config: RemoteActorConfig) -> Result<Self, ActorError> {
        if config.url.is_empty() {
            return Err(ActorError::Unreachable { attempts: 0, message: format!("no endpoint configured (set {ENDPOINT_ENV})") });
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| ActorError::Unreachable { attempts: 0, message: e.to_string() })?;
        Ok(Self {
            permits: Permits { available: Mutex::new(config.max_in_flight.max(1)), freed: Condvar::new() },
            config,
            client,
        })
    }

    /// Sends one request, retrying transport failures, non-success statuses
    /// and malformed payloads with doubling backoff.
    pub fn request_scores(&self, request: &ScoreRequest) -> Result<Vec<f64>, ActorError> {
        let _permit = self.permits.acquire();
        let attempts = self.config.max_attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(self.config.backoff_ms << (attempt - 1).min(16)));
            }
            match self.try_once(request) {
                Ok(scores) => return Ok(scores),
                Err(e) => last = Some(e),
            }
        }
        Err(match last {
            Some(ActorError::Malformed(m)) => ActorError::Malformed(m),
            Some(other) => ActorError::Unreachable { attempts, message: other.to_string() },
            None => unreachable!("at least one attempt is made"),
        })
    }

    fn try_once(&self, request: &ScoreRequest) -> Result<Vec<f64>, ActorError> {
        let unreachable = |message: String| ActorError::Unreachable { attempts: 1, message };
        let resp = self.client.post(&self.config.url).json(request).send().map_err(|e| unreachable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(unreachable(format!("endpoint answered {status}")));
        }
        let body = resp.text().map_err(|e| unreachable(e.to_string()))?;
        let parsed: ScoreResponse = serde_json::from_str(&body).map_err(|e| ActorError::Malformed(e.to_string()))?;
        if parsed.scores.len() != request.actions.len() {
            return Err(ActorError::Malformed(format!("{} scores for {} actions", parsed.scores.len(), request.actions.len())));
        }
        Ok(parsed.scores)
    }

    /// One summarization call: every feature is scored as a candidate
    /// continuation of the summarize instruction. Used by the zero-shot
    /// baseline.
    pub fn score_features(&self, full_text: &str, task_description: &str, features: &[&str]) -> Result<Vec<f64>, ActorError> {
        self.request_scores(&ScoreRequest {
            state_text: full_text.to_owned(),
            task_description: format!("{SUMMARIZE_INSTRUCTION}{task_description}"),
            actions: features.iter().map(|f| f.to_string()).collect(),
            fewshot: Vec::new(),
        })
    }
}

impl Actor for RemoteActor {
    fn score_actions(&self, query: &ActorQuery) -> Result<ActionDistribution, ActorError> {
        if query.admissible.is_empty() {
            return Err(ActorError::NoActions);
        }
        let request = ScoreRequest {
            state_text: query.state_text.clone(),
            task_description: query.task.description.clone(),
            actions: query.admissible.iter().map(|a: &ActionLabel| a.text.clone()).collect(),
            fewshot: query.fewshot.clone(),
        };
        let scores = self.request_scores(&request)?;
        ActionDistribution::softmax(&query.admissible, &scores)
    }
}
