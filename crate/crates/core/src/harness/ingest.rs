use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::Value;

use super::HarnessError;
use crate::domain::{ActionLabel, DomainError, ExpertStep, FeatureSet, TaskSpec};

const FIELDS: [&str; 4] = ["feature_set", "task", "expert_action", "admissible"];

/// Reads externally produced expert steps, one JSON object per line, and
/// validates each against the expert-step schema.
pub fn ingest_external_trajectories(path: &Path) -> Result<Vec<ExpertStep>, HarnessError> {
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|source| HarnessError::Io { path: shown.clone(), source })?;
    let mut steps = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| HarnessError::Io { path: shown.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        steps.push(parse_step(&line).map_err(|(field, message)| HarnessError::Schema {
            path: shown.clone(),
            line: i + 1,
            field,
            message,
        })?);
    }
    if steps.is_empty() {
        return Err(HarnessError::EmptyDataset(shown));
    }
    Ok(steps)
}

fn field<T: DeserializeOwned>(obj: &mut serde_json::Map<String, Value>, name: &str) -> Result<T, (String, String)> {
    let v = obj.remove(name).ok_or_else(|| (name.to_owned(), "missing".to_owned()))?;
    serde_json::from_value(v).map_err(|e| (name.to_owned(), e.to_string()))
}

fn parse_step(line: &str) -> Result<ExpertStep, (String, String)> {
    let value: Value = serde_json::from_str(line).map_err(|e| ("record".to_owned(), e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(("record".into(), "expected a JSON object".into()));
    };
    if let Some(extra) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err((extra.clone(), "unknown field".into()));
    }
    let feature_set: FeatureSet = field(&mut obj, "feature_set")?;
    let task: TaskSpec = field(&mut obj, "task")?;
    let expert_action: ActionLabel = field(&mut obj, "expert_action")?;
    let admissible: Vec<ActionLabel> = field(&mut obj, "admissible")?;
    ExpertStep::new(feature_set, task, expert_action, admissible).map_err(|e| {
        let name = match e {
            DomainError::ExpertNotAdmissible(_) => "expert_action",
            _ => "admissible",
        };
        (name.to_owned(), e.to_string())
    })
}
