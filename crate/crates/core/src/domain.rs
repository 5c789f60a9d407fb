//! Feature sets, descriptions, tasks and the deterministic description-building
//! transition.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("feature text is empty")]
    EmptyFeature,
    #[error("feature text contains a line break: {0:?}")]
    MultilineFeature(String),
    #[error("feature text appears twice in one feature set: {0:?}")]
    DuplicateFeatureText(String),
    #[error("feature ids must be 0..n in list order (position {position} has id {id})")]
    NonCanonicalId { position: usize, id: usize },
    #[error("feature {0} is already part of the description")]
    DuplicateFeature(usize),
    #[error("feature {id} does not exist in a feature set of {len} features")]
    UnknownFeature { id: usize, len: usize },
    #[error("description belongs to feature set {description}, not {feature_set}")]
    SourceMismatch { description: String, feature_set: String },
    #[error("task description is empty")]
    EmptyTask,
    #[error("action label is empty")]
    EmptyAction,
    #[error("action label appears twice in the admissible list: {0:?}")]
    DuplicateAction(String),
    #[error("expert action {0:?} is not admissible")]
    ExpertNotAdmissible(String),
    #[error("prompt template must contain both {{task}} and {{features}} placeholders")]
    BadTemplate,
}

/// One atomic statement about the environment state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Feature {
    pub text: String,
    pub id: usize,
}

fn check_feature_text(text: &str) -> Result<(), DomainError> {
    if text.trim().is_empty() {
        return Err(DomainError::EmptyFeature);
    }
    if text.contains(['\n', '\r']) {
        return Err(DomainError::MultilineFeature(text.to_owned()));
    }
    Ok(())
}

#[derive(Deserialize)]
struct RawFeatureSet {
    features: Vec<Feature>,
}

/// The exhaustive set of features that hold in one environment state.
///
/// Texts are distinct and ids are dense (`0..len`) in list order. The
/// fingerprint is a digest of the texts and identifies the set from a
/// [`Description`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawFeatureSet")]
pub struct FeatureSet {
    features: Vec<Feature>,
    #[serde(skip)]
    fingerprint: String,
}

impl TryFrom<RawFeatureSet> for FeatureSet {
    type Error = DomainError;

    fn try_from(raw: RawFeatureSet) -> Result<Self, Self::Error> {
        for (position, f) in raw.features.iter().enumerate() {
            if f.id != position {
                return Err(DomainError::NonCanonicalId { position, id: f.id });
            }
        }
        FeatureSet::new(raw.features.into_iter().map(|f| f.text))
    }
}

impl FeatureSet {
    pub fn new<I, S>(texts: I) -> Result<Self, DomainError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut seen = HashSet::new();
        let mut features = Vec::new();
        for (id, text) in texts.into_iter().enumerate() {
            let text = text.into();
            check_feature_text(&text)?;
            if !seen.insert(text.clone()) {
                return Err(DomainError::DuplicateFeatureText(text));
            }
            features.push(Feature { text, id });
        }
        let fingerprint = fingerprint(features.iter().map(|f| f.text.as_str()));
        Ok(Self { features, fingerprint })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn get(&self, id: usize) -> Option<&Feature> {
        self.features.get(id)
    }

    pub fn text(&self, id: usize) -> Option<&str> {
        self.features.get(id).map(|f| f.text.as_str())
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn id_of(&self, text: &str) -> Option<usize> {
        self.features.iter().position(|f| f.text == text)
    }

    /// Restricts the set to the given ids, re-indexing them densely in the
    /// given order.
    pub fn restrict(&self, ids: &[usize]) -> Result<FeatureSet, DomainError> {
        let texts = ids
            .iter()
            .map(|&id| self.text(id).map(str::to_owned).ok_or(DomainError::UnknownFeature { id, len: self.len() }))
            .collect::<Result<Vec<_>, _>>()?;
        FeatureSet::new(texts)
    }
}

fn fingerprint<'a>(texts: impl Iterator<Item = &'a str>) -> String {
    let mut hasher = Sha256::new();
    for t in texts {
        hasher.update(t.as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    digest[..12].iter().map(|b| format!("{b:02x}")).collect()
}

/// An ordered selection of features from one [`FeatureSet`].
///
/// Order is insertion order; the rendered text follows it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Description {
    pub selected: Vec<usize>,
    pub source: String,
}

impl Description {
    pub fn empty(features: &FeatureSet) -> Self {
        Self { selected: Vec::new(), source: features.fingerprint().to_owned() }
    }

    /// Builds a description from ids, validating each one in turn.
    pub fn from_ids(features: &FeatureSet, ids: &[usize]) -> Result<Self, DomainError> {
        ids.iter().try_fold(Self::empty(features), |x, &id| x.extend(features, id))
    }

    /// The whole feature set in canonical order.
    pub fn full(features: &FeatureSet) -> Self {
        Self { selected: (0..features.len()).collect(), source: features.fingerprint().to_owned() }
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.selected.contains(&id)
    }

    /// Returns a new description with `id` appended; `self` is untouched.
    pub fn extend(&self, features: &FeatureSet, id: usize) -> Result<Self, DomainError> {
        self.check_source(features)?;
        if id >= features.len() {
            return Err(DomainError::UnknownFeature { id, len: features.len() });
        }
        if self.contains(id) {
            return Err(DomainError::DuplicateFeature(id));
        }
        let mut selected = Vec::with_capacity(self.selected.len() + 1);
        selected.extend_from_slice(&self.selected);
        selected.push(id);
        Ok(Self { selected, source: self.source.clone() })
    }

    /// Checks that every id exists in `features` and appears once.
    pub fn validate(&self, features: &FeatureSet) -> Result<(), DomainError> {
        self.check_source(features)?;
        let mut seen = HashSet::new();
        for &id in &self.selected {
            if id >= features.len() {
                return Err(DomainError::UnknownFeature { id, len: features.len() });
            }
            if !seen.insert(id) {
                return Err(DomainError::DuplicateFeature(id));
            }
        }
        Ok(())
    }

    fn check_source(&self, features: &FeatureSet) -> Result<(), DomainError> {
        if self.source != features.fingerprint() {
            return Err(DomainError::SourceMismatch {
                description: self.source.clone(),
                feature_set: features.fingerprint().to_owned(),
            });
        }
        Ok(())
    }

    /// Feature texts in insertion order. Ids must already be valid.
    pub fn texts<'a>(&'a self, features: &'a FeatureSet) -> impl Iterator<Item = &'a str> + 'a {
        self.selected.iter().filter_map(|&id| features.text(id))
    }

    /// Characters of the selected feature texts joined by single spaces.
    pub fn char_len(&self, features: &FeatureSet) -> usize {
        let chars: usize = self.texts(features).map(|t| t.chars().count()).sum();
        chars + self.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawTask")]
pub struct TaskSpec {
    pub id: String,
    pub description: String,
}

#[derive(Deserialize)]
struct RawTask {
    id: String,
    description: String,
}

impl TryFrom<RawTask> for TaskSpec {
    type Error = DomainError;

    fn try_from(raw: RawTask) -> Result<Self, Self::Error> {
        TaskSpec::new(raw.id, raw.description)
    }
}

impl TaskSpec {
    pub fn new(id: impl Into<String>, description: impl Into<String>) -> Result<Self, DomainError> {
        let description = description.into();
        if description.trim().is_empty() {
            return Err(DomainError::EmptyTask);
        }
        Ok(Self { id: id.into(), description })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawAction")]
pub struct ActionLabel {
    pub text: String,
}

#[derive(Deserialize)]
struct RawAction {
    text: String,
}

impl TryFrom<RawAction> for ActionLabel {
    type Error = DomainError;

    fn try_from(raw: RawAction) -> Result<Self, Self::Error> {
        ActionLabel::new(raw.text)
    }
}

impl ActionLabel {
    pub fn new(text: impl Into<String>) -> Result<Self, DomainError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(DomainError::EmptyAction);
        }
        Ok(Self { text })
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Rejects duplicate labels in an admissible-action list.
pub fn check_admissible(admissible: &[ActionLabel]) -> Result<(), DomainError> {
    let mut seen = HashSet::new();
    for a in admissible {
        if !seen.insert(a.text.as_str()) {
            return Err(DomainError::DuplicateAction(a.text.clone()));
        }
    }
    Ok(())
}

/// What an expert did in one state: `(feature set, task, expert action)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawExpertStep")]
pub struct ExpertStep {
    pub feature_set: FeatureSet,
    pub task: TaskSpec,
    pub expert_action: ActionLabel,
    pub admissible: Vec<ActionLabel>,
}

#[derive(Deserialize)]
struct RawExpertStep {
    feature_set: FeatureSet,
    task: TaskSpec,
    expert_action: ActionLabel,
    admissible: Vec<ActionLabel>,
}

impl TryFrom<RawExpertStep> for ExpertStep {
    type Error = DomainError;

    fn try_from(raw: RawExpertStep) -> Result<Self, Self::Error> {
        ExpertStep::new(raw.feature_set, raw.task, raw.expert_action, raw.admissible)
    }
}

impl ExpertStep {
    pub fn new(
        feature_set: FeatureSet,
        task: TaskSpec,
        expert_action: ActionLabel,
        admissible: Vec<ActionLabel>,
    ) -> Result<Self, DomainError> {
        check_admissible(&admissible)?;
        if !admissible.contains(&expert_action) {
            return Err(DomainError::ExpertNotAdmissible(expert_action.text));
        }
        Ok(Self { feature_set, task, expert_action, admissible })
    }
}

/// Prompt used to serialize a `(task, description)` pair to text.
///
/// `{task}` is replaced by the task description and `{features}` by the
/// selected feature texts joined with single spaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate(String);

pub const DEFAULT_TEMPLATE: &str =
    "Describe the relevant information from the game state for the current task. Your current task is to {task}. {features}";

impl Default for PromptTemplate {
    fn default() -> Self {
        Self(DEFAULT_TEMPLATE.to_owned())
    }
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, DomainError> {
        let text = text.into();
        if !text.contains("{task}") || !text.contains("{features}") {
            return Err(DomainError::BadTemplate);
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Renders the description. Output is trimmed at the end so an empty
    /// description leaves no dangling separator.
    pub fn render(&self, x: &Description, features: &FeatureSet, task: &TaskSpec) -> String {
        let block = x.texts(features).collect::<Vec<_>>().join(" ");
        self.0.replace("{task}", &task.description).replace("{features}", &block).trim_end().to_owned()
    }
}

/// Renders with the default template.
pub fn render(x: &Description, features: &FeatureSet, task: &TaskSpec) -> String {
    PromptTemplate::default().render(x, features, task)
}
