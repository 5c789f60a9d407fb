//! Deterministic oracle actor with multiplicative evidence weights.
//!
//! The reference action gets weight `boost^r * penalty^d`, where `r` and `d`
//! count the distinct relevant and distracting sentences in the state text;
//! every other admissible action gets weight 1.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{ActionDistribution, Actor, ActorError, ActorQuery};
use crate::arrangement::{classify_feature, ArrangementTask, FeatureRole};
use crate::domain::TaskSpec;

/// Which sentences count as evidence for a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskRule {
    /// Relation sentences classified against the task's targets.
    Arrangement { targets: Vec<String> },
    /// Exact sentence lists.
    Sentences { relevant: BTreeSet<String>, distractors: BTreeSet<String> },
}

impl TaskRule {
    fn role(&self, sentence: &str, arrangement: Option<&ArrangementTask>) -> Option<FeatureRole> {
        match self {
            TaskRule::Arrangement { .. } => classify_feature(sentence, arrangement?),
            TaskRule::Sentences { relevant, distractors } => {
                if relevant.contains(sentence) {
                    Some(FeatureRole::Relevant)
                } else if distractors.contains(sentence) {
                    Some(FeatureRole::Distractor)
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedActorSpec {
    pub boost: f64,
    pub penalty: f64,
    #[serde(default)]
    pub rules: BTreeMap<String, TaskRule>,
    /// Derive an arrangement rule for task ids of the form `arrange:a,b,..`
    /// that have no explicit rule.
    #[serde(default = "default_true")]
    pub infer_arrangement: bool,
}

fn default_true() -> bool {
    true
}

impl ScriptedActorSpec {
    pub fn new(boost: f64, penalty: f64) -> Result<Self, ActorError> {
        let spec = Self { boost, penalty, rules: BTreeMap::new(), infer_arrangement: true };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ActorError> {
        if !(self.boost > 1.0 && self.boost.is_finite()) {
            return Err(ActorError::BadSpec(format!("boost must exceed 1, got {}", self.boost)));
        }
        if !(self.penalty > 0.0 && self.penalty < 1.0) {
            return Err(ActorError::BadSpec(format!("penalty must lie in (0, 1), got {}", self.penalty)));
        }
        if self.boost * self.penalty == 1.0 {
            return Err(ActorError::BadSpec("boost * penalty must not equal 1".into()));
        }
        Ok(())
    }

    pub fn with_rule(mut self, task_id: impl Into<String>, rule: TaskRule) -> Self {
        self.rules.insert(task_id.into(), rule);
        self
    }

    fn rule_for(&self, task: &TaskSpec) -> Result<(TaskRule, Option<ArrangementTask>), ActorError> {
        let rule = match self.rules.get(&task.id) {
            Some(rule) => rule.clone(),
            None if self.infer_arrangement => {
                let parsed = ArrangementTask::from_task_id(&task.id).map_err(|_| ActorError::UnknownTask(task.id.clone()))?;
                TaskRule::Arrangement { targets: parsed.targets.into_iter().map(|t| t.name).collect() }
            }
            None => return Err(ActorError::UnknownTask(task.id.clone())),
        };
        let arrangement = match &rule {
            TaskRule::Arrangement { targets } => {
                Some(ArrangementTask::new(targets.iter().cloned()).map_err(|e| ActorError::BadSpec(e.to_string()))?)
            }
            TaskRule::Sentences { .. } => None,
        };
        Ok((rule, arrangement))
    }

    /// Distinct relevant and distracting sentences present in `state_text`.
    pub fn evidence(&self, task: &TaskSpec, state_text: &str) -> Result<(i32, i32), ActorError> {
        let (rule, arrangement) = self.rule_for(task)?;
        let mut seen = HashSet::new();
        let (mut relevant, mut distractors) = (0, 0);
        for sentence in split_sentences(state_text) {
            if !seen.insert(sentence) {
                continue;
            }
            match rule.role(sentence, arrangement.as_ref()) {
                Some(FeatureRole::Relevant) => relevant += 1,
                Some(FeatureRole::Distractor) => distractors += 1,
                _ => {}
            }
        }
        Ok((relevant, distractors))
    }
}

/// Splits text into sentences ending in `.`, `!` or `?` followed by
/// whitespace or end of input. Sentences keep their terminal punctuation.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        let terminal = matches!(b, b'.' | b'!' | b'?');
        let boundary = i + 1 == bytes.len() || bytes[i + 1].is_ascii_whitespace();
        if terminal && boundary {
            let s = text[start..=i].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = i + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

pub fn scripted_score(spec: &ScriptedActorSpec, query: &ActorQuery) -> Result<ActionDistribution, ActorError> {
    if query.admissible.is_empty() {
        return Err(ActorError::NoActions);
    }
    let (relevant, distractors) = spec.evidence(&query.task, &query.state_text)?;
    let reference = query.reference_action.as_ref().ok_or(ActorError::MissingReference)?;
    if !query.admissible.contains(reference) {
        return Err(ActorError::ReferenceNotAdmissible(reference.text.clone()));
    }
    let expert_weight = spec.boost.powi(relevant) * spec.penalty.powi(distractors);
    let weights: Vec<f64> = query.admissible.iter().map(|a| if a == reference { expert_weight } else { 1.0 }).collect();
    ActionDistribution::from_weights(&query.admissible, &weights)
}

#[derive(Debug, Clone)]
pub struct ScriptedActor {
    pub spec: ScriptedActorSpec,
}

impl ScriptedActor {
    pub fn new(spec: ScriptedActorSpec) -> Result<Self, ActorError> {
        spec.validate()?;
        Ok(Self { spec })
    }
}

impl Actor for ScriptedActor {
    fn score_actions(&self, query: &ActorQuery) -> Result<ActionDistribution, ActorError> {
        scripted_score(&self.spec, query)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ActionLabel;

    fn labels(n: usize) -> Vec<ActionLabel> {
        (0..n).map(|i| ActionLabel::new(format!("act {i}")).unwrap()).collect()
    }

    fn sentence_spec(boost: f64, penalty: f64) -> ScriptedActorSpec {
        ScriptedActorSpec::new(boost, penalty).unwrap().with_rule(
            "t",
            TaskRule::Sentences {
                relevant: ["r1.", "r2."].map(String::from).into(),
                distractors: ["d1."].map(String::from).into(),
            },
        )
    }

    fn query(state: &str, n: usize) -> ActorQuery {
        let admissible = labels(n);
        ActorQuery {
            state_text: state.into(),
            task: TaskSpec::new("t", "do the thing").unwrap(),
            reference_action: Some(admissible[0].clone()),
            admissible,
            fewshot: vec![],
        }
    }

    #[test]
    fn no_evidence_is_uniform() {
        let d = scripted_score(&sentence_spec(2.0, 0.4), &query("n1. n2.", 4)).unwrap();
        for (_, p) in &d.probs {
            assert!((p - 0.25).abs() < 1e-15);
        }
        let d = scripted_score(&sentence_spec(2.0, 0.4), &query("", 4)).unwrap();
        assert!((d.probs[0].1 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn two_relevant_features_with_boost_two() {
        let q = query("r1. n1. r2.", 4);
        let d = scripted_score(&sentence_spec(2.0, 0.4), &q).unwrap();
        assert!((d.prob(&q.admissible[0]) - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn cancelling_evidence_is_uniform() {
        // boost 2 and penalty 0.5 cancel exactly; this pairing is rejected for
        // real specs, so build it by hand
        let spec = ScriptedActorSpec { boost: 2.0, penalty: 0.5, ..sentence_spec(3.0, 0.5) };
        assert!(spec.validate().is_err());
        let q = query("r1. d1.", 3);
        let d = scripted_score(&spec, &q).unwrap();
        assert!((d.prob(&q.admissible[0]) - 1.0 / 3.0).abs() < 1e-15);
        let d = scripted_score(&sentence_spec(3.0, 0.5), &q).unwrap();
        assert!((d.prob(&q.admissible[0]) - 1.5 / 3.5).abs() < 1e-15);
    }

    #[test]
    fn all_relevant_makes_reference_the_argmax() {
        let q = query("r1. r2.", 6);
        let d = scripted_score(&sentence_spec(3.0, 0.5), &q).unwrap();
        assert_eq!(d.argmax(), &q.admissible[0]);
    }

    #[test]
    fn unknown_task_and_missing_reference() {
        let spec = sentence_spec(3.0, 0.5);
        let mut q = query("r1.", 2);
        q.task = TaskSpec::new("other", "x").unwrap();
        assert!(matches!(scripted_score(&spec, &q), Err(ActorError::UnknownTask(_))));
        let mut q = query("r1.", 2);
        q.reference_action = None;
        assert!(matches!(scripted_score(&spec, &q), Err(ActorError::MissingReference)));
    }

    #[test]
    fn arrangement_rules_are_inferred_from_task_ids() {
        let spec = ScriptedActorSpec::new(3.0, 0.5).unwrap();
        let task = ArrangementTask::new(["ball", "soda"]).unwrap().task_spec();
        let text = "the ball is to the left of the soda. the kiwi is behind the ball. position A is behind position B.";
        assert_eq!(spec.evidence(&task, text).unwrap(), (1, 1));
    }

    #[test]
    fn sentence_splitting() {
        assert_eq!(
            split_sentences("Strength: 22/19. You have a +2 sling (not wielded). Time: 1."),
            vec!["Strength: 22/19.", "You have a +2 sling (not wielded).", "Time: 1."]
        );
        assert_eq!(split_sentences("a.b. c"), vec!["a.b.", "c"]);
        assert!(split_sentences("  ").is_empty());
    }

    #[test]
    fn spec_validation() {
        assert!(ScriptedActorSpec::new(1.0, 0.5).is_err());
        assert!(ScriptedActorSpec::new(3.0, 1.0).is_err());
        assert!(ScriptedActorSpec::new(2.0, 0.5).is_err());
        assert!(ScriptedActorSpec::new(3.0, 0.5).is_ok());
    }
}
