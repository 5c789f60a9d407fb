use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{LearningError, ValueDataset, ValueExample};
use crate::actor::{Actor, ActorQuery};
use crate::config::{ConfigError, LearningConfig};
use crate::domain::{render, Description, ExpertStep};

/// Actor probability of the step's expert action given the rendered terminal
/// description.
pub fn reward<A: Actor + ?Sized>(x_f: &Description, step: &ExpertStep, actor: &A) -> Result<f64, LearningError> {
    x_f.validate(&step.feature_set)?;
    let query = ActorQuery {
        state_text: render(x_f, &step.feature_set, &step.task),
        task: step.task.clone(),
        admissible: step.admissible.clone(),
        fewshot: Vec::new(),
        reference_action: Some(step.expert_action.clone()),
    };
    let dist = actor.score_actions(&query)?;
    Ok(dist.prob(&step.expert_action))
}

/// Mean reward over expert steps that share one feature set and task, i.e.
/// the expectation over their expert actions.
pub fn expected_reward<A: Actor + ?Sized>(x_f: &Description, group: &[&ExpertStep], actor: &A) -> Result<f64, LearningError> {
    let mut total = 0.0;
    for step in group {
        total += reward(x_f, step, actor)?;
    }
    Ok(total / group.len() as f64)
}

/// A randomly built description, one feature per step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub step: usize,
    pub order: Vec<usize>,
}

impl Trajectory {
    /// Sparse rewards for transitions `x_0 -> x_1 .. x_{L-1} -> x_L`: zero
    /// except on the last one.
    pub fn rewards(&self, terminal: f64) -> Vec<f64> {
        let mut r = vec![0.0; self.order.len()];
        if let Some(last) = r.last_mut() {
            *last = terminal;
        }
        r
    }

    /// Discounted return from each prefix `x_0 ..= x_L`.
    pub fn returns(&self, terminal: f64, gamma: f64) -> Vec<f64> {
        let rewards = self.rewards(terminal);
        let mut out = vec![0.0; rewards.len() + 1];
        out[rewards.len()] = if rewards.is_empty() { terminal } else { 0.0 };
        for t in (0..rewards.len()).rev() {
            out[t] = rewards[t] + gamma * out[t + 1];
        }
        if !rewards.is_empty() {
            // the terminal prefix is itself labeled with the reward it earned
            out[rewards.len()] = terminal;
        }
        out
    }

    pub fn prefixes(&self, step: &ExpertStep) -> Vec<Description> {
        let mut x = Description::empty(&step.feature_set);
        let mut out = vec![x.clone()];
        for &id in &self.order {
            x = x.extend(&step.feature_set, id).expect("trajectory ids are distinct and in range");
            out.push(x.clone());
        }
        out
    }
}

/// Samples `trajectories_per_step` random descriptions per expert step with
/// a uniform terminal length in `1..=max_len`, evaluates each terminal
/// reward once and labels every prefix (including the empty one) with the
/// trajectory's return.
pub fn collect_value_dataset<A, R>(
    steps: &[ExpertStep],
    actor: &A,
    config: &LearningConfig,
    rng: &mut R,
) -> Result<ValueDataset, LearningError>
where
    A: Actor + ?Sized,
    R: Rng + ?Sized,
{
    config.validate()?;
    if steps.is_empty() {
        return Err(LearningError::NoSteps);
    }
    if config.gamma != 1.0 {
        return Err(ConfigError::Invalid("gamma must be 1".into()).into());
    }
    let mut groups: BTreeMap<(&str, &str), Vec<&ExpertStep>> = BTreeMap::new();
    for (i, step) in steps.iter().enumerate() {
        if step.feature_set.is_empty() {
            return Err(LearningError::EmptyFeatureSet(i));
        }
        groups.entry((step.feature_set.fingerprint(), step.task.id.as_str())).or_default().push(step);
    }

    let mut trajectories = Vec::with_capacity(steps.len() * config.trajectories_per_step);
    for (i, step) in steps.iter().enumerate() {
        let n = step.feature_set.len();
        let mut ids: Vec<usize> = (0..n).collect();
        for _ in 0..config.trajectories_per_step {
            let len = rng.random_range(1..=config.max_len.min(n));
            let (chosen, _) = ids.partial_shuffle(rng, len);
            trajectories.push(Trajectory { step: i, order: chosen.to_vec() });
        }
    }

    let labeled: Vec<Vec<ValueExample>> = trajectories
        .par_iter()
        .map(|traj| {
            let step = &steps[traj.step];
            let prefixes = traj.prefixes(step);
            let group = &groups[&(step.feature_set.fingerprint(), step.task.id.as_str())];
            let terminal = expected_reward(prefixes.last().expect("non-empty"), group, actor)?;
            let returns = traj.returns(terminal, config.gamma);
            Ok(prefixes
                .into_iter()
                .zip(returns)
                .map(|(prefix, label)| ValueExample { task: step.task.clone(), prefix, label, source_step: traj.step })
                .collect())
        })
        .collect::<Result<_, LearningError>>()?;

    Ok(ValueDataset { steps: steps.to_vec(), examples: labeled.into_iter().flatten().collect() })
}

/// Duplicates examples of under-represented expert actions until every
/// action has at least half as many examples as the most common one.
pub fn upsample<R: Rng + ?Sized>(dataset: &ValueDataset, rng: &mut R) -> Result<ValueDataset, LearningError> {
    if dataset.is_empty() {
        return Err(LearningError::EmptyDataset);
    }
    let mut by_action: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in dataset.examples.iter().enumerate() {
        let action = dataset.step_of(e).expert_action.text.as_str();
        by_action.entry(action).or_default().push(i);
    }
    let most = by_action.values().map(Vec::len).max().unwrap_or(0);
    let floor = most.div_ceil(2);
    let mut out = dataset.clone();
    for members in by_action.values() {
        if members.len() >= floor {
            continue;
        }
        let mut pool = members.clone();
        pool.shuffle(rng);
        let missing = floor - members.len();
        for k in 0..missing {
            out.examples.push(dataset.examples[pool[k % pool.len()]].clone());
        }
    }
    Ok(out)
}
