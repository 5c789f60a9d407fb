use rand::Rng;

use super::HarnessError;
use crate::arrangement::{expert_policy, generate_features, sample_scene, ArrangementTask, EnvError, Grid, MoveAction, Split};
use crate::config::EnvConfig;
use crate::domain::{ActionLabel, ExpertStep};

/// Expert steps from solving one scene with the expert policy.
pub fn expert_rollout(grid: &Grid, task: &ArrangementTask, budget: usize) -> Result<Vec<ExpertStep>, HarnessError> {
    let mut grid = grid.clone();
    let mut steps = Vec::new();
    while !grid.is_success(task)? {
        if steps.len() == budget {
            return Err(EnvError::Stuck.into());
        }
        let action = expert_policy(&grid, task)?;
        let admissible: Vec<ActionLabel> = grid.admissible_actions()?.iter().map(MoveAction::label).collect();
        steps.push(ExpertStep::new(generate_features(&grid), task.task_spec(), action.label(), admissible)?);
        grid = grid.apply(&action)?;
    }
    Ok(steps)
}

/// Expert demonstrations on `episodes` freshly sampled training scenes.
pub fn synthesize_demos<R: Rng + ?Sized>(env: &EnvConfig, episodes: usize, rng: &mut R) -> Result<Vec<ExpertStep>, HarnessError> {
    env.validate()?;
    let mut steps = Vec::new();
    for _ in 0..episodes {
        let targets = rng.random_range(env.min_targets..=env.max_targets);
        let objects = rng.random_range(env.min_objects.max(targets)..=env.max_objects);
        let (grid, task) = sample_scene(rng, targets, objects - targets, &env.vocabulary, Split::Train)?;
        steps.extend(expert_rollout(&grid, &task, env.budget)?);
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn demos_use_training_names_and_valid_steps() {
        let env = EnvConfig::default();
        let steps = synthesize_demos(&env, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(steps.len() >= 5);
        for s in &steps {
            assert_eq!(s.feature_set.len(), 90);
            assert!(s.admissible.contains(&s.expert_action));
            let task = ArrangementTask::from_task_id(&s.task.id).unwrap();
            assert!(task.targets.iter().all(|t| env.vocabulary.train.contains(&t.name)));
        }
    }
}
