use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statebrief::arrangement::{
    classify_feature, expert_policy, generate_features, sample_scene, FeatureRole, MoveAction, Split, Vocabulary,
};
use statebrief::config::Config;
use statebrief::domain::{ActionLabel, Description, ExpertStep};
use statebrief::harness::{build_actor, probe_optimum, synthesize_demos};
use statebrief::learning::{collect_value_dataset, fit_value_model, reward, ValueFunction};

/// A test-split step restricted to `n` random features, with the roles of
/// the kept features.
fn probe_step(rng: &mut ChaCha8Rng, n: usize) -> (ExpertStep, Vec<Option<FeatureRole>>) {
    let vocab = Vocabulary::default();
    let targets = rng.random_range(2..=3);
    let objects = rng.random_range(7..=9);
    let (grid, task) = sample_scene(rng, targets, objects - targets, &vocab, Split::Test).unwrap();
    let full = generate_features(&grid);
    let mut ids: Vec<usize> = (0..full.len()).collect();
    ids.shuffle(rng);
    ids.truncate(n);
    ids.sort_unstable();
    let fs = full.restrict(&ids).unwrap();
    let roles = fs.features().iter().map(|f| classify_feature(&f.text, &task)).collect();
    let admissible: Vec<ActionLabel> = grid.admissible_actions().unwrap().iter().map(MoveAction::label).collect();
    let expert = expert_policy(&grid, &task).unwrap().label();
    (ExpertStep::new(fs, task.task_spec(), expert, admissible).unwrap(), roles)
}

fn ids_with(roles: &[Option<FeatureRole>], role: FeatureRole) -> Vec<usize> {
    (0..roles.len()).filter(|&i| roles[i] == Some(role)).collect()
}

#[test]
fn optimal_small_subset_is_relevant_without_distractors() {
    let config = Config::default();
    let actor = build_actor(&config.actor).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    while checked < 40 {
        let (step, roles) = probe_step(&mut rng, 8);
        let relevant = ids_with(&roles, FeatureRole::Relevant);
        if relevant.len() > config.learning.max_len {
            continue;
        }
        checked += 1;
        let (best, chosen) = probe_optimum(&step, actor.as_ref(), config.learning.max_len).unwrap();
        let only = Description::from_ids(&step.feature_set, &relevant).unwrap();
        let r = reward(&only, &step, actor.as_ref()).unwrap();
        assert!((best - r).abs() < 1e-12, "relevant-only reward {r} vs optimum {best}");
        assert!(ids_with(&roles, FeatureRole::Distractor).iter().all(|&d| !chosen.contains(d)));
    }
}

#[test]
fn trained_model_ranks_distractors_below_relevant_prefixes() {
    let mut config = Config::default();
    config.learning.trajectories_per_step = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let demos = synthesize_demos(&config.env, 12, &mut rng).unwrap();
    let actor = build_actor(&config.actor).unwrap();
    let dataset = collect_value_dataset(&demos, actor.as_ref(), &config.learning, &mut rng).unwrap();
    let (model, report) = fit_value_model::<f64, _>(&dataset, config.featurizer.clone(), &config.learning, &mut rng).unwrap();
    assert!(report.final_loss().unwrap() < report.epoch_loss[0]);

    let mut probe_rng = ChaCha8Rng::seed_from_u64(99);
    let (mut probes, mut lowered) = (0, 0);
    while probes < 200 {
        let (step, roles) = probe_step(&mut probe_rng, 12);
        let relevant = ids_with(&roles, FeatureRole::Relevant);
        let distractors = ids_with(&roles, FeatureRole::Distractor);
        if relevant.is_empty() || distractors.is_empty() {
            continue;
        }
        let x = Description::from_ids(&step.feature_set, &relevant).unwrap();
        let base = model.value(&step.feature_set, &x, &step.task);
        for &d in &distractors {
            let worse = x.extend(&step.feature_set, d).unwrap();
            probes += 1;
            if model.value(&step.feature_set, &worse, &step.task) < base {
                lowered += 1;
            }
        }
    }
    let rate = lowered as f64 / probes as f64;
    assert!(rate >= 0.9, "adding a distractor lowered the value in only {rate:.3} of probes");
}
