use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::episode::{run_episode, Describer, EpisodeResult};
use super::HarnessError;
use crate::actor::{Actor, RemoteActor, ScriptedActor, ScriptedActorSpec};
use crate::arrangement::{sample_scene, ArrangementTask, Split};
use crate::config::{ActorConfig, Config};
use crate::domain::{Description, ExpertStep, FeatureSet, TaskSpec};
use crate::learning::{reward, LearningError, LinearValueModel};
use crate::selector::{baseline, select, zero_shot, Baseline, SelectorError};

/// A description source under evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Variant {
    /// Greedy selection with the trained value model.
    Learned,
    Full,
    /// Features mentioning a target object.
    Manual,
    Random(usize),
    /// Remote-model feature ranking, keeping `max_len` features.
    ZeroShot,
}

impl Variant {
    pub fn parse(name: &str) -> Result<Self, HarnessError> {
        let bad = || HarnessError::UnknownVariant(name.to_owned());
        match name {
            "learned" => Ok(Variant::Learned),
            "full" => Ok(Variant::Full),
            "manual" => Ok(Variant::Manual),
            "zeroshot" => Ok(Variant::ZeroShot),
            _ => {
                let k = name.strip_prefix("random:").ok_or_else(bad)?;
                Ok(Variant::Random(k.parse().map_err(|_| bad())?))
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Variant::Learned => "learned".into(),
            Variant::Full => "full".into(),
            Variant::Manual => "manual".into(),
            Variant::Random(k) => format!("random:{k}"),
            Variant::ZeroShot => "zeroshot".into(),
        }
    }
}

struct VariantDescriber<'a> {
    variant: Variant,
    model: Option<&'a LinearValueModel<f64>>,
    remote: Option<RemoteActor>,
    max_len: usize,
}

impl Describer for VariantDescriber<'_> {
    fn describe(&self, fs: &FeatureSet, task: &TaskSpec, rng: &mut dyn RngCore) -> Result<Description, SelectorError> {
        match &self.variant {
            Variant::Learned => {
                let model = self.model.expect("checked when building");
                Ok(select::<f64, _>(model, task, fs, self.max_len)?.chosen)
            }
            Variant::Full => baseline(&Baseline::Full, fs, task, rng),
            Variant::Manual => {
                let keywords = ArrangementTask::from_task_id(&task.id)
                    .map(|t| t.targets.into_iter().map(|o| o.name).collect())
                    .unwrap_or_default();
                baseline(&Baseline::Manual { keywords }, fs, task, rng)
            }
            Variant::Random(k) => baseline(&Baseline::Random { k: *k }, fs, task, rng),
            Variant::ZeroShot => zero_shot(self.remote.as_ref().expect("checked when building"), fs, task, self.max_len),
        }
    }
}

/// The configured actor. Scripted actors infer their evidence rule from
/// arrangement task ids.
pub fn build_actor(config: &ActorConfig) -> Result<Box<dyn Actor>, HarnessError> {
    Ok(match config {
        ActorConfig::Scripted { boost, penalty } => Box::new(ScriptedActor::new(ScriptedActorSpec::new(*boost, *penalty)?)?),
        ActorConfig::Remote(remote) => Box::new(RemoteActor::new(remote.clone().with_env())?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantMetrics {
    pub variant: String,
    pub episodes: usize,
    /// Episodes that ended in an actor, selector or environment error.
    pub errors: usize,
    pub successes: usize,
    /// Successes over episodes without errors.
    pub success_rate: f64,
    /// Standard error of the per-seed success rates.
    pub success_rate_se: f64,
    pub reduction_ratio: f64,
    pub reduction_ratio_se: f64,
    pub mean_selected_features: f64,
    pub mean_prompt_chars: f64,
    pub mean_full_prompt_chars: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub episodes_per_seed: usize,
    pub metrics: Vec<VariantMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationOutput {
    /// Sorted by variant (in configured order), seed and episode.
    pub results: Vec<EpisodeResult>,
    pub report: Report,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn ratio(num: f64, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

/// Aggregates one variant's episodes. A pure fold over the records.
pub fn metrics(variant: &str, results: &[EpisodeResult]) -> VariantMetrics {
    let mine: Vec<&EpisodeResult> = results.iter().filter(|r| r.variant == variant).collect();
    let errors = mine.iter().filter(|r| r.error.is_some()).count();
    let successes = mine.iter().filter(|r| r.success).count();
    let mut seeds: Vec<u64> = mine.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let per_seed = |f: &dyn Fn(&[&EpisodeResult]) -> Option<f64>| -> Vec<f64> {
        seeds
            .iter()
            .filter_map(|&s| {
                let group: Vec<&EpisodeResult> = mine.iter().copied().filter(|r| r.seed == s).collect();
                f(&group)
            })
            .collect()
    };
    let success_by_seed = per_seed(&|g| {
        let valid = g.iter().filter(|r| r.error.is_none()).count();
        (valid > 0).then(|| ratio(g.iter().filter(|r| r.success).count() as f64, valid))
    });
    let steps: Vec<_> = mine.iter().flat_map(|r| &r.steps).collect();
    let reduction_by_seed = per_seed(&|g| {
        let s: Vec<_> = g.iter().flat_map(|r| &r.steps).collect();
        (!s.is_empty()).then(|| ratio(s.iter().map(|s| 1.0 - ratio(s.selected as f64, s.features)).sum(), s.len()))
    });
    VariantMetrics {
        variant: variant.to_owned(),
        episodes: mine.len(),
        errors,
        successes,
        success_rate: ratio(successes as f64, mine.len() - errors),
        success_rate_se: mean_se(&success_by_seed).1,
        reduction_ratio: ratio(steps.iter().map(|s| 1.0 - ratio(s.selected as f64, s.features)).sum(), steps.len()),
        reduction_ratio_se: mean_se(&reduction_by_seed).1,
        mean_selected_features: ratio(steps.iter().map(|s| s.selected as f64).sum(), steps.len()),
        mean_prompt_chars: ratio(steps.iter().map(|s| s.prompt_chars as f64).sum(), steps.len()),
        mean_full_prompt_chars: ratio(steps.iter().map(|s| s.full_prompt_chars as f64).sum(), steps.len()),
    }
}

pub fn render_table(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>8} {:>6} {:>16} {:>16} {:>9} {:>12}",
        "variant", "episodes", "errors", "success", "reduction", "features", "prompt chars"
    );
    for m in &report.metrics {
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>6} {:>8.3} ± {:<5.3} {:>8.3} ± {:<5.3} {:>9.2} {:>12.1}",
            m.variant,
            m.episodes,
            m.errors,
            m.success_rate,
            m.success_rate_se,
            m.reduction_ratio,
            m.reduction_ratio_se,
            m.mean_selected_features,
            m.mean_prompt_chars
        );
    }
    out
}

/// Runs every variant on the same held-out scenes: for each seed,
/// `episodes` scenes with unseen object names. Scene and action streams
/// depend only on `(seed, episode)`, so variants are compared pairwise.
pub fn evaluate(config: &Config, model: Option<&LinearValueModel<f64>>) -> Result<EvaluationOutput, HarnessError> {
    config.validate()?;
    let eval = &config.evaluate;
    let env = &config.env;
    if !(2..=eval.min_targets).contains(&eval.min_targets) || eval.min_targets > eval.max_targets || eval.max_targets > 4 {
        return Err(crate::config::ConfigError::Invalid(format!(
            "evaluate targets must satisfy 2 <= min <= max <= 4, got {}..={}",
            eval.min_targets, eval.max_targets
        ))
        .into());
    }
    let actor = build_actor(&config.actor)?;
    let mut describers = Vec::new();
    for name in &eval.variants {
        let variant = Variant::parse(name)?;
        if variant == Variant::Learned && model.is_none() {
            return Err(HarnessError::MissingModel(name.clone()));
        }
        let remote = match (&variant, &config.actor) {
            (Variant::ZeroShot, ActorConfig::Remote(r)) => Some(RemoteActor::new(r.clone().with_env())?),
            (Variant::ZeroShot, _) => return Err(HarnessError::NeedsRemote),
            _ => None,
        };
        describers.push(VariantDescriber { variant, model, remote, max_len: config.learning.max_len });
    }

    let jobs: Vec<(usize, u64, usize)> = (0..describers.len())
        .flat_map(|v| eval.seeds.iter().flat_map(move |&s| (0..eval.episodes).map(move |e| (v, s, e))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(eval.workers.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let mut results: Vec<EpisodeResult> = pool
        .install(|| {
            jobs.par_iter()
                .map(|&(v, seed, episode)| {
                    let mut scene_rng = ChaCha8Rng::seed_from_u64(seed);
                    scene_rng.set_stream(2 * episode as u64);
                    let targets = rand::Rng::random_range(&mut scene_rng, eval.min_targets..=eval.max_targets);
                    let objects = rand::Rng::random_range(&mut scene_rng, env.min_objects.max(targets)..=env.max_objects);
                    let (grid, task) = sample_scene(&mut scene_rng, targets, objects - targets, &env.vocabulary, Split::Test)?;
                    let mut action_rng = ChaCha8Rng::seed_from_u64(seed);
                    action_rng.set_stream(2 * episode as u64 + 1);
                    let mut r =
                        run_episode(&grid, &task, &describers[v], actor.as_ref(), env.budget, eval.greedy, &mut action_rng)?;
                    r.episode = episode;
                    r.seed = seed;
                    r.variant = describers[v].variant.name();
                    Ok((v, r))
                })
                .collect::<Result<Vec<(usize, EpisodeResult)>, HarnessError>>()
        })?
        .into_iter()
        .map(|(_, r)| r)
        .collect();
    let order = |name: &str| eval.variants.iter().position(|v| Variant::parse(v).map(|p| p.name()).ok().as_deref() == Some(name));
    results.sort_by_key(|r| (order(&r.variant), r.seed, r.episode));

    let mut seen = Vec::new();
    for d in &describers {
        let name = d.variant.name();
        if !seen.contains(&name) {
            seen.push(name);
        }
    }
    let report = Report {
        config_hash: config.hash(),
        seeds: eval.seeds.clone(),
        episodes_per_seed: eval.episodes,
        metrics: seen.iter().map(|n| metrics(n, &results)).collect(),
    };
    Ok(EvaluationOutput { results, report })
}

/// Highest expert-action likelihood over every description of at most
/// `max_len` features, by exhaustive search. Only for small feature sets.
pub fn probe_optimum<A: Actor + ?Sized>(
    step: &ExpertStep,
    actor: &A,
    max_len: usize,
) -> Result<(f64, Description), LearningError> {
    let n = step.feature_set.len();
    assert!(n <= 16, "exhaustive search over {n} features");
    let mut best = (f64::NEG_INFINITY, Description::empty(&step.feature_set));
    for mask in 0u32..1 << n {
        if mask.count_ones() as usize > max_len {
            continue;
        }
        let ids: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let x = Description::from_ids(&step.feature_set, &ids)?;
        let r = reward(&x, step, actor)?;
        if r > best.0 {
            best = (r, x);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(variants: &[&str]) -> Config {
        let mut c = Config::default();
        c.evaluate.variants = variants.iter().map(|s| s.to_string()).collect();
        c.evaluate.episodes = 10;
        c.evaluate.seeds = vec![0];
        c
    }

    #[test]
    fn two_variants_ten_episodes() {
        let out = evaluate(&small_config(&["full", "random:3"]), None).unwrap();
        assert_eq!(out.results.len(), 20);
        assert_eq!(out.report.metrics.len(), 2);
        let full = &out.report.metrics[0];
        assert_eq!(full.variant, "full");
        assert_eq!(full.reduction_ratio, 0.0);
        let m = &out.report.metrics[1];
        assert!((0.0..=1.0).contains(&m.reduction_ratio));
        assert!(m.reduction_ratio > 0.9);
    }

    #[test]
    fn success_rate_is_a_fold_over_records() {
        let out = evaluate(&small_config(&["manual"]), None).unwrap();
        let valid: Vec<_> = out.results.iter().filter(|r| r.error.is_none()).collect();
        let rate = valid.iter().filter(|r| r.success).count() as f64 / valid.len() as f64;
        assert_eq!(out.report.metrics[0].success_rate, rate);
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let mut a = small_config(&["full", "manual"]);
        a.evaluate.workers = 1;
        let mut b = a.clone();
        b.evaluate.workers = 8;
        let (x, y) = (evaluate(&a, None).unwrap(), evaluate(&b, None).unwrap());
        assert_eq!(x.results, y.results);
        assert_eq!(x.report.metrics, y.report.metrics);
    }

    #[test]
    fn bad_variants_and_missing_models() {
        assert!(matches!(evaluate(&small_config(&["best"]), None), Err(HarnessError::UnknownVariant(_))));
        assert!(matches!(evaluate(&small_config(&["learned"]), None), Err(HarnessError::MissingModel(_))));
        assert!(matches!(evaluate(&small_config(&["zeroshot"]), None), Err(HarnessError::NeedsRemote)));
    }

    #[test]
    fn variant_names_round_trip() {
        for name in ["learned", "full", "manual", "random:4", "zeroshot"] {
            assert_eq!(Variant::parse(name).unwrap().name(), name);
        }
    }
}
