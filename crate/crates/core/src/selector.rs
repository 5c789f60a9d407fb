//! Greedy value-based description selection and the non-learned baselines.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actor::{ActorError, RemoteActor};
use crate::domain::{render, Description, FeatureSet, TaskSpec};
use crate::learning::ValueFunction;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SelectorError {
    #[error("every feature is already in the description")]
    Exhausted,
    #[error("no manual keywords for task {0:?}")]
    MissingKeywords(String),
    #[error("random baseline asks for {k} of {available} features")]
    TooMany { k: usize, available: usize },
    #[error("max_len must be at least 1")]
    ZeroLength,
    #[error(transparent)]
    Actor(#[from] ActorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Exhausted,
    NoImprovement,
    LengthCap,
}

/// One greedy iteration: the best candidate and whether it was kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub candidate: usize,
    pub value: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub chosen: Description,
    /// Value of the empty description.
    pub initial_value: f64,
    pub steps: Vec<SelectionStep>,
    pub stop_reason: StopReason,
}

impl SelectionTrace {
    /// Values of the accepted steps, strictly increasing.
    pub fn accepted_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().filter(|s| s.accepted).map(|s| s.value)
    }
}

fn best_extension<T, V>(v: &V, x: &Description, task: &TaskSpec, fs: &FeatureSet) -> Result<(usize, T), SelectorError>
where
    T: Scalar,
    V: ValueFunction<T> + Sync + ?Sized,
{
    let candidates: Vec<usize> = (0..fs.len()).filter(|&id| !x.contains(id)).collect();
    let scored: Vec<(usize, T)> = candidates
        .par_iter()
        .map(|&id| {
            let next = x.extend(fs, id).expect("candidate is unused and in range");
            (id, v.value(fs, &next, task))
        })
        .collect();
    // sequential scan in id order: the first maximum wins ties, NaN never wins
    let mut iter = scored.into_iter();
    let mut best = iter.next().ok_or(SelectorError::Exhausted)?;
    for (id, value) in iter {
        if value > best.1 || (best.1.is_nan() && !value.is_nan()) {
            best = (id, value);
        }
    }
    Ok(best)
}

/// The unused feature whose addition the value function rates highest;
/// ties go to the lowest id.
pub fn policy_step<T, V>(v: &V, x: &Description, task: &TaskSpec, fs: &FeatureSet) -> Result<usize, SelectorError>
where
    T: Scalar,
    V: ValueFunction<T> + Sync + ?Sized,
{
    best_extension(v, x, task, fs).map(|(id, _)| id)
}

/// Greedy selection from the empty description. A candidate is accepted only
/// if it strictly raises the value; the current value is carried over from
/// the last accepted candidate rather than re-scored.
pub fn select<T, V>(v: &V, task: &TaskSpec, fs: &FeatureSet, max_len: usize) -> Result<SelectionTrace, SelectorError>
where
    T: Scalar,
    V: ValueFunction<T> + Sync + ?Sized,
{
    if max_len == 0 {
        return Err(SelectorError::ZeroLength);
    }
    let mut x = Description::empty(fs);
    let initial = v.value(fs, &x, task);
    let mut current = initial;
    let mut steps = Vec::new();
    let stop_reason = loop {
        if x.len() >= max_len {
            break StopReason::LengthCap;
        }
        let (id, value) = match best_extension(v, &x, task, fs) {
            Ok(best) => best,
            Err(SelectorError::Exhausted) => break StopReason::Exhausted,
            Err(e) => return Err(e),
        };
        let accepted = value > current;
        steps.push(SelectionStep { candidate: id, value: value.to_f64_lossy(), accepted });
        if !accepted {
            break StopReason::NoImprovement;
        }
        x = x.extend(fs, id).expect("candidate is unused");
        current = value;
    };
    Ok(SelectionTrace { chosen: x, initial_value: initial.to_f64_lossy(), steps, stop_reason })
}

/// Non-learned description baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Baseline {
    /// Every feature in canonical order.
    Full,
    /// Features containing any keyword, case-insensitively.
    Manual { keywords: Vec<String> },
    /// `k` features drawn uniformly without replacement.
    Random { k: usize },
}

pub fn baseline<R: Rng + ?Sized>(
    mode: &Baseline,
    fs: &FeatureSet,
    task: &TaskSpec,
    rng: &mut R,
) -> Result<Description, SelectorError> {
    match mode {
        Baseline::Full => Ok(Description::full(fs)),
        Baseline::Manual { keywords } => {
            if keywords.is_empty() {
                return Err(SelectorError::MissingKeywords(task.id.clone()));
            }
            let keys: Vec<String> = keywords.iter().map(|k| k.to_lowercase()).collect();
            let ids: Vec<usize> = fs
                .features()
                .iter()
                .filter(|f| {
                    let text = f.text.to_lowercase();
                    keys.iter().any(|k| text.contains(k.as_str()))
                })
                .map(|f| f.id)
                .collect();
            Ok(Description::from_ids(fs, &ids).expect("ids come from the set"))
        }
        Baseline::Random { k } => {
            if *k > fs.len() {
                return Err(SelectorError::TooMany { k: *k, available: fs.len() });
            }
            let ids = index::sample(rng, fs.len(), *k).into_vec();
            Ok(Description::from_ids(fs, &ids).expect("distinct ids in range"))
        }
    }
}

/// Asks a remote model to score each feature's usefulness given the full
/// description and keeps the `k` best, ties to the lowest id.
pub fn zero_shot(actor: &RemoteActor, fs: &FeatureSet, task: &TaskSpec, k: usize) -> Result<Description, SelectorError> {
    let full = render(&Description::full(fs), fs, task);
    let texts: Vec<&str> = fs.features().iter().map(|f| f.text.as_str()).collect();
    let scores = actor.score_features(&full, &task.description, &texts)?;
    let mut ids: Vec<usize> = (0..fs.len()).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ids.truncate(k);
    Ok(Description::from_ids(fs, &ids).expect("distinct ids in range"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrangement::{generate_features, Grid, ObjectLabel};
    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn set(n: usize) -> FeatureSet {
        FeatureSet::new((0..n).map(|i| format!("feature {i:02}."))).unwrap()
    }

    fn task() -> TaskSpec {
        TaskSpec::new("t", "do the thing").unwrap()
    }

    fn count(_: &FeatureSet, x: &Description, _: &TaskSpec) -> f64 {
        x.len() as f64
    }

    #[test]
    fn constant_gain_ties_to_lowest_id() {
        let fs = set(6);
        assert_eq!(policy_step(&count, &Description::empty(&fs), &task(), &fs).unwrap(), 0);
    }

    #[test]
    fn dominant_feature_is_chosen() {
        let fs = set(10);
        let v = |_: &FeatureSet, x: &Description, _: &TaskSpec| if x.contains(7) { 1.0 } else { 0.0 };
        assert_eq!(policy_step(&v, &Description::empty(&fs), &task(), &fs).unwrap(), 7);
    }

    #[test]
    fn exhausted_step_is_an_error() {
        let fs = set(3);
        let err = policy_step(&count, &Description::full(&fs), &task(), &fs);
        assert!(matches!(err, Err(SelectorError::Exhausted)));
    }

    #[test]
    fn negative_length_selects_nothing() {
        let fs = set(5);
        let v = |_: &FeatureSet, x: &Description, _: &TaskSpec| -(x.len() as f64);
        let t = select(&v, &task(), &fs, 5).unwrap();
        assert!(t.chosen.is_empty());
        assert_eq!(t.stop_reason, StopReason::NoImprovement);
    }

    #[test]
    fn relevant_features_only() {
        let fs = set(10);
        let relevant = [2, 5, 9];
        let v = |_: &FeatureSet, x: &Description, _: &TaskSpec| relevant.iter().filter(|&&r| x.contains(r)).count() as f64;
        let t = select(&v, &task(), &fs, 10).unwrap();
        let mut chosen = t.chosen.selected.clone();
        chosen.sort();
        assert_eq!(chosen, relevant);
        assert_eq!(t.stop_reason, StopReason::NoImprovement);
    }

    #[test]
    fn length_cap_on_full_arrangement_set() {
        let mut g = Grid::empty();
        for (i, name) in ["apple", "ball", "cup", "soda", "lemon", "orange", "sponge"].iter().enumerate() {
            g.place(crate::arrangement::Cell::from_index(i), ObjectLabel::new(*name).unwrap()).unwrap();
        }
        let fs = generate_features(&g);
        assert_eq!(fs.len(), 90);
        let t = select(&count, &task(), &fs, 5).unwrap();
        assert_eq!(t.chosen.len(), 5);
        assert_eq!(t.stop_reason, StopReason::LengthCap);
    }

    #[test]
    fn exhaustion_stops_selection() {
        let fs = set(3);
        let t = select(&count, &task(), &fs, 10).unwrap();
        assert_eq!(t.chosen.len(), 3);
        assert_eq!(t.stop_reason, StopReason::Exhausted);
        assert!(matches!(select(&count, &task(), &fs, 0), Err(SelectorError::ZeroLength)));
    }

    #[test]
    fn full_and_random_baselines() {
        let fs = set(12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(baseline(&Baseline::Full, &fs, &task(), &mut rng).unwrap().len(), 12);
        assert!(baseline(&Baseline::Random { k: 0 }, &fs, &task(), &mut rng).unwrap().is_empty());
        let r = baseline(&Baseline::Random { k: 4 }, &fs, &task(), &mut rng).unwrap();
        assert_eq!(r.len(), 4);
        r.validate(&fs).unwrap();
        assert!(baseline(&Baseline::Random { k: 13 }, &fs, &task(), &mut rng).is_err());
    }

    #[test]
    fn manual_keywords() {
        let fs = FeatureSet::new([
            "You see a apple very near east southeast.",
            "You see a fountain far west.",
            "You see a dark part of a room near north.",
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let eat = TaskSpec::new("eat", "Eat an apple").unwrap();
        let d = baseline(&Baseline::Manual { keywords: vec!["APPLE".into()] }, &fs, &eat, &mut rng).unwrap();
        let texts: Vec<&str> = d.texts(&fs).collect();
        assert_eq!(texts, ["You see a apple very near east southeast."]);
        let err = baseline(&Baseline::Manual { keywords: vec![] }, &fs, &eat, &mut rng);
        assert!(matches!(err, Err(SelectorError::MissingKeywords(_))));
    }

    /// Step-by-step greedy over a tabulated value, written without sharing
    /// code with `select`.
    fn brute_greedy(
        table: &HashMap<Vec<usize>, f64>,
        n: usize,
        max_len: usize,
    ) -> (Vec<usize>, Vec<(usize, f64, bool)>, StopReason) {
        let key = |x: &[usize]| {
            let mut k = x.to_vec();
            k.sort();
            k
        };
        let mut x: Vec<usize> = vec![];
        let mut steps = vec![];
        loop {
            if x.len() == max_len {
                return (x, steps, StopReason::LengthCap);
            }
            let cur = table[&key(&x)];
            let mut best: Option<(usize, f64)> = None;
            for id in 0..n {
                if x.contains(&id) {
                    continue;
                }
                let mut y = x.clone();
                y.push(id);
                let val = table[&key(&y)];
                if best.is_none_or(|(_, b)| val > b) {
                    best = Some((id, val));
                }
            }
            let Some((id, val)) = best else {
                return (x, steps, StopReason::Exhausted);
            };
            steps.push((id, val, val > cur));
            if val > cur {
                x.push(id);
            } else {
                return (x, steps, StopReason::NoImprovement);
            }
        }
    }

    proptest! {
        #[test]
        fn matches_brute_force_greedy(n in 4usize..=8, max_len in 1usize..=9, seed in any::<u64>(), coarse in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // coarse values force ties
            let table: HashMap<Vec<usize>, f64> = (0u32..1 << n)
                .map(|mask| {
                    let ids: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
                    let v: f64 = if coarse { rng.random_range(0..4) as f64 } else { rng.random() };
                    (ids, v)
                })
                .collect();
            let fs = set(n);
            let v = |_: &FeatureSet, x: &Description, _: &TaskSpec| {
                let mut k = x.selected.clone();
                k.sort();
                table[&k]
            };
            let trace = select(&v, &task(), &fs, max_len).unwrap();
            let (chosen, steps, reason) = brute_greedy(&table, n, max_len);
            prop_assert_eq!(&trace.chosen.selected, &chosen);
            let got: Vec<(usize, f64, bool)> = trace.steps.iter().map(|s| (s.candidate, s.value, s.accepted)).collect();
            prop_assert_eq!(got, steps);
            prop_assert_eq!(trace.stop_reason, reason);
        }

        #[test]
        fn additive_values_pick_positive_gains_by_descending_gain(gains in prop::collection::vec(-1.0f64..1.0, 1..20), max_len in 1usize..25) {
            let fs = set(gains.len());
            let v = |_: &FeatureSet, x: &Description, _: &TaskSpec| x.selected.iter().map(|&i| gains[i]).sum::<f64>();
            let trace = select(&v, &task(), &fs, max_len).unwrap();
            let mut expected: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
            expected.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
            expected.truncate(max_len);
            prop_assert_eq!(&trace.chosen.selected, &expected);
            let accepted: Vec<f64> = trace.accepted_values().collect();
            prop_assert!(accepted.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(trace.chosen.len() <= max_len.min(gains.len()));
        }
    }

    #[test]
    fn selection_is_deterministic() {
        let fs = set(8);
        let v =
            |_: &FeatureSet, x: &Description, _: &TaskSpec| x.selected.iter().map(|&i| ((i * 37) % 11) as f64 - 4.0).sum::<f64>();
        let a = select(&v, &task(), &fs, 5).unwrap();
        let b = select(&v, &task(), &fs, 5).unwrap();
        assert_eq!(a, b);
    }
}
