//! Hashed n-gram features of a rendered `(task, description)` prompt.
//!
//! Each sentence is tokenized and emitted under two views:
//!
//! * lexical: lowercase word n-grams;
//! * anchored: the same sentence with every word rewritten by role. Words
//!   that occur in most fitted feature sets (relation vocabulary, articles)
//!   stay as they are, words shared with the task description become
//!   `<task>`, and everything else becomes `<w>`. The whole anchored
//!   sentence is also hashed as one template feature.
//!
//! The anchored view is what lets a linear model transfer to object names it
//! never saw during training. Sentence vectors are L2-normalized before being
//! summed, so a description's vector is additive over its sentences.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::actor::split_sentences;
use crate::domain::{FeatureSet, TaskSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizerConfig {
    pub hash_bits: u32,
    /// Largest lexical n-gram (0 disables the lexical view).
    pub lexical_ngrams: usize,
    /// Largest anchored n-gram (0 disables them).
    pub anchored_ngrams: usize,
    pub sentence_templates: bool,
    /// Minimum share of fitted feature sets a word must occur in to be kept
    /// verbatim in the anchored view.
    pub structural_share: f64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self { hash_bits: 16, lexical_ngrams: 1, anchored_ngrams: 3, sentence_templates: true, structural_share: 0.8 }
    }
}

const TASK_TOKEN: &str = "<task>";
const OTHER_TOKEN: &str = "<w>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashedFeaturizer {
    pub config: FeaturizerConfig,
    pub structural: BTreeSet<String>,
}

/// Sparse vector with sorted, unique indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector<T> {
    pub entries: Vec<(u32, T)>,
}

impl<T: Scalar> SparseVector<T> {
    pub fn dot(&self, dense: &[T]) -> T {
        self.entries.iter().fold(T::zero(), |acc, &(i, v)| acc + v * dense[i as usize])
    }

    pub fn norm_sq(&self) -> T {
        self.entries.iter().fold(T::zero(), |acc, &(_, v)| acc + v * v)
    }

    fn from_map(map: BTreeMap<u32, f64>) -> Self {
        Self { entries: map.into_iter().map(|(i, v)| (i, T::from_f64_lossy(v))).collect() }
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '+' && c != '/').filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

fn fnv1a(parts: &[&str], tag: u8) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |b: u8| {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    };
    feed(tag);
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            feed(0x1f);
        }
        p.bytes().for_each(&mut feed);
    }
    hash
}

impl HashedFeaturizer {
    pub fn new(config: FeaturizerConfig) -> Self {
        Self { config, structural: BTreeSet::new() }
    }

    /// Learns the structural vocabulary from a corpus of feature sets.
    pub fn fit<'a>(config: FeaturizerConfig, corpus: impl IntoIterator<Item = &'a FeatureSet>) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut docs = 0usize;
        for fs in corpus {
            docs += 1;
            let words: HashSet<String> = fs.features().iter().flat_map(|f| tokenize(&f.text)).collect();
            for w in words {
                *counts.entry(w).or_default() += 1;
            }
        }
        let threshold = config.structural_share * docs as f64;
        let structural = counts.into_iter().filter(|&(_, c)| docs > 0 && c as f64 >= threshold).map(|(w, _)| w).collect();
        Self { config, structural }
    }

    pub fn dim(&self) -> usize {
        1usize << self.config.hash_bits
    }

    fn bucket(&self, hash: u64) -> u32 {
        (hash & (self.dim() as u64 - 1)) as u32
    }

    fn task_words(&self, task: &TaskSpec) -> HashSet<String> {
        tokenize(&task.description).into_iter().filter(|w| !self.structural.contains(w)).collect()
    }

    fn sentence_features(&self, sentence: &str, task_words: &HashSet<String>, out: &mut BTreeMap<u32, f64>) {
        let lexical = tokenize(sentence);
        if lexical.is_empty() {
            return;
        }
        let mut anchored: Vec<&str> = lexical
            .iter()
            .map(|w| {
                if self.structural.contains(w) {
                    w.as_str()
                } else if task_words.contains(w) {
                    TASK_TOKEN
                } else {
                    OTHER_TOKEN
                }
            })
            .collect();
        // a multi-word name fills one slot
        anchored.dedup_by(|a, b| a == b && (*a == TASK_TOKEN || *a == OTHER_TOKEN));
        let lexical: Vec<&str> = lexical.iter().map(String::as_str).collect();

        let mut buckets = Vec::new();
        for n in 1..=self.config.lexical_ngrams {
            for gram in lexical.windows(n) {
                buckets.push(self.bucket(fnv1a(gram, b'L')));
            }
        }
        for n in 1..=self.config.anchored_ngrams {
            for gram in anchored.windows(n) {
                buckets.push(self.bucket(fnv1a(gram, b'A')));
            }
        }
        if self.config.sentence_templates {
            buckets.push(self.bucket(fnv1a(&anchored, b'T')));
        }
        let mut local: BTreeMap<u32, f64> = BTreeMap::new();
        for b in buckets {
            *local.entry(b).or_default() += 1.0;
        }
        let norm = local.values().map(|v| v * v).sum::<f64>().sqrt();
        for (b, v) in local {
            *out.entry(b).or_default() += v / norm;
        }
    }

    /// Featurizes rendered prompt text, sentence by sentence.
    pub fn featurize<T: Scalar>(&self, rendered: &str, task: &TaskSpec) -> SparseVector<T> {
        let task_words = self.task_words(task);
        let mut acc = BTreeMap::new();
        for sentence in split_sentences(rendered) {
            self.sentence_features(sentence, &task_words, &mut acc);
        }
        SparseVector::from_map(acc)
    }
}
