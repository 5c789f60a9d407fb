use serde::{Deserialize, Serialize};

use super::featurize::{FeaturizerConfig, HashedFeaturizer, SparseVector};
use super::LearningError;
use crate::domain::{Description, FeatureSet, PromptTemplate, TaskSpec};
use crate::scalar::Scalar;

/// A scorer of partial descriptions: `(description, task) -> value`.
pub trait ValueFunction<T: Scalar> {
    fn value(&self, features: &FeatureSet, x: &Description, task: &TaskSpec) -> T;
}

impl<T, F> ValueFunction<T> for F
where
    T: Scalar,
    F: Fn(&FeatureSet, &Description, &TaskSpec) -> T,
{
    fn value(&self, features: &FeatureSet, x: &Description, task: &TaskSpec) -> T {
        self(features, x, task)
    }
}

/// Output nonlinearity applied to the linear score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Identity,
    /// `1 / (1 + e^-z)`: keeps values in (0, 1) and turns additive evidence
    /// into odds ratios.
    Logistic,
}

impl Link {
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Link::Identity => z,
            Link::Logistic => T::one() / (T::one() + (-z).exp()),
        }
    }

    /// Score whose output is `y`, clamped away from the asymptotes.
    pub fn inverse(self, y: f64) -> f64 {
        match self {
            Link::Identity => y,
            Link::Logistic => {
                let y = y.clamp(1e-6, 1.0 - 1e-6);
                (y / (1.0 - y)).ln()
            }
        }
    }

    /// Derivative of the output with respect to the score, in terms of the
    /// output.
    pub fn slope<T: Scalar>(self, output: T) -> T {
        match self {
            Link::Identity => T::one(),
            Link::Logistic => output * (T::one() - output),
        }
    }
}

/// Linear model over hashed features of the rendered prompt, with an
/// optional output link.
///
/// Keeps a copy of its initial parameters; the trainer's regularizer pulls
/// towards them.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearValueModel<T: Scalar> {
    featurizer: HashedFeaturizer,
    template: PromptTemplate,
    link: Link,
    weights: Vec<T>,
    bias: T,
    initial_weights: Vec<T>,
    initial_bias: T,
}

impl<T: Scalar> LinearValueModel<T> {
    /// Zero-initialized model.
    pub fn new(featurizer: HashedFeaturizer, template: PromptTemplate) -> Self {
        let dim = featurizer.dim();
        Self {
            featurizer,
            template,
            link: Link::Identity,
            weights: vec![T::zero(); dim],
            bias: T::zero(),
            initial_weights: vec![T::zero(); dim],
            initial_bias: T::zero(),
        }
    }

    pub fn with_default_featurizer() -> Self {
        Self::new(HashedFeaturizer::new(FeaturizerConfig::default()), PromptTemplate::default())
    }

    pub fn with_link(mut self, link: Link) -> Self {
        self.link = link;
        self
    }

    /// Sets the bias so that an all-zero encoding predicts `output`.
    pub fn set_bias_for(&mut self, output: f64) {
        self.bias = T::from_f64_lossy(self.link.inverse(output));
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn featurizer(&self) -> &HashedFeaturizer {
        &self.featurizer
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> T {
        self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [T], &mut T) {
        (&mut self.weights, &mut self.bias)
    }

    /// Number of trainable parameters, bias included.
    pub fn num_params(&self) -> usize {
        self.weights.len() + 1
    }

    pub(crate) fn initial(&self) -> (&[T], T) {
        (&self.initial_weights, self.initial_bias)
    }

    /// Makes the current parameters the regularization anchor.
    pub fn snapshot_initial(&mut self) {
        self.initial_weights.clone_from(&self.weights);
        self.initial_bias = self.bias;
    }

    pub fn encode(&self, features: &FeatureSet, x: &Description, task: &TaskSpec) -> SparseVector<T> {
        let text = self.template.render(x, features, task);
        self.featurizer.featurize(&text, task)
    }

    pub fn predict_encoded(&self, v: &SparseVector<T>) -> T {
        self.link.apply(self.score_encoded(v))
    }

    /// The linear score before the link.
    pub fn score_encoded(&self, v: &SparseVector<T>) -> T {
        v.dot(&self.weights) + self.bias
    }

    pub fn predict(&self, features: &FeatureSet, x: &Description, task: &TaskSpec) -> T {
        self.predict_encoded(&self.encode(features, x, task))
    }

    /// Squared distance between current and initial parameters.
    pub fn drift_sq(&self) -> T {
        let w = self.weights.iter().zip(&self.initial_weights).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
        let db = self.bias - self.initial_bias;
        w + db * db
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let sparse =
            |w: &[T]| w.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(|(i, v)| (i as u32, v.to_f64_lossy())).collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_owned(),
            featurizer: self.featurizer.clone(),
            template: self.template.clone(),
            link: self.link,
            bias: self.bias.to_f64_lossy(),
            weights: sparse(&self.weights),
            initial_bias: self.initial_bias.to_f64_lossy(),
            initial_weights: sparse(&self.initial_weights),
        }
    }

    pub fn from_checkpoint(cp: Checkpoint) -> Result<Self, LearningError> {
        if cp.format != CHECKPOINT_FORMAT {
            return Err(LearningError::Checkpoint(format!("unknown format {:?}", cp.format)));
        }
        let dim = cp.featurizer.dim();
        let dense = |entries: &[(u32, f64)]| -> Result<Vec<T>, LearningError> {
            let mut w = vec![T::zero(); dim];
            for &(i, v) in entries {
                let slot =
                    w.get_mut(i as usize).ok_or_else(|| LearningError::Checkpoint(format!("weight index {i} out of range")))?;
                *slot = T::from_f64_lossy(v);
            }
            Ok(w)
        };
        Ok(Self {
            weights: dense(&cp.weights)?,
            initial_weights: dense(&cp.initial_weights)?,
            bias: T::from_f64_lossy(cp.bias),
            initial_bias: T::from_f64_lossy(cp.initial_bias),
            featurizer: cp.featurizer,
            template: cp.template,
            link: cp.link,
        })
    }
}

impl<T: Scalar> ValueFunction<T> for LinearValueModel<T> {
    fn value(&self, features: &FeatureSet, x: &Description, task: &TaskSpec) -> T {
        self.predict(features, x, task)
    }
}

pub const CHECKPOINT_FORMAT: &str = "statebrief-linear-v1";

/// On-disk form of a [`LinearValueModel`]: JSON with sparse `[index, value]`
/// weight pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub featurizer: HashedFeaturizer,
    pub template: PromptTemplate,
    pub link: Link,
    pub bias: f64,
    pub weights: Vec<(u32, f64)>,
    pub initial_bias: f64,
    pub initial_weights: Vec<(u32, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LinearValueModel<f64> {
        let cfg = FeaturizerConfig { hash_bits: 8, ..FeaturizerConfig::default() };
        LinearValueModel::new(HashedFeaturizer::new(cfg), PromptTemplate::default())
    }

    #[test]
    fn zero_model_predicts_zero() {
        let m = small();
        let fs = FeatureSet::new(["a.", "b."]).unwrap();
        let task = TaskSpec::new("t", "do").unwrap();
        for ids in [&[][..], &[0], &[1, 0]] {
            let x = Description::from_ids(&fs, ids).unwrap();
            assert_eq!(m.predict(&fs, &x, &task), 0.0);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut m = small();
        {
            let (w, b) = m.params_mut();
            w[3] = 0.1 + 0.2;
            w[200] = -1.0 / 3.0;
            *b = 1e-17;
        }
        let json = serde_json::to_string(&m.to_checkpoint()).unwrap();
        let back = LinearValueModel::<f64>::from_checkpoint(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn checkpoint_rejects_out_of_range_weights() {
        let mut cp = small().to_checkpoint();
        cp.weights.push((1 << 20, 1.0));
        assert!(LinearValueModel::<f32>::from_checkpoint(cp).is_err());
    }
}
