use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::collect::upsample;
use super::featurize::{FeaturizerConfig, HashedFeaturizer, SparseVector};
use super::{LearningError, LinearValueModel, ValueDataset};
use crate::config::LearningConfig;
use crate::domain::PromptTemplate;
use crate::scalar::Scalar;

/// Pointwise regression loss.
pub trait Loss<T: Scalar>: Sync {
    fn loss(&self, prediction: T, label: T) -> T;
    /// Derivative with respect to the prediction.
    fn gradient(&self, prediction: T, label: T) -> T;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredError;

impl<T: Scalar> Loss<T> for SquaredError {
    fn loss(&self, prediction: T, label: T) -> T {
        let d = prediction - label;
        d * d
    }

    fn gradient(&self, prediction: T, label: T) -> T {
        let d = prediction - label;
        d + d
    }
}

/// Penalty on the parameters, applied lazily once per epoch.
pub trait Regularizer<T: Scalar> {
    fn penalty(&self, model: &LinearValueModel<T>) -> T;
    /// Applies the accumulated effect of `steps` SGD steps of size `lr`.
    fn apply(&self, model: &mut LinearValueModel<T>, lr: T, steps: usize);
}

/// No penalty at all. Training with it matches a zero-coefficient
/// [`ParamDistance`] bit for bit.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unregularized;

impl<T: Scalar> Regularizer<T> for Unregularized {
    fn penalty(&self, _: &LinearValueModel<T>) -> T {
        T::zero()
    }

    fn apply(&self, _: &mut LinearValueModel<T>, _: T, _: usize) {}
}

/// `coef * |theta - theta_0|^2 / P` over the `P` parameters: the mean
/// squared drift from the initial parameters.
#[derive(Debug, Clone, Copy)]
pub struct ParamDistance {
    pub coef: f64,
}

impl<T: Scalar> Regularizer<T> for ParamDistance {
    fn penalty(&self, model: &LinearValueModel<T>) -> T {
        T::from_f64_lossy(self.coef / model.num_params() as f64) * model.drift_sq()
    }

    fn apply(&self, model: &mut LinearValueModel<T>, lr: T, steps: usize) {
        if self.coef == 0.0 {
            return;
        }
        // each SGD step shrinks the drift by (1 - 2 lr coef / P)
        let per_step = (1.0 - 2.0 * lr.to_f64_lossy() * self.coef / model.num_params() as f64).max(0.0);
        let shrink = T::from_f64_lossy(per_step.powi(steps as i32));
        let (w0, b0) = {
            let (w0, b0) = model.initial();
            (w0.to_vec(), b0)
        };
        let (w, b) = model.params_mut();
        for (wi, &w0i) in w.iter_mut().zip(&w0) {
            *wi = w0i + (*wi - w0i) * shrink;
        }
        *b = b0 + (*b - b0) * shrink;
    }
}

/// Per-coordinate step rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// `lr * g`.
    Sgd,
    /// `lr * g / sqrt(sum of past g^2)`; only touched coordinates update.
    #[default]
    Adagrad,
}

const ADAGRAD_EPS: f64 = 1e-8;

struct OptimizerState<T> {
    kind: Optimizer,
    sum_sq: Vec<T>,
}

impl<T: Scalar> OptimizerState<T> {
    fn new(kind: Optimizer, params: usize) -> Self {
        let sum_sq = match kind {
            Optimizer::Sgd => Vec::new(),
            Optimizer::Adagrad => vec![T::zero(); params],
        };
        Self { kind, sum_sq }
    }

    fn step(&mut self, j: usize, g: T, lr: T) -> T {
        match self.kind {
            Optimizer::Sgd => lr * g,
            Optimizer::Adagrad => {
                self.sum_sq[j] = self.sum_sq[j] + g * g;
                lr * g / (self.sum_sq[j].sqrt() + T::from_f64_lossy(ADAGRAD_EPS))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss over the (upsampled) training set after each epoch.
    pub epoch_loss: Vec<f64>,
    /// Regularizer value after each epoch.
    pub epoch_penalty: Vec<f64>,
    pub examples_before_upsampling: usize,
    pub examples_after_upsampling: usize,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_loss.last().copied()
    }
}

/// Trains with squared error and the parameter-distance penalty at the
/// configured coefficient.
pub fn train<T, R>(
    model: &mut LinearValueModel<T>,
    dataset: &ValueDataset,
    config: &LearningConfig,
    rng: &mut R,
) -> Result<TrainReport, LearningError>
where
    T: Scalar,
    R: Rng + ?Sized,
{
    let reg = ParamDistance { coef: config.kl_coefficient };
    train_with(model, dataset, config, &SquaredError, &reg, rng)
}

/// Fits the featurizer's structural vocabulary on the dataset's feature
/// sets, then trains a model whose weights start at zero and whose bias
/// starts at the mean label.
pub fn fit_value_model<T, R>(
    dataset: &ValueDataset,
    featurizer: FeaturizerConfig,
    config: &LearningConfig,
    rng: &mut R,
) -> Result<(LinearValueModel<T>, TrainReport), LearningError>
where
    T: Scalar,
    R: Rng + ?Sized,
{
    let featurizer = HashedFeaturizer::fit(featurizer, dataset.steps.iter().map(|s| &s.feature_set));
    let mut model = LinearValueModel::new(featurizer, PromptTemplate::default()).with_link(config.link);
    if dataset.is_empty() {
        return Err(LearningError::EmptyDataset);
    }
    let mean = dataset.examples.iter().map(|e| e.label).sum::<f64>() / dataset.len() as f64;
    model.set_bias_for(mean);
    let report = train(&mut model, dataset, config, rng)?;
    Ok((model, report))
}

/// Minibatch SGD over a seeded shuffle. The model's initial parameters are
/// those it has on entry.
pub fn train_with<T, L, G, R>(
    model: &mut LinearValueModel<T>,
    dataset: &ValueDataset,
    config: &LearningConfig,
    loss: &L,
    regularizer: &G,
    rng: &mut R,
) -> Result<TrainReport, LearningError>
where
    T: Scalar,
    L: Loss<T>,
    G: Regularizer<T>,
    R: Rng + ?Sized,
{
    config.validate()?;
    if dataset.is_empty() {
        return Err(LearningError::EmptyDataset);
    }
    dataset.validate()?;
    let before = dataset.len();
    let upsampled;
    let data = if config.upsample {
        upsampled = upsample(dataset, rng)?;
        &upsampled
    } else {
        dataset
    };
    let n = data.len();

    let encoded: Vec<(SparseVector<T>, T)> = data
        .examples
        .par_iter()
        .map(|e| {
            let step = data.step_of(e);
            (model.encode(&step.feature_set, &e.prefix, &e.task), T::from_f64_lossy(e.label))
        })
        .collect();

    model.snapshot_initial();
    let lr = T::from_f64_lossy(config.learning_rate);
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = TrainReport {
        epoch_loss: Vec::with_capacity(config.epochs),
        epoch_penalty: Vec::with_capacity(config.epochs),
        examples_before_upsampling: before,
        examples_after_upsampling: n,
    };

    let dim = model.weights().len();
    let mut scratch = vec![T::zero(); dim];
    let mut touched: Vec<usize> = Vec::new();
    let mut optimizer = OptimizerState::new(config.optimizer, dim + 1);
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut steps = 0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let inv_batch = T::one() / T::from_usize(chunk.len()).expect("batch size fits");
            let grads: Vec<T> = chunk
                .iter()
                .map(|&i| {
                    let (x, y) = &encoded[i];
                    let out = model.predict_encoded(x);
                    loss.gradient(out, *y) * model.link().slope(out)
                })
                .collect();
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(LearningError::NonFiniteLoss { epoch, batch, learning_rate: config.learning_rate });
            }
            // summed batch gradient over the touched coordinates
            let mut grad_b = T::zero();
            for (&i, &g) in chunk.iter().zip(&grads) {
                for &(j, v) in &encoded[i].0.entries {
                    let slot = &mut scratch[j as usize];
                    if slot.is_zero() {
                        touched.push(j as usize);
                    }
                    *slot = *slot + g * v;
                }
                grad_b = grad_b + g;
            }
            touched.sort_unstable();
            touched.dedup();
            let (w, b) = model.params_mut();
            for &j in &touched {
                let g = scratch[j] * inv_batch;
                scratch[j] = T::zero();
                w[j] = w[j] - optimizer.step(j, g, lr);
            }
            *b = *b - optimizer.step(w.len(), grad_b * inv_batch, lr);
            touched.clear();
            steps += 1;
        }
        regularizer.apply(model, lr, steps);

        let total = encoded.iter().fold(T::zero(), |acc, (x, y)| acc + loss.loss(model.predict_encoded(x), *y));
        let mean = total.to_f64_lossy() / n as f64;
        if !mean.is_finite() {
            return Err(LearningError::NonFiniteLoss { epoch, batch: steps, learning_rate: config.learning_rate });
        }
        report.epoch_loss.push(mean);
        report.epoch_penalty.push(regularizer.penalty(model).to_f64_lossy());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ActionLabel, Description, ExpertStep, FeatureSet, TaskSpec};
    use crate::learning::ValueExample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn step() -> ExpertStep {
        let fs = FeatureSet::new([
            "the ball is left of the cup.",
            "the cup is red.",
            "a door is open.",
            "the sky is blue.",
            "position A is empty.",
        ])
        .unwrap();
        ExpertStep::new(
            fs,
            TaskSpec::new("t", "stack the cup").unwrap(),
            ActionLabel::new("go").unwrap(),
            vec![ActionLabel::new("go").unwrap(), ActionLabel::new("stay").unwrap()],
        )
        .unwrap()
    }

    /// Every subset of the step's features, labeled by `label`.
    fn all_subsets(label: impl Fn(&Description, &ExpertStep) -> f64) -> ValueDataset {
        let s = step();
        let n = s.feature_set.len();
        let examples = (0u32..1 << n)
            .map(|mask| {
                let ids: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
                let prefix = Description::from_ids(&s.feature_set, &ids).unwrap();
                ValueExample { task: s.task.clone(), label: label(&prefix, &s), prefix, source_step: 0 }
            })
            .collect();
        ValueDataset { steps: vec![s], examples }
    }

    fn config(epochs: usize) -> LearningConfig {
        LearningConfig { epochs, batch_size: 4, learning_rate: 0.1, upsample: false, ..LearningConfig::default() }
    }

    fn model() -> LinearValueModel<f64> {
        let s = step();
        LinearValueModel::new(HashedFeaturizer::fit(Default::default(), [&s.feature_set]), Default::default())
    }

    #[test]
    fn constant_labels_are_learned() {
        let ds = all_subsets(|_, _| 0.37);
        let mut m = model();
        let report =
            train_with(&mut m, &ds, &config(100), &SquaredError, &Unregularized, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for e in &ds.examples {
            let v = m.predict(&ds.steps[0].feature_set, &e.prefix, &e.task);
            assert!((v - 0.37).abs() < 1e-3, "{v}");
        }
        assert!(report.final_loss().unwrap() < 1e-6);
    }

    #[test]
    fn linearly_realizable_labels_are_fit() {
        // the target is itself a linear function of the model's encoding
        let reference = model();
        let target: Vec<f64> = (0..reference.featurizer().dim()).map(|j| ((j * 7919) % 13) as f64 / 130.0).collect();
        let ds = all_subsets(|x, s| reference.encode(&s.feature_set, x, &s.task).dot(&target) * 0.2 + 0.1);
        let mut m = model();
        let report =
            train_with(&mut m, &ds, &config(200), &SquaredError, &Unregularized, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(report.final_loss().unwrap() <= 1e-4, "{:?}", report.final_loss());
    }

    #[test]
    fn zero_coefficient_matches_unregularized_exactly() {
        let ds = all_subsets(|x, _| x.len() as f64 / 5.0);
        let mut a = model();
        let mut b = model();
        train_with(&mut a, &ds, &config(5), &SquaredError, &Unregularized, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        train_with(&mut b, &ds, &config(5), &SquaredError, &ParamDistance { coef: 0.0 }, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_eq!(a.bias().to_bits(), b.bias().to_bits());
    }

    #[test]
    fn penalty_limits_drift() {
        let ds = all_subsets(|x, _| x.len() as f64 / 5.0);
        let mut free = model();
        let mut tied = model();
        train_with(&mut free, &ds, &config(20), &SquaredError, &Unregularized, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let r = train_with(
            &mut tied,
            &ds,
            &config(20),
            &SquaredError,
            &ParamDistance { coef: 50.0 },
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        assert!(tied.drift_sq() < free.drift_sq());
        assert!(r.epoch_penalty.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn divergence_is_reported() {
        let ds = all_subsets(|_, _| 1.0);
        let mut m = model();
        let bad = LearningConfig { learning_rate: 1e6, optimizer: Optimizer::Sgd, ..config(50) };
        let err = train_with(&mut m, &ds, &bad, &SquaredError, &Unregularized, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(LearningError::NonFiniteLoss { .. })));
    }

    #[test]
    fn f32_models_train_too() {
        let s = step();
        let ds = all_subsets(|_, _| 0.5);
        let mut m: LinearValueModel<f32> =
            LinearValueModel::new(HashedFeaturizer::fit(Default::default(), [&s.feature_set]), Default::default());
        let cfg = LearningConfig { kl_coefficient: 0.0, ..config(50) };
        train(&mut m, &ds, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let v = m.predict(&s.feature_set, &Description::empty(&s.feature_set), &s.task);
        assert!((v - 0.5).abs() < 1e-3);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut m = model();
        let err = train(&mut m, &ValueDataset::default(), &config(1), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(LearningError::EmptyDataset)));
    }
}
