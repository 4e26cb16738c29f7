use std::collections::HashMap;
use std::sync::Mutex;

use super::error::EnvError;
use crate::cost::QuantAssignment;
use crate::nn::{evaluate_accuracy, finetune_and_estimate, train_select_best, Dataset, NetworkSpec, NetworkWeights, NnError, TrainConfig};
use crate::seed::SeedTree;

/// Source of accuracy estimates for assignments.
pub trait AccuracyModel: Sync {
    /// Estimated accuracy of the network under `assignment`.
    fn accuracy(&self, assignment: &QuantAssignment) -> Result<f64, EnvError>;

    fn full_precision_accuracy(&self) -> f64;

    fn relative_accuracy(&self, assignment: &QuantAssignment) -> Result<f64, EnvError> {
        Ok(self.accuracy(assignment)? / self.full_precision_accuracy())
    }

    /// Accuracy after the long retrain, if the model supports one.
    fn final_accuracy(&self, _assignment: &QuantAssignment) -> Result<Option<f64>, EnvError> {
        Ok(None)
    }
}

/// Closed-form accuracy function with a baseline of 1.
pub struct OracleAccuracy<F> {
    f: F,
}

impl<F: Fn(&QuantAssignment) -> f64 + Sync> OracleAccuracy<F> {
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F: Fn(&QuantAssignment) -> f64 + Sync> AccuracyModel for OracleAccuracy<F> {
    fn accuracy(&self, a: &QuantAssignment) -> Result<f64, EnvError> {
        Ok((self.f)(a))
    }

    fn full_precision_accuracy(&self) -> f64 {
        1.0
    }
}

/// Short finetune from the pretrained weights followed by validation accuracy.
///
/// Every estimate starts from a fresh copy of the same pretrained weights and
/// uses a shuffle seed derived from the assignment, so the estimate for a given
/// assignment never depends on what was evaluated before it.
pub struct FinetuneEstimator {
    spec: NetworkSpec,
    weights: NetworkWeights,
    train: Dataset,
    /// What the short finetune trains on: `train` or a prefix of it.
    short_train: Option<Dataset>,
    validation: Dataset,
    test: Option<Dataset>,
    short: TrainConfig,
    long: TrainConfig,
    full_precision: f64,
    seeds: SeedTree,
}

impl FinetuneEstimator {
    /// `short.epochs` is the per-estimate budget; `long` drives the final
    /// retrain, which is scored on `test` when given, else on `validation`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        spec: NetworkSpec,
        weights: NetworkWeights,
        train: Dataset,
        validation: Dataset,
        test: Option<Dataset>,
        short: TrainConfig,
        long: TrainConfig,
        seeds: SeedTree,
    ) -> Result<Self, EnvError> {
        let full_precision = spec.full_precision_accuracy.ok_or(EnvError::MissingBaseline)?;
        if !(full_precision > 0.0) {
            return Err(EnvError::MissingBaseline);
        }
        spec.check_weights(&weights)?;
        short.validate()?;
        long.validate()?;
        Ok(Self { spec, weights, train, short_train: None, validation, test, short, long, full_precision, seeds })
    }

    /// Restricts the short finetune to the first `n` training items; the long
    /// retrain still sees all of them.
    pub fn with_short_subsample(mut self, n: usize) -> Self {
        self.short_train = (n < self.train.len()).then(|| self.train.head(n, self.train.split));
        self
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn weights(&self) -> &NetworkWeights {
        &self.weights
    }

    /// Retrains under `assignment` with the long budget, keeps the epoch with
    /// the best validation accuracy, and returns those weights with their
    /// held-out accuracy.
    pub fn long_retrain(&self, assignment: &QuantAssignment) -> Result<(NetworkWeights, f64), EnvError> {
        let cfg = TrainConfig {
            seed: self.seeds.child("long").child_indexed(assignment.bits()).seed(),
            ..self.long.clone()
        };
        let tuned =
            train_select_best(&self.spec, &self.weights, &self.train, &self.validation, &cfg, Some(assignment))?.weights;
        let eval = self.test.as_ref().unwrap_or(&self.validation);
        let acc = evaluate_accuracy(&self.spec, &tuned, eval, Some(assignment))?;
        Ok((tuned, acc))
    }
}

impl AccuracyModel for FinetuneEstimator {
    fn accuracy(&self, assignment: &QuantAssignment) -> Result<f64, EnvError> {
        let cfg = TrainConfig {
            seed: self.seeds.child("short").child_indexed(assignment.bits()).seed(),
            ..self.short.clone()
        };
        Ok(finetune_and_estimate(
            &self.spec,
            &self.weights,
            assignment,
            self.short_train.as_ref().unwrap_or(&self.train),
            &self.validation,
            cfg.epochs,
            &cfg,
        )?)
    }

    fn full_precision_accuracy(&self) -> f64 {
        self.full_precision
    }

    fn final_accuracy(&self, assignment: &QuantAssignment) -> Result<Option<f64>, EnvError> {
        Ok(Some(self.long_retrain(assignment)?.1))
    }
}

/// Caches relative accuracy per assignment. Estimates are deterministic per
/// assignment, so caching changes cost, not results. Divergence is cached too.
pub struct MemoAccuracy<M> {
    inner: M,
    cache: Mutex<HashMap<QuantAssignment, Result<f64, usize>>>,
}

impl<M: AccuracyModel> MemoAccuracy<M> {
    pub fn new(inner: M) -> Self {
        Self { inner, cache: Mutex::new(HashMap::new()) }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

impl<M: AccuracyModel> AccuracyModel for MemoAccuracy<M> {
    fn accuracy(&self, a: &QuantAssignment) -> Result<f64, EnvError> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(a) {
            return hit.map_err(|epoch| EnvError::Nn(NnError::Diverged { epoch }));
        }
        let result = self.inner.accuracy(a);
        let entry = match &result {
            Ok(v) => Ok(*v),
            Err(EnvError::Nn(NnError::Diverged { epoch })) => Err(*epoch),
            Err(_) => return result,
        };
        self.cache.lock().expect("cache lock").insert(a.clone(), entry);
        result
    }

    fn full_precision_accuracy(&self) -> f64 {
        self.inner.full_precision_accuracy()
    }

    fn final_accuracy(&self, a: &QuantAssignment) -> Result<Option<f64>, EnvError> {
        self.inner.final_accuracy(a)
    }
}
