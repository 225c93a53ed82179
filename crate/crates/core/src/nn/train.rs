//! Mini-batch training loop with per-epoch metrics.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{self, Mode};
use super::ops::argmax;
use super::optim::{clip_global_norm, Algorithm, OptimizerState};
use super::params::Parameters;
use super::spec::NetworkSpec;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub shuffle: bool,
    /// Global-norm gradient clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub algorithm: Algorithm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            seed: 42,
            learning_rate: 1e-3,
            shuffle: true,
            clip_norm: None,
            algorithm: Algorithm::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(Error::InvalidConfig("clip norm must be positive".into()));
        }
        Ok(())
    }
}

/// Inputs stacked along the first axis with one class index per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Tensor,
    targets: Vec<usize>,
}

impl Dataset {
    pub fn new(inputs: Tensor, targets: Vec<usize>) -> Result<Self> {
        if inputs.rank() == 0 || inputs.dim(0) != targets.len() {
            return Err(Error::InvalidShape(format!(
                "{} targets for inputs shaped {:?}",
                targets.len(),
                inputs.shape()
            )));
        }
        Ok(Self { inputs, targets })
    }

    /// Builds a dataset from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<usize>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidShape("rows differ in length".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(Tensor::new(vec![rows.len(), width], data)?, targets)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Gathers the given rows into a batch.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let mut shape = self.inputs.shape().to_vec();
        shape[0] = indices.len();
        let mut data = Vec::with_capacity(indices.len() * self.inputs.row_len());
        for &i in indices {
            data.extend_from_slice(self.inputs.row(i));
        }
        let targets = indices.iter().map(|&i| self.targets[i]).collect();
        (Tensor::new(shape, data).expect("gathered batch"), targets)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_accuracy: f64,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
}

/// One row per epoch. Training metrics are running means over the epoch's
/// batches (dropout active); test metrics are computed in inference mode
/// after the epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub rows: Vec<EpochMetrics>,
}

pub const CURVE_HEADER: &str = "epoch,train_acc,train_loss,test_acc,test_loss";

impl TrainingCurve {
    pub fn last(&self) -> Option<&EpochMetrics> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CURVE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6}",
                r.epoch, r.train_accuracy, r.train_loss, r.test_accuracy, r.test_loss
            );
        }
        out
    }
}

/// Accuracy and mean loss over a dataset in inference mode.
pub fn evaluate(spec: &NetworkSpec, params: &Parameters, set: &Dataset, batch_size: usize) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set".into()));
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    let order: Vec<usize> = (0..set.len()).collect();
    for chunk in order.chunks(batch_size.max(1)) {
        let (x, y) = set.batch(chunk);
        let probs = network::predict(spec, params, &x)?;
        loss += network::mean_cross_entropy(&probs, &y, spec.n_classes)? * y.len() as f64;
        correct += count_correct(&probs, &y);
    }
    Ok((correct as f64 / set.len() as f64, loss / set.len() as f64))
}

/// Predicted class for every row, in dataset order.
pub fn predict_classes(spec: &NetworkSpec, params: &Parameters, set: &Dataset, batch_size: usize) -> Result<Vec<usize>> {
    let order: Vec<usize> = (0..set.len()).collect();
    let mut out = Vec::with_capacity(set.len());
    for chunk in order.chunks(batch_size.max(1)) {
        let (x, _) = set.batch(chunk);
        let probs = network::predict(spec, params, &x)?;
        let k = spec.n_classes;
        out.extend(probs.data().chunks(k).map(argmax));
    }
    Ok(out)
}

fn count_correct(probs: &Tensor, targets: &[usize]) -> usize {
    let k = probs.row_len();
    probs
        .data()
        .chunks(k)
        .zip(targets)
        .filter(|(p, &t)| argmax(p) == t)
        .count()
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains from `params` for `config.epochs` epochs. Deterministic for a given seed.
pub fn fit(
    spec: &NetworkSpec,
    mut params: Parameters,
    train: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
) -> Result<(Parameters, TrainingCurve)> {
    config.validate()?;
    spec.validate()?;
    params.check_against(spec)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::UndefinedMetric("training and test sets must be non-empty".into()));
    }
    let mut optimizer = OptimizerState::new(config.algorithm, config.learning_rate, &params);
    let mut curve = TrainingCurve::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        if config.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, epoch as u64, 0));
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let (x, y) = train.batch(chunk);
            let mode = Mode::Train {
                seed: mix(config.seed, epoch as u64, b as u64 + 1),
            };
            let acts = network::forward(spec, &params, &x, mode)?;
            correct += count_correct(acts.probabilities(), &y);
            drop(acts);
            let (loss, mut grads) = network::backward(spec, &params, &x, &y, mode)?;
            if !loss.is_finite() {
                return Err(Error::diverged(format!("loss {loss} in batch {b}")).at_epoch(epoch));
            }
            loss_sum += loss * y.len() as f64;
            if let Some(max_norm) = config.clip_norm {
                clip_global_norm(&mut grads, max_norm);
            }
            optimizer.step(&mut params, &grads).map_err(|e| e.at_epoch(epoch))?;
        }
        let (test_accuracy, test_loss) = evaluate(spec, &params, test, config.batch_size)?;
        curve.rows.push(EpochMetrics {
            epoch,
            train_accuracy: correct as f64 / train.len() as f64,
            train_loss: loss_sum / train.len() as f64,
            test_accuracy,
            test_loss,
        });
    }
    Ok((params, curve))
}
