use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy, grad_params};
use super::network::{Mode, Network};
use super::optim::{Adam, AdamConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Mini-batch Adam training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 256,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Deterministic mean cross-entropy before the first update.
    pub initial_loss: f64,
    /// Deterministic mean cross-entropy after each epoch.
    pub loss_history: Vec<f64>,
    pub train_accuracy: f64,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.loss_history.last().copied().unwrap_or(self.initial_loss)
    }
}

/// Fit `net` to `data` with softmax cross-entropy and Adam.
///
/// Zero epochs leaves the parameters untouched.
pub fn train(net: &mut Network, data: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    if data.dim() != net.input_len() {
        return Err(Error::DimensionMismatch {
            expected: net.input_len(),
            found: data.dim(),
        });
    }
    let initial_loss = mean_loss(net, data)?;
    let mut history = Vec::with_capacity(config.epochs);
    let mut adam = Adam::new(net.param_count(), config.adam());
    let mut rng = rng::stream(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let restore = net.mode();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        net.set_mode(Mode::Train);
        for chunk in order.chunks(config.batch_size) {
            let rows: Vec<&[f64]> = chunk.iter().map(|&i| data.row(i)).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
            let batch = grad_params(net, &rows, &labels, Some(&mut rng)).map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged {
                    epoch,
                    loss: f64::NAN,
                },
                other => other,
            })?;
            let grad = batch.mean_grad();
            adam.step(net.params_mut(), &grad);
        }
        net.set_mode(restore);
        let loss = mean_loss(net, data).map_err(|_| Error::Diverged {
            epoch,
            loss: f64::NAN,
        })?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        debug!("epoch {epoch}: loss {loss:.6}");
        history.push(loss);
    }
    Ok(TrainReport {
        initial_loss,
        loss_history: history,
        train_accuracy: accuracy(net, data)?,
    })
}

/// Mean deterministic cross-entropy over the dataset.
pub fn mean_loss(net: &Network, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..data.len() {
        let trace = net.trace(data.row(i), Mode::Eval, None)?;
        total += cross_entropy(trace.logits(), data.labels()[i]);
    }
    Ok(total / data.len() as f64)
}

/// Fraction of rows whose deterministic argmax equals the label.
pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    let mut hits = 0usize;
    for i in 0..data.len() {
        if predict(net, data.row(i))? == data.labels()[i] {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Deterministic argmax class of a flat input.
pub fn predict(net: &Network, x: &[f64]) -> Result<usize> {
    let trace = net.trace(x, Mode::Eval, None)?;
    Ok(crate::tensor::argmax(trace.output()))
}
