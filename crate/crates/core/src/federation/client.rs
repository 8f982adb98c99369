use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::federation::{LocalUpdate, Network};
use crate::nn::SgdSchedule;
use crate::seed::rng_for;

/// Training hyperparameters shared by all clients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainHyper {
    pub lr: f64,
    pub lr_decay: f64,
    pub train_batch: usize,
    pub test_batch: usize,
    pub local_epochs_per_round: u32,
    pub test_every: u32,
    /// Optional bound on the global L2 norm of each mini-batch gradient.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self { lr: 0.05, lr_decay: 0.99, train_batch: 500, test_batch: 128, local_epochs_per_round: 1, test_every: 2, clip_norm: None }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        SgdSchedule::new(self.lr, self.lr_decay)?;
        if self.train_batch == 0 || self.test_batch == 0 {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
        if self.local_epochs_per_round == 0 || self.test_every == 0 {
            return Err(Error::Config("local_epochs_per_round and test_every must be >= 1".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> SgdSchedule {
        SgdSchedule { base_lr: self.lr, decay: self.lr_decay, epoch: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub name: String,
    pub active: bool,
    pub model: Network,
    pub train: Arc<MultiViewDataset>,
    pub test: Arc<MultiViewDataset>,
}

impl ClientState {
    pub fn sample_count(&self) -> u64 {
        self.train.len() as u64
    }
}

/// Summary of one `local_train` call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalStats {
    pub epochs: u32,
    /// Mean training loss over the last local epoch (NaN when no epoch ran).
    pub mean_loss: f64,
    pub accuracy: f64,
}

/// Mini-batch SGD on the client's own multi-view data.
///
/// `start_epoch` drives the learning-rate decay; the batch order is drawn from
/// a stream derived from `(seed, client id, round, epoch)`.
pub fn local_train(
    client: &mut ClientState,
    epochs: u32,
    hyper: &TrainHyper,
    start_epoch: u32,
    seed: u64,
    round: u32,
) -> Result<(LocalUpdate, LocalStats)> {
    if !client.active {
        return Err(Error::Precondition(format!("client {} is inactive", client.name)));
    }
    if client.train.is_empty() {
        return Err(Error::Precondition(format!("client {} has no training data", client.name)));
    }
    let k = client.model.scale();
    let n = client.train.len();
    let mut stats = LocalStats { epochs, mean_loss: f64::NAN, accuracy: f64::NAN };
    let mut grads = client.model.grad_template();
    for e in 0..epochs {
        let epoch = start_epoch + e;
        let schedule = hyper.schedule().at_epoch(epoch);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(seed, &[client.id as u64, round as u64, epoch as u64]));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(hyper.train_batch) {
            grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            for &i in batch {
                let views = client.train.sample_views(i, k)?;
                let label = client.train.label(i);
                let (loss, pred) = client.model.loss_and_accumulate(&views, label, &mut grads)?;
                loss_sum += loss;
                correct += usize::from(pred == label);
            }
            client.model.apply_gradients(&mut grads, batch.len(), &schedule, hyper.clip_norm)?;
        }
        stats.mean_loss = loss_sum / n as f64;
        stats.accuracy = correct as f64 / n as f64;
    }
    let update = LocalUpdate { client_id: client.id, params: client.model.to_params(), weight: client.sample_count() };
    Ok((update, stats))
}

/// `(accuracy, mean loss)` of `model` on `data`, using the first `model.scale()` views.
pub fn evaluate(model: &Network, data: &MultiViewDataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Precondition("empty evaluation set".into()));
    }
    let k = model.scale();
    let (mut loss_sum, mut correct) = (0.0, 0usize);
    for i in 0..data.len() {
        let label = data.label(i);
        let (loss, pred) = model.evaluate(&data.sample_views(i, k)?, label)?;
        loss_sum += loss;
        correct += usize::from(pred == label);
    }
    Ok((correct as f64 / data.len() as f64, loss_sum / data.len() as f64))
}
