use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::batch_input;
use super::{
    adam_step, init_parameters, AdamParams, ModelConfig, ModelError, Network, Result, Tensor,
};
use crate::dataset::WindowedDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement
    /// (0 disables early stopping; the best checkpoint is returned either way).
    pub patience: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        let a = AdamParams::default();
        Self {
            epochs: 50,
            batch_size: 64,
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            seed: 0,
            patience: 0,
        }
    }
}

impl TrainHyper {
    pub fn adam(&self) -> AdamParams {
        AdamParams {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the mini-batch losses seen during the epoch.
    pub train_loss: f64,
    /// MSE on the validation set after the epoch (training loss when there
    /// is no validation set).
    pub val_loss: f64,
}

/// Parameters plus Adam moments, the update counter and loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub network: Network,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    /// Wraps `network` with zeroed moments.
    pub fn new(network: Network) -> Self {
        let zeros: Vec<Tensor> = network
            .params()
            .iter()
            .map(|p| Tensor::zeros(p.shape().to_vec()))
            .collect();
        Self {
            network,
            m: zeros.clone(),
            v: zeros,
            step: 0,
            history: Vec::new(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.network.config
    }

    /// Mean squared error of the network over `ds`.
    pub fn evaluate(&self, ds: &WindowedDataset, chunk: usize) -> Result<f64> {
        if ds.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let preds = super::predict_dataset(&self.network, ds, chunk)?;
        let (loss, _) = super::mse_loss(&preds, ds.targets())?;
        Ok(loss)
    }
}

fn check_dataset(cfg: &ModelConfig, ds: &WindowedDataset) -> Result<()> {
    if ds.window_size() != cfg.window_size || ds.n_rois() != cfg.n_rois {
        return Err(ModelError::ShapeMismatch(format!(
            "dataset has window {} x {} ROIs, model expects {} x {}",
            ds.window_size(),
            ds.n_rois(),
            cfg.window_size,
            cfg.n_rois
        )));
    }
    Ok(())
}

/// Mini-batch Adam on MSE. The returned state is the checkpoint with the
/// lowest validation loss; its history covers every epoch that ran.
pub fn train(
    train_ds: &WindowedDataset,
    val_ds: Option<&WindowedDataset>,
    config: &ModelConfig,
    hyper: &TrainHyper,
) -> Result<TrainState> {
    check_dataset(config, train_ds)?;
    if let Some(v) = val_ds {
        check_dataset(config, v)?;
    }
    let val_ds = val_ds.filter(|v| !v.is_empty());
    if train_ds.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if hyper.batch_size == 0 {
        return Err(ModelError::InvalidConfig(
            "batch_size must be positive".into(),
        ));
    }
    let mut state = init_parameters(config, config.seed)?;
    if hyper.epochs == 0 {
        return Ok(state);
    }
    let adam = hyper.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut best: Option<(f64, TrainState)> = None;
    let mut since_best = 0;

    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(hyper.batch_size) {
            let x = batch_input(train_ds, idx);
            let y: Vec<f64> = idx.iter().map(|&i| train_ds.targets()[i]).collect();
            let (loss, grads) = state.network.loss_and_grads(&x, &y)?;
            if !loss.is_finite() {
                return Err(ModelError::DivergedLoss(epoch));
            }
            adam_step(&mut state, &grads, &adam)?;
            sum += loss;
            batches += 1;
        }
        let train_loss = sum / batches as f64;
        let val_loss = match val_ds {
            Some(v) => state.evaluate(v, 256)?,
            None => train_loss,
        };
        if !val_loss.is_finite() {
            return Err(ModelError::DivergedLoss(epoch));
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, state.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if hyper.patience > 0 && since_best >= hyper.patience {
                break;
            }
        }
    }
    let (_, mut out) = best.expect("at least one epoch ran");
    out.history = history;
    Ok(out)
}
