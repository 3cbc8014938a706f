use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Labels, ModelError, PretextModel};
use crate::feature_store::{FeatureSet, Scale};
use crate::nn::{adam_step, AdamConfig, AdamState, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            epochs: 8,
            batch_size: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("non-finite gradient for {param}[{index}] at epoch {epoch}, batch {batch}")]
    NonFiniteGradient {
        epoch: usize,
        batch: usize,
        param: String,
        index: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::Config(format!("learning rate {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Checks that `set` carries the labels every enabled head needs.
pub fn check_labels(model: &PretextModel, set: &FeatureSet) -> Result<(), ModelError> {
    let cfg = model.head_config();
    if set.feature_dim != model.input_dim() {
        return Err(ModelError::Config(format!(
            "feature_dim {} does not match model input_dim {}",
            set.feature_dim,
            model.input_dim()
        )));
    }
    if cfg.variety {
        if let Some(r) = set.records.iter().find(|r| usize::from(r.variety_id) >= cfg.n_classes) {
            return Err(ModelError::Config(format!(
                "variety {} exceeds the head's {} classes",
                r.variety_id, cfg.n_classes
            )));
        }
    }
    if cfg.rot {
        if set.scale != Scale::Berry {
            return Err(ModelError::Config("rot head requires berry-scale data".into()));
        }
        if set.records.iter().all(|r| r.rot.is_none()) {
            return Err(ModelError::Config("rot head enabled but no record has a rot label".into()));
        }
    }
    Ok(())
}

/// Mini-batch Adam on the summed pretext loss.
///
/// Returns the trained model and the mean batch loss of every epoch
/// (weighted by batch size). Runs single-threaded and is bit-reproducible for
/// a given seed.
pub fn train(model: &PretextModel, train_set: &FeatureSet, cfg: &TrainConfig) -> Result<(PretextModel, Vec<f64>), TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Config("training set is empty".into()));
    }
    check_labels(model, train_set)?;

    let features: Vec<Vec<f64>> = train_set.records.iter().map(|r| r.features_f64()).collect();
    let labels: Vec<Labels> = train_set.records.iter().map(Labels::from).collect();

    let mut model = model.clone();
    let adam = AdamConfig {
        lr: cfg.learning_rate,
        ..AdamConfig::default()
    };
    let names: Vec<&'static str> = model.layers().iter().map(|(n, _)| *n).collect();
    let mut states: Vec<(AdamState, AdamState)> = model
        .layers()
        .iter()
        .map(|(_, l)| (AdamState::new(l.weights.len(), adam), AdamState::new(l.bias.len(), adam)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let inputs: Vec<&[f64]> = idx.iter().map(|&i| features[i].as_slice()).collect();
            let batch_labels: Vec<Labels> = idx.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = model.loss_and_gradients(&inputs, &batch_labels)?;
            let total = loss.total();
            if !total.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch });
            }
            epoch_loss += total * idx.len() as f64;

            for (((layer, g), (sw, sb)), name) in model.layers_mut().into_iter().zip(&grads).zip(&mut states).zip(&names) {
                let wrap = |e: NnError, suffix: &str| match e {
                    NnError::NonFiniteGradient { index } => TrainError::NonFiniteGradient {
                        epoch,
                        batch,
                        param: format!("{name}.{suffix}"),
                        index,
                    },
                    other => TrainError::Model(other.into()),
                };
                adam_step(&mut layer.weights, &g.weights, sw).map_err(|e| wrap(e, "weights"))?;
                adam_step(&mut layer.bias, &g.bias, sb).map_err(|e| wrap(e, "bias"))?;
            }
        }
        history.push(epoch_loss / features.len() as f64);
    }
    Ok((model, history))
}
