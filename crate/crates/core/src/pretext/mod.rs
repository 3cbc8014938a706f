//! Shared encoder with per-task prediction heads.
//!
//! The encoder maps an `n`-dimensional backbone feature to a latent code of
//! size `n / 4` through a hidden layer of size `n / 2` (floor division), with
//! ReLU after both layers. Each enabled head is a single dense layer on the
//! latent code: linear output for time, per-unit sigmoid for the
//! classification heads.

mod persist;
mod train;

pub use persist::ModelDocument;
pub use train::{check_labels, train, TrainConfig, TrainError};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_store::FeatureRecord;
use crate::nn::{bce_loss, he_init, mse_loss, relu, relu_backward, sigmoid, sigmoid_scalar, DenseLayer, LayerGrads, NnError};

/// Sigmoid heads predict the positive class at or above this probability.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Shape(#[from] NnError),
    #[error("model document: {0}")]
    Document(String),
}

/// Which pretext heads are attached to the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub time: bool,
    pub variety: bool,
    pub fungicide: bool,
    pub rot: bool,
    /// Width of the variety head; ignored when `variety` is off.
    pub n_classes: usize,
}

impl HeadConfig {
    pub fn time_only() -> Self {
        Self {
            time: true,
            variety: false,
            fungicide: false,
            rot: false,
            n_classes: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.time || self.variety || self.fungicide || self.rot) {
            return Err(ModelError::Config("no prediction heads enabled".into()));
        }
        if self.variety && self.n_classes == 0 {
            return Err(ModelError::Config("variety head needs at least one class".into()));
        }
        Ok(())
    }
}

/// Raw head outputs for one input. Sigmoid heads hold probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub time: Option<f64>,
    pub variety: Option<Vec<f64>>,
    pub fungicide: Option<f64>,
    pub rot: Option<f64>,
}

/// Supervision for one input. `time` is normalized to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Labels {
    pub time: f64,
    pub variety: usize,
    pub fungicide: bool,
    pub rot: Option<bool>,
}

impl From<&FeatureRecord> for Labels {
    fn from(r: &FeatureRecord) -> Self {
        Self {
            time: f64::from(r.time_norm),
            variety: usize::from(r.variety_id),
            fungicide: r.fungicide,
            rot: r.rot,
        }
    }
}

/// Per-head losses; disabled heads (and batches without rot labels) are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub time: Option<f64>,
    pub variety: Option<f64>,
    pub fungicide: Option<f64>,
    pub rot: Option<f64>,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        [self.time, self.variety, self.fungicide, self.rot]
            .iter()
            .flatten()
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Predictions {
    pub time_days: Option<f64>,
    pub variety: Option<usize>,
    pub fungicide: Option<bool>,
    pub rot: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretextModel {
    input_dim: usize,
    head_config: HeadConfig,
    encoder: [DenseLayer; 2],
    time_head: Option<DenseLayer>,
    variety_head: Option<DenseLayer>,
    fungicide_head: Option<DenseLayer>,
    rot_head: Option<DenseLayer>,
}

/// Encoder widths `(n, n/2, n/4)`.
pub fn encoder_dims(input_dim: usize) -> (usize, usize, usize) {
    (input_dim, input_dim / 2, input_dim / 4)
}

/// He-initialized model for `input_dim`-wide features.
pub fn build_model(input_dim: usize, head_config: HeadConfig, seed: u64) -> Result<PretextModel, ModelError> {
    head_config.validate()?;
    if input_dim < 4 {
        return Err(ModelError::Config(format!("input_dim {input_dim} < 4")));
    }
    let (n, hidden, latent) = encoder_dims(input_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = |out, inp| he_init(out, inp, rng.random());
    let encoder = [layer(hidden, n), layer(latent, hidden)];
    let time_head = head_config.time.then(|| layer(1, latent));
    let variety_head = head_config.variety.then(|| layer(head_config.n_classes, latent));
    let fungicide_head = head_config.fungicide.then(|| layer(1, latent));
    let rot_head = head_config.rot.then(|| layer(1, latent));
    Ok(PretextModel {
        input_dim,
        head_config,
        encoder,
        time_head,
        variety_head,
        fungicide_head,
        rot_head,
    })
}

/// Intermediate values of one forward pass, kept for the backward pass.
struct Trace {
    pre1: Vec<f64>,
    hidden: Vec<f64>,
    pre2: Vec<f64>,
    latent: Vec<f64>,
    outputs: HeadOutputs,
}

/// Gradient of the loss with respect to each head's (post-activation) output.
#[derive(Default)]
struct OutputGrads {
    time: Option<f64>,
    variety: Option<Vec<f64>>,
    fungicide: Option<f64>,
    rot: Option<f64>,
}

impl PretextModel {
    /// Assembles a model from explicit layers, checking every dimension.
    pub fn from_layers(
        input_dim: usize,
        head_config: HeadConfig,
        encoder: [DenseLayer; 2],
        heads: [Option<DenseLayer>; 4],
    ) -> Result<Self, ModelError> {
        head_config.validate()?;
        let (n, hidden, latent) = encoder_dims(input_dim);
        let expect = |what: &str, layer: &DenseLayer, out: usize, inp: usize| {
            if layer.out_dim() == out && layer.in_dim() == inp {
                Ok(())
            } else {
                Err(ModelError::Config(format!(
                    "{what}: expected {out}x{inp}, got {}x{}",
                    layer.out_dim(),
                    layer.in_dim()
                )))
            }
        };
        if input_dim < 4 {
            return Err(ModelError::Config(format!("input_dim {input_dim} < 4")));
        }
        expect("encoder.0", &encoder[0], hidden, n)?;
        expect("encoder.1", &encoder[1], latent, hidden)?;
        let [time_head, variety_head, fungicide_head, rot_head] = heads;
        let enabled = [
            ("head.time", head_config.time, &time_head, 1),
            ("head.variety", head_config.variety, &variety_head, head_config.n_classes),
            ("head.fungicide", head_config.fungicide, &fungicide_head, 1),
            ("head.rot", head_config.rot, &rot_head, 1),
        ];
        for (name, on, layer, width) in enabled {
            match (on, layer) {
                (true, Some(l)) => expect(name, l, width, latent)?,
                (false, None) => {}
                (true, None) => return Err(ModelError::Config(format!("{name} enabled but missing"))),
                (false, Some(_)) => return Err(ModelError::Config(format!("{name} present but disabled"))),
            }
        }
        Ok(Self {
            input_dim,
            head_config,
            encoder,
            time_head,
            variety_head,
            fungicide_head,
            rot_head,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder[1].out_dim()
    }

    pub fn head_config(&self) -> &HeadConfig {
        &self.head_config
    }

    pub fn encoder(&self) -> &[DenseLayer; 2] {
        &self.encoder
    }

    /// Every layer with a stable name, encoder first.
    pub fn layers(&self) -> Vec<(&'static str, &DenseLayer)> {
        let mut out = vec![("encoder.0", &self.encoder[0]), ("encoder.1", &self.encoder[1])];
        let heads = [
            ("head.time", &self.time_head),
            ("head.variety", &self.variety_head),
            ("head.fungicide", &self.fungicide_head),
            ("head.rot", &self.rot_head),
        ];
        out.extend(heads.into_iter().filter_map(|(n, l)| l.as_ref().map(|l| (n, l))));
        out
    }

    /// Mutable view of the layers, in the same order as [`Self::layers`].
    pub fn layers_mut(&mut self) -> Vec<&mut DenseLayer> {
        let [e0, e1] = &mut self.encoder;
        let mut out = vec![e0, e1];
        out.extend(
            [
                &mut self.time_head,
                &mut self.variety_head,
                &mut self.fungicide_head,
                &mut self.rot_head,
            ]
            .into_iter()
            .filter_map(|l| l.as_mut()),
        );
        out
    }

    pub fn n_params(&self) -> usize {
        self.layers().iter().map(|(_, l)| l.weights.len() + l.bias.len()).sum()
    }

    fn trace(&self, f: &[f64]) -> Result<Trace, ModelError> {
        let pre1 = self.encoder[0].forward(f)?;
        let hidden = relu(&pre1);
        let pre2 = self.encoder[1].forward(&hidden)?;
        let latent = relu(&pre2);
        let scalar = |head: &Option<DenseLayer>, sig: bool| -> Result<Option<f64>, ModelError> {
            head.as_ref()
                .map(|l| {
                    let v = l.forward(&latent)?[0];
                    Ok(if sig { sigmoid_scalar(v) } else { v })
                })
                .transpose()
        };
        let outputs = HeadOutputs {
            time: scalar(&self.time_head, false)?,
            variety: self
                .variety_head
                .as_ref()
                .map(|l| l.forward(&latent).map(|v| sigmoid(&v)))
                .transpose()?,
            fungicide: scalar(&self.fungicide_head, true)?,
            rot: scalar(&self.rot_head, true)?,
        };
        Ok(Trace {
            pre1,
            hidden,
            pre2,
            latent,
            outputs,
        })
    }

    /// Latent code and head outputs for one feature vector.
    pub fn forward(&self, f: &[f64]) -> Result<(Vec<f64>, HeadOutputs), ModelError> {
        let t = self.trace(f)?;
        Ok((t.latent, t.outputs))
    }

    pub fn encode(&self, f: &[f64]) -> Result<Vec<f64>, ModelError> {
        let h = relu(&self.encoder[0].forward(f)?);
        Ok(relu(&self.encoder[1].forward(&h)?))
    }

    pub fn encode_batch(&self, fs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        fs.iter().map(|f| self.encode(f)).collect()
    }

    pub fn predict(&self, f: &[f64], span_days: f64) -> Result<Predictions, ModelError> {
        let (_, out) = self.forward(f)?;
        Ok(predictions_from_outputs(&out, span_days))
    }

    /// Batch loss and its gradient with respect to every parameter, in
    /// [`Self::layers`] order.
    pub fn loss_and_gradients(&self, inputs: &[&[f64]], labels: &[Labels]) -> Result<(LossBreakdown, Vec<LayerGrads>), ModelError> {
        if inputs.len() != labels.len() {
            return Err(NnError::Shape {
                expected: inputs.len(),
                actual: labels.len(),
            }
            .into());
        }
        let traces = inputs.iter().map(|f| self.trace(f)).collect::<Result<Vec<_>, _>>()?;
        let outputs: Vec<HeadOutputs> = traces.iter().map(|t| t.outputs.clone()).collect();
        let (losses, out_grads) = head_losses(&outputs, labels, &self.head_config)?;

        let mut grads: Vec<LayerGrads> = self.layers().iter().map(|(_, l)| l.zero_grads()).collect();
        let (enc_grads, head_grads) = grads.split_at_mut(2);
        for ((f, trace), og) in inputs.iter().zip(&traces).zip(&out_grads) {
            let mut d_latent = vec![0.0; self.latent_dim()];
            let mut slot = 0;
            let heads = [
                (&self.time_head, og.time.map(|g| vec![g]), false, trace.outputs.time.map(|v| vec![v])),
                (&self.variety_head, og.variety.clone(), true, trace.outputs.variety.clone()),
                (&self.fungicide_head, og.fungicide.map(|g| vec![g]), true, trace.outputs.fungicide.map(|v| vec![v])),
                (&self.rot_head, og.rot.map(|g| vec![g]), true, trace.outputs.rot.map(|v| vec![v])),
            ];
            for (layer, g_out, is_sigmoid, out) in heads {
                let Some(layer) = layer else { continue };
                let this = slot;
                slot += 1;
                let Some(g_out) = g_out else { continue };
                let g_pre: Vec<f64> = if is_sigmoid {
                    let out = out.expect("sigmoid head has outputs");
                    g_out.iter().zip(&out).map(|(g, s)| g * s * (1.0 - s)).collect()
                } else {
                    g_out
                };
                let d = layer.backward(&trace.latent, &g_pre, &mut head_grads[this])?;
                for (acc, v) in d_latent.iter_mut().zip(d) {
                    *acc += v;
                }
            }
            let d_pre2 = relu_backward(&trace.pre2, &d_latent);
            let d_hidden = self.encoder[1].backward(&trace.hidden, &d_pre2, &mut enc_grads[1])?;
            let d_pre1 = relu_backward(&trace.pre1, &d_hidden);
            self.encoder[0].backward(f, &d_pre1, &mut enc_grads[0])?;
        }
        Ok((losses, grads))
    }
}

/// Converts raw head outputs into labels and a time in days.
pub fn predictions_from_outputs(out: &HeadOutputs, span_days: f64) -> Predictions {
    Predictions {
        time_days: out.time.map(|t| t.clamp(0.0, 1.0) * span_days),
        variety: out.variety.as_deref().map(argmax),
        fungicide: out.fungicide.map(|p| p >= DECISION_THRESHOLD),
        rot: out.rot.map(|p| p >= DECISION_THRESHOLD),
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Composite pretext loss over a batch: MSE for time, BCE for the sigmoid
/// heads. Records without a rot label do not contribute to the rot term.
pub fn total_loss(outputs: &[HeadOutputs], labels: &[Labels], config: &HeadConfig) -> Result<LossBreakdown, ModelError> {
    head_losses(outputs, labels, config).map(|(l, _)| l)
}

fn missing(head: &str) -> ModelError {
    ModelError::Config(format!("{head} head enabled but output missing"))
}

fn head_losses(outputs: &[HeadOutputs], labels: &[Labels], config: &HeadConfig) -> Result<(LossBreakdown, Vec<OutputGrads>), ModelError> {
    if outputs.len() != labels.len() {
        return Err(NnError::Shape {
            expected: outputs.len(),
            actual: labels.len(),
        }
        .into());
    }
    if outputs.is_empty() {
        return Err(NnError::Empty.into());
    }
    let n = outputs.len();
    let mut losses = LossBreakdown::default();
    let mut grads: Vec<OutputGrads> = (0..n).map(|_| OutputGrads::default()).collect();

    if config.time {
        let pred = outputs.iter().map(|o| o.time.ok_or_else(|| missing("time"))).collect::<Result<Vec<_>, _>>()?;
        let target: Vec<f64> = labels.iter().map(|l| l.time).collect();
        let (loss, g) = mse_loss(&pred, &target)?;
        losses.time = Some(loss);
        for (slot, g) in grads.iter_mut().zip(g) {
            slot.time = Some(g);
        }
    }
    if config.variety {
        let k = config.n_classes;
        let mut pred = Vec::with_capacity(n * k);
        let mut target = vec![0.0; n * k];
        for (i, (o, l)) in outputs.iter().zip(labels).enumerate() {
            let v = o.variety.as_ref().ok_or_else(|| missing("variety"))?;
            if v.len() != k {
                return Err(NnError::Shape { expected: k, actual: v.len() }.into());
            }
            if l.variety >= k {
                return Err(ModelError::Config(format!("variety label {} >= {k} classes", l.variety)));
            }
            pred.extend_from_slice(v);
            target[i * k + l.variety] = 1.0;
        }
        let (loss, g) = bce_loss(&pred, &target)?;
        losses.variety = Some(loss);
        for (slot, g) in grads.iter_mut().zip(g.chunks_exact(k)) {
            slot.variety = Some(g.to_vec());
        }
    }
    if config.fungicide {
        let pred = outputs.iter().map(|o| o.fungicide.ok_or_else(|| missing("fungicide"))).collect::<Result<Vec<_>, _>>()?;
        let target: Vec<f64> = labels.iter().map(|l| f64::from(u8::from(l.fungicide))).collect();
        let (loss, g) = bce_loss(&pred, &target)?;
        losses.fungicide = Some(loss);
        for (slot, g) in grads.iter_mut().zip(g) {
            slot.fungicide = Some(g);
        }
    }
    if config.rot {
        let valid: Vec<usize> = (0..n).filter(|&i| labels[i].rot.is_some()).collect();
        if !valid.is_empty() {
            let pred = valid.iter().map(|&i| outputs[i].rot.ok_or_else(|| missing("rot"))).collect::<Result<Vec<_>, _>>()?;
            let target: Vec<f64> = valid.iter().map(|&i| f64::from(u8::from(labels[i].rot.unwrap()))).collect();
            let (loss, g) = bce_loss(&pred, &target)?;
            losses.rot = Some(loss);
            for (&i, g) in valid.iter().zip(g) {
                grads[i].rot = Some(g);
            }
        }
    }
    Ok((losses, grads))
}
