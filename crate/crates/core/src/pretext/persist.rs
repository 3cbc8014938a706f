//! JSON persistence for [`PretextModel`]. Weight matrices are nested arrays,
//! one inner array per output unit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{HeadConfig, ModelError, PretextModel};
use crate::nn::DenseLayer;

const FORMAT: &str = "tlt-pretext-model";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerDocument {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct HeadsDocument {
    #[serde(skip_serializing_if = "Option::is_none")]
    time: Option<LayerDocument>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variety: Option<LayerDocument>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fungicide: Option<LayerDocument>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rot: Option<LayerDocument>,
}

/// On-disk form of a model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    format: String,
    input_dim: usize,
    head_config: HeadConfig,
    encoder: Vec<LayerDocument>,
    heads: HeadsDocument,
}

impl From<&DenseLayer> for LayerDocument {
    fn from(l: &DenseLayer) -> Self {
        Self {
            weights: l.weights.chunks(l.in_dim()).map(<[f64]>::to_vec).collect(),
            bias: l.bias.clone(),
        }
    }
}

impl LayerDocument {
    fn into_layer(self, name: &str) -> Result<DenseLayer, ModelError> {
        let out_dim = self.weights.len();
        let in_dim = self.weights.first().map_or(0, Vec::len);
        if self.weights.iter().any(|row| row.len() != in_dim) {
            return Err(ModelError::Document(format!("{name}: ragged weight rows")));
        }
        if self.weights.iter().flatten().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(ModelError::Document(format!("{name}: non-finite parameter")));
        }
        DenseLayer::new(out_dim, in_dim, self.weights.concat(), self.bias)
            .map_err(|e| ModelError::Document(format!("{name}: {e}")))
    }
}

impl ModelDocument {
    pub fn from_model(model: &PretextModel) -> Self {
        let doc = |l: &Option<DenseLayer>| l.as_ref().map(LayerDocument::from);
        Self {
            format: FORMAT.into(),
            input_dim: model.input_dim,
            head_config: model.head_config,
            encoder: model.encoder.iter().map(LayerDocument::from).collect(),
            heads: HeadsDocument {
                time: doc(&model.time_head),
                variety: doc(&model.variety_head),
                fungicide: doc(&model.fungicide_head),
                rot: doc(&model.rot_head),
            },
        }
    }

    pub fn into_model(self) -> Result<PretextModel, ModelError> {
        if self.format != FORMAT {
            return Err(ModelError::Document(format!("unexpected format tag {:?}", self.format)));
        }
        let [e0, e1]: [LayerDocument; 2] = self
            .encoder
            .try_into()
            .map_err(|v: Vec<_>| ModelError::Document(format!("expected 2 encoder layers, found {}", v.len())))?;
        let head = |l: Option<LayerDocument>, name| l.map(|l| l.into_layer(name)).transpose();
        PretextModel::from_layers(
            self.input_dim,
            self.head_config,
            [e0.into_layer("encoder.0")?, e1.into_layer("encoder.1")?],
            [
                head(self.heads.time, "head.time")?,
                head(self.heads.variety, "head.variety")?,
                head(self.heads.fungicide, "head.fungicide")?,
                head(self.heads.rot, "head.rot")?,
            ],
        )
        .map_err(|e| match e {
            ModelError::Config(msg) => ModelError::Document(msg),
            other => other,
        })
    }
}

impl PretextModel {
    pub fn to_writer<W: Write>(&self, w: W) -> Result<(), ModelError> {
        serde_json::to_writer_pretty(w, &ModelDocument::from_model(self)).map_err(|e| ModelError::Document(e.to_string()))
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Self, ModelError> {
        let doc: ModelDocument = serde_json::from_reader(r).map_err(|e| ModelError::Document(e.to_string()))?;
        doc.into_model()
    }
}
