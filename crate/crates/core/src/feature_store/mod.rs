//! Feature records, the TLTF binary container, and the train/test split policy.
//!
//! Features are stored as `f32` (the on-disk representation) and widened to
//! `f64` wherever they enter a computation.

mod format;
mod split;

pub use format::{read_features, write_features, FormatError, HEADER_FIXED_BYTES, RECORD_FIXED_BYTES};
pub use split::split_train_test;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by feature-store operations other than parsing.
#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    #[error("day index {day} outside [0, {span}]")]
    DayOutOfRange { day: f64, span: f64 },
    #[error("span_days must be positive and finite, got {0}")]
    BadSpan(f64),
    #[error("train fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("feature set has no records")]
    Empty,
    #[error("record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },
    #[error("invalid feature set: {0}")]
    InvalidSet(String),
}

/// Which half of the imaged region a patch was cut from.
///
/// Wire values: `Left = 0`, `Right = 1`, `Untagged = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpatialTag {
    Left,
    Right,
    Untagged,
}

impl SpatialTag {
    pub fn to_wire(self) -> u8 {
        match self {
            SpatialTag::Left => 0,
            SpatialTag::Right => 1,
            SpatialTag::Untagged => 2,
        }
    }

    pub fn from_wire(v: u8) -> Option<Self> {
        match v {
            0 => Some(SpatialTag::Left),
            1 => Some(SpatialTag::Right),
            2 => Some(SpatialTag::Untagged),
            _ => None,
        }
    }
}

/// Granularity of the imaged unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Patch,
    Berry,
}

/// One backbone feature vector with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    /// Identity of a patch grid cell or a berry across sessions.
    pub track_id: u32,
    pub session_index: u16,
    /// Season-relative time in `[0, 1]`.
    pub time_norm: f32,
    pub variety_id: u16,
    pub fungicide: bool,
    /// Rot ground truth; only berry-scale records carry it.
    pub rot: Option<bool>,
    pub spatial_tag: SpatialTag,
    pub features: Vec<f32>,
}

impl FeatureRecord {
    /// Features widened to `f64`.
    pub fn features_f64(&self) -> Vec<f64> {
        self.features.iter().map(|&v| f64::from(v)).collect()
    }
}

/// An ordered collection of records sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub feature_dim: usize,
    pub span_days: f64,
    pub class_names: Vec<String>,
    /// Backbone identifier recorded by the extractor (free text).
    pub backbone: String,
    pub scale: Scale,
    pub records: Vec<FeatureRecord>,
}

impl FeatureSet {
    pub fn new(feature_dim: usize, span_days: f64, class_names: Vec<String>, scale: Scale) -> Self {
        Self {
            feature_dim,
            span_days,
            class_names,
            backbone: String::new(),
            scale,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// A set with the same header and the given records.
    pub fn with_records(&self, records: Vec<FeatureRecord>) -> Self {
        Self {
            feature_dim: self.feature_dim,
            span_days: self.span_days,
            class_names: self.class_names.clone(),
            backbone: self.backbone.clone(),
            scale: self.scale,
            records,
        }
    }

    /// Checks every set and record invariant.
    pub fn validate(&self) -> Result<(), StoreError> {
        if self.feature_dim == 0 || self.feature_dim > u32::MAX as usize {
            return Err(StoreError::InvalidSet(format!(
                "feature_dim {} out of range",
                self.feature_dim
            )));
        }
        if !(self.span_days.is_finite() && self.span_days > 0.0) {
            return Err(StoreError::BadSpan(self.span_days));
        }
        if self.class_names.len() > usize::from(u16::MAX) + 1 {
            return Err(StoreError::InvalidSet("too many classes".into()));
        }
        for (index, r) in self.records.iter().enumerate() {
            let fail = |reason: String| Err(StoreError::InvalidRecord { index, reason });
            if r.features.len() != self.feature_dim {
                return fail(format!(
                    "feature length {} != feature_dim {}",
                    r.features.len(),
                    self.feature_dim
                ));
            }
            if !(0.0..=1.0).contains(&r.time_norm) {
                return fail(format!("time_norm {} outside [0, 1]", r.time_norm));
            }
            if usize::from(r.variety_id) >= self.class_names.len() {
                return fail(format!(
                    "variety_id {} >= class count {}",
                    r.variety_id,
                    self.class_names.len()
                ));
            }
            if r.rot.is_some() && self.scale != Scale::Berry {
                return fail("rot label on a patch-scale record".into());
            }
            if let Some(j) = r.features.iter().position(|v| !v.is_finite()) {
                return fail(format!("feature {j} is not finite"));
            }
        }
        Ok(())
    }
}

/// Maps a day index onto season-relative time in `[0, 1]`.
pub fn normalize_time(day_index: f64, span_days: f64) -> Result<f64, StoreError> {
    if !(span_days.is_finite() && span_days > 0.0) {
        return Err(StoreError::BadSpan(span_days));
    }
    if !(0.0..=span_days).contains(&day_index) {
        return Err(StoreError::DayOutOfRange {
            day: day_index,
            span: span_days,
        });
    }
    Ok(day_index / span_days)
}
