//! Synthetic time-lapse feature sets with known planar ground truth.
//!
//! Every class follows a 2D curve (line, arc or S-curve) placed in its own
//! horizontal band, with the whole layout centred on the origin. Track points are lifted into feature space through a
//! random map with orthonormal columns, so pairwise distances survive the
//! lift exactly, and i.i.d. Gaussian noise is added on top.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_store::{FeatureRecord, FeatureSet, Scale, SpatialTag};

/// Vertical distance between the bands of consecutive classes.
pub const CLASS_SPACING: f64 = 3.0;
/// Shift applied to every fungicide-treated track.
pub const FUNGICIDE_OFFSET: [f64; 2] = [0.0, 0.8];
/// Feature-space step along the extra lift column once a berry rots.
const ROT_SHIFT: f64 = 0.5;
/// Fraction of the season after which rotting berries carry the rot label.
const ROT_ONSET: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveFamily {
    Line,
    Arc,
    S,
}

impl CurveFamily {
    /// Point at progress `s` in `[0, 1]`; `amp` scales the bend.
    fn point(self, s: f64, amp: f64) -> [f64; 2] {
        match self {
            CurveFamily::Line => [4.0 * s, 0.5 * amp * s],
            CurveFamily::Arc => [2.0 - 2.0 * (PI * s).cos(), amp * (PI * s).sin()],
            CurveFamily::S => [4.0 * s, 0.5 * amp * (2.0 * PI * s).sin()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub tracks_per_class: usize,
    pub n_sessions: usize,
    pub feature_dim: usize,
    pub noise_std: f64,
    /// Curve family per class, cycled; empty means line, arc, S, line, ...
    pub families: Vec<CurveFamily>,
    /// Seed of the feature-space lift, kept apart from the sampling seed.
    pub lift_seed: u64,
    pub fungicide_fraction: f64,
    /// Fraction of tracks that rot; only used at berry scale.
    pub rot_fraction: f64,
    pub scale: Scale,
    pub span_days: f64,
    /// Standard deviation of the per-track 2D offset.
    pub track_jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_classes: 4,
            tracks_per_class: 8,
            n_sessions: 40,
            feature_dim: 64,
            noise_std: 0.05,
            families: Vec::new(),
            lift_seed: 0,
            fungicide_fraction: 0.5,
            rot_fraction: 0.5,
            scale: Scale::Patch,
            span_days: 108.0,
            track_jitter: 0.05,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.into()));
        if self.n_classes == 0 || self.n_classes > usize::from(u16::MAX) {
            return bad("n_classes must be between 1 and 65535");
        }
        if self.tracks_per_class == 0 {
            return bad("tracks_per_class must be at least 1");
        }
        if self.n_sessions < 3 || self.n_sessions > usize::from(u16::MAX) {
            return bad("n_sessions must be between 3 and 65535");
        }
        if self.feature_dim < 8 {
            return bad("feature_dim must be at least 8");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be finite and non-negative");
        }
        if !(self.track_jitter >= 0.0 && self.track_jitter.is_finite()) {
            return bad("track_jitter must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.fungicide_fraction) || !(0.0..=1.0).contains(&self.rot_fraction) {
            return bad("fractions must lie in [0, 1]");
        }
        if !(self.span_days > 0.0 && self.span_days.is_finite()) {
            return bad("span_days must be positive");
        }
        if self.n_classes * self.tracks_per_class > u32::MAX as usize {
            return bad("too many tracks");
        }
        Ok(())
    }

    pub fn family(&self, class: usize) -> CurveFamily {
        if self.families.is_empty() {
            [CurveFamily::Line, CurveFamily::Arc, CurveFamily::S][class % 3]
        } else {
            self.families[class % self.families.len()]
        }
    }

    /// Noise-free class curve at progress `s`, before track offsets.
    pub fn class_point(&self, class: usize, fungicide: bool, s: f64) -> [f64; 2] {
        let amp = 1.0 + 0.2 * (class / 3) as f64;
        let p = self.family(class).point(s, amp);
        let shift = if fungicide { FUNGICIDE_OFFSET } else { [0.0, 0.0] };
        let cy = 0.5 * (CLASS_SPACING * (self.n_classes as f64 - 1.0) + FUNGICIDE_OFFSET[1]);
        [p[0] + shift[0] - 2.0, p[1] + CLASS_SPACING * class as f64 + shift[1] - cy]
    }
}

/// The 2D path a synthetic track was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrack {
    pub track_id: u32,
    pub variety_id: u16,
    pub fungicide: bool,
    /// One point per session.
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub tracks: Vec<TruthTrack>,
    /// `feature_dim x 3` lift with orthonormal columns; the third column
    /// carries the rot signal.
    pub lift: DMatrix<f64>,
}

fn orthonormal_lift(dim: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(dim, cols, |_, _| StandardNormal.sample(&mut rng));
    m.qr().q()
}

/// Generates `n_classes * tracks_per_class * n_sessions` records, ordered by
/// track then session. Deterministic for a given config and seed.
pub fn gen_synthetic(cfg: &SynthConfig, seed: u64) -> Result<(FeatureSet, GroundTruth), SynthError> {
    cfg.validate()?;
    let lift = orthonormal_lift(cfg.feature_dim, 3, cfg.lift_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| SynthError::Config(e.to_string()))?;
    let jitter = Normal::new(0.0, cfg.track_jitter).map_err(|e| SynthError::Config(e.to_string()))?;
    let berry = cfg.scale == Scale::Berry;
    let n_fungicide = (cfg.fungicide_fraction * cfg.tracks_per_class as f64).round() as usize;
    let n_rot = (cfg.rot_fraction * cfg.tracks_per_class as f64).round() as usize;
    let last = (cfg.n_sessions - 1) as f64;

    let class_names = (0..cfg.n_classes).map(|c| format!("class_{c}")).collect();
    let mut set = FeatureSet::new(cfg.feature_dim, cfg.span_days, class_names, cfg.scale);
    set.backbone = "synthetic".into();
    let mut tracks = Vec::with_capacity(cfg.n_classes * cfg.tracks_per_class);
    for class in 0..cfg.n_classes {
        for j in 0..cfg.tracks_per_class {
            let track_id = (class * cfg.tracks_per_class + j) as u32;
            let fungicide = j < n_fungicide;
            // Rotting tracks are spread across both treatments.
            let rots = berry && (j + 1) * n_rot / cfg.tracks_per_class > j * n_rot / cfg.tracks_per_class;
            let offset = [jitter.sample(&mut rng), jitter.sample(&mut rng)];
            let mut points = Vec::with_capacity(cfg.n_sessions);
            for t in 0..cfg.n_sessions {
                let s = t as f64 / last;
                let c = cfg.class_point(class, fungicide, s);
                let p = [c[0] + offset[0], c[1] + offset[1]];
                let rot_now = rots && s >= ROT_ONSET;
                let r = if rot_now { ROT_SHIFT } else { 0.0 };
                let features = (0..cfg.feature_dim)
                    .map(|d| (lift[(d, 0)] * p[0] + lift[(d, 1)] * p[1] + lift[(d, 2)] * r + noise.sample(&mut rng)) as f32)
                    .collect();
                set.records.push(FeatureRecord {
                    track_id,
                    session_index: t as u16,
                    time_norm: t as f32 / last as f32,
                    variety_id: class as u16,
                    fungicide,
                    rot: berry.then_some(rot_now),
                    spatial_tag: SpatialTag::Untagged,
                    features,
                });
                points.push(p);
            }
            tracks.push(TruthTrack {
                track_id,
                variety_id: class as u16,
                fungicide,
                points,
            });
        }
    }
    Ok((set, GroundTruth { tracks, lift }))
}
