//! Position-conditioned velocity model over embedded tracks.
//!
//! Tracks give `(x_t, x_{t+eps} - x_t)` pairs; a Gaussian mixture over the
//! stacked 4-vector is conditioned on position to get a velocity field, and
//! rollouts integrate that field from a start point.

mod conditional;
mod mixture;
mod rollout;
mod velocity;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conditional::{condition_velocity, ConditionalVelocity, VelocityComponent};
pub use mixture::{fit_gmm, Component, FitDiagnostics, GaussianMixture, MixturePrior};
pub use rollout::{default_steps, read_rollout_csv, rollout, write_rollout_csv, Rollout, RolloutMode, RolloutStatus};
pub use velocity::{compute_velocities, tracks_from_rows, PVSample, Track};

const FORMAT: &str = "tlt-trajectory-model";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("track {track_id} has {len} points, needs more than eps = {eps}")]
    InsufficientLength { track_id: u32, len: usize, eps: usize },
    #[error("numeric failure in component {component}: {reason}")]
    Numeric { component: usize, reason: String },
    #[error("position ({}, {}) is outside the mixture's support", x0[0], x0[1])]
    OutOfSupport { x0: [f64; 2] },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Fits a mixture to the stacked `[x v]` vectors of `samples`.
pub fn fit_bgmm(samples: &[PVSample], k: usize, seed: u64, prior: &MixturePrior) -> Result<GaussianMixture, TrajError> {
    let data: Vec<Vec<f64>> = samples.iter().map(PVSample::stacked).collect();
    fit_gmm(&data, k, seed, prior)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajConfig {
    pub k: usize,
    pub eps: usize,
    pub seed: u64,
    /// One mixture over all tracks instead of one per (variety, fungicide).
    pub pooled: bool,
    pub prior: MixturePrior,
}

impl Default for TrajConfig {
    fn default() -> Self {
        Self {
            k: 8,
            eps: 1,
            seed: 0,
            pooled: false,
            prior: MixturePrior::default(),
        }
    }
}

/// Which tracks a mixture was fitted on; both fields empty means pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub variety_id: Option<u16>,
    pub fungicide: Option<bool>,
}

impl GroupKey {
    pub const POOLED: Self = Self {
        variety_id: None,
        fungicide: None,
    };

    pub fn new(variety_id: u16, fungicide: bool) -> Self {
        Self {
            variety_id: Some(variety_id),
            fungicide: Some(fungicide),
        }
    }

    fn seed_offset(&self) -> u64 {
        match (self.variety_id, self.fungicide) {
            (Some(v), Some(f)) => 1 + 2 * u64::from(v) + u64::from(f),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupModel {
    pub key: GroupKey,
    pub n_tracks: usize,
    pub n_samples: usize,
    pub mixture: GaussianMixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryModel {
    format: String,
    pub config: TrajConfig,
    /// Longest track length seen at fit time.
    pub n_sessions: usize,
    pub groups: Vec<GroupModel>,
}

/// Fits one mixture per (variety, fungicide) group, or a single pooled one.
pub fn fit_trajectory_model(tracks: &[Track], cfg: &TrajConfig) -> Result<TrajectoryModel, TrajError> {
    if tracks.is_empty() {
        return Err(TrajError::Input("no tracks to fit".into()));
    }
    let mut grouped: BTreeMap<GroupKey, Vec<&Track>> = BTreeMap::new();
    for t in tracks {
        let key = if cfg.pooled {
            GroupKey::POOLED
        } else {
            GroupKey::new(t.variety_id, t.fungicide)
        };
        grouped.entry(key).or_default().push(t);
    }
    let mut groups = Vec::with_capacity(grouped.len());
    for (key, members) in grouped {
        let mut samples = Vec::new();
        for t in &members {
            samples.extend(compute_velocities(t, cfg.eps)?);
        }
        let mixture = fit_bgmm(&samples, cfg.k, cfg.seed.wrapping_add(key.seed_offset()), &cfg.prior).map_err(|e| match e {
            TrajError::Config(msg) => TrajError::Config(format!("group {key:?}: {msg}")),
            other => other,
        })?;
        groups.push(GroupModel {
            key,
            n_tracks: members.len(),
            n_samples: samples.len(),
            mixture,
        });
    }
    Ok(TrajectoryModel {
        format: FORMAT.into(),
        config: *cfg,
        n_sessions: tracks.iter().map(Track::len).max().unwrap_or(0),
        groups,
    })
}

impl TrajectoryModel {
    /// The mixture for a group, falling back to the pooled one.
    pub fn group(&self, variety_id: u16, fungicide: bool) -> Option<&GroupModel> {
        let key = GroupKey::new(variety_id, fungicide);
        self.groups
            .iter()
            .find(|g| g.key == key)
            .or_else(|| self.groups.iter().find(|g| g.key == GroupKey::POOLED))
    }

    /// A model holding only the group at `index`.
    pub fn only_group(&self, index: usize) -> Option<TrajectoryModel> {
        let group = self.groups.get(index)?.clone();
        Some(TrajectoryModel {
            groups: vec![group],
            ..self.clone()
        })
    }

    pub fn to_writer<W: Write>(&self, w: W) -> Result<(), TrajError> {
        serde_json::to_writer_pretty(w, self).map_err(|e| TrajError::Io(e.to_string()))
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Self, TrajError> {
        let model: Self = serde_json::from_reader(r).map_err(|e| TrajError::Input(e.to_string()))?;
        if model.format != FORMAT {
            return Err(TrajError::Input(format!("unexpected format tag {:?}", model.format)));
        }
        if model.config.eps == 0 || model.groups.is_empty() {
            return Err(TrajError::Input("trajectory model needs eps >= 1 and at least one group".into()));
        }
        for g in &model.groups {
            if g.mixture.dim() != 4 {
                return Err(TrajError::Input(format!("group {:?} mixture is not 4-dimensional", g.key)));
            }
            GaussianMixture::new(4, g.mixture.components().to_vec())?;
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_track(id: u32, variety: u16, fungicide: bool, offset: f64) -> Track {
        let pts = (0..10).map(|t| (t as u16, [t as f64 + offset, variety as f64 + 0.01 * (t * t) as f64 + offset])).collect();
        Track::new(id, variety, fungicide, pts).unwrap()
    }

    fn tracks() -> Vec<Track> {
        let mut out = Vec::new();
        for v in 0..2u16 {
            for f in [false, true] {
                for j in 0..3 {
                    out.push(line_track(out.len() as u32, v, f, 0.1 * j as f64));
                }
            }
        }
        out
    }

    #[test]
    fn one_group_per_variety_and_treatment() {
        let cfg = TrajConfig {
            k: 2,
            ..TrajConfig::default()
        };
        let model = fit_trajectory_model(&tracks(), &cfg).unwrap();
        assert_eq!(model.groups.len(), 4);
        assert!(model.groups.iter().all(|g| g.n_tracks == 3 && g.n_samples == 27));
        assert_eq!(model.n_sessions, 10);
        assert_eq!(model.group(1, true).unwrap().key, GroupKey::new(1, true));
        assert!(model.group(5, false).is_none());
        let single = model.only_group(2).unwrap();
        assert_eq!(single.groups, vec![model.groups[2].clone()]);
        assert!(model.only_group(4).is_none());
    }

    #[test]
    fn pooled_fit_and_fallback() {
        let cfg = TrajConfig {
            k: 2,
            pooled: true,
            ..TrajConfig::default()
        };
        let model = fit_trajectory_model(&tracks(), &cfg).unwrap();
        assert_eq!(model.groups.len(), 1);
        assert_eq!(model.group(7, false).unwrap().key, GroupKey::POOLED);
    }

    #[test]
    fn persistence_round_trip() {
        let model = fit_trajectory_model(&tracks(), &TrajConfig { k: 2, ..TrajConfig::default() }).unwrap();
        let mut buf = Vec::new();
        model.to_writer(&mut buf).unwrap();
        assert_eq!(TrajectoryModel::from_reader(&buf[..]).unwrap(), model);
        let mut value: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        value["groups"][0]["mixture"]["components"][0]["weight"] = 5.0.into();
        assert!(TrajectoryModel::from_reader(value.to_string().as_bytes()).is_err());
    }

    #[test]
    fn too_many_components_for_a_group() {
        let cfg = TrajConfig {
            k: 100,
            ..TrajConfig::default()
        };
        assert!(matches!(fit_trajectory_model(&tracks(), &cfg), Err(TrajError::Config(_))));
    }
}
