use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TrajError;
use crate::embedding::{CoordRow, Split};

/// One plant's embedded path, ordered by session.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u32,
    pub variety_id: u16,
    pub fungicide: bool,
    points: Vec<(u16, [f64; 2])>,
}

impl Track {
    pub fn new(track_id: u32, variety_id: u16, fungicide: bool, points: Vec<(u16, [f64; 2])>) -> Result<Self, TrajError> {
        if points.len() < 2 {
            return Err(TrajError::Input(format!("track {track_id} has {} points, need at least 2", points.len())));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(TrajError::Input(format!("track {track_id} sessions are not strictly increasing")));
        }
        if points.iter().any(|(_, p)| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(TrajError::Input(format!("track {track_id} has a non-finite point")));
        }
        Ok(Self {
            track_id,
            variety_id,
            fungicide,
            points,
        })
    }

    pub fn points(&self) -> &[(u16, [f64; 2])] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A position paired with the displacement `eps` steps later on its track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PVSample {
    pub x: [f64; 2],
    pub v: [f64; 2],
    pub track_id: u32,
    /// Session index of `x`.
    pub t: u16,
}

impl PVSample {
    /// The stacked vector `[x v]`.
    pub fn stacked(&self) -> Vec<f64> {
        vec![self.x[0], self.x[1], self.v[0], self.v[1]]
    }
}

/// `v_t = x_{t+eps} - x_t` for `t` in `[0, T - eps)`, indexing positions along
/// the track.
pub fn compute_velocities(track: &Track, eps: usize) -> Result<Vec<PVSample>, TrajError> {
    if eps == 0 {
        return Err(TrajError::Config("eps must be at least 1".into()));
    }
    let n = track.points.len();
    if n <= eps {
        return Err(TrajError::InsufficientLength {
            track_id: track.track_id,
            len: n,
            eps,
        });
    }
    Ok((0..n - eps)
        .map(|t| {
            let (session, x) = track.points[t];
            let y = track.points[t + eps].1;
            PVSample {
                x,
                v: [y[0] - x[0], y[1] - x[1]],
                track_id: track.track_id,
                t: session,
            }
        })
        .collect())
}

/// Groups coordinate rows into tracks, keeping only rows of `split` when
/// given. Tracks come out in ascending id order.
pub fn tracks_from_rows(rows: &[CoordRow], split: Option<Split>) -> Result<Vec<Track>, TrajError> {
    let mut by_id: BTreeMap<u32, (u16, bool, Vec<(u16, [f64; 2])>)> = BTreeMap::new();
    for r in rows.iter().filter(|r| split.is_none_or(|s| r.split == s)) {
        let entry = by_id.entry(r.track_id).or_insert((r.variety_id, r.fungicide == 1, Vec::new()));
        if entry.0 != r.variety_id || entry.1 != (r.fungicide == 1) {
            return Err(TrajError::Input(format!("track {} mixes varieties or treatments", r.track_id)));
        }
        entry.2.push((r.session_index, [r.x, r.y]));
    }
    by_id
        .into_iter()
        .map(|(id, (variety, fungicide, mut points))| {
            points.sort_by_key(|p| p.0);
            Track::new(id, variety, fungicide, points)
        })
        .collect()
}
