use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conditional::condition_velocity;
use super::mixture::GaussianMixture;
use super::TrajError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloutMode {
    Mean,
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RolloutStatus {
    Complete,
    /// Conditioning failed after `completed` steps; the path stops there.
    Truncated { completed: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// `x0` followed by one point per completed step.
    pub points: Vec<[f64; 2]>,
    pub status: RolloutStatus,
    /// Sessions spanned by each step.
    pub eps: usize,
}

/// Steps needed to cover a season of `n_sessions` sessions.
pub fn default_steps(n_sessions: usize, eps: usize) -> usize {
    n_sessions.saturating_sub(1).div_ceil(eps.max(1))
}

/// Integrates `x <- x + v` with `v` the conditional mean or a seeded draw.
pub fn rollout(gmm: &GaussianMixture, x0: [f64; 2], steps: usize, mode: RolloutMode, seed: u64, eps: usize) -> Result<Rollout, TrajError> {
    if steps == 0 {
        return Err(TrajError::Config("steps must be at least 1".into()));
    }
    if eps == 0 {
        return Err(TrajError::Config("eps must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(steps + 1);
    points.push(x0);
    let mut x = x0;
    for step in 0..steps {
        let cond = match condition_velocity(gmm, x) {
            Ok(c) => c,
            Err(e @ TrajError::OutOfSupport { .. }) => {
                return Ok(Rollout {
                    points,
                    status: RolloutStatus::Truncated {
                        completed: step,
                        reason: e.to_string(),
                    },
                    eps,
                })
            }
            Err(e) => return Err(e),
        };
        let v = match mode {
            RolloutMode::Mean => cond.mean(),
            RolloutMode::Sample => cond.sample(&mut rng),
        };
        x = [x[0] + v[0], x[1] + v[1]];
        points.push(x);
    }
    Ok(Rollout {
        points,
        status: RolloutStatus::Complete,
        eps,
    })
}

#[derive(Serialize, Deserialize)]
struct Row {
    step: usize,
    x: f64,
    y: f64,
}

/// Writes `step,x,y` rows with a header.
pub fn write_rollout_csv<W: Write>(rollout: &Rollout, sink: W) -> Result<(), TrajError> {
    let mut w = csv::Writer::from_writer(sink);
    for (step, p) in rollout.points.iter().enumerate() {
        w.serialize(Row { step, x: p[0], y: p[1] }).map_err(|e| TrajError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| TrajError::Io(e.to_string()))
}

/// Reads the points of a rollout written by [`write_rollout_csv`]. Steps must
/// count up from 0.
pub fn read_rollout_csv<R: Read>(source: R) -> Result<Vec<[f64; 2]>, TrajError> {
    let mut points = Vec::new();
    for (i, row) in csv::Reader::from_reader(source).deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| TrajError::Input(e.to_string()))?;
        if row.step != i {
            return Err(TrajError::Input(format!("row {i} has step {}", row.step)));
        }
        if !(row.x.is_finite() && row.y.is_finite()) {
            return Err(TrajError::Input(format!("row {i} has a non-finite point")));
        }
        points.push([row.x, row.y]);
    }
    Ok(points)
}
