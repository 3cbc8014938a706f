//! Stochastic gradient layout with negative sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CLIP: f64 = 4.0;
const REPULSION_EPS: f64 = 0.001;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Curve {
    pub a: f64,
    pub b: f64,
}

impl Curve {
    /// Attraction coefficient for squared distance `d2`.
    fn attract(&self, d2: f64) -> f64 {
        if d2 > 0.0 {
            -2.0 * self.a * self.b * d2.powf(self.b - 1.0) / (self.a * d2.powf(self.b) + 1.0)
        } else {
            0.0
        }
    }

    /// Repulsion coefficient for squared distance `d2`.
    fn repel(&self, d2: f64) -> f64 {
        if d2 > 0.0 {
            2.0 * self.b / ((REPULSION_EPS + d2) * (self.a * d2.powf(self.b) + 1.0))
        } else {
            0.0
        }
    }
}

fn clip(v: f64) -> f64 {
    v.clamp(-CLIP, CLIP)
}

fn d2(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
}

/// Per-edge sampling schedule: an edge of weight `w` is visited every
/// `max_w / w` epochs. Edges below `max_w / epochs` are never visited.
struct Schedule {
    per_sample: Vec<f64>,
    per_negative: Vec<f64>,
    next_sample: Vec<f64>,
    next_negative: Vec<f64>,
}

impl Schedule {
    fn new(weights: &[f64], epochs: usize, negative_samples: usize) -> Self {
        let max_w = weights.iter().copied().fold(0.0, f64::max);
        let per_sample: Vec<f64> = weights
            .iter()
            .map(|&w| if w >= max_w / epochs as f64 && w > 0.0 { max_w / w } else { f64::INFINITY })
            .collect();
        let per_negative: Vec<f64> = per_sample.iter().map(|&p| p / negative_samples.max(1) as f64).collect();
        Self {
            next_sample: per_sample.clone(),
            next_negative: per_negative.clone(),
            per_sample,
            per_negative,
        }
    }

    /// Whether edge `e` fires in `epoch`; if so returns its negative-sample count.
    fn fire(&mut self, e: usize, epoch: f64, negative_samples: usize) -> Option<usize> {
        if self.next_sample[e] > epoch {
            return None;
        }
        self.next_sample[e] += self.per_sample[e];
        let n_neg = if negative_samples == 0 {
            0
        } else {
            ((epoch - self.next_negative[e]) / self.per_negative[e]).max(0.0) as usize
        };
        self.next_negative[e] += n_neg as f64 * self.per_negative[e];
        Some(n_neg)
    }
}

pub(crate) struct LayoutParams {
    pub curve: Curve,
    pub epochs: usize,
    pub negative_samples: usize,
    pub learning_rate: f64,
}

/// Optimizes `coords` in place over both directions of every undirected edge.
pub(crate) fn optimize_layout(coords: &mut [[f64; 2]], edges: &[(usize, usize, f64)], params: &LayoutParams, rng: &mut ChaCha8Rng) {
    let n = coords.len();
    let directed: Vec<(usize, usize, f64)> = edges.iter().flat_map(|&(i, j, w)| [(i, j, w), (j, i, w)]).collect();
    let weights: Vec<f64> = directed.iter().map(|e| e.2).collect();
    let mut schedule = Schedule::new(&weights, params.epochs, params.negative_samples);
    for epoch in 0..params.epochs {
        let alpha = params.learning_rate * (1.0 - epoch as f64 / params.epochs as f64);
        let now = epoch as f64;
        for (e, &(head, tail, _)) in directed.iter().enumerate() {
            let Some(n_neg) = schedule.fire(e, now, params.negative_samples) else {
                continue;
            };
            let (cur, oth) = (coords[head], coords[tail]);
            let c = params.curve.attract(d2(cur, oth));
            for d in 0..2 {
                let g = clip(c * (cur[d] - oth[d])) * alpha;
                coords[head][d] += g;
                coords[tail][d] -= g;
            }
            for _ in 0..n_neg {
                let k = rng.random_range(0..n);
                if k == head {
                    continue;
                }
                let (cur, oth) = (coords[head], coords[k]);
                let c = params.curve.repel(d2(cur, oth));
                if c > 0.0 {
                    for d in 0..2 {
                        coords[head][d] += clip(c * (cur[d] - oth[d])) * alpha;
                    }
                }
            }
        }
    }
}

/// Refines one new point against frozen reference coordinates.
///
/// `neighbors` pairs reference indices with membership weights. During
/// fitting every edge is visited from both ends, so each attraction step is
/// applied twice here to keep the same balance against negative samples.
pub(crate) fn refine_point(
    start: [f64; 2],
    reference: &[[f64; 2]],
    neighbors: &[(usize, f64)],
    params: &LayoutParams,
    seed: u64,
) -> [f64; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = start;
    let weights: Vec<f64> = neighbors.iter().map(|e| e.1).collect();
    let mut schedule = Schedule::new(&weights, params.epochs, params.negative_samples);
    let n = reference.len();
    for epoch in 0..params.epochs {
        let alpha = params.learning_rate * (1.0 - epoch as f64 / params.epochs as f64);
        let now = epoch as f64;
        for (e, &(j, _)) in neighbors.iter().enumerate() {
            let Some(n_neg) = schedule.fire(e, now, params.negative_samples) else {
                continue;
            };
            let oth = reference[j];
            for _ in 0..2 {
                let c = params.curve.attract(d2(p, oth));
                let cur = p;
                for d in 0..2 {
                    p[d] += clip(c * (cur[d] - oth[d])) * alpha;
                }
            }
            for _ in 0..n_neg {
                let oth = reference[rng.random_range(0..n)];
                let cur = p;
                let c = params.curve.repel(d2(cur, oth));
                if c > 0.0 {
                    for d in 0..2 {
                        p[d] += clip(c * (cur[d] - oth[d])) * alpha;
                    }
                }
            }
        }
    }
    p
}
