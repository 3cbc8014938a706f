use std::collections::BTreeMap;

use super::knn::NeighborLists;

/// Symmetric fuzzy neighborhood graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    pub neighbors: NeighborLists,
    /// Distance to the nearest neighbor.
    pub rho: Vec<f64>,
    /// Per-point bandwidth.
    pub sigma: Vec<f64>,
    /// Points whose bandwidth search did not converge and fell back to the
    /// mean neighbor distance.
    pub sigma_fallback: Vec<bool>,
    /// Undirected edges `(i, j, w)` with `i < j` and `w` in `(0, 1]`, sorted.
    pub edges: Vec<(usize, usize, f64)>,
}

const SEARCH_ITERATIONS: usize = 64;
const SEARCH_TOLERANCE: f64 = 1e-5;

pub(crate) fn membership(d: f64, rho: f64, sigma: f64) -> f64 {
    (-(d - rho).max(0.0) / sigma).exp()
}

/// Bandwidth for one point so that its memberships sum to `log2(k)`.
///
/// Returns `(rho, sigma, fell_back)`.
pub(crate) fn smooth_knn(distances: &[f64], k: usize) -> (f64, f64, bool) {
    let rho = distances.first().copied().unwrap_or(0.0);
    let target = (k as f64).log2();
    let psum = |sigma: f64| distances.iter().map(|&d| membership(d, rho, sigma)).sum::<f64>();
    let (mut lo, mut hi, mut mid) = (0.0, f64::INFINITY, 1.0);
    for _ in 0..SEARCH_ITERATIONS {
        let s = psum(mid);
        if (s - target).abs() < SEARCH_TOLERANCE {
            return (rho, mid, false);
        }
        if s > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
        }
    }
    let mean = distances.iter().sum::<f64>() / distances.len().max(1) as f64;
    (rho, if mean > 0.0 { mean } else { 1.0 }, true)
}

/// Fuzzy memberships from exact neighbor lists, symmetrized with the
/// probabilistic union `a + a' - a a'`.
pub fn fuzzy_weights(neighbors: &NeighborLists, k: usize) -> FuzzyGraph {
    let n = neighbors.indices.len();
    let mut rho = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut sigma_fallback = Vec::with_capacity(n);
    let mut directed: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for i in 0..n {
        let (r, s, fb) = smooth_knn(&neighbors.distances[i], k);
        rho.push(r);
        sigma.push(s);
        sigma_fallback.push(fb);
        for (&j, &d) in neighbors.indices[i].iter().zip(&neighbors.distances[i]) {
            let w = membership(d, r, s);
            let entry = directed.entry((i.min(j), i.max(j))).or_insert((0.0, 0.0));
            if i < j {
                entry.0 = w;
            } else {
                entry.1 = w;
            }
        }
    }
    let edges = directed
        .into_iter()
        .map(|((i, j), (a, b))| (i, j, a + b - a * b))
        .filter(|&(_, _, w)| w > 0.0)
        .collect();
    FuzzyGraph {
        neighbors: neighbors.clone(),
        rho,
        sigma,
        sigma_fallback,
        edges,
    }
}
