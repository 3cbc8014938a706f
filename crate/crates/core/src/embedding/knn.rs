use std::cmp::Ordering;

use super::EmbedError;

/// Exact neighbor lists, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborLists {
    pub indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `k` points of `points` nearest to `query`, skipping index `exclude`.
pub(crate) fn nearest(points: &[Vec<f64>], query: &[f64], k: usize, exclude: Option<usize>) -> (Vec<usize>, Vec<f64>) {
    let mut cand: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| Some(j) != exclude)
        .map(|(j, p)| (euclidean(query, p), j))
        .collect();
    let k = k.min(cand.len());
    if k < cand.len() {
        cand.select_nth_unstable_by(k, by_distance_then_index);
        cand.truncate(k);
    }
    cand.sort_unstable_by(by_distance_then_index);
    cand.into_iter().map(|(d, j)| (j, d)).unzip()
}

pub(crate) fn check_points(points: &[Vec<f64>]) -> Result<usize, EmbedError> {
    let dim = points.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(EmbedError::Input("points must be non-empty vectors".into()));
    }
    if let Some(i) = points.iter().position(|p| p.len() != dim) {
        return Err(EmbedError::Input(format!("point {i} has dimension {} != {dim}", points[i].len())));
    }
    if let Some(i) = points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(EmbedError::Input(format!("point {i} has a non-finite coordinate")));
    }
    Ok(dim)
}

/// Exact Euclidean k-nearest-neighbor lists; equal distances resolve to the
/// lower index.
pub fn knn_graph(points: &[Vec<f64>], k: usize) -> Result<NeighborLists, EmbedError> {
    check_points(points)?;
    if k == 0 || k >= points.len() {
        return Err(EmbedError::Config(format!("k = {k} needs 0 < k < n = {}", points.len())));
    }
    let (indices, distances) = (0..points.len()).map(|i| nearest(points, &points[i], k, Some(i))).unzip();
    Ok(NeighborLists { indices, distances })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_example() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        let g = knn_graph(&pts, 1).unwrap();
        assert_eq!(g.indices, vec![vec![1], vec![0], vec![1]]);
        assert_eq!(g.distances, vec![vec![1.0], vec![1.0], vec![2.0]]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let pts = vec![vec![0.0], vec![-1.0], vec![1.0], vec![2.0]];
        let g = knn_graph(&pts, 1).unwrap();
        assert_eq!(g.indices[0], vec![1]);
        // From 2.0: index 2 at distance 1 only.
        assert_eq!(g.indices[3], vec![2]);
        let g = knn_graph(&pts, 2).unwrap();
        assert_eq!(g.indices[0], vec![1, 2]);
    }

    #[test]
    fn rejects_bad_k_and_points() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(matches!(knn_graph(&pts, 2), Err(EmbedError::Config(_))));
        assert!(matches!(knn_graph(&pts, 0), Err(EmbedError::Config(_))));
        assert!(knn_graph(&[vec![0.0], vec![1.0, 2.0]], 1).is_err());
        assert!(knn_graph(&[vec![f64::NAN], vec![1.0]], 1).is_err());
    }
}
