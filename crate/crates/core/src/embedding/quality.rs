//! Embedding quality scores.

use super::knn::{euclidean, nearest};
use super::EmbedError;

/// Neighborhood preservation of `low` relative to `high`, in `[0, 1]`.
///
/// Points that enter a k-neighborhood in the embedding without being
/// neighbors in the original space are penalized by how far down the
/// original ranking they sit.
pub fn trustworthiness(high: &[Vec<f64>], low: &[Vec<f64>], k: usize) -> Result<f64, EmbedError> {
    let n = high.len();
    if low.len() != n {
        return Err(EmbedError::Input(format!("{} high points but {} low points", n, low.len())));
    }
    if k == 0 || 2 * k >= n {
        return Err(EmbedError::Config(format!("trustworthiness needs 0 < k < n/2, got k = {k}, n = {n}")));
    }
    let mut penalty = 0.0;
    for i in 0..n {
        // Full ranking in the original space; rank 1 is the nearest neighbor.
        let (order, _) = nearest(high, &high[i], n - 1, Some(i));
        let mut rank = vec![0usize; n];
        for (r, &j) in order.iter().enumerate() {
            rank[j] = r + 1;
        }
        let (low_nn, _) = nearest(low, &low[i], k, Some(i));
        for j in low_nn {
            if rank[j] > k {
                penalty += (rank[j] - k) as f64;
            }
        }
    }
    let (n, k) = (n as f64, k as f64);
    Ok(1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty)
}

/// Mean silhouette coefficient. Points in singleton clusters score 0.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> Result<f64, EmbedError> {
    let n = points.len();
    if labels.len() != n {
        return Err(EmbedError::Input(format!("{n} points but {} labels", labels.len())));
    }
    let n_labels = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_labels];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(EmbedError::Input("silhouette needs at least two clusters".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        if sizes[labels[i]] < 2 {
            continue;
        }
        let mut sums = vec![0.0; n_labels];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += euclidean(&points[i], &points[j]);
            }
        }
        let a = sums[labels[i]] / (sizes[labels[i]] - 1) as f64;
        let b = (0..n_labels)
            .filter(|&l| l != labels[i] && sizes[l] > 0)
            .map(|l| sums[l] / sizes[l] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_embedding_is_fully_trustworthy() {
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * i) as f64 * 0.01]).collect();
        assert_eq!(trustworthiness(&pts, &pts, 5).unwrap(), 1.0);
    }

    #[test]
    fn reversed_line_is_trustworthy_but_shuffled_is_not() {
        let high: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let reversed: Vec<Vec<f64>> = (0..40).map(|i| vec![-(i as f64)]).collect();
        assert_eq!(trustworthiness(&high, &reversed, 5).unwrap(), 1.0);
        // Interleave the two halves so neighbors come from far away.
        let shuffled: Vec<Vec<f64>> = (0..40).map(|i| vec![((i * 17) % 40) as f64]).collect();
        assert!(trustworthiness(&high, &shuffled, 5).unwrap() < 0.7);
    }

    #[test]
    fn silhouette_hand_example() {
        // Two clusters on a line: {0, 1} and {10, 11}.
        let pts = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]];
        let s = silhouette(&pts, &[0, 0, 1, 1]).unwrap();
        // Point 0: a = 1, b = 10.5 -> 9.5/10.5; point 1: a = 1, b = 9.5 -> 8.5/9.5.
        let expected = (2.0 * (9.5 / 10.5) + 2.0 * (8.5 / 9.5)) / 4.0;
        assert!((s - expected).abs() < 1e-12);
        assert!(silhouette(&pts, &[0, 0, 0, 0]).is_err());
    }
}
