use nalgebra::{Cholesky, DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mixture::{log_sum_exp, GaussianMixture};
use super::TrajError;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityComponent {
    pub weight: f64,
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
}

/// `P(V | X = x0)` as a mixture over velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalVelocity {
    pub components: Vec<VelocityComponent>,
}

impl ConditionalVelocity {
    pub fn mean(&self) -> [f64; 2] {
        self.components.iter().fold([0.0; 2], |acc, c| {
            [acc[0] + c.weight * c.mean[0], acc[1] + c.weight * c.mean[1]]
        })
    }

    /// One draw: pick a component by weight, then sample its Gaussian.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        let mut u: f64 = rng.random();
        let mut chosen = &self.components[self.components.len() - 1];
        for c in &self.components {
            if u < c.weight {
                chosen = c;
                break;
            }
            u -= c.weight;
        }
        let cov = Matrix2::new(chosen.covariance[0][0], chosen.covariance[0][1], chosen.covariance[1][0], chosen.covariance[1][1]);
        let l = Cholesky::new(cov).map(|c| c.l()).unwrap_or_else(Matrix2::zeros);
        let z = Vector2::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
        let v = l * z;
        [chosen.mean[0] + v[0], chosen.mean[1] + v[1]]
    }
}

/// Conditions a mixture over stacked `[x v]` (dimension 4) on `x = x0`.
pub fn condition_velocity(gmm: &GaussianMixture, x0: [f64; 2]) -> Result<ConditionalVelocity, TrajError> {
    if gmm.dim() != 4 {
        return Err(TrajError::Input(format!("expected a 4-dimensional [x v] mixture, got {}", gmm.dim())));
    }
    if !(x0[0].is_finite() && x0[1].is_finite()) {
        return Err(TrajError::Input("query position is not finite".into()));
    }
    let x0 = DVector::from_column_slice(&x0);
    let mut log_w = Vec::with_capacity(gmm.n_components());
    let mut parts = Vec::with_capacity(gmm.n_components());
    for (k, c) in gmm.components().iter().enumerate() {
        let s = DMatrix::from_row_slice(4, 4, &c.covariance);
        let mu = DVector::from_column_slice(&c.mean);
        let s_xx = s.view((0, 0), (2, 2)).into_owned();
        let s_vx = s.view((2, 0), (2, 2)).into_owned();
        let s_vv = s.view((2, 2), (2, 2)).into_owned();
        let chol = Cholesky::new(s_xx).ok_or_else(|| TrajError::Numeric {
            component: k,
            reason: "position block is singular".into(),
        })?;
        let diff = &x0 - mu.rows(0, 2);
        let solved = chol.solve(&diff);
        let mean = mu.rows(2, 2) + &s_vx * &solved;
        let cov = &s_vv - &s_vx * chol.solve(&s_vx.transpose());
        let cov = (&cov + cov.transpose()) * 0.5;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        log_w.push(c.weight.ln() - 0.5 * (2.0 * LN_2PI + log_det + diff.dot(&solved)));
        parts.push((mean, cov));
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.exp() == 0.0 {
        return Err(TrajError::OutOfSupport { x0: [x0[0], x0[1]] });
    }
    let z = log_sum_exp(&log_w);
    let components = log_w
        .iter()
        .zip(parts)
        .map(|(lw, (mean, cov))| VelocityComponent {
            weight: (lw - z).exp(),
            mean: [mean[0], mean[1]],
            covariance: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
        })
        .collect();
    Ok(ConditionalVelocity { components })
}
