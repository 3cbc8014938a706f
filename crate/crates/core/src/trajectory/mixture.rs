//! Gaussian mixtures fitted by penalized (MAP) expectation-maximization.
//!
//! The objective is
//! `sum_i log sum_k w_k N(x_i | mu_k, S_k) + alpha sum_k log w_k - (delta N / 2) sum_k tr(S_k^-1)`.
//! The weight term acts as `alpha` pseudo-counts per component and the trace
//! term as an inverse-Wishart-style ridge, so every M-step is exact and the
//! objective never decreases.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrajError;

/// Components with less responsibility mass than this keep their previous
/// mean and covariance for the iteration.
const MIN_MASS: f64 = 1e-10;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixturePrior {
    /// Pseudo-count per component; `None` means `1 / K`.
    pub concentration: Option<f64>,
    /// Covariance ridge `delta`.
    pub ridge: f64,
    /// Components lighter than this are pruned after convergence.
    pub min_weight: f64,
    pub max_iter: usize,
    /// Relative change in the objective that counts as converged.
    pub tol: f64,
}

impl Default for MixturePrior {
    fn default() -> Self {
        Self {
            concentration: None,
            ridge: 1e-6,
            min_weight: 1e-3,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

impl MixturePrior {
    fn validate(&self) -> Result<(), TrajError> {
        if let Some(a) = self.concentration {
            if !(a.is_finite() && a > 0.0) {
                return Err(TrajError::Config(format!("concentration {a} must be positive")));
            }
        }
        if !(self.ridge.is_finite() && self.ridge > 0.0) {
            return Err(TrajError::Config(format!("ridge {} must be positive", self.ridge)));
        }
        if !(0.0..1.0).contains(&self.min_weight) {
            return Err(TrajError::Config(format!("min_weight {} must be in [0, 1)", self.min_weight)));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(TrajError::Config(format!("tolerance {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major `dim x dim`.
    pub covariance: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Penalized log-likelihood of the returned (pruned) mixture.
    pub objective: f64,
    /// Objective before the first M-step and after each one.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub pruned: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<Component>,
    diagnostics: FitDiagnostics,
}

/// Cached Cholesky factor of one component.
struct Factor {
    log_weight: f64,
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl Factor {
    fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let diff = x - &self.mean;
        let z = self.chol.l_dirty().solve_lower_triangular(&diff).expect("nonsingular factor");
        -0.5 * (x.len() as f64 * LN_2PI + self.log_det + z.norm_squared())
    }
}

fn factor(c: &Component, dim: usize, index: usize) -> Result<Factor, TrajError> {
    let cov = DMatrix::from_row_slice(dim, dim, &c.covariance);
    let chol = Cholesky::new(cov).ok_or_else(|| TrajError::Numeric {
        component: index,
        reason: "covariance is not positive definite".into(),
    })?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(Factor {
        log_weight: c.weight.ln(),
        mean: DVector::from_column_slice(&c.mean),
        chol,
        log_det,
    })
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl GaussianMixture {
    /// Builds a mixture from explicit components, checking shapes,
    /// normalization and positive definiteness.
    pub fn new(dim: usize, components: Vec<Component>) -> Result<Self, TrajError> {
        if dim == 0 || components.is_empty() {
            return Err(TrajError::Input("mixture needs a positive dimension and at least one component".into()));
        }
        for (k, c) in components.iter().enumerate() {
            if c.mean.len() != dim || c.covariance.len() != dim * dim {
                return Err(TrajError::Input(format!("component {k} has the wrong shape")));
            }
            if !(c.weight.is_finite() && c.weight >= 0.0) || c.mean.iter().chain(&c.covariance).any(|v| !v.is_finite()) {
                return Err(TrajError::Input(format!("component {k} has an invalid value")));
            }
            for i in 0..dim {
                for j in 0..i {
                    if c.covariance[i * dim + j] != c.covariance[j * dim + i] {
                        return Err(TrajError::Input(format!("component {k} covariance is not symmetric")));
                    }
                }
            }
            factor(c, dim, k)?;
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(TrajError::Input(format!("weights sum to {total}")));
        }
        Ok(Self {
            dim,
            components,
            diagnostics: FitDiagnostics::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    fn factors(&self) -> Result<Vec<Factor>, TrajError> {
        self.components.iter().enumerate().map(|(k, c)| factor(c, self.dim, k)).collect()
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64, TrajError> {
        let x = DVector::from_column_slice(x);
        let terms: Vec<f64> = self.factors()?.iter().map(|f| f.log_weight + f.log_pdf(&x)).collect();
        Ok(log_sum_exp(&terms))
    }

    /// Posterior component probabilities for `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Result<Vec<f64>, TrajError> {
        let x = DVector::from_column_slice(x);
        let terms: Vec<f64> = self.factors()?.iter().map(|f| f.log_weight + f.log_pdf(&x)).collect();
        let z = log_sum_exp(&terms);
        Ok(terms.iter().map(|t| (t - z).exp()).collect())
    }

    /// Index of the most responsible component; ties go to the lower index.
    pub fn assign(&self, x: &[f64]) -> Result<usize, TrajError> {
        let r = self.responsibilities(x)?;
        Ok(r.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
            .0)
    }

    /// Penalized log-likelihood of `data` under this mixture.
    pub fn objective(&self, data: &[Vec<f64>], prior: &MixturePrior) -> Result<f64, TrajError> {
        let factors = self.factors()?;
        let xs: Vec<DVector<f64>> = data.iter().map(|x| DVector::from_column_slice(x)).collect();
        Ok(e_step(&factors, &xs, None) + penalty(&factors, data.len(), concentration(prior, self.n_components()), prior.ridge))
    }
}

fn concentration(prior: &MixturePrior, k: usize) -> f64 {
    prior.concentration.unwrap_or(1.0 / k as f64)
}

fn penalty(factors: &[Factor], n: usize, alpha: f64, ridge: f64) -> f64 {
    factors
        .iter()
        .map(|f| alpha * f.log_weight - 0.5 * ridge * n as f64 * f.chol.inverse().trace())
        .sum()
}

/// Log-likelihood; fills `resp` (row per point) when given.
fn e_step(factors: &[Factor], xs: &[DVector<f64>], mut resp: Option<&mut Vec<Vec<f64>>>) -> f64 {
    let mut ll = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let terms: Vec<f64> = factors.iter().map(|f| f.log_weight + f.log_pdf(x)).collect();
        let z = log_sum_exp(&terms);
        ll += z;
        if let Some(r) = resp.as_deref_mut() {
            r[i] = terms.iter().map(|t| (t - z).exp()).collect();
        }
    }
    ll
}

fn m_step(components: &mut [Component], xs: &[DVector<f64>], resp: &[Vec<f64>], alpha: f64, ridge: f64) {
    let n = xs.len() as f64;
    let k_total = components.len() as f64;
    let dim = xs[0].len();
    for (k, c) in components.iter_mut().enumerate() {
        let mass: f64 = resp.iter().map(|r| r[k]).sum();
        c.weight = (mass + alpha) / (n + k_total * alpha);
        if mass < MIN_MASS {
            continue;
        }
        let mut mean = DVector::zeros(dim);
        for (x, r) in xs.iter().zip(resp) {
            mean.axpy(r[k], x, 1.0);
        }
        mean /= mass;
        let mut scatter = DMatrix::zeros(dim, dim);
        for (x, r) in xs.iter().zip(resp) {
            let d = x - &mean;
            scatter.ger(r[k], &d, &d, 1.0);
        }
        let mut cov = scatter / mass;
        for i in 0..dim {
            cov[(i, i)] += ridge * n / mass;
        }
        // Exact symmetry keeps the stored matrix a valid covariance.
        let cov = (&cov + cov.transpose()) * 0.5;
        c.mean = mean.as_slice().to_vec();
        c.covariance = (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|(i, j)| cov[(i, j)]).collect();
    }
}

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance to the nearest chosen center.
fn kmeans_pp(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let mut centers = vec![rng.random_range(0..data.len())];
    let mut best: Vec<f64> = data.iter().map(|x| sq(x, &data[centers[0]])).collect();
    while centers.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut pick = data.len() - 1;
            for (i, &d) in best.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..data.len())
        };
        centers.push(next);
        for (b, x) in best.iter_mut().zip(data) {
            *b = b.min(sq(x, &data[next]));
        }
    }
    centers
}

fn check_data(data: &[Vec<f64>], k: usize) -> Result<usize, TrajError> {
    if k == 0 {
        return Err(TrajError::Config("K must be at least 1".into()));
    }
    if k > data.len() {
        return Err(TrajError::Config(format!("K = {k} exceeds the {} samples", data.len())));
    }
    let dim = data[0].len();
    if dim == 0 || data.iter().any(|x| x.len() != dim) {
        return Err(TrajError::Input("samples must share a positive dimension".into()));
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(TrajError::Input("samples contain non-finite values".into()));
    }
    Ok(dim)
}

/// Fits a `k`-component mixture by penalized EM from k-means++ seeds, then
/// prunes components lighter than `prior.min_weight` and renormalizes.
pub fn fit_gmm(data: &[Vec<f64>], k: usize, seed: u64, prior: &MixturePrior) -> Result<GaussianMixture, TrajError> {
    prior.validate()?;
    let dim = check_data(data, k)?;
    let alpha = concentration(prior, k);
    let xs: Vec<DVector<f64>> = data.iter().map(|x| DVector::from_column_slice(x)).collect();
    let n = xs.len() as f64;

    // Initial state: hard assignment to the nearest seed, then one M-step
    // from a pooled covariance for any seed left without points.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = kmeans_pp(data, k, &mut rng);
    let pooled = {
        let mean = xs.iter().fold(DVector::zeros(dim), |acc, x| acc + x) / n;
        let mut cov = xs.iter().fold(DMatrix::zeros(dim, dim), |acc, x| {
            let d = x - &mean;
            acc + &d * d.transpose()
        }) / n;
        for i in 0..dim {
            cov[(i, i)] += prior.ridge;
        }
        cov
    };
    let mut components: Vec<Component> = seeds
        .iter()
        .map(|&s| Component {
            weight: 1.0 / k as f64,
            mean: data[s].clone(),
            covariance: pooled.transpose().as_slice().to_vec(),
        })
        .collect();
    let mut resp: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| {
            let nearest = seeds
                .iter()
                .enumerate()
                .map(|(c, &s)| (c, (x - &xs[s]).norm_squared()))
                .fold((0, f64::INFINITY), |b, (c, d)| if d < b.1 { (c, d) } else { b })
                .0;
            (0..k).map(|c| if c == nearest { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    m_step(&mut components, &xs, &resp, alpha, prior.ridge);

    let evaluate = |components: &[Component], resp: Option<&mut Vec<Vec<f64>>>| -> Result<f64, TrajError> {
        let factors: Vec<Factor> = components.iter().enumerate().map(|(c, comp)| factor(comp, dim, c)).collect::<Result<_, _>>()?;
        Ok(e_step(&factors, &xs, resp) + penalty(&factors, xs.len(), alpha, prior.ridge))
    };

    let mut objective = evaluate(&components, Some(&mut resp))?;
    let mut history = vec![objective];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < prior.max_iter {
        m_step(&mut components, &xs, &resp, alpha, prior.ridge);
        iterations += 1;
        let next = evaluate(&components, Some(&mut resp))?;
        if !next.is_finite() {
            return Err(TrajError::Numeric {
                component: 0,
                reason: format!("objective became {next} at iteration {iterations}"),
            });
        }
        history.push(next);
        let done = (next - objective).abs() <= prior.tol * objective.abs();
        objective = next;
        if done {
            converged = true;
            break;
        }
    }

    let before = components.len();
    let heaviest = components
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (c, comp)| if comp.weight > b.1 { (c, comp.weight) } else { b })
        .0;
    let mut kept: Vec<Component> = components
        .into_iter()
        .enumerate()
        .filter(|(c, comp)| comp.weight >= prior.min_weight || *c == heaviest)
        .map(|(_, comp)| comp)
        .collect();
    let total: f64 = kept.iter().map(|c| c.weight).sum();
    kept.iter_mut().for_each(|c| c.weight /= total);
    let pruned = before - kept.len();
    let final_objective = if pruned == 0 {
        objective
    } else {
        let factors: Vec<Factor> = kept.iter().enumerate().map(|(c, comp)| factor(comp, dim, c)).collect::<Result<_, _>>()?;
        e_step(&factors, &xs, None) + penalty(&factors, xs.len(), alpha, prior.ridge)
    };
    Ok(GaussianMixture {
        dim,
        components: kept,
        diagnostics: FitDiagnostics {
            objective: final_objective,
            history,
            iterations,
            converged,
            pruned,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn cluster(center: &[f64], n: usize, spread: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let normal = Normal::new(0.0, spread).unwrap();
        (0..n).map(|_| center.iter().map(|&c| c + normal.sample(rng)).collect()).collect()
    }

    #[test]
    fn two_point_like_clusters_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = [0.0, 0.0, 1.0, 0.0];
        let b = [5.0, 5.0, -1.0, 0.0];
        let mut data = cluster(&a, 200, 0.01, &mut rng);
        data.extend(cluster(&b, 200, 0.01, &mut rng));
        let gmm = fit_gmm(&data, 2, 7, &MixturePrior::default()).unwrap();
        assert_eq!(gmm.n_components(), 2);
        for truth in [a, b] {
            let best = gmm
                .components()
                .iter()
                .map(|c| c.mean.iter().zip(&truth).map(|(m, t)| (m - t).abs()).fold(0.0, f64::max))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.05, "{best}");
        }
    }

    #[test]
    fn single_component_is_ridged_sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = cluster(&[1.0, -2.0, 0.5], 50, 1.0, &mut rng);
        let prior = MixturePrior::default();
        let gmm = fit_gmm(&data, 1, 0, &prior).unwrap();
        let c = &gmm.components()[0];
        let n = data.len() as f64;
        for d in 0..3 {
            let mean = data.iter().map(|x| x[d]).sum::<f64>() / n;
            assert!((c.mean[d] - mean).abs() < 1e-12);
        }
        for i in 0..3 {
            for j in 0..3 {
                let mi = data.iter().map(|x| x[i]).sum::<f64>() / n;
                let mj = data.iter().map(|x| x[j]).sum::<f64>() / n;
                let cov = data.iter().map(|x| (x[i] - mi) * (x[j] - mj)).sum::<f64>() / n + if i == j { prior.ridge } else { 0.0 };
                assert!((c.covariance[i * 3 + j] - cov).abs() < 1e-12);
            }
        }
        assert_eq!(c.weight, 1.0);
    }

    #[test]
    fn objective_never_decreases() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut data = cluster(&[0.0, 0.0], 60, 1.0, &mut rng);
            data.extend(cluster(&[3.0, 1.0], 60, 0.5, &mut rng));
            let gmm = fit_gmm(&data, 5, seed, &MixturePrior::default()).unwrap();
            let h = &gmm.diagnostics().history;
            assert!(h.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0)), "{h:?}");
        }
    }

    #[test]
    fn weights_normalized_and_light_components_pruned() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = cluster(&[0.0, 0.0], 30, 1.0, &mut rng);
        let prior = MixturePrior {
            min_weight: 0.2,
            ..MixturePrior::default()
        };
        let gmm = fit_gmm(&data, 8, 1, &prior).unwrap();
        let total: f64 = gmm.components().iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(gmm.diagnostics().pruned + gmm.n_components() == 8);
        assert!(gmm.n_components() >= 1);
    }

    #[test]
    fn fitting_is_deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = cluster(&[0.0, 0.0, 0.0, 0.0], 80, 1.0, &mut rng);
        let a = fit_gmm(&data, 3, 11, &MixturePrior::default()).unwrap();
        let b = fit_gmm(&data, 3, 11, &MixturePrior::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(matches!(fit_gmm(&data, 3, 0, &MixturePrior::default()), Err(TrajError::Config(_))));
        assert!(fit_gmm(&data, 0, 0, &MixturePrior::default()).is_err());
        assert!(fit_gmm(&[vec![0.0], vec![f64::NAN]], 1, 0, &MixturePrior::default()).is_err());
        let bad = MixturePrior {
            ridge: 0.0,
            ..MixturePrior::default()
        };
        assert!(fit_gmm(&data, 1, 0, &bad).is_err());
    }

    #[test]
    fn explicit_mixture_validation() {
        let ok = Component {
            weight: 1.0,
            mean: vec![0.0, 0.0],
            covariance: vec![1.0, 0.0, 0.0, 1.0],
        };
        assert!(GaussianMixture::new(2, vec![ok.clone()]).is_ok());
        let singular = Component {
            covariance: vec![1.0, 1.0, 1.0, 1.0],
            ..ok.clone()
        };
        assert!(matches!(
            GaussianMixture::new(2, vec![singular]),
            Err(TrajError::Numeric { component: 0, .. })
        ));
        let light = Component { weight: 0.5, ..ok };
        assert!(GaussianMixture::new(2, vec![light]).is_err());
    }
}
