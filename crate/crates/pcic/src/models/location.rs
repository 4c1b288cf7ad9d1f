//! Conjugate Gaussian location-shift model and its closed forms.
//!
//! Observations X_i = theta* + eps_i with mean-zero, identity-covariance
//! errors; the quasi-posterior built from the score -(beta/2)||x - theta||^2
//! and a N(0, tau I) prior is exactly N(theta_hat, s_scale I). Everything
//! about the covariance-corrected criterion is then analytic: the
//! generalization gap, the expected posterior covariance, the strong-prior
//! bias, and the remainder, which makes this model the ground truth the
//! estimators are validated against.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::core::{Dataset, PosteriorDraws, Provenance};
use crate::error::{Error, Result};
use crate::losses::location_score;

const SYMMETRY_TOL: f64 = 1e-12;

/// True location, learning rate, prior scale, and the SPD loss matrix.
#[derive(Debug, Clone)]
pub struct LocationModel {
    theta_star: Vec<f64>,
    beta: f64,
    tau: f64,
    a: DMatrix<f64>,
}

impl LocationModel {
    pub fn new(theta_star: Vec<f64>, beta: f64, tau: f64, a: DMatrix<f64>) -> Result<Self> {
        if beta <= 0.0 || tau <= 0.0 {
            return Err(Error::Domain(format!(
                "beta and tau must be positive, got beta={beta}, tau={tau}"
            )));
        }
        let d = theta_star.len();
        if d == 0 || a.nrows() != d || a.ncols() != d {
            return Err(Error::Dimension(format!(
                "loss matrix is {}x{} for a {d}-dimensional location",
                a.nrows(),
                a.ncols()
            )));
        }
        check_symmetric_pd(&a)?;
        Ok(Self { theta_star, beta, tau, a })
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let max_asym = (m - m.transpose()).abs().max();
    if max_asym >= SYMMETRY_TOL {
        return Err(Error::Domain(format!(
            "{what} is not symmetric (max |M - M'| = {max_asym:e})"
        )));
    }
    Ok(())
}

fn check_symmetric_pd(a: &DMatrix<f64>) -> Result<()> {
    check_symmetric(a, "loss matrix")?;
    if a.clone().cholesky().is_none() {
        return Err(Error::Domain(
            "loss matrix is not positive definite".to_string(),
        ));
    }
    Ok(())
}

/// Shrinkage factor n beta tau / (n beta tau + 1).
fn shrinkage(n: usize, beta: f64, tau: f64) -> f64 {
    let nbt = n as f64 * beta * tau;
    nbt / (nbt + 1.0)
}

/// Exact quasi-posterior N(theta_hat, s_scale I) of the location model.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationPosterior {
    /// Posterior mean: a_factor times the sample mean.
    pub theta_hat: Vec<f64>,
    /// Scalar S = 1 / (n beta + 1/tau) multiplying the identity.
    pub s_scale: f64,
    /// n beta tau / (n beta tau + 1).
    pub a_factor: f64,
}

pub fn location_posterior(data: &Dataset, beta: f64, tau: f64) -> Result<LocationPosterior> {
    if beta <= 0.0 || tau <= 0.0 {
        return Err(Error::Domain(format!(
            "beta and tau must be positive, got beta={beta}, tau={tau}"
        )));
    }
    let n = data.len();
    let d = data.dim();
    let mut mean = vec![0.0; d];
    for row in data.iter_rows() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let a_factor = shrinkage(n, beta, tau);
    let theta_hat: Vec<f64> = mean.iter().map(|m| a_factor * m / n as f64).collect();
    Ok(LocationPosterior {
        theta_hat,
        s_scale: 1.0 / (n as f64 * beta + 1.0 / tau),
        a_factor,
    })
}

/// M i.i.d. draws from N(theta_hat, s_scale I), reproducible by seed.
pub fn location_exact_draws(
    post: &LocationPosterior,
    m: usize,
    seed: u64,
) -> Result<PosteriorDraws> {
    if m < 2 {
        return Err(Error::Dimension(format!(
            "need at least 2 draws, got {m}"
        )));
    }
    let d = post.theta_hat.len();
    let sd = post.s_scale.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        let row: Vec<f64> = post
            .theta_hat
            .iter()
            .map(|&mu| {
                let z: f64 = StandardNormal.sample(&mut rng);
                mu + sd * z
            })
            .collect();
        rows.push(row);
    }
    debug_assert_eq!(rows[0].len(), d);
    PosteriorDraws::from_rows(rows, Provenance::exact("location-exact", seed))
}

/// Expected Gibbs generalization gap (2/n) a_factor tr(A).
pub fn oracle_gibbs_gap(n: usize, beta: f64, tau: f64, a: &DMatrix<f64>) -> f64 {
    (2.0 / n as f64) * shrinkage(n, beta, tau) * a.trace()
}

/// Expected posterior covariance term for the realized data:
/// -(2/n) a_factor (sum_i Xt_i' A Xt_i / n) - beta tr(A) / (n beta + 1/tau)^2
/// with Xt_i = X_i - theta_hat.
pub fn oracle_expected_covariance(data: &Dataset, model: &LocationModel) -> Result<f64> {
    if data.dim() != model.dim() {
        return Err(Error::Dimension(format!(
            "data dimension {} does not match model dimension {}",
            data.dim(),
            model.dim()
        )));
    }
    let n = data.len();
    let post = location_posterior(data, model.beta, model.tau)?;
    let mut quad_sum = 0.0;
    for row in data.iter_rows() {
        let centered: Vec<f64> = row
            .iter()
            .zip(&post.theta_hat)
            .map(|(x, t)| x - t)
            .collect();
        quad_sum += crate::losses::quadratic_loss(&centered, &vec![0.0; model.dim()], &model.a)?;
    }
    let precision = n as f64 * model.beta + 1.0 / model.tau;
    Ok(-(2.0 / n as f64) * post.a_factor * (quad_sum / n as f64)
        - model.beta * model.a.trace() / (precision * precision))
}

/// Closed-form posterior covariance between loss and score for a single
/// observation: -(beta/2) [ 4 S Xt' A Xt + 2 tr(A) S^2 ].
pub fn oracle_obs_covariance(
    x: &[f64],
    post: &LocationPosterior,
    beta: f64,
    a: &DMatrix<f64>,
) -> Result<f64> {
    let centered: Vec<f64> = x.iter().zip(&post.theta_hat).map(|(xi, t)| xi - t).collect();
    let quad = crate::losses::quadratic_loss(&centered, &vec![0.0; centered.len()], a)?;
    let s = post.s_scale;
    Ok(-(beta / 2.0) * (4.0 * s * quad + 2.0 * a.trace() * s * s))
}

/// Remainder term
/// beta tr(A) / (n beta + 1/tau)^2 + (a^3 - 2 a^2) 2 tr(A) / n^2.
pub fn oracle_rem(n: usize, beta: f64, tau: f64, a: &DMatrix<f64>) -> f64 {
    let nf = n as f64;
    let precision = nf * beta + 1.0 / tau;
    let af = shrinkage(n, beta, tau);
    beta * a.trace() / (precision * precision)
        + (af.powi(3) - 2.0 * af.powi(2)) * 2.0 * a.trace() / (nf * nf)
}

/// Strong-prior bias (2/n) a_factor theta*' A theta* / (n beta tau + 1)^2.
///
/// The bias is removed by the modified score [`modified_location_score`],
/// which spreads the log-prior density across observations.
pub fn oracle_bias_term(model: &LocationModel, n: usize) -> f64 {
    let nf = n as f64;
    let nbt = nf * model.beta * model.tau;
    let mut quad = 0.0;
    for j in 0..model.dim() {
        for l in 0..model.dim() {
            quad += model.theta_star[j] * model.a[(j, l)] * model.theta_star[l];
        }
    }
    (2.0 / nf) * shrinkage(n, model.beta, model.tau) * quad / ((nbt + 1.0) * (nbt + 1.0))
}

/// Score with the log-prior density spread across observations:
/// s'(x, theta) = s(x, theta) - (1/n) ||theta||^2 / (2 tau).
pub fn modified_location_score(x: &[f64], theta: &[f64], beta: f64, tau: f64, n: usize) -> f64 {
    let norm_sq: f64 = theta.iter().map(|t| t * t).sum();
    location_score(x, theta, beta) - norm_sq / (2.0 * tau * n as f64)
}

/// E[(w'Bw)(w'Cw)] = 2 tr(BC) + tr(B) tr(C) for w ~ N(0, I) and symmetric
/// B, C.
pub fn kumar_expectation(b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<f64> {
    if b.nrows() != b.ncols() || c.nrows() != c.ncols() || b.nrows() != c.nrows() {
        return Err(Error::Dimension(format!(
            "matrices must be square and of equal size, got {}x{} and {}x{}",
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    check_symmetric(b, "first matrix")?;
    check_symmetric(c, "second matrix")?;
    Ok(2.0 * (b * c).trace() + b.trace() * c.trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::Rng;

    #[test]
    fn model_construction_validates_inputs() {
        let a = dmatrix![1.0, 0.0; 0.0, 2.0];
        assert!(LocationModel::new(vec![0.0, 0.0], 1.0, 1.0, a.clone()).is_ok());
        assert!(LocationModel::new(vec![0.0, 0.0], 0.0, 1.0, a.clone()).is_err());
        assert!(LocationModel::new(vec![0.0, 0.0], 1.0, -1.0, a.clone()).is_err());
        assert!(LocationModel::new(vec![0.0], 1.0, 1.0, a).is_err());
        let asym = dmatrix![1.0, 0.5; 0.2, 1.0];
        assert!(LocationModel::new(vec![0.0, 0.0], 1.0, 1.0, asym).is_err());
        let indef = dmatrix![1.0, 0.0; 0.0, -2.0];
        assert!(LocationModel::new(vec![0.0, 0.0], 1.0, 1.0, indef).is_err());
    }

    #[test]
    fn posterior_flat_prior_limit() {
        let data = Dataset::new(vec![vec![1.0], vec![3.0]]).unwrap();
        let post = location_posterior(&data, 1.0, 1e12).unwrap();
        assert!((post.theta_hat[0] - 2.0).abs() < 1e-9);
        assert!((post.s_scale - 0.5).abs() < 1e-9);
    }

    #[test]
    fn posterior_hand_value_n1() {
        let data = Dataset::new(vec![vec![2.0]]).unwrap();
        let post = location_posterior(&data, 1.0, 1.0).unwrap();
        assert_eq!(post.theta_hat, vec![1.0]);
        assert_eq!(post.s_scale, 0.5);
        assert_eq!(post.a_factor, 0.5);
    }

    #[test]
    fn posterior_of_zero_data_is_zero() {
        let data = Dataset::new(vec![vec![0.0, 0.0]; 7]).unwrap();
        for (beta, tau) in [(0.5, 1.0), (2.0, 0.1), (1.0, 100.0)] {
            let post = location_posterior(&data, beta, tau).unwrap();
            assert_eq!(post.theta_hat, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn exact_draws_reproduce_by_seed_and_match_moments() {
        let data = Dataset::new(vec![vec![1.0, -2.0]; 10]).unwrap();
        let post = location_posterior(&data, 1.0, 10.0).unwrap();
        let a = location_exact_draws(&post, 1000, 42).unwrap();
        let b = location_exact_draws(&post, 1000, 42).unwrap();
        assert_eq!(a, b);

        let m = 100_000;
        let draws = location_exact_draws(&post, m, 7).unwrap();
        let mean = crate::core::posterior_mean(&draws);
        let bound = 4.0 * (post.s_scale / m as f64).sqrt();
        for j in 0..2 {
            assert!((mean[j] - post.theta_hat[j]).abs() < bound);
        }
        // sample covariance within 5% of s_scale I
        let mut cov = [[0.0f64; 2]; 2];
        for k in 0..m {
            let th = draws.draw(k);
            for j in 0..2 {
                for l in 0..2 {
                    cov[j][l] += (th[j] - mean[j]) * (th[l] - mean[l]);
                }
            }
        }
        for j in 0..2 {
            for l in 0..2 {
                cov[j][l] /= m as f64;
                let want = if j == l { post.s_scale } else { 0.0 };
                assert!(
                    (cov[j][l] - want).abs() < 0.05 * post.s_scale,
                    "cov[{j}][{l}] = {} vs {want}",
                    cov[j][l]
                );
            }
        }
    }

    #[test]
    fn gap_hand_values() {
        let i1 = dmatrix![1.0];
        // flat prior: gap -> 2/n
        assert!((oracle_gibbs_gap(50, 1.0, 1e12, &i1) - 0.04).abs() < 1e-12);
        // a = 10/11, gap = (2/10)(10/11)(3) = 6/11
        let a = dmatrix![1.0, 0.0; 0.0, 2.0];
        assert!((oracle_gibbs_gap(10, 1.0, 1.0, &a) - 6.0 / 11.0).abs() < 1e-15);
        // strong prior limit: gap -> 0
        assert!(oracle_gibbs_gap(10, 1.0, 1e-12, &i1) < 1e-10);
    }

    #[test]
    fn expected_covariance_at_centered_data() {
        // all X_i = theta_hat possible only at X = 0; first term vanishes
        let a = dmatrix![1.5];
        let model = LocationModel::new(vec![0.0], 1.0, 2.0, a.clone()).unwrap();
        let data = Dataset::new(vec![vec![0.0]; 4]).unwrap();
        let expected = -1.0 * a.trace() / (4.0 * 1.0 + 0.5f64).powi(2);
        let got = oracle_expected_covariance(&data, &model).unwrap();
        assert!((got - expected).abs() < 1e-15);
    }

    #[test]
    fn expected_covariance_is_nonpositive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = dmatrix![2.0, 0.4; 0.4, 1.0];
        let model = LocationModel::new(vec![0.5, -1.0], 0.7, 3.0, a).unwrap();
        for _ in 0..10 {
            let rows: Vec<Vec<f64>> = (0..12)
                .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
                .collect();
            let data = Dataset::new(rows).unwrap();
            assert!(oracle_expected_covariance(&data, &model).unwrap() <= 0.0);
        }
    }

    #[test]
    fn rem_hand_value_and_order() {
        let i1 = dmatrix![1.0];
        // frozen by hand: 1/121 + ((10/11)^3 - 2 (10/11)^2) * 2/100
        let got = oracle_rem(10, 1.0, 1.0, &i1);
        assert!((got - (-0.009767092411720497)).abs() < 1e-15, "{got}");

        // rem = O(n^-2): n^2 |rem| bounded along a sweep
        for n in [10usize, 40, 160, 640, 2560, 10_000] {
            let r = oracle_rem(n, 1.0, 1.0, &i1);
            assert!((n as f64 * n as f64 * r).abs() < 3.0, "n={n} rem={r}");
        }

        // tau -> 0: rem -> beta tr(A) tau^2 -> 0
        assert!(oracle_rem(10, 1.0, 1e-9, &i1).abs() < 1e-15);
    }

    #[test]
    fn bias_term_vanishes_at_zero_location() {
        let a = dmatrix![1.0];
        let model = LocationModel::new(vec![0.0], 1.0, 0.01, a).unwrap();
        assert_eq!(oracle_bias_term(&model, 100), 0.0);
    }

    #[test]
    fn bias_term_strong_prior_hand_value() {
        // 1/tau = n, beta = 1, d = 1, theta* = 1, n = 100:
        // a = 100/101... wait: n beta tau = 100 * 1 * (1/100) = 1, a = 1/2,
        // bias = (2/100)(1/2)(1)/(1+1)^2 = 1/400
        let a = dmatrix![1.0];
        let model = LocationModel::new(vec![1.0], 1.0, 0.01, a).unwrap();
        let got = oracle_bias_term(&model, 100);
        assert!((got - 0.0025).abs() < 1e-15, "{got}");
    }

    #[test]
    fn kumar_identity_values_and_mc() {
        let i2 = DMatrix::identity(2, 2);
        assert_eq!(kumar_expectation(&i2, &i2).unwrap(), 8.0);
        let zero = DMatrix::zeros(3, 3);
        let c = dmatrix![1.0, 0.2, 0.0; 0.2, 2.0, -0.1; 0.0, -0.1, 0.5];
        assert_eq!(kumar_expectation(&zero, &c).unwrap(), 0.0);

        let asym = dmatrix![1.0, 1.0; 0.0, 1.0];
        assert!(kumar_expectation(&asym, &i2).is_err());

        // Monte Carlo cross-check at modest size
        let b = dmatrix![1.2, 0.3; 0.3, 0.9];
        let c2 = dmatrix![0.8, -0.2; -0.2, 1.5];
        let analytic = kumar_expectation(&b, &c2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = 400_000;
        let mut acc = 0.0;
        for _ in 0..m {
            let w: [f64; 2] = [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ];
            let qb = w[0] * b[(0, 0)] * w[0]
                + 2.0 * w[0] * b[(0, 1)] * w[1]
                + w[1] * b[(1, 1)] * w[1];
            let qc = w[0] * c2[(0, 0)] * w[0]
                + 2.0 * w[0] * c2[(0, 1)] * w[1]
                + w[1] * c2[(1, 1)] * w[1];
            acc += qb * qc;
        }
        let mc = acc / m as f64;
        assert!((mc - analytic).abs() / analytic.abs() < 0.02, "{mc} vs {analytic}");
    }

    #[test]
    fn modified_score_shifts_by_prior_density() {
        let x = [1.0, 0.0];
        let theta = [0.5, -0.5];
        let base = location_score(&x, &theta, 2.0);
        let modified = modified_location_score(&x, &theta, 2.0, 0.25, 10);
        // ||theta||^2 = 0.5, penalty = 0.5 / (2 * 0.25 * 10) = 0.1
        assert!((base - modified - 0.1).abs() < 1e-15);
    }
}
