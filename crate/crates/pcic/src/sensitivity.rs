//! Weighted-posterior expectations by importance reweighting, numerical
//! verification of the local sensitivity identities, and per-observation
//! influence measures.
//!
//! Downweighting one observation's score from w = 1 toward w = 0 deforms
//! the posterior continuously; the derivative of a posterior expectation in
//! that weight is a posterior covariance (first order) or a third mixed
//! central moment (second order). Both are computed from the same draws the
//! estimators already use, and verified here against one-sided finite
//! differences of the reweighted expectation.

use crate::core::{EvalMatrix, Matrix};
use crate::error::{Error, Result};
use crate::estimators;

/// Self-normalized reweighted expectation with its effective sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct Reweighted {
    pub value: f64,
    pub ess: f64,
    /// Set when ess < 10: the estimate rests on too few effective draws.
    pub degenerate: bool,
}

const DEGENERATE_ESS: f64 = 10.0;
/// Minimum effective sample size for a finite-difference node to count as a
/// valid check.
const CHECK_ESS: f64 = 100.0;

/// Posterior expectation of `values` under the posterior with observation
/// i's score weighted by `w_i`, estimated by self-normalized reweighting of
/// the w = 1 draws. At w_i = 1 this is exactly the plain mean.
pub fn weighted_expectation(
    em: &EvalMatrix,
    i: usize,
    w_i: f64,
    values: &[f64],
) -> Result<Reweighted> {
    let n = em.n_obs();
    let m = em.n_draws();
    if i >= n {
        return Err(Error::Dimension(format!(
            "observation {i} out of range for {n} observations"
        )));
    }
    if values.len() != m {
        return Err(Error::Dimension(format!(
            "{} values for {m} draws",
            values.len()
        )));
    }
    if !(0.0..=1.0).contains(&w_i) {
        return Err(Error::Domain(format!("weight {w_i} outside [0, 1]")));
    }
    if w_i == 1.0 {
        let value = values.iter().sum::<f64>() / m as f64;
        return Ok(Reweighted { value, ess: m as f64, degenerate: false });
    }
    let s = em.s_row(i);
    let s_max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum_u = 0.0;
    let mut sum_u2 = 0.0;
    let mut sum_vu = 0.0;
    for k in 0..m {
        let u = ((w_i - 1.0) * (s[k] - s_max)).exp();
        sum_u += u;
        sum_u2 += u * u;
        sum_vu += values[k] * u;
    }
    let value = sum_vu / sum_u;
    if !sum_u.is_finite() || sum_u == 0.0 || !value.is_finite() {
        return Err(Error::DegenerateWeights { observation: i });
    }
    let ess = sum_u * sum_u / sum_u2;
    Ok(Reweighted { value, ess, degenerate: ess < DEGENERATE_ESS })
}

/// k-th derivative of the weighted posterior expectation of observation i's
/// loss in its weight, evaluated at w = 1: the mixed covariance for k = 1
/// and the third mixed central moment for k = 2.
pub fn local_sensitivity(em: &EvalMatrix, i: usize, k: u8) -> Result<f64> {
    if i >= em.n_obs() {
        return Err(Error::Dimension(format!(
            "observation {i} out of range for {} observations",
            em.n_obs()
        )));
    }
    let m = em.n_draws();
    match k {
        1 => {
            if m < 2 {
                return Err(Error::Dimension(format!("order 1 needs at least 2 draws, got {m}")));
            }
            let (_, influence) = estimators::covariance_correction(em)?;
            Ok(influence[i])
        }
        2 => Ok(estimators::kappa3_diagnostic(em)?[i]),
        other => Err(Error::Domain(format!("derivative order must be 1 or 2, got {other}"))),
    }
}

/// Comparison of an analytic sensitivity against its finite-difference
/// estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityCheck {
    pub observation_index: usize,
    pub order: u8,
    pub analytic: f64,
    pub numeric: f64,
    pub step: f64,
    /// |analytic - numeric| / max(|analytic|, 1e-12).
    pub rel_error: f64,
}

/// Differentiates the reweighted expectation of observation i's loss at
/// w = 1 with a one-sided stencil over {1, 1-h, 1-2h} (weights cannot
/// exceed 1) and compares with [`local_sensitivity`].
pub fn finite_difference_check(
    em: &EvalMatrix,
    i: usize,
    k: u8,
    h: f64,
) -> Result<SensitivityCheck> {
    if !(k == 1 || k == 2) {
        return Err(Error::Domain(format!("derivative order must be 1 or 2, got {k}")));
    }
    if !(h > 0.0 && h < 0.5) {
        return Err(Error::Domain(format!("step must lie in (0, 0.5), got {h}")));
    }
    let values = em.nu_row(i).to_vec();
    let g0 = weighted_expectation(em, i, 1.0, &values)?;
    let g1 = weighted_expectation(em, i, 1.0 - h, &values)?;
    let g2 = weighted_expectation(em, i, 1.0 - 2.0 * h, &values)?;
    for (node, g) in [(1.0 - h, &g1), (1.0 - 2.0 * h, &g2)] {
        if g.ess < CHECK_ESS {
            return Err(Error::Domain(format!(
                "degenerate reweighting at w = {node}: effective sample size {:.1} < {CHECK_ESS}",
                g.ess
            )));
        }
    }
    let numeric = match k {
        1 => (3.0 * g0.value - 4.0 * g1.value + g2.value) / (2.0 * h),
        _ => (g0.value - 2.0 * g1.value + g2.value) / (h * h),
    };
    let analytic = local_sensitivity(em, i, k)?;
    let rel_error = (analytic - numeric).abs() / analytic.abs().max(1e-12);
    Ok(SensitivityCheck {
        observation_index: i,
        order: k,
        analytic,
        numeric,
        step: h,
        rel_error,
    })
}

/// Per-observation influence: the posterior covariance between each
/// observation's loss and score, with the share-normalized vector when the
/// total is nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMeasure {
    pub raw: Vec<f64>,
    pub normalized: Option<Vec<f64>>,
}

pub fn influence_measure(em: &EvalMatrix) -> Result<InfluenceMeasure> {
    let (_, raw) = estimators::covariance_correction(em)?;
    let total: f64 = raw.iter().sum();
    let normalized = if total != 0.0 {
        Some(raw.iter().map(|v| v / total).collect())
    } else {
        None
    };
    Ok(InfluenceMeasure { raw, normalized })
}

/// Per-observation posterior variance of the log-likelihood: the curvature
/// of the divergence between the case-downweighted and full posteriors.
pub fn curvature_i2(loglik: &Matrix) -> Result<Vec<f64>> {
    let m = loglik.cols();
    if m < 2 {
        return Err(Error::Dimension(format!(
            "variance needs at least 2 draws, got {m}"
        )));
    }
    let mut out = Vec::with_capacity(loglik.rows());
    for i in 0..loglik.rows() {
        let row = loglik.row(i);
        let mean = row.iter().sum::<f64>() / m as f64;
        // centered form keeps the variance nonnegative in floating point
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
        out.push(var);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{build_eval_matrix, Dataset, EvalMatrix};
    use crate::estimators::covariance_correction;
    use crate::losses::location_score;
    use crate::models::location::{location_exact_draws, location_posterior};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn em(nu: Vec<Vec<f64>>, s: Vec<Vec<f64>>) -> EvalMatrix {
        EvalMatrix::from_rows(nu, s).unwrap()
    }

    #[test]
    fn unit_weight_is_exactly_the_mean() {
        let matrix = em(vec![vec![1.0, 2.0, 4.0]], vec![vec![0.3, -0.7, 1.1]]);
        let values = [5.0, 6.0, 10.0];
        let r = weighted_expectation(&matrix, 0, 1.0, &values).unwrap();
        assert_eq!(r.value, 7.0);
        assert_eq!(r.ess, 3.0);
        assert!(!r.degenerate);
    }

    #[test]
    fn constant_values_are_fixed_points_of_reweighting() {
        let matrix = em(vec![vec![0.0, 0.0, 0.0]], vec![vec![1.0, -2.0, 0.5]]);
        for w in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let r = weighted_expectation(&matrix, 0, w, &[3.5, 3.5, 3.5]).unwrap();
            assert!((r.value - 3.5).abs() < 1e-12, "w={w}: {}", r.value);
        }
    }

    #[test]
    fn zero_weight_estimates_leave_one_out_mean() {
        // n = 2 conjugate model: the left-out posterior is available in
        // closed form, so the reweighted mean loss must match its analytic
        // expectation within Monte Carlo error
        let data = Dataset::new(vec![vec![1.2], vec![-0.4]]).unwrap();
        let (beta, tau) = (1.0, 2.0);
        let m = 400_000;
        let post = location_posterior(&data, beta, tau).unwrap();
        let draws = location_exact_draws(&post, m, 60).unwrap();
        let matrix = build_eval_matrix(
            &data,
            &draws,
            |x, t| (x[0] - t[0]).powi(2),
            |x, t| location_score(x, t, beta),
        )
        .unwrap();
        for i in 0..2 {
            let values = matrix.nu_row(i).to_vec();
            let r = weighted_expectation(&matrix, i, 0.0, &values).unwrap();
            let sub = data.remove_row(i).unwrap();
            let fold = location_posterior(&sub, beta, tau).unwrap();
            let analytic = (data.row(i)[0] - fold.theta_hat[0]).powi(2) + fold.s_scale;
            // reweighting to w = 0 inflates variance; bound by 3 x a rough SE
            let se = 3.0 * (20.0 / r.ess).sqrt();
            assert!((r.value - analytic).abs() < se, "obs {i}: {} vs {analytic}", r.value);
        }
    }

    #[test]
    fn weighted_expectation_is_continuous_in_w() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let nu: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..2.0)).collect();
        let s: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..0.0)).collect();
        let matrix = em(vec![nu.clone()], vec![s]);
        let mut prev = weighted_expectation(&matrix, 0, 0.0, &nu).unwrap().value;
        let mut max_jump = 0.0f64;
        for step in 1..=100 {
            let w = step as f64 / 100.0;
            let cur = weighted_expectation(&matrix, 0, w, &nu).unwrap().value;
            max_jump = max_jump.max((cur - prev).abs());
            prev = cur;
        }
        assert!(max_jump < 0.01, "max jump {max_jump}");
    }

    #[test]
    fn input_validation() {
        let matrix = em(vec![vec![1.0, 2.0]], vec![vec![0.0, 0.0]]);
        assert!(weighted_expectation(&matrix, 1, 0.5, &[1.0, 2.0]).is_err());
        assert!(weighted_expectation(&matrix, 0, 1.5, &[1.0, 2.0]).is_err());
        assert!(weighted_expectation(&matrix, 0, 0.5, &[1.0]).is_err());
    }

    #[test]
    fn local_sensitivity_hand_values() {
        let matrix = em(vec![vec![1.0, 3.0]], vec![vec![2.0, 4.0]]);
        assert_eq!(local_sensitivity(&matrix, 0, 1).unwrap(), 1.0);

        let matrix = em(vec![vec![1.0, 3.0, 0.0]], vec![vec![5.0, 5.0, 5.0]]);
        assert_eq!(local_sensitivity(&matrix, 0, 2).unwrap(), 0.0);

        assert!(local_sensitivity(&matrix, 0, 3).is_err());
    }

    #[test]
    fn first_order_matches_conjugate_closed_form() {
        let data = Dataset::new(vec![vec![0.8], vec![-1.1], vec![0.2], vec![2.0]]).unwrap();
        let (beta, tau) = (1.0, 10.0);
        let m = 200_000;
        let post = location_posterior(&data, beta, tau).unwrap();
        let draws = location_exact_draws(&post, m, 23).unwrap();
        let a = nalgebra::dmatrix![1.0];
        let matrix = build_eval_matrix(
            &data,
            &draws,
            |x, t| (x[0] - t[0]).powi(2),
            |x, t| location_score(x, t, beta),
        )
        .unwrap();
        for i in 0..data.len() {
            let got = local_sensitivity(&matrix, i, 1).unwrap();
            let want =
                crate::models::location::oracle_obs_covariance(data.row(i), &post, beta, &a)
                    .unwrap();
            // batch SE of the per-observation covariance
            let se = per_obs_cov_se(&matrix, i);
            assert!(
                (got - want).abs() < 3.0 * se,
                "obs {i}: {got} vs {want} (se {se})"
            );
        }
    }

    fn per_obs_cov_se(matrix: &EvalMatrix, i: usize) -> f64 {
        let m = matrix.n_draws();
        let b = 10;
        let nu = matrix.nu_row(i);
        let s = matrix.s_row(i);
        let vals: Vec<f64> = (0..b)
            .map(|j| {
                let lo = j * m / b;
                let hi = (j + 1) * m / b;
                let mb = (hi - lo) as f64;
                let (mut snu, mut ss, mut sp) = (0.0, 0.0, 0.0);
                for k in lo..hi {
                    snu += nu[k];
                    ss += s[k];
                    sp += nu[k] * s[k];
                }
                sp / mb - (snu / mb) * (ss / mb)
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / b as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (b - 1) as f64;
        (var / b as f64).sqrt()
    }

    #[test]
    fn finite_difference_zero_score_is_exact() {
        let m = 200;
        let nu: Vec<f64> = (0..m).map(|k| 1.0 + (k % 7) as f64).collect();
        let matrix = em(vec![nu], vec![vec![0.0; m]]);
        for k in [1u8, 2] {
            let check = finite_difference_check(&matrix, 0, k, 1e-3).unwrap();
            assert_eq!(check.analytic, 0.0);
            assert!(check.numeric.abs() < 1e-9);
        }
    }

    #[test]
    fn finite_difference_agrees_on_conjugate_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
        let data = Dataset::new(rows).unwrap();
        let post = location_posterior(&data, 1.0, 10.0).unwrap();
        let draws = location_exact_draws(&post, 100_000, 3).unwrap();
        let matrix = build_eval_matrix(
            &data,
            &draws,
            |x, t| (x[0] - t[0]).powi(2),
            |x, t| location_score(x, t, 1.0),
        )
        .unwrap();
        let check = finite_difference_check(&matrix, 0, 1, 1e-3).unwrap();
        assert!(check.rel_error < 0.01, "rel error {}", check.rel_error);
        let check2 = finite_difference_check(&matrix, 0, 2, 1e-3).unwrap();
        assert!(check2.rel_error < 0.05, "rel error {}", check2.rel_error);
    }

    #[test]
    fn finite_difference_validates_step() {
        let matrix = em(vec![vec![1.0, 2.0, 3.0]], vec![vec![0.1, 0.0, -0.1]]);
        assert!(finite_difference_check(&matrix, 0, 1, 0.0).is_err());
        assert!(finite_difference_check(&matrix, 0, 1, 0.5).is_err());
    }

    #[test]
    fn influence_measure_normalizes_and_degrades() {
        let matrix = em(
            vec![vec![1.0, 3.0], vec![2.0, 2.0]],
            vec![vec![2.0, 4.0], vec![1.0, 5.0]],
        );
        let inf = influence_measure(&matrix).unwrap();
        assert_eq!(inf.raw, vec![1.0, 0.0]);
        let norm = inf.normalized.unwrap();
        assert_eq!(norm, vec![1.0, 0.0]);

        // constant score: zero vector, no normalization
        let flat = influence_measure(&em(
            vec![vec![1.0, 3.0]],
            vec![vec![5.0, 5.0]],
        ))
        .unwrap();
        assert_eq!(flat.raw, vec![0.0]);
        assert!(flat.normalized.is_none());
    }

    #[test]
    fn single_observation_influence_is_the_correction() {
        let matrix = em(vec![vec![0.0, 2.0]], vec![vec![0.0, 2.0]]);
        let (v, _) = covariance_correction(&matrix).unwrap();
        let inf = influence_measure(&matrix).unwrap();
        assert_eq!(inf.raw, vec![v]);
    }

    #[test]
    fn influence_shift_and_scale_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let nu: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..40).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let s: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..40).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let base = influence_measure(&em(nu.clone(), s.clone())).unwrap();

        let shifted: Vec<Vec<f64>> = s.iter().map(|r| r.iter().map(|v| v + 7.0).collect()).collect();
        let shifted = influence_measure(&em(nu.clone(), shifted)).unwrap();
        for (a, b) in base.raw.iter().zip(&shifted.raw) {
            assert!((a - b).abs() < 1e-12);
        }

        let lambda = -2.5;
        let scaled: Vec<Vec<f64>> = s.iter().map(|r| r.iter().map(|v| lambda * v).collect()).collect();
        let scaled = influence_measure(&em(nu, scaled)).unwrap();
        for (a, b) in base.raw.iter().zip(&scaled.raw) {
            assert!((lambda * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn curvature_hand_values_and_nonnegativity() {
        let l = Matrix::from_rows(vec![vec![-1.0, -1.0], vec![3.0, 3.0]]).unwrap();
        assert_eq!(curvature_i2(&l).unwrap(), vec![0.0, 0.0]);

        let l = Matrix::from_rows(vec![vec![0.0, 2.0]]).unwrap();
        assert_eq!(curvature_i2(&l).unwrap(), vec![1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..30).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();
        let l = Matrix::from_rows(rows).unwrap();
        assert!(curvature_i2(&l).unwrap().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn curvature_is_negated_influence_for_loglik_losses() {
        // nu = -log p, s = log p: the mixed covariance is minus the variance
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let loglik: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..25).map(|_| rng.random_range(-3.0..0.0)).collect())
            .collect();
        let nu: Vec<Vec<f64>> = loglik.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        let matrix = em(nu, loglik.clone());
        let inf = influence_measure(&matrix).unwrap();
        let curv = curvature_i2(&Matrix::from_rows(loglik).unwrap()).unwrap();
        for (m_i, i2) in inf.raw.iter().zip(&curv) {
            assert!((m_i + i2).abs() < 1e-12 * i2.max(1e-300), "{m_i} vs -{i2}");
        }
    }
}
