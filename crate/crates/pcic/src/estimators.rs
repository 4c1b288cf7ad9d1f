//! Risk estimators: empirical errors, the posterior-covariance correction,
//! the covariance-corrected criteria (plain, plugin, and weighted), the
//! variance-form criterion for log-likelihood losses, importance-sampling
//! cross validation, exact leave-one-out refitting, and the third-moment
//! diagnostic.
//!
//! All covariances and variances here divide by M, not M - 1, matching the
//! estimation algorithm they implement literally.

use rayon::prelude::*;

use crate::core::{Dataset, EvalMatrix, Matrix, ObservationWeights, PosteriorDraws, RiskReport};
use crate::error::{Error, Result};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn range_mean(xs: &[f64], lo: usize, hi: usize) -> f64 {
    xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
}

/// mean(a*b) - mean(a)*mean(b) over columns [lo, hi), divide-by-M form.
fn range_cov(a: &[f64], b: &[f64], lo: usize, hi: usize) -> f64 {
    let m = (hi - lo) as f64;
    let mut sab = 0.0;
    let mut sa = 0.0;
    let mut sb = 0.0;
    for k in lo..hi {
        sab += a[k] * b[k];
        sa += a[k];
        sb += b[k];
    }
    sab / m - (sa / m) * (sb / m)
}

/// (1/n) sum_i (1/M) sum_k nu[i][k]: the empirical Gibbs error.
pub fn empirical_gibbs(em: &EvalMatrix) -> f64 {
    let n = em.n_obs();
    (0..n).map(|i| mean(em.nu_row(i))).sum::<f64>() / n as f64
}

/// Per-observation posterior covariance between loss and score, and its mean.
///
/// `influence[i] = mean_k(nu_ik s_ik) - mean_k(nu_ik) mean_k(s_ik)`.
pub fn covariance_correction(em: &EvalMatrix) -> Result<(f64, Vec<f64>)> {
    let m = em.n_draws();
    if m < 2 {
        return Err(Error::Dimension(format!(
            "posterior covariance needs at least 2 draws, got {m}"
        )));
    }
    let influence: Vec<f64> = (0..em.n_obs())
        .map(|i| range_cov(em.nu_row(i), em.s_row(i), 0, m))
        .collect();
    let v = mean(&influence);
    Ok((v, influence))
}

fn kappa3_raw(em: &EvalMatrix) -> Vec<f64> {
    let m = em.n_draws();
    (0..em.n_obs())
        .map(|i| {
            let nu = em.nu_row(i);
            let s = em.s_row(i);
            let nu_bar = mean(nu);
            let s_bar = mean(s);
            let mut acc = 0.0;
            for k in 0..m {
                let ds = s[k] - s_bar;
                acc += (nu[k] - nu_bar) * ds * ds;
            }
            acc / m as f64
        })
        .collect()
}

/// Third mixed central moment mean_k[(nu - nu_bar)(s - s_bar)^2] per row.
pub fn kappa3_diagnostic(em: &EvalMatrix) -> Result<Vec<f64>> {
    if em.n_draws() < 3 {
        return Err(Error::Dimension(format!(
            "third-moment diagnostic needs at least 3 draws, got {}",
            em.n_draws()
        )));
    }
    Ok(kappa3_raw(em))
}

/// Standard error of the corrected criterion across `B = min(10, M)`
/// contiguous draw batches.
fn batch_mc_se(em: &EvalMatrix) -> f64 {
    let m = em.n_draws();
    let n = em.n_obs();
    let b = m.min(10);
    let batch_values: Vec<f64> = (0..b)
        .map(|j| {
            let lo = j * m / b;
            let hi = (j + 1) * m / b;
            let mut emp = 0.0;
            let mut v = 0.0;
            for i in 0..n {
                emp += range_mean(em.nu_row(i), lo, hi);
                v += range_cov(em.nu_row(i), em.s_row(i), lo, hi);
            }
            (emp - v) / n as f64
        })
        .collect();
    let center = mean(&batch_values);
    let var: f64 = batch_values
        .iter()
        .map(|x| (x - center) * (x - center))
        .sum::<f64>()
        / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// Covariance-corrected estimate of the Gibbs generalization error.
pub fn pcic_gibbs(em: &EvalMatrix) -> Result<RiskReport> {
    let (v, influence) = covariance_correction(em)?;
    let empirical = empirical_gibbs(em);
    Ok(RiskReport {
        empirical_gibbs: empirical,
        empirical_plugin: None,
        correction_v: v,
        pcic_gibbs: empirical - v,
        pcic_plugin: None,
        influence,
        kappa3: kappa3_raw(em),
        mc_se: batch_mc_se(em),
    })
}

/// Covariance-corrected estimate of the plugin generalization error.
///
/// `plugin_empirical` must be `(1/n) sum_i nu(X_i, posterior mean)` computed
/// with the same draws that built `em`.
pub fn pcic_plugin(em: &EvalMatrix, plugin_empirical: f64) -> Result<RiskReport> {
    let mut report = pcic_gibbs(em)?;
    report.empirical_plugin = Some(plugin_empirical);
    report.pcic_plugin = Some(plugin_empirical - report.correction_v);
    Ok(report)
}

/// Weighted corrected criterion
/// `(1/n) sum_i w_i mean_k(nu_i) - (1/n) sum_i w_i influence_i`.
pub fn pcic_weighted(em: &EvalMatrix, weights: &ObservationWeights) -> Result<f64> {
    let n = em.n_obs();
    if weights.len() != n {
        return Err(Error::Dimension(format!(
            "{} weights for {n} observations",
            weights.len()
        )));
    }
    let (_, influence) = covariance_correction(em)?;
    let w = weights.as_slice();
    let total: f64 = (0..n)
        .map(|i| w[i] * (mean(em.nu_row(i)) - influence[i]))
        .sum();
    Ok(total / n as f64)
}

/// Variance-form criterion for log-likelihood matrices:
/// `-(1/n) sum_i mean_k(L_i) + (beta/n) sum_i var_k(L_i)`, divide-by-M
/// variance. Coincides with the corrected Gibbs criterion under
/// `nu = -L, s = beta L`.
pub fn waic2(loglik: &Matrix, beta: f64) -> Result<f64> {
    if beta <= 0.0 {
        return Err(Error::Domain(format!(
            "learning rate must be positive, got {beta}"
        )));
    }
    let n = loglik.rows();
    let m = loglik.cols();
    if m < 2 {
        return Err(Error::Dimension(format!(
            "variance needs at least 2 draws, got {m}"
        )));
    }
    let mut acc = 0.0;
    for i in 0..n {
        let row = loglik.row(i);
        acc += -mean(row) + beta * range_cov(row, row, 0, m);
    }
    Ok(acc / n as f64)
}

/// Self-normalized importance-sampling estimate of leave-one-out cross
/// validation from full-posterior draws.
///
/// Case-deletion weights are `exp(-s_ik)`, max-shifted in log space before
/// exponentiation. Collapsed weights (zero or non-finite normalizer) are
/// reported per observation.
pub fn iscv_gibbs(em: &EvalMatrix) -> Result<f64> {
    let m = em.n_draws();
    if m < 2 {
        return Err(Error::Dimension(format!(
            "importance sampling needs at least 2 draws, got {m}"
        )));
    }
    let n = em.n_obs();
    let mut acc = 0.0;
    for i in 0..n {
        let nu = em.nu_row(i);
        let s = em.s_row(i);
        let s_max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum_u = 0.0;
        let mut sum_nu_u = 0.0;
        for k in 0..m {
            let u = (s_max - s[k]).exp();
            sum_u += u;
            sum_nu_u += nu[k] * u;
        }
        let value = sum_nu_u / sum_u;
        if sum_u == 0.0 || !sum_u.is_finite() || !value.is_finite() {
            return Err(Error::DegenerateWeights { observation: i });
        }
        acc += value;
    }
    Ok(acc / n as f64)
}

/// Brute-force leave-one-out cross validation: refit on every case-deleted
/// dataset and average the held-out posterior-mean loss.
///
/// `sampler_factory` must be deterministic given its seed; fold i uses
/// `seed + i` so folds are reproducible and decorrelated.
pub fn exact_loocv<S, L>(
    dataset: &Dataset,
    sampler_factory: S,
    loss_fn: L,
    seed: u64,
) -> Result<f64>
where
    S: Fn(&Dataset, u64) -> Result<PosteriorDraws> + Sync,
    L: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let n = dataset.len();
    if n < 2 {
        return Err(Error::Dimension(format!(
            "leave-one-out needs at least 2 observations, got {n}"
        )));
    }
    let fold_means: Result<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sub = dataset.remove_row(i)?;
            let draws = sampler_factory(&sub, seed.wrapping_add(i as u64))
                .map_err(|e| Error::Sampler(format!("fold {i}: {e}")))?;
            let held_out = dataset.row(i);
            let mut acc = 0.0;
            for k in 0..draws.count() {
                let v = loss_fn(held_out, draws.draw(k));
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        source_fn: "loss evaluator",
                        row: i,
                        draw: k,
                    });
                }
                acc += v;
            }
            Ok(acc / draws.count() as f64)
        })
        .collect();
    Ok(mean(&fold_means?))
}

/// Gibbs and plugin generalization errors on held-out data.
///
/// `test_em` must be built with the same draws as the training matrices;
/// the plugin value is passed through unchanged.
pub fn test_errors(test_em: &EvalMatrix, plugin_test_empirical: Option<f64>) -> (f64, Option<f64>) {
    (empirical_gibbs(test_em), plugin_test_empirical)
}
