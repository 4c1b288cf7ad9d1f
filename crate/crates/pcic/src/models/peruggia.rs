//! Gibbs sampler for the Bayesian simple regression with the conjugate
//! prior stack beta | Sigma ~ N(0, Sigma), sigma^2 ~ IG(1, 1),
//! Sigma ~ IW(4 I, 4).
//!
//! The design is scalar with an influential last covariate: x_i = 0.01 i for
//! i < n and x_n = R. Draws are returned as flattened parameter vectors
//! `[b0, b1, sigma2, s11, s12, s22]`.
//!
//! Inverse-Wishart convention: IW(Psi, df) has density proportional to
//! |Sigma|^-(df + p + 1)/2 exp(-tr(Psi Sigma^-1)/2), so the conditional for
//! Sigma given beta is IW(Psi + beta beta', df + 1).

use nalgebra::{Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use crate::core::{Dataset, PosteriorDraws, Provenance};
use crate::error::{Error, Result};

/// Length of a flattened parameter draw.
pub const PARAM_DIM: usize = 6;

/// Prior scale matrix multiplier and degrees of freedom for Sigma.
const IW_SCALE: f64 = 4.0;
const IW_DF: f64 = 4.0;
/// Inverse-gamma prior shape and rate for sigma^2.
const IG_SHAPE: f64 = 1.0;
const IG_RATE: f64 = 1.0;

const JITTER: f64 = 1e-10;
const MAX_JITTER_RETRIES: usize = 3;

/// Regression data with the influential-covariate design.
#[derive(Debug, Clone, PartialEq)]
pub struct PeruggiaRegression {
    x: Vec<f64>,
    y: Vec<f64>,
    r: f64,
}

impl PeruggiaRegression {
    /// Builds the canonical design x_i = 0.01 i (i = 1..n-1), x_n = r for
    /// the given responses.
    pub fn new(y: Vec<f64>, r: f64) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Dimension("responses are empty".to_string()));
        }
        if y.iter().any(|v| !v.is_finite()) || !r.is_finite() {
            return Err(Error::Domain("responses and r must be finite".to_string()));
        }
        let mut x: Vec<f64> = (1..n).map(|i| 0.01 * i as f64).collect();
        x.push(r);
        Ok(Self { x, y, r })
    }

    /// Wraps arbitrary (x, y) pairs, e.g. ingested from CSV; `r` is recorded
    /// as the last covariate.
    pub fn from_xy(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::Dimension(format!(
                "{} covariates for {} responses",
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Domain("covariates and responses must be finite".to_string()));
        }
        let r = *x.last().expect("non-empty");
        Ok(Self { x, y, r })
    }

    /// Reads normalized regression rows `[y, x]`.
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        if data.dim() != 2 {
            return Err(Error::Dimension(format!(
                "regression rows must be [y, x], got {} columns",
                data.dim()
            )));
        }
        let y: Vec<f64> = data.iter_rows().map(|row| row[0]).collect();
        let x: Vec<f64> = data.iter_rows().map(|row| row[1]).collect();
        Self::from_xy(x, y)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }
}

/// Per-observation Gaussian log-likelihood of a draw, the score used in
/// evaluation matrices.
pub fn gaussian_loglik(y: f64, x: f64, b0: f64, b1: f64, sigma2: f64) -> f64 {
    let resid = y - b0 - x * b1;
    -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln() - resid * resid / (2.0 * sigma2)
}

/// Unpacks `(b0, b1, sigma2)` from a flattened draw.
pub fn regression_params(draw: &[f64]) -> (f64, f64, f64) {
    (draw[0], draw[1], draw[2])
}

fn cholesky_with_jitter(m: Matrix2<f64>, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::U2>> {
    let mut m = m;
    for _ in 0..=MAX_JITTER_RETRIES {
        if let Some(chol) = nalgebra::Cholesky::new(m) {
            return Ok(chol);
        }
        m += Matrix2::identity() * JITTER;
    }
    Err(Error::Sampler(format!(
        "{what} is not positive definite after {MAX_JITTER_RETRIES} jitter retries"
    )))
}

fn inv_2x2(m: Matrix2<f64>, what: &str) -> Result<Matrix2<f64>> {
    let mut m = m;
    for _ in 0..=MAX_JITTER_RETRIES {
        if let Some(inv) = m.try_inverse() {
            if inv.iter().all(|v| v.is_finite()) {
                return Ok(inv);
            }
        }
        m += Matrix2::identity() * JITTER;
    }
    Err(Error::Sampler(format!("{what} is numerically singular")))
}

/// One draw from IW(psi, df) for 2x2 psi via the Bartlett decomposition of
/// the Wishart(psi^-1, df) it inverts.
fn sample_inverse_wishart(
    psi: Matrix2<f64>,
    df: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Matrix2<f64>> {
    let psi_inv = inv_2x2(psi, "inverse-Wishart scale")?;
    let chol = cholesky_with_jitter(psi_inv, "inverse-Wishart scale inverse")?;
    let l = chol.l();
    let c1 = ChiSquared::new(df).map_err(|e| Error::Sampler(e.to_string()))?;
    let c2 = ChiSquared::new(df - 1.0).map_err(|e| Error::Sampler(e.to_string()))?;
    let a11: f64 = c1.sample(rng);
    let a22: f64 = c2.sample(rng);
    let a21: f64 = StandardNormal.sample(rng);
    let bartlett = Matrix2::new(a11.sqrt(), 0.0, a21, a22.sqrt());
    let la = l * bartlett;
    let wishart = la * la.transpose();
    inv_2x2(wishart, "Wishart draw")
}

struct SuffStats {
    n: f64,
    sx: f64,
    sxx: f64,
    sy: f64,
    sxy: f64,
    syy: f64,
}

impl SuffStats {
    fn from_xy(x: &[f64], y: &[f64]) -> Self {
        let mut s = Self {
            n: x.len() as f64,
            sx: 0.0,
            sxx: 0.0,
            sy: 0.0,
            sxy: 0.0,
            syy: 0.0,
        };
        for (&xi, &yi) in x.iter().zip(y) {
            s.sx += xi;
            s.sxx += xi * xi;
            s.sy += yi;
            s.sxy += xi * yi;
            s.syy += yi * yi;
        }
        s
    }

    fn rss(&self, b0: f64, b1: f64) -> f64 {
        (self.syy - 2.0 * b0 * self.sy - 2.0 * b1 * self.sxy
            + 2.0 * b0 * b1 * self.sx
            + self.n * b0 * b0
            + b1 * b1 * self.sxx)
            .max(0.0)
    }
}

fn gibbs_chain(
    x: &[f64],
    y: &[f64],
    m: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Result<PosteriorDraws> {
    if thin == 0 {
        return Err(Error::Domain("thinning must be at least 1".to_string()));
    }
    if m < 2 {
        return Err(Error::Dimension(format!("need at least 2 draws, got {m}")));
    }
    let stats = SuffStats::from_xy(x, y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Markov state is (sigma2, Sigma); beta is redrawn each sweep.
    let mut sigma2 = 1.0;
    let mut sigma_prior = Matrix2::identity();
    let mut draws = Vec::with_capacity(m);
    let total_steps = burn_in + m * thin;
    for t in 1..=total_steps {
        // beta | sigma2, Sigma, y
        let sigma_prior_inv = inv_2x2(sigma_prior, "coefficient prior covariance")?;
        let mut precision = sigma_prior_inv;
        let mut rhs = Vector2::zeros();
        if stats.n > 0.0 {
            let xtx = Matrix2::new(stats.n, stats.sx, stats.sx, stats.sxx);
            precision += xtx / sigma2;
            rhs += Vector2::new(stats.sy, stats.sxy) / sigma2;
        }
        let chol = cholesky_with_jitter(precision, "coefficient conditional precision")?;
        let mu = chol.solve(&rhs);
        let z = Vector2::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
        // L' u = z has solution u ~ N(0, Q^-1)
        let u = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Sampler("triangular solve failed".to_string()))?;
        let beta = mu + u;

        // sigma2 | beta, y
        let shape = IG_SHAPE + stats.n / 2.0;
        let rate = IG_RATE + stats.rss(beta[0], beta[1]) / 2.0;
        let gamma = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Sampler(e.to_string()))?;
        let g: f64 = gamma.sample(&mut rng);
        if g <= 0.0 || !g.is_finite() {
            return Err(Error::Sampler(format!("gamma draw {g} out of range")));
        }
        sigma2 = 1.0 / g;

        // Sigma | beta
        let psi = Matrix2::identity() * IW_SCALE + beta * beta.transpose();
        sigma_prior = sample_inverse_wishart(psi, IW_DF + 1.0, &mut rng)?;

        if t > burn_in && (t - burn_in) % thin == 0 {
            draws.push(vec![
                beta[0],
                beta[1],
                sigma2,
                sigma_prior[(0, 0)],
                sigma_prior[(0, 1)],
                sigma_prior[(1, 1)],
            ]);
        }
    }
    PosteriorDraws::from_rows(
        draws,
        Provenance {
            sampler: "peruggia-gibbs".to_string(),
            seed,
            burn_in,
            thinning: thin,
            acceptance_rate: None,
            warnings: Vec::new(),
        },
    )
}

/// Posterior draws of (b0, b1, sigma^2, Sigma) for the regression data.
pub fn peruggia_gibbs(
    data: &PeruggiaRegression,
    m: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Result<PosteriorDraws> {
    if data.len() < 3 {
        return Err(Error::Dimension(format!(
            "need at least 3 observations, got {}",
            data.len()
        )));
    }
    gibbs_chain(data.x(), data.y(), m, burn_in, thin, seed)
}

#[cfg(test)]
pub(crate) fn prior_only_chain(m: usize, burn_in: usize, thin: usize, seed: u64) -> Result<PosteriorDraws> {
    gibbs_chain(&[], &[], m, burn_in, thin, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::generate::{generate_data, DataSpec};

    fn median(values: &mut [f64]) -> f64 {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values[values.len() / 2]
    }

    #[test]
    fn design_matches_construction() {
        let data = PeruggiaRegression::new(vec![0.0; 50], 6.0).unwrap();
        assert_eq!(data.x()[0], 0.01);
        assert_eq!(data.x()[48], 0.49);
        assert_eq!(data.x()[49], 6.0);
    }

    #[test]
    fn prior_only_chain_recovers_sigma2_prior_median() {
        // the chain with an empty likelihood samples the prior; IG(1, 1) has
        // no mean, so compare medians against direct draws
        let draws = prior_only_chain(20_000, 200, 1, 5).unwrap();
        let mut chain_sigma2: Vec<f64> = (0..draws.count()).map(|k| draws.draw(k)[2]).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let gamma = Gamma::new(IG_SHAPE, 1.0 / IG_RATE).unwrap();
        let mut direct: Vec<f64> = (0..100_000).map(|_| 1.0 / gamma.sample(&mut rng)).collect();

        let m_chain = median(&mut chain_sigma2);
        let m_direct = median(&mut direct);
        assert!(
            (m_chain - m_direct).abs() / m_direct < 0.15,
            "chain median {m_chain} vs direct {m_direct}"
        );
    }

    #[test]
    fn recovers_slope_without_outlier() {
        // R = 0.5 keeps the design benign; beta1 should sit near its truth
        let ds = generate_data(
            DataSpec::OutlierRegression { r: 0.5, beta0: 0.0, beta1: 1.0, sigma: 1.0 },
            50,
            31,
        )
        .unwrap();
        let data = PeruggiaRegression::from_dataset(&ds).unwrap();
        let draws = peruggia_gibbs(&data, 4000, 200, 2, 8).unwrap();
        let mean = crate::core::posterior_mean(&draws);
        let b1_mean = mean[1];
        let b1_var: f64 = (0..draws.count())
            .map(|k| (draws.draw(k)[1] - b1_mean).powi(2))
            .sum::<f64>()
            / draws.count() as f64;
        assert!(
            (b1_mean - 1.0).abs() < 3.0 * b1_var.sqrt(),
            "b1 {b1_mean} sd {}",
            b1_var.sqrt()
        );
    }

    #[test]
    fn same_seed_reproduces_draws() {
        let data = PeruggiaRegression::new(vec![0.1, 0.2, 0.3, 0.4, 0.5], 2.0).unwrap();
        let a = peruggia_gibbs(&data, 50, 10, 2, 77).unwrap();
        let b = peruggia_gibbs(&data, 50, 10, 2, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn draws_keep_scale_blocks_positive_definite() {
        let data = PeruggiaRegression::new(vec![1.0, -0.5, 0.7, 0.0, 1.2, 0.3], 3.0).unwrap();
        let draws = peruggia_gibbs(&data, 500, 50, 1, 2).unwrap();
        for k in 0..draws.count() {
            let d = draws.draw(k);
            assert!(d[2] > 0.0); // sigma2
            let det = d[3] * d[5] - d[4] * d[4];
            assert!(d[3] > 0.0 && det > 0.0, "Sigma draw not PD at {k}");
        }
    }

    #[test]
    fn tiny_datasets_are_rejected() {
        let data = PeruggiaRegression::new(vec![0.0, 1.0], 1.0).unwrap();
        assert!(peruggia_gibbs(&data, 10, 0, 1, 0).is_err());
    }
}
