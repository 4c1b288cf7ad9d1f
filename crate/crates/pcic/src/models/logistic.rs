//! Logistic quasi-posterior for one-posterior-sample style evaluation:
//! the log-likelihood tempered by a learning rate beta, with a standard
//! normal prior on the coefficients.

use crate::core::{Dataset, Matrix};
use crate::error::{Error, Result};

/// Numerically stable sigmoid 1 / (1 + exp(-z)).
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// log sigma(z) = -softplus(-z).
pub fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

/// Per-observation Bernoulli log-likelihood with label y and logit z.
pub fn bernoulli_loglik(y: f64, z: f64) -> f64 {
    // y log sigma(z) + (1 - y) log(1 - sigma(z)), via softplus
    y * log_sigmoid(z) - (1.0 - y) * softplus(z)
}

/// Tempered logistic regression posterior over coefficient vectors.
#[derive(Debug, Clone)]
pub struct LogisticQuasiModel {
    beta: f64,
    design: Matrix, // n x p, intercept column included
    labels: Vec<f64>,
}

impl LogisticQuasiModel {
    pub fn new(beta: f64, design: Matrix, labels: Vec<f64>) -> Result<Self> {
        if beta <= 0.0 {
            return Err(Error::Domain(format!(
                "learning rate must be positive, got {beta}"
            )));
        }
        if labels.len() != design.rows() {
            return Err(Error::Dimension(format!(
                "{} labels for {} design rows",
                labels.len(),
                design.rows()
            )));
        }
        if let Some(bad) = labels.iter().find(|y| **y != 0.0 && **y != 1.0) {
            return Err(Error::Domain(format!("label {bad} is not in {{0, 1}}")));
        }
        Ok(Self { beta, design, labels })
    }

    /// Builds the model from normalized classification rows
    /// `[label, covariates...]`, prepending an intercept column of ones.
    pub fn from_dataset(beta: f64, data: &Dataset) -> Result<Self> {
        if data.dim() < 2 {
            return Err(Error::Dimension(
                "classification rows need a label and at least one covariate".to_string(),
            ));
        }
        let mut design = Vec::with_capacity(data.len());
        let mut labels = Vec::with_capacity(data.len());
        for row in data.iter_rows() {
            labels.push(row[0]);
            let mut x = Vec::with_capacity(data.dim());
            x.push(1.0);
            x.extend_from_slice(&row[1..]);
            design.push(x);
        }
        Self::new(beta, Matrix::from_rows(design)?, labels)
    }

    pub fn n(&self) -> usize {
        self.design.rows()
    }

    /// Coefficient dimension p (intercept included).
    pub fn dim(&self) -> usize {
        self.design.cols()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn logit(&self, i: usize, theta: &[f64]) -> f64 {
        self.design
            .row(i)
            .iter()
            .zip(theta)
            .map(|(x, t)| x * t)
            .sum()
    }

    pub fn prob(&self, i: usize, theta: &[f64]) -> f64 {
        sigmoid(self.logit(i, theta))
    }

    pub fn per_obs_loglik(&self, i: usize, theta: &[f64]) -> f64 {
        bernoulli_loglik(self.labels[i], self.logit(i, theta))
    }

    /// Score of observation i as used in evaluation matrices: the tempered
    /// log-likelihood, prior excluded (the prior is the remaining factor of
    /// the quasi-posterior).
    pub fn score(&self, i: usize, theta: &[f64]) -> f64 {
        self.beta * self.per_obs_loglik(i, theta)
    }

    /// Score with the standard normal log-prior spread across observations:
    /// s'(i, theta) = score(i, theta) - theta'theta / (2 n).
    pub fn modified_score(&self, i: usize, theta: &[f64]) -> f64 {
        let norm_sq: f64 = theta.iter().map(|t| t * t).sum();
        self.score(i, theta) - norm_sq / (2.0 * self.n() as f64)
    }

    /// Log of the unnormalized quasi-posterior density:
    /// beta sum_i loglik_i(theta) - theta'theta / 2.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let mut ll = 0.0;
        for i in 0..self.n() {
            ll += self.per_obs_loglik(i, theta);
        }
        let norm_sq: f64 = theta.iter().map(|t| t * t).sum();
        self.beta * ll - norm_sq / 2.0
    }
}

/// Logit for a normalized classification row `[label, covariates...]` and a
/// coefficient vector with leading intercept; used by evaluation closures.
pub fn row_logit(row: &[f64], theta: &[f64]) -> f64 {
    theta[0]
        + row[1..]
            .iter()
            .zip(&theta[1..])
            .map(|(x, t)| x * t)
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model(beta: f64) -> LogisticQuasiModel {
        let data = Dataset::new(vec![
            vec![1.0, 0.5],
            vec![0.0, -1.0],
            vec![1.0, 2.0],
        ])
        .unwrap();
        LogisticQuasiModel::from_dataset(beta, &data).unwrap()
    }

    #[test]
    fn density_at_origin_is_n_log_half() {
        for beta in [0.5, 1.0, 2.0] {
            let model = toy_model(beta);
            let want = beta * 3.0 * 0.5f64.ln();
            assert!((model.log_density(&[0.0, 0.0]) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn density_increases_with_fit_for_positive_label() {
        // single observation y = 1: density rises in the logit until the
        // prior pulls back; check the derivative sign by finite differences
        let data = Dataset::new(vec![vec![1.0, 1.0]]).unwrap();
        let model = LogisticQuasiModel::from_dataset(1.0, &data).unwrap();
        let h = 1e-6;
        let g0 = (model.log_density(&[0.0, h]) - model.log_density(&[0.0, -h])) / (2.0 * h);
        assert!(g0 > 0.0);
    }

    #[test]
    fn score_is_tempered_loglik_without_prior() {
        let model = toy_model(0.5);
        let theta = [0.3, -0.2];
        for i in 0..3 {
            let expected = 0.5 * model.per_obs_loglik(i, &theta);
            assert_eq!(model.score(i, &theta), expected);
        }
        // summing scores and adding the prior recovers the log density
        let total: f64 = (0..3).map(|i| model.score(i, &theta)).sum();
        let norm_sq: f64 = theta.iter().map(|t| t * t).sum();
        assert!((total - norm_sq / 2.0 - model.log_density(&theta)).abs() < 1e-12);
    }

    #[test]
    fn stable_sigmoid_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) == 1.0);
        assert!(sigmoid(-800.0) > 0.0 || sigmoid(-800.0) == 0.0);
        assert!(bernoulli_loglik(1.0, -800.0).is_finite());
        assert!(bernoulli_loglik(0.0, 800.0).is_finite());
    }

    #[test]
    fn labels_must_be_binary() {
        let data = Dataset::new(vec![vec![0.5, 1.0]]).unwrap();
        assert!(LogisticQuasiModel::from_dataset(1.0, &data).is_err());
    }

    #[test]
    fn row_logit_matches_model() {
        let model = toy_model(1.0);
        let data = Dataset::new(vec![
            vec![1.0, 0.5],
            vec![0.0, -1.0],
            vec![1.0, 2.0],
        ])
        .unwrap();
        let theta = [0.1, 0.7];
        for i in 0..3 {
            assert!((row_logit(data.row(i), &theta) - model.logit(i, &theta)).abs() < 1e-15);
        }
    }
}
