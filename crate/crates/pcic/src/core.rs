//! Domain types shared by every module: datasets, posterior draws,
//! evaluation matrices, observation weights, and risk reports.
//!
//! All types validate their invariants at construction and are immutable
//! afterwards, so they can be shared freely across worker threads.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Dense row-major matrix of finite reals with at least one row and column.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Dimension(format!(
                "matrix entry ({}, {}) is not finite",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Dimension(
                "matrix rows have unequal lengths".to_string(),
            ));
        }
        Self::from_flat(nrows, ncols, rows.into_iter().flatten().collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.cols + k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Observations X_1, ..., X_n; each row is a fixed-length vector of reals.
///
/// For regression and classification data the response lives in a designated
/// column by convention (the CLI normalizes it to column 0); the core types
/// do not interpret columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Matrix,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Dimension("dataset must have at least one row".to_string()));
        }
        Ok(Self {
            rows: Matrix::from_rows(rows)?,
        })
    }

    /// Number of observations n.
    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    /// Length of each observation row.
    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(move |i| self.row(i))
    }

    /// A copy of the dataset with observation `i` removed (for case deletion).
    pub fn remove_row(&self, i: usize) -> Result<Self> {
        if self.len() < 2 {
            return Err(Error::Dimension(
                "cannot remove a row from a single-row dataset".to_string(),
            ));
        }
        let rows = (0..self.len())
            .filter(|&j| j != i)
            .map(|j| self.row(j).to_vec())
            .collect();
        Self::new(rows)
    }
}

/// Where a set of posterior draws came from: enough to reproduce the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub sampler: String,
    pub seed: u64,
    pub burn_in: usize,
    pub thinning: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
    pub warnings: Vec<String>,
}

impl Provenance {
    pub fn exact(sampler: &str, seed: u64) -> Self {
        Self {
            sampler: sampler.to_string(),
            seed,
            burn_in: 0,
            thinning: 1,
            acceptance_rate: None,
            warnings: Vec::new(),
        }
    }
}

/// M parameter vectors theta_1, ..., theta_M from a quasi-posterior sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    values: Matrix, // M x p
    provenance: Provenance,
}

impl PosteriorDraws {
    pub fn new(values: Matrix, provenance: Provenance) -> Self {
        Self { values, provenance }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        Ok(Self::new(Matrix::from_rows(rows)?, provenance))
    }

    /// Number of draws M.
    pub fn count(&self) -> usize {
        self.values.rows()
    }

    /// Parameter dimension p.
    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn draw(&self, k: usize) -> &[f64] {
        self.values.row(k)
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

/// Componentwise arithmetic mean of the draws.
pub fn posterior_mean(draws: &PosteriorDraws) -> Vec<f64> {
    let m = draws.count();
    let p = draws.dim();
    let mut mean = vec![0.0; p];
    for k in 0..m {
        for (acc, v) in mean.iter_mut().zip(draws.draw(k)) {
            *acc += v;
        }
    }
    for acc in &mut mean {
        *acc /= m as f64;
    }
    mean
}

/// Per-observation, per-draw loss and score values: the universal input to
/// every estimator.
///
/// `nu[i][k]` is the loss of observation i under draw k, `s[i][k]` the score.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMatrix {
    nu: Matrix,
    s: Matrix,
}

impl EvalMatrix {
    pub fn from_matrices(nu: Matrix, s: Matrix) -> Result<Self> {
        if nu.rows() != s.rows() || nu.cols() != s.cols() {
            return Err(Error::Dimension(format!(
                "loss matrix is {}x{} but score matrix is {}x{}",
                nu.rows(),
                nu.cols(),
                s.rows(),
                s.cols()
            )));
        }
        Ok(Self { nu, s })
    }

    pub fn from_rows(nu: Vec<Vec<f64>>, s: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_matrices(Matrix::from_rows(nu)?, Matrix::from_rows(s)?)
    }

    /// Number of observations n.
    pub fn n_obs(&self) -> usize {
        self.nu.rows()
    }

    /// Number of draws M.
    pub fn n_draws(&self) -> usize {
        self.nu.cols()
    }

    pub fn nu_row(&self, i: usize) -> &[f64] {
        self.nu.row(i)
    }

    pub fn s_row(&self, i: usize) -> &[f64] {
        self.s.row(i)
    }

    pub fn nu(&self) -> &Matrix {
        &self.nu
    }

    pub fn s(&self) -> &Matrix {
        &self.s
    }
}

/// Nonnegative per-observation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWeights(Vec<f64>);

impl ObservationWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Dimension("weight vector is empty".to_string()));
        }
        if let Some(pos) = w.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain(format!(
                "weight {} at index {pos} is negative or not finite",
                w[pos]
            )));
        }
        Ok(Self(w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 by construction
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Output of the risk estimators.
///
/// Invariants: `pcic_gibbs = empirical_gibbs - correction_v` and
/// `correction_v` is the mean of `influence`.
#[derive(Debug, Clone, Serialize)]
pub struct RiskReport {
    pub empirical_gibbs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical_plugin: Option<f64>,
    pub correction_v: f64,
    pub pcic_gibbs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pcic_plugin: Option<f64>,
    /// Per-observation posterior covariance between loss and score.
    pub influence: Vec<f64>,
    /// Per-observation third mixed central moment; bounds the distance to
    /// exact leave-one-out cross validation.
    pub kappa3: Vec<f64>,
    /// Monte Carlo standard error of `pcic_gibbs` across contiguous draw
    /// batches.
    pub mc_se: f64,
}

/// Materializes the loss and score matrices consumed by every estimator.
///
/// Both evaluators take `(row, theta)` and must be pure; cells are evaluated
/// in parallel. Evaluators may ignore row components they do not use (for
/// example a response column the score does not touch).
pub fn build_eval_matrix<L, S>(
    dataset: &Dataset,
    draws: &PosteriorDraws,
    loss_fn: L,
    score_fn: S,
) -> Result<EvalMatrix>
where
    L: Fn(&[f64], &[f64]) -> f64 + Sync,
    S: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let n = dataset.len();
    let m = draws.count();
    if m < 2 {
        return Err(Error::Dimension(format!(
            "need at least 2 posterior draws, got {m}"
        )));
    }
    let rows: Result<Vec<(Vec<f64>, Vec<f64>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = dataset.row(i);
            let mut nu_row = Vec::with_capacity(m);
            let mut s_row = Vec::with_capacity(m);
            for k in 0..m {
                let theta = draws.draw(k);
                let v = loss_fn(row, theta);
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        source_fn: "loss evaluator",
                        row: i,
                        draw: k,
                    });
                }
                let sc = score_fn(row, theta);
                if !sc.is_finite() {
                    return Err(Error::NonFinite {
                        source_fn: "score evaluator",
                        row: i,
                        draw: k,
                    });
                }
                nu_row.push(v);
                s_row.push(sc);
            }
            Ok((nu_row, s_row))
        })
        .collect();
    let mut nu = Vec::with_capacity(n * m);
    let mut s = Vec::with_capacity(n * m);
    for (nu_row, s_row) in rows? {
        nu.extend(nu_row);
        s.extend(s_row);
    }
    EvalMatrix::from_matrices(Matrix::from_flat(n, m, nu)?, Matrix::from_flat(n, m, s)?)
}
