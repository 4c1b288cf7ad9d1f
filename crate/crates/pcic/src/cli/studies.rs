//! Desk-scale replication studies: the location-shift case study, the
//! privacy-motivated logistic evaluation, the influential-observation
//! regression comparison, and the influence-detection study.
//!
//! Each runner is deterministic given its config; replications run in
//! parallel with derived per-replication seeds and results are reduced in
//! replication order.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::cli::config::{ExperimentConfig, LossKind};
use crate::cli::CliError;
use crate::core::{build_eval_matrix, Dataset, EvalMatrix, PosteriorDraws};
use crate::error::{Error, Result};
use crate::estimators;
use crate::losses::{
    classification_loss, location_score, quadratic_loss, regression_loss, ClassificationLoss,
    RegressionLoss,
};
use crate::models::derived_seed;
use crate::models::generate::{generate_data, DataSpec, LocationNoise};
use crate::models::location::{
    location_exact_draws, location_posterior, modified_location_score, oracle_bias_term,
    oracle_gibbs_gap, oracle_rem, LocationModel,
};
use crate::models::logistic::{bernoulli_loglik, row_logit, sigmoid, LogisticQuasiModel};
use crate::models::metropolis::{pilot_proposal_scale, rw_metropolis};
use crate::models::peruggia::{gaussian_loglik, peruggia_gibbs, regression_params, PeruggiaRegression};
use crate::sensitivity::influence_measure;

/// One line of the per-replication CSV output.
#[derive(Debug, Clone, Serialize)]
pub struct RepRow {
    pub sweep: String,
    pub loss: String,
    pub replication: usize,
    pub seed: u64,
    pub estimator: String,
    pub value: f64,
    pub test_gibbs: f64,
}

pub(crate) fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn require_reps(replications: usize) -> Result<(), CliError> {
    if replications < 2 {
        return Err(CliError::Usage(format!(
            "replications must be at least 2 for Monte Carlo standard errors, got {replications}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Location-shift study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LocationStudyConfig {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub test_n: usize,
    pub replications: usize,
    pub beta: f64,
    pub tau: f64,
    pub theta_star: Vec<f64>,
    pub a: DMatrix<f64>,
    pub noise: LocationNoise,
    pub modified_score: bool,
    pub seed: u64,
}

impl LocationStudyConfig {
    pub fn from_experiment(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let d = cfg
            .d
            .or_else(|| cfg.theta_star.as_ref().map(Vec::len))
            .unwrap_or(1);
        let theta_star = cfg.theta_star.clone().unwrap_or_else(|| vec![0.0; d]);
        if theta_star.len() != d {
            return Err(CliError::Usage(format!(
                "theta_star has {} components but d = {d}",
                theta_star.len()
            )));
        }
        let out = Self {
            n: cfg.n.unwrap_or(100),
            d,
            m: cfg.m.unwrap_or(4000),
            test_n: cfg.test_n.unwrap_or(100),
            replications: cfg.replications.unwrap_or(2000),
            beta: cfg.beta.unwrap_or(1.0),
            tau: cfg.tau.unwrap_or(10.0),
            theta_star,
            a: crate::cli::config::a_matrix_for(cfg, d)?,
            noise: cfg.noise.unwrap_or_default(),
            modified_score: cfg.modified_score.unwrap_or(false),
            seed: cfg.seed,
        };
        require_reps(out.replications)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LocationRep {
    pub seed: u64,
    pub empirical: f64,
    pub pcic: f64,
    pub correction_v: f64,
    pub test_gibbs: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocationSummary {
    pub replications: usize,
    pub modified_score: bool,
    pub mean_empirical: f64,
    pub mean_pcic: f64,
    pub mean_test: f64,
    pub mean_correction_v: f64,
    /// gap = test - empirical, per replication.
    pub mean_gap: f64,
    pub se_gap: f64,
    pub mean_pcic_minus_test: f64,
    pub se_pcic_minus_test: f64,
    /// closure quantity gap + v, per replication.
    pub mean_gap_plus_v: f64,
    pub se_gap_plus_v: f64,
    pub oracle_gap: f64,
    pub oracle_bias: f64,
    pub oracle_rem: f64,
}

pub fn run_location_study(
    cfg: &LocationStudyConfig,
) -> Result<(Vec<LocationRep>, LocationSummary)> {
    let model = LocationModel::new(
        cfg.theta_star.clone(),
        cfg.beta,
        cfg.tau,
        cfg.a.clone(),
    )?;
    let reps: Result<Vec<LocationRep>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let data_seed = derived_seed(cfg.seed, 3 * r as u64);
            let draw_seed = derived_seed(cfg.seed, 3 * r as u64 + 1);
            let test_seed = derived_seed(cfg.seed, 3 * r as u64 + 2);
            let data = generate_data(
                DataSpec::Location { theta_star: &cfg.theta_star, noise: cfg.noise },
                cfg.n,
                data_seed,
            )?;
            let post = location_posterior(&data, cfg.beta, cfg.tau)?;
            let draws = location_exact_draws(&post, cfg.m, draw_seed)?;
            let loss = |x: &[f64], t: &[f64]| quadratic_loss(x, t, &cfg.a).expect("dims fixed");
            let n = cfg.n;
            let (beta, tau, modified) = (cfg.beta, cfg.tau, cfg.modified_score);
            let score = move |x: &[f64], t: &[f64]| {
                if modified {
                    modified_location_score(x, t, beta, tau, n)
                } else {
                    location_score(x, t, beta)
                }
            };
            let em = build_eval_matrix(&data, &draws, loss, score)?;
            let report = estimators::pcic_gibbs(&em)?;
            let test_data = generate_data(
                DataSpec::Location { theta_star: &cfg.theta_star, noise: cfg.noise },
                cfg.test_n,
                test_seed,
            )?;
            let test_em = build_eval_matrix(&test_data, &draws, loss, score)?;
            let (test_gibbs, _) = estimators::test_errors(&test_em, None);
            Ok(LocationRep {
                seed: data_seed,
                empirical: report.empirical_gibbs,
                pcic: report.pcic_gibbs,
                correction_v: report.correction_v,
                test_gibbs,
                mc_se: report.mc_se,
            })
        })
        .collect();
    let reps = reps?;

    let gaps: Vec<f64> = reps.iter().map(|r| r.test_gibbs - r.empirical).collect();
    let pcic_minus_test: Vec<f64> = reps.iter().map(|r| r.pcic - r.test_gibbs).collect();
    let gap_plus_v: Vec<f64> = reps
        .iter()
        .map(|r| r.test_gibbs - r.empirical + r.correction_v)
        .collect();
    let (mean_gap, se_gap) = mean_se(&gaps);
    let (mean_pmt, se_pmt) = mean_se(&pcic_minus_test);
    let (mean_gpv, se_gpv) = mean_se(&gap_plus_v);
    let summary = LocationSummary {
        replications: cfg.replications,
        modified_score: cfg.modified_score,
        mean_empirical: mean_se(&reps.iter().map(|r| r.empirical).collect::<Vec<_>>()).0,
        mean_pcic: mean_se(&reps.iter().map(|r| r.pcic).collect::<Vec<_>>()).0,
        mean_test: mean_se(&reps.iter().map(|r| r.test_gibbs).collect::<Vec<_>>()).0,
        mean_correction_v: mean_se(&reps.iter().map(|r| r.correction_v).collect::<Vec<_>>()).0,
        mean_gap,
        se_gap,
        mean_pcic_minus_test: mean_pmt,
        se_pcic_minus_test: se_pmt,
        mean_gap_plus_v: mean_gpv,
        se_gap_plus_v: se_gpv,
        oracle_gap: oracle_gibbs_gap(cfg.n, cfg.beta, cfg.tau, &cfg.a),
        oracle_bias: oracle_bias_term(&model, cfg.n),
        oracle_rem: oracle_rem(cfg.n, cfg.beta, cfg.tau, &cfg.a),
    };
    Ok((reps, summary))
}

pub fn location_rows(reps: &[LocationRep]) -> Vec<RepRow> {
    let mut rows = Vec::with_capacity(reps.len() * 4);
    for (i, rep) in reps.iter().enumerate() {
        for (estimator, value) in [
            ("empirical_gibbs", rep.empirical),
            ("pcic_gibbs", rep.pcic),
            ("correction_v", rep.correction_v),
            ("test_gibbs", rep.test_gibbs),
        ] {
            rows.push(RepRow {
                sweep: String::new(),
                loss: "quadratic".to_string(),
                replication: i,
                seed: rep.seed,
                estimator: estimator.to_string(),
                value,
                test_gibbs: rep.test_gibbs,
            });
        }
    }
    rows
}

// ---------------------------------------------------------------------------
// Privacy-motivated logistic study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DpLogisticStudyConfig {
    pub n: usize,
    pub test_n: usize,
    pub replications: usize,
    pub m: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub beta_grid: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub loss: ClassificationLoss,
    pub proposal_scale: Option<f64>,
    pub modified_score: bool,
    pub seed: u64,
}

impl DpLogisticStudyConfig {
    pub fn from_experiment(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let loss = match cfg.loss {
            None | Some(LossKind::Brier) => ClassificationLoss::Brier,
            Some(LossKind::Misclass) => ClassificationLoss::Misclass,
            Some(LossKind::Spherical) => ClassificationLoss::Spherical,
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "loss '{}' is not a classification loss",
                    other.name()
                )))
            }
        };
        let out = Self {
            n: cfg.n.unwrap_or(50),
            test_n: cfg.test_n.unwrap_or(10),
            replications: cfg.replications.unwrap_or(50),
            m: cfg.m.unwrap_or(3980),
            burn_in: cfg.burn_in.unwrap_or(100),
            thin: cfg.thin.unwrap_or(5),
            beta_grid: cfg.beta_grid.clone().unwrap_or_else(|| vec![0.5, 1.0]),
            theta_star: cfg
                .theta_star
                .clone()
                .unwrap_or_else(|| vec![0.25, 1.0, -0.75]),
            loss,
            proposal_scale: cfg.proposal_scale,
            modified_score: cfg.modified_score.unwrap_or(false),
            seed: cfg.seed,
        };
        if out.theta_star.len() < 2 {
            return Err(CliError::Usage(
                "theta_star needs an intercept and at least one covariate coefficient".to_string(),
            ));
        }
        require_reps(out.replications)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DpRep {
    pub beta: f64,
    pub seed: u64,
    pub empirical: f64,
    pub pcic: f64,
    pub iscv: Option<f64>,
    pub test_gibbs: f64,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DpSummary {
    pub beta: f64,
    pub loss: String,
    pub replications: usize,
    pub mean_empirical: f64,
    pub mean_pcic: f64,
    pub mean_test: f64,
    pub mean_iscv: Option<f64>,
    pub iscv_failures: usize,
    /// |mean(estimate) - mean(test error)|
    pub abs_bias_empirical: f64,
    pub abs_bias_pcic: f64,
    pub se_pcic_minus_test: f64,
    pub mean_acceptance_rate: f64,
}

fn dp_single_rep(cfg: &DpLogisticStudyConfig, beta: f64, rep: u64) -> Result<DpRep> {
    let data_seed = derived_seed(cfg.seed, 4 * rep);
    let test_seed = derived_seed(cfg.seed, 4 * rep + 1);
    let pilot_seed = derived_seed(cfg.seed, 4 * rep + 2);
    let chain_seed = derived_seed(cfg.seed, 4 * rep + 3);
    let train = generate_data(DataSpec::Logistic { theta_star: &cfg.theta_star }, cfg.n, data_seed)?;
    let test = generate_data(DataSpec::Logistic { theta_star: &cfg.theta_star }, cfg.test_n, test_seed)?;
    let model = LogisticQuasiModel::from_dataset(beta, &train)?;
    let ld = |theta: &[f64]| model.log_density(theta);
    let init = vec![0.0; cfg.theta_star.len()];
    let scale = cfg
        .proposal_scale
        .unwrap_or_else(|| pilot_proposal_scale(&ld, &init, pilot_seed));
    let steps = cfg.burn_in + cfg.m * cfg.thin;
    let draws = rw_metropolis(ld, &init, steps, scale, cfg.burn_in, cfg.thin, chain_seed)?;

    let kind = cfg.loss;
    let loss = move |row: &[f64], t: &[f64]| {
        classification_loss(kind, row[0], sigmoid(row_logit(row, t))).expect("p in [0,1]")
    };
    let n = cfg.n;
    let modified = cfg.modified_score;
    let score = move |row: &[f64], t: &[f64]| {
        let s = beta * bernoulli_loglik(row[0], row_logit(row, t));
        if modified {
            let norm_sq: f64 = t.iter().map(|v| v * v).sum();
            s - norm_sq / (2.0 * n as f64)
        } else {
            s
        }
    };
    let em = build_eval_matrix(&train, &draws, loss, score)?;
    let report = estimators::pcic_gibbs(&em)?;
    let iscv = match estimators::iscv_gibbs(&em) {
        Ok(v) => Some(v),
        Err(Error::DegenerateWeights { .. }) => None,
        Err(e) => return Err(e),
    };
    let test_em = build_eval_matrix(&test, &draws, loss, score)?;
    let (test_gibbs, _) = estimators::test_errors(&test_em, None);
    Ok(DpRep {
        beta,
        seed: data_seed,
        empirical: report.empirical_gibbs,
        pcic: report.pcic_gibbs,
        iscv,
        test_gibbs,
        acceptance_rate: draws.provenance().acceptance_rate.unwrap_or(f64::NAN),
    })
}

pub fn run_dp_logistic_study(
    cfg: &DpLogisticStudyConfig,
) -> Result<(Vec<DpRep>, Vec<DpSummary>)> {
    let jobs: Vec<(usize, usize)> = (0..cfg.beta_grid.len())
        .flat_map(|b| (0..cfg.replications).map(move |r| (b, r)))
        .collect();
    let reps: Result<Vec<DpRep>> = jobs
        .into_par_iter()
        .map(|(b, r)| {
            let beta = cfg.beta_grid[b];
            // stream ids partitioned by beta index
            dp_single_rep(cfg, beta, (b * cfg.replications + r) as u64)
        })
        .collect();
    let reps = reps?;
    let mut summaries = Vec::new();
    for (b, &beta) in cfg.beta_grid.iter().enumerate() {
        let slice = &reps[b * cfg.replications..(b + 1) * cfg.replications];
        let empirical: Vec<f64> = slice.iter().map(|r| r.empirical).collect();
        let pcic: Vec<f64> = slice.iter().map(|r| r.pcic).collect();
        let test: Vec<f64> = slice.iter().map(|r| r.test_gibbs).collect();
        let iscv_ok: Vec<f64> = slice.iter().filter_map(|r| r.iscv).collect();
        let pcic_minus_test: Vec<f64> = slice.iter().map(|r| r.pcic - r.test_gibbs).collect();
        let accept: Vec<f64> = slice.iter().map(|r| r.acceptance_rate).collect();
        let (mean_emp, _) = mean_se(&empirical);
        let (mean_pcic, _) = mean_se(&pcic);
        let (mean_test, _) = mean_se(&test);
        summaries.push(DpSummary {
            beta,
            loss: match cfg.loss {
                ClassificationLoss::Brier => "brier",
                ClassificationLoss::Misclass => "misclass",
                ClassificationLoss::Spherical => "spherical",
            }
            .to_string(),
            replications: cfg.replications,
            mean_empirical: mean_emp,
            mean_pcic,
            mean_test,
            mean_iscv: if iscv_ok.is_empty() {
                None
            } else {
                Some(mean_se(&iscv_ok).0)
            },
            iscv_failures: slice.iter().filter(|r| r.iscv.is_none()).count(),
            abs_bias_empirical: (mean_emp - mean_test).abs(),
            abs_bias_pcic: (mean_pcic - mean_test).abs(),
            se_pcic_minus_test: mean_se(&pcic_minus_test).1,
            mean_acceptance_rate: mean_se(&accept).0,
        });
    }
    Ok((reps, summaries))
}

pub fn dp_rows(reps: &[DpRep], replications: usize, loss: &str) -> Vec<RepRow> {
    let mut rows = Vec::new();
    for (i, rep) in reps.iter().enumerate() {
        let replication = i % replications;
        let sweep = format!("beta={}", rep.beta);
        for (estimator, value) in [
            ("empirical_gibbs", Some(rep.empirical)),
            ("pcic_gibbs", Some(rep.pcic)),
            ("iscv_gibbs", rep.iscv),
            ("test_gibbs", Some(rep.test_gibbs)),
        ] {
            if let Some(value) = value {
                rows.push(RepRow {
                    sweep: sweep.clone(),
                    loss: loss.to_string(),
                    replication,
                    seed: rep.seed,
                    estimator: estimator.to_string(),
                    value,
                    test_gibbs: rep.test_gibbs,
                });
            }
        }
    }
    rows
}

// ---------------------------------------------------------------------------
// Influential-observation regression study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct OutlierStudyConfig {
    pub n: usize,
    pub test_n: usize,
    pub replications: usize,
    pub m: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub r_grid: Vec<f64>,
    pub losses: Vec<RegressionLoss>,
    pub beta0: f64,
    pub beta1: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl OutlierStudyConfig {
    pub fn from_experiment(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let losses = match cfg.loss {
            None => vec![RegressionLoss::L2, RegressionLoss::ScaledL1],
            Some(LossKind::L2) => vec![RegressionLoss::L2],
            Some(LossKind::ScaledL1) => vec![RegressionLoss::ScaledL1],
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "loss '{}' is not a regression loss",
                    other.name()
                )))
            }
        };
        let out = Self {
            n: cfg.n.unwrap_or(50),
            test_n: cfg.test_n.unwrap_or(10),
            replications: cfg.replications.unwrap_or(50),
            m: cfg.m.unwrap_or(3980),
            burn_in: cfg.burn_in.unwrap_or(100),
            thin: cfg.thin.unwrap_or(5),
            r_grid: cfg
                .r_grid
                .clone()
                .unwrap_or_else(|| vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            losses,
            beta0: 0.0,
            beta1: 1.0,
            sigma: 1.0,
            seed: cfg.seed,
        };
        require_reps(out.replications)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutlierRep {
    pub r: f64,
    pub loss: String,
    pub seed: u64,
    pub empirical: f64,
    pub pcic: f64,
    pub iscv: Option<f64>,
    pub test_gibbs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutlierSummary {
    pub r: f64,
    pub loss: String,
    pub replications: usize,
    pub iscv_failures: usize,
    pub mean_empirical: f64,
    pub mean_pcic: f64,
    pub mean_iscv: Option<f64>,
    pub mean_test: f64,
    pub abs_bias_pcic: f64,
    pub abs_bias_iscv: Option<f64>,
}

/// Fresh test responses on the bulk design x_j = 0.01 j, j = 1..=test_n.
fn outlier_test_data(cfg: &OutlierStudyConfig, seed: u64) -> Result<Dataset> {
    use rand::SeedableRng;
    use rand_distr::Distribution;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::StandardNormal;
    let rows: Vec<Vec<f64>> = (1..=cfg.test_n)
        .map(|j| {
            let x = 0.01 * j as f64;
            let eps: f64 = normal.sample(&mut rng);
            vec![cfg.beta0 + x * cfg.beta1 + cfg.sigma * eps, x]
        })
        .collect();
    Dataset::new(rows)
}

fn regression_eval(
    kind: RegressionLoss,
) -> (
    impl Fn(&[f64], &[f64]) -> f64 + Sync + Copy,
    impl Fn(&[f64], &[f64]) -> f64 + Sync + Copy,
) {
    let loss = move |row: &[f64], draw: &[f64]| {
        let (b0, b1, sigma2) = regression_params(draw);
        regression_loss(kind, row[0], row[1], b0, b1, sigma2.sqrt()).expect("sigma > 0")
    };
    let score = |row: &[f64], draw: &[f64]| {
        let (b0, b1, sigma2) = regression_params(draw);
        gaussian_loglik(row[0], row[1], b0, b1, sigma2)
    };
    (loss, score)
}

struct OutlierChainResult {
    seed: u64,
    per_loss: Vec<OutlierRep>,
    ems: Vec<(RegressionLoss, EvalMatrix)>,
}

fn outlier_single_rep(
    cfg: &OutlierStudyConfig,
    r_value: f64,
    stream: u64,
    keep_ems: bool,
) -> Result<OutlierChainResult> {
    let data_seed = derived_seed(cfg.seed, 3 * stream);
    let chain_seed = derived_seed(cfg.seed, 3 * stream + 1);
    let test_seed = derived_seed(cfg.seed, 3 * stream + 2);
    let ds = generate_data(
        DataSpec::OutlierRegression {
            r: r_value,
            beta0: cfg.beta0,
            beta1: cfg.beta1,
            sigma: cfg.sigma,
        },
        cfg.n,
        data_seed,
    )?;
    let data = PeruggiaRegression::from_dataset(&ds)?;
    let draws = peruggia_gibbs(&data, cfg.m, cfg.burn_in, cfg.thin, chain_seed)?;
    let test = outlier_test_data(cfg, test_seed)?;
    let mut per_loss = Vec::with_capacity(cfg.losses.len());
    let mut ems = Vec::new();
    for &kind in &cfg.losses {
        let (loss, score) = regression_eval(kind);
        let em = build_eval_matrix(&ds, &draws, loss, score)?;
        let report = estimators::pcic_gibbs(&em)?;
        let iscv = match estimators::iscv_gibbs(&em) {
            Ok(v) => Some(v),
            Err(Error::DegenerateWeights { .. }) => None,
            Err(e) => return Err(e),
        };
        let test_em = build_eval_matrix(&test, &draws, loss, score)?;
        let (test_gibbs, _) = estimators::test_errors(&test_em, None);
        per_loss.push(OutlierRep {
            r: r_value,
            loss: loss_name(kind).to_string(),
            seed: data_seed,
            empirical: report.empirical_gibbs,
            pcic: report.pcic_gibbs,
            iscv,
            test_gibbs,
        });
        if keep_ems {
            ems.push((kind, em));
        }
    }
    Ok(OutlierChainResult { seed: data_seed, per_loss, ems })
}

fn loss_name(kind: RegressionLoss) -> &'static str {
    match kind {
        RegressionLoss::L2 => "l2",
        RegressionLoss::ScaledL1 => "scaled_l1",
    }
}

pub fn run_outlier_study(
    cfg: &OutlierStudyConfig,
) -> Result<(Vec<OutlierRep>, Vec<OutlierSummary>)> {
    let jobs: Vec<(usize, usize)> = (0..cfg.r_grid.len())
        .flat_map(|ri| (0..cfg.replications).map(move |rep| (ri, rep)))
        .collect();
    let results: Result<Vec<OutlierChainResult>> = jobs
        .into_par_iter()
        .map(|(ri, rep)| {
            let stream = (ri * cfg.replications + rep) as u64;
            outlier_single_rep(cfg, cfg.r_grid[ri], stream, false)
        })
        .collect();
    let results = results?;
    let reps: Vec<OutlierRep> = results.into_iter().flat_map(|c| c.per_loss).collect();

    let mut summaries = Vec::new();
    for &r_value in &cfg.r_grid {
        for &kind in &cfg.losses {
            let name = loss_name(kind);
            let slice: Vec<&OutlierRep> = reps
                .iter()
                .filter(|rep| rep.r == r_value && rep.loss == name)
                .collect();
            let empirical: Vec<f64> = slice.iter().map(|r| r.empirical).collect();
            let pcic: Vec<f64> = slice.iter().map(|r| r.pcic).collect();
            let test: Vec<f64> = slice.iter().map(|r| r.test_gibbs).collect();
            let iscv_ok: Vec<f64> = slice.iter().filter_map(|r| r.iscv).collect();
            let (mean_pcic, _) = mean_se(&pcic);
            let (mean_test, _) = mean_se(&test);
            let mean_iscv = if iscv_ok.is_empty() {
                None
            } else {
                Some(mean_se(&iscv_ok).0)
            };
            summaries.push(OutlierSummary {
                r: r_value,
                loss: name.to_string(),
                replications: cfg.replications,
                iscv_failures: slice.iter().filter(|r| r.iscv.is_none()).count(),
                mean_empirical: mean_se(&empirical).0,
                mean_pcic,
                mean_iscv,
                mean_test,
                abs_bias_pcic: (mean_pcic - mean_test).abs(),
                abs_bias_iscv: mean_iscv.map(|m| (m - mean_test).abs()),
            });
        }
    }
    Ok((reps, summaries))
}

pub fn outlier_rows(reps: &[OutlierRep], replications: usize) -> Vec<RepRow> {
    let mut rows = Vec::new();
    let mut counter = std::collections::BTreeMap::<(String, String), usize>::new();
    for rep in reps {
        let key = (format!("r={}", rep.r), rep.loss.clone());
        let replication = {
            let c = counter.entry(key.clone()).or_insert(0);
            let v = *c;
            *c += 1;
            v % replications
        };
        for (estimator, value) in [
            ("empirical_gibbs", Some(rep.empirical)),
            ("pcic_gibbs", Some(rep.pcic)),
            ("iscv_gibbs", rep.iscv),
            ("test_gibbs", Some(rep.test_gibbs)),
        ] {
            if let Some(value) = value {
                rows.push(RepRow {
                    sweep: key.0.clone(),
                    loss: key.1.clone(),
                    replication,
                    seed: rep.seed,
                    estimator: estimator.to_string(),
                    value,
                    test_gibbs: rep.test_gibbs,
                });
            }
        }
    }
    rows
}

// ---------------------------------------------------------------------------
// Influence-detection study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SensitivityStudyConfig {
    pub n: usize,
    pub replications: usize,
    pub m: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub r: f64,
    pub losses: Vec<RegressionLoss>,
    pub seed: u64,
}

impl SensitivityStudyConfig {
    pub fn from_experiment(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let losses = match cfg.loss {
            None => vec![RegressionLoss::L2, RegressionLoss::ScaledL1],
            Some(LossKind::L2) => vec![RegressionLoss::L2],
            Some(LossKind::ScaledL1) => vec![RegressionLoss::ScaledL1],
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "loss '{}' is not a regression loss",
                    other.name()
                )))
            }
        };
        let out = Self {
            n: cfg.n.unwrap_or(50),
            replications: cfg.replications.unwrap_or(50),
            m: cfg.m.unwrap_or(3980),
            burn_in: cfg.burn_in.unwrap_or(100),
            thin: cfg.thin.unwrap_or(5),
            r: cfg.r.unwrap_or(6.0),
            losses,
            seed: cfg.seed,
        };
        require_reps(out.replications)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityRep {
    pub loss: String,
    pub seed: u64,
    /// Index of the largest normalized influence share.
    pub argmax: usize,
    pub peak_share: f64,
    pub detected_influential: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivitySummary {
    pub loss: String,
    pub r: f64,
    pub replications: usize,
    /// Fraction of replications whose normalized influence peaks at the
    /// influential observation.
    pub detection_fraction: f64,
    pub mean_normalized_influence: Vec<f64>,
}

pub fn run_sensitivity_study(
    cfg: &SensitivityStudyConfig,
) -> Result<(Vec<SensitivityRep>, Vec<SensitivitySummary>)> {
    let outlier_cfg = OutlierStudyConfig {
        n: cfg.n,
        test_n: 10,
        replications: cfg.replications,
        m: cfg.m,
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        r_grid: vec![cfg.r],
        losses: cfg.losses.clone(),
        beta0: 0.0,
        beta1: 1.0,
        sigma: 1.0,
        seed: cfg.seed,
    };
    let chains: Result<Vec<OutlierChainResult>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| outlier_single_rep(&outlier_cfg, cfg.r, rep as u64, true))
        .collect();
    let chains = chains?;

    let mut reps = Vec::new();
    let mut summaries = Vec::new();
    for &kind in &cfg.losses {
        let name = loss_name(kind);
        let mut detections = 0usize;
        let mut profile_acc = vec![0.0; cfg.n];
        let mut profile_count = 0usize;
        for chain in &chains {
            let em = &chain
                .ems
                .iter()
                .find(|(k, _)| *k == kind)
                .expect("loss evaluated")
                .1;
            let influence = influence_measure(em)?;
            let (argmax, peak_share, detected) = match &influence.normalized {
                Some(shares) => {
                    let (argmax, peak) = shares
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
                        .expect("non-empty");
                    for (acc, v) in profile_acc.iter_mut().zip(shares) {
                        *acc += v;
                    }
                    profile_count += 1;
                    (argmax, *peak, argmax == cfg.n - 1)
                }
                None => (usize::MAX, f64::NAN, false),
            };
            if detected {
                detections += 1;
            }
            reps.push(SensitivityRep {
                loss: name.to_string(),
                seed: chain.seed,
                argmax,
                peak_share,
                detected_influential: detected,
            });
        }
        if profile_count > 0 {
            for acc in &mut profile_acc {
                *acc /= profile_count as f64;
            }
        }
        summaries.push(SensitivitySummary {
            loss: name.to_string(),
            r: cfg.r,
            replications: cfg.replications,
            detection_fraction: detections as f64 / cfg.replications as f64,
            mean_normalized_influence: profile_acc,
        });
    }
    Ok((reps, summaries))
}

pub fn sensitivity_rows(reps: &[SensitivityRep], r: f64, replications: usize) -> Vec<RepRow> {
    reps.iter()
        .enumerate()
        .map(|(i, rep)| RepRow {
            sweep: format!("r={r}"),
            loss: rep.loss.clone(),
            replication: i % replications,
            seed: rep.seed,
            estimator: "influence_argmax".to_string(),
            value: rep.argmax as f64,
            test_gibbs: f64::NAN,
        })
        .collect()
}
