//! End-to-end estimation for a CSV dataset: sample the quasi-posterior,
//! build the evaluation matrices, and write the risk report.

use std::path::Path;

use crate::cli::config::{a_matrix_for, ExperimentConfig, LossKind, ModelKind};
use crate::cli::csv_io;
use crate::cli::report::{EstimateReport, Kappa3Diagnostics};
use crate::cli::CliError;
use crate::core::{
    build_eval_matrix, posterior_mean, Dataset, EvalMatrix, ObservationWeights, PosteriorDraws,
};
use crate::estimators;
use crate::losses::{
    classification_loss, location_score, quadratic_loss, regression_loss, ClassificationLoss,
    RegressionLoss,
};
use crate::models::derived_seed;
use crate::models::location::{location_exact_draws, location_posterior, modified_location_score};
use crate::models::logistic::{bernoulli_loglik, row_logit, sigmoid, LogisticQuasiModel};
use crate::models::metropolis::{pilot_proposal_scale, rw_metropolis};
use crate::models::peruggia::{gaussian_loglik, peruggia_gibbs, regression_params, PeruggiaRegression};

type Evaluator = Box<dyn Fn(&[f64], &[f64]) -> f64 + Sync>;

struct Prepared {
    data: Dataset,
    draws: PosteriorDraws,
    loss: Evaluator,
    score: Evaluator,
}

fn prepare(cfg: &ExperimentConfig, data_path: &Path) -> Result<Prepared, CliError> {
    let model = cfg.model.ok_or_else(|| {
        CliError::Usage("estimate needs a 'model' (location | logistic | regression)".to_string())
    })?;
    match model {
        ModelKind::Location => prepare_location(cfg, data_path),
        ModelKind::Logistic => prepare_logistic(cfg, data_path),
        ModelKind::Regression => prepare_regression(cfg, data_path),
    }
}

fn prepare_location(cfg: &ExperimentConfig, data_path: &Path) -> Result<Prepared, CliError> {
    match cfg.loss {
        None | Some(LossKind::Quadratic) => {}
        Some(other) => {
            return Err(CliError::Usage(format!(
                "location model supports the quadratic loss, got '{}'",
                other.name()
            )))
        }
    }
    let data = csv_io::location_dataset(data_path)?;
    let d = data.dim();
    let beta = cfg.beta.unwrap_or(1.0);
    let tau = cfg.tau.unwrap_or(10.0);
    let m = cfg.m.unwrap_or(4000);
    let a = a_matrix_for(cfg, d)?;
    let post = location_posterior(&data, beta, tau)?;
    let draws = location_exact_draws(&post, m, derived_seed(cfg.seed, 0))?;
    let n = data.len();
    let modified = cfg.modified_score.unwrap_or(false);
    let loss: Evaluator = Box::new(move |x, t| quadratic_loss(x, t, &a).expect("dims fixed"));
    let score: Evaluator = Box::new(move |x, t| {
        if modified {
            modified_location_score(x, t, beta, tau, n)
        } else {
            location_score(x, t, beta)
        }
    });
    Ok(Prepared { data, draws, loss, score })
}

fn prepare_logistic(cfg: &ExperimentConfig, data_path: &Path) -> Result<Prepared, CliError> {
    let kind = match cfg.loss {
        None | Some(LossKind::Brier) => ClassificationLoss::Brier,
        Some(LossKind::Misclass) => ClassificationLoss::Misclass,
        Some(LossKind::Spherical) => ClassificationLoss::Spherical,
        Some(other) => {
            return Err(CliError::Usage(format!(
                "logistic model supports classification losses, got '{}'",
                other.name()
            )))
        }
    };
    let data = csv_io::classification_dataset(data_path)?;
    let beta = cfg.beta.unwrap_or(1.0);
    let m = cfg.m.unwrap_or(3980);
    let burn_in = cfg.burn_in.unwrap_or(100);
    let thin = cfg.thin.unwrap_or(5);
    let model = LogisticQuasiModel::from_dataset(beta, &data)?;
    let p = model.dim();
    let init = vec![0.0; p];
    let ld = |theta: &[f64]| model.log_density(theta);
    let scale = cfg
        .proposal_scale
        .unwrap_or_else(|| pilot_proposal_scale(&ld, &init, derived_seed(cfg.seed, 1)));
    let steps = burn_in + m * thin;
    let draws = rw_metropolis(ld, &init, steps, scale, burn_in, thin, derived_seed(cfg.seed, 0))?;
    let n = data.len();
    let modified = cfg.modified_score.unwrap_or(false);
    let loss: Evaluator = Box::new(move |row, t| {
        classification_loss(kind, row[0], sigmoid(row_logit(row, t))).expect("p in [0,1]")
    });
    let score: Evaluator = Box::new(move |row, t| {
        let s = beta * bernoulli_loglik(row[0], row_logit(row, t));
        if modified {
            let norm_sq: f64 = t.iter().map(|v| v * v).sum();
            s - norm_sq / (2.0 * n as f64)
        } else {
            s
        }
    });
    Ok(Prepared { data, draws, loss, score })
}

fn prepare_regression(cfg: &ExperimentConfig, data_path: &Path) -> Result<Prepared, CliError> {
    let kind = match cfg.loss {
        None | Some(LossKind::L2) => RegressionLoss::L2,
        Some(LossKind::ScaledL1) => RegressionLoss::ScaledL1,
        Some(other) => {
            return Err(CliError::Usage(format!(
                "regression model supports l2 and scaled_l1 losses, got '{}'",
                other.name()
            )))
        }
    };
    let data = csv_io::regression_dataset(data_path)?;
    let m = cfg.m.unwrap_or(3980);
    let burn_in = cfg.burn_in.unwrap_or(100);
    let thin = cfg.thin.unwrap_or(5);
    let regression = PeruggiaRegression::from_dataset(&data)?;
    let draws = peruggia_gibbs(&regression, m, burn_in, thin, derived_seed(cfg.seed, 0))?;
    let loss: Evaluator = Box::new(move |row, draw| {
        let (b0, b1, sigma2) = regression_params(draw);
        regression_loss(kind, row[0], row[1], b0, b1, sigma2.sqrt()).expect("sigma > 0")
    });
    let score: Evaluator = Box::new(|row, draw| {
        let (b0, b1, sigma2) = regression_params(draw);
        gaussian_loglik(row[0], row[1], b0, b1, sigma2)
    });
    Ok(Prepared { data, draws, loss, score })
}

fn plugin_empirical(data: &Dataset, draws: &PosteriorDraws, loss: &Evaluator) -> f64 {
    let theta_bar = posterior_mean(draws);
    data.iter_rows().map(|row| loss(row, &theta_bar)).sum::<f64>() / data.len() as f64
}

pub fn build_report(cfg: &ExperimentConfig, data_path: &Path) -> Result<EstimateReport, CliError> {
    let prepared = prepare(cfg, data_path)?;
    let em: EvalMatrix = build_eval_matrix(
        &prepared.data,
        &prepared.draws,
        &prepared.loss,
        &prepared.score,
    )?;
    let plugin = plugin_empirical(&prepared.data, &prepared.draws, &prepared.loss);
    let report = estimators::pcic_plugin(&em, plugin)?;
    let weighted = match &cfg.weights {
        None => None,
        Some(path) => {
            let w = ObservationWeights::new(csv_io::read_weights(path)?)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Some(estimators::pcic_weighted(&em, &w)?)
        }
    };
    let diagnostics = Kappa3Diagnostics::from_report(&report);
    Ok(EstimateReport {
        config: cfg.clone(),
        n: prepared.data.len(),
        m: prepared.draws.count(),
        provenance: prepared.draws.provenance().clone(),
        report,
        weighted_pcic_gibbs: weighted,
        diagnostics,
    })
}

pub fn cmd_estimate(
    cfg: &ExperimentConfig,
    data_path: &Path,
    out_path: &Path,
) -> Result<(), CliError> {
    let report = build_report(cfg, data_path)?;
    crate::cli::report::write_json(out_path, &report)?;
    eprintln!(
        "wrote {} (pcic_gibbs = {:.6}, correction_v = {:.6})",
        out_path.display(),
        report.report.pcic_gibbs,
        report.report.correction_v
    );
    Ok(())
}
