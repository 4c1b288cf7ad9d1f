//! Declarative experiment configuration.
//!
//! Configs are JSON with keys matching the struct fields exactly; unknown
//! keys are rejected. A seed is always required so that no run depends on
//! wall-clock state.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cli::CliError;
use crate::models::generate::LocationNoise;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Estimate,
    Location,
    DpLogistic,
    Outlier,
    Sensitivity,
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Location,
    Logistic,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Quadratic,
    Brier,
    Misclass,
    Spherical,
    L2,
    ScaledL1,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Quadratic => "quadratic",
            LossKind::Brier => "brier",
            LossKind::Misclass => "misclass",
            LossKind::Spherical => "spherical",
            LossKind::L2 => "l2",
            LossKind::ScaledL1 => "scaled_l1",
        }
    }
}

/// One declarative run: experiment kind, model and sampler parameters,
/// sizes, loss selection, and output path.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<Vec<f64>>,
    /// Full loss matrix for the quadratic loss; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<LocationNoise>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modified_score: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal_scale: Option<f64>,
    /// Optional path to a one-column CSV of observation weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for (name, value) in [
            ("n", self.n),
            ("d", self.d),
            ("m", self.m),
            ("test_n", self.test_n),
            ("replications", self.replications),
            ("thin", self.thin),
        ] {
            if value == Some(0) {
                return Err(CliError::Usage(format!("{name} must be positive")));
            }
        }
        for (name, value) in [("beta", self.beta), ("tau", self.tau)] {
            if let Some(v) = value {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(CliError::Usage(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if let Some(grid) = &self.beta_grid {
            if grid.is_empty() || grid.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
                return Err(CliError::Usage("beta_grid must be non-empty and positive".to_string()));
            }
        }
        if let Some(grid) = &self.r_grid {
            if grid.is_empty() || grid.iter().any(|r| !r.is_finite()) {
                return Err(CliError::Usage("r_grid must be non-empty and finite".to_string()));
            }
        }
        if let Some(scale) = self.proposal_scale {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(CliError::Usage(format!(
                    "proposal_scale must be positive, got {scale}"
                )));
            }
        }
        Ok(())
    }
}

/// Builds the loss matrix for dimension `d` from the config, defaulting to
/// the identity.
pub fn a_matrix_for(cfg: &ExperimentConfig, d: usize) -> Result<nalgebra::DMatrix<f64>, CliError> {
    match &cfg.a_matrix {
        None => Ok(nalgebra::DMatrix::identity(d, d)),
        Some(rows) => {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(CliError::Usage(format!(
                    "a_matrix must be {d}x{d} to match the data dimension"
                )));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            Ok(nalgebra::DMatrix::from_row_slice(d, d, &flat))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"experiment": "location", "seed": 7}"#).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Location);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<ExperimentConfig>(
            r#"{"experiment": "location", "seed": 7, "bogus": 1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn seed_is_required() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"experiment": "check"}"#).is_err());
    }

    #[test]
    fn zero_counts_are_rejected() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"experiment": "location", "seed": 7, "n": 0}"#).unwrap();
        assert!(cfg.validate().is_err());
    }
}
