//! Serialized report schemas. Reports embed the full config and never
//! include timestamps, so reruns with the same config are byte-identical.

use std::path::Path;

use serde::Serialize;

use crate::cli::config::ExperimentConfig;
use crate::cli::studies::RepRow;
use crate::cli::CliError;
use crate::core::{Provenance, RiskReport};

#[derive(Debug, Clone, Serialize)]
pub struct Kappa3Diagnostics {
    /// (1/2n) sum_i |kappa3_i|: the estimated distance to exact
    /// leave-one-out cross validation.
    pub kappa3_bound: f64,
    /// Whether the bound is dominated by the correction:
    /// bound <= 0.5 |v| + 5 mc_se.
    pub accepted: bool,
}

impl Kappa3Diagnostics {
    pub fn from_report(report: &RiskReport) -> Self {
        let n = report.kappa3.len() as f64;
        let bound = report.kappa3.iter().map(|k| k.abs()).sum::<f64>() / (2.0 * n);
        Self {
            kappa3_bound: bound,
            accepted: bound <= 0.5 * report.correction_v.abs() + 5.0 * report.mc_se,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub config: ExperimentConfig,
    pub n: usize,
    pub m: usize,
    pub provenance: Provenance,
    pub report: RiskReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighted_pcic_gibbs: Option<f64>,
    pub diagnostics: Kappa3Diagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyReport<T: Serialize> {
    pub config: ExperimentConfig,
    pub summaries: T,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn write_rows_csv(path: &Path, rows: &[RepRow]) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::Io(format!("cannot flush {}: {e}", path.display())))
}
