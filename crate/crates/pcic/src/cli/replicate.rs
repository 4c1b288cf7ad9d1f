//! Replication command: runs one of the built-in studies and writes the
//! per-replication rows (CSV) and the summary (JSON) — the data behind the
//! figures, not rendered plots.

use std::path::Path;

use serde::Serialize;

use crate::cli::config::{ExperimentConfig, ExperimentKind};
use crate::cli::report::{write_json, write_rows_csv, StudyReport};
use crate::cli::studies;
use crate::cli::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Location,
    DpLogistic,
    Outlier,
    Sensitivity,
}

impl StudyKind {
    fn expected_experiment(self) -> ExperimentKind {
        match self {
            StudyKind::Location => ExperimentKind::Location,
            StudyKind::DpLogistic => ExperimentKind::DpLogistic,
            StudyKind::Outlier => ExperimentKind::Outlier,
            StudyKind::Sensitivity => ExperimentKind::Sensitivity,
        }
    }
}

fn write_outputs<T: Serialize>(
    out_dir: &Path,
    cfg: &ExperimentConfig,
    rows: &[studies::RepRow],
    summaries: T,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    write_rows_csv(&out_dir.join("replications.csv"), rows)?;
    write_json(
        &out_dir.join("summary.json"),
        &StudyReport { config: cfg.clone(), summaries },
    )?;
    Ok(())
}

pub fn cmd_replicate(
    study: StudyKind,
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<(), CliError> {
    if cfg.experiment != study.expected_experiment() {
        return Err(CliError::Usage(format!(
            "config experiment '{:?}' does not match the requested study",
            cfg.experiment
        )));
    }
    match study {
        StudyKind::Location => {
            let study_cfg = studies::LocationStudyConfig::from_experiment(cfg)?;
            let (reps, summary) = studies::run_location_study(&study_cfg)?;
            write_outputs(out_dir, cfg, &studies::location_rows(&reps), vec![summary])
        }
        StudyKind::DpLogistic => {
            let study_cfg = studies::DpLogisticStudyConfig::from_experiment(cfg)?;
            let (reps, summaries) = studies::run_dp_logistic_study(&study_cfg)?;
            let loss = summaries.first().map_or("brier", |s| s.loss.as_str()).to_string();
            write_outputs(
                out_dir,
                cfg,
                &studies::dp_rows(&reps, study_cfg.replications, &loss),
                summaries,
            )
        }
        StudyKind::Outlier => {
            let study_cfg = studies::OutlierStudyConfig::from_experiment(cfg)?;
            let (reps, summaries) = studies::run_outlier_study(&study_cfg)?;
            write_outputs(
                out_dir,
                cfg,
                &studies::outlier_rows(&reps, study_cfg.replications),
                summaries,
            )
        }
        StudyKind::Sensitivity => {
            let study_cfg = studies::SensitivityStudyConfig::from_experiment(cfg)?;
            let (reps, summaries) = studies::run_sensitivity_study(&study_cfg)?;
            write_outputs(
                out_dir,
                cfg,
                &studies::sensitivity_rows(&reps, study_cfg.r, study_cfg.replications),
                summaries,
            )
        }
    }
}
