use std::path::Path;

use g2p_core::babbling::BabblingKind;
use rayon::prelude::*;

use crate::artifacts;
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::report::{report, Manifest, ManifestTrial, RunReport, TrialStatus, CONFIG_SNAPSHOT};
use crate::trial::{run_trial, trial_dir_name};

/// Write the hashed config snapshot a run directory starts from.
pub fn write_config_snapshot(cfg: &ExperimentConfig, run_dir: &Path) -> Result<()> {
    let text = format!("{}{}\n{}", artifacts::HASH_PREFIX, cfg.hash(), cfg.canonical());
    artifacts::write_bytes(&run_dir.join(CONFIG_SNAPSHOT), text.as_bytes())
}

/// Run every kind × seed trial (each over all configured conditions) in
/// parallel, then summarise. Failed trials are recorded in the manifest and
/// reported as [`HarnessError::TrialsFailed`] once the summary is written.
pub fn run_experiment(cfg: &ExperimentConfig, run_dir: &Path) -> Result<RunReport> {
    cfg.validate()?;
    artifacts::ensure_dir(run_dir)?;
    write_config_snapshot(cfg, run_dir)?;
    let conditions = cfg.condition_list();
    let units: Vec<(BabblingKind, u64)> = cfg
        .kinds
        .iter()
        .flat_map(|&k| cfg.trial_seeds().iter().map(move |&s| (k, s)))
        .collect();
    let outcomes: Vec<Result<()>> = units
        .par_iter()
        .map(|&(kind, seed)| run_trial(cfg, kind, seed, &conditions, &run_dir.join(trial_dir_name(kind, seed))).map(|_| ()))
        .collect();
    let trials: Vec<ManifestTrial> = units
        .iter()
        .zip(&outcomes)
        .map(|(&(kind, seed), outcome)| ManifestTrial {
            kind,
            seed,
            dir: trial_dir_name(kind, seed),
            status: if outcome.is_ok() { TrialStatus::Ok } else { TrialStatus::Failed },
            error: outcome.as_ref().err().map(HarnessError::record),
        })
        .collect();
    let failed = trials.iter().filter(|t| t.status == TrialStatus::Failed).count();
    Manifest::new(cfg.hash(), cfg.kinds.clone(), cfg.conditions.clone(), trials).write(run_dir)?;
    let summary = report(run_dir)?;
    if failed > 0 {
        return Err(HarnessError::TrialsFailed {
            failed,
            total: units.len(),
        });
    }
    Ok(summary)
}
