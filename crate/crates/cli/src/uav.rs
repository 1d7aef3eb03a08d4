//! `uav`: seeded dynamic-vs-static DRO comparison.

use dynamic_ambiguity::uav_scenario::{run_experiment, ExperimentReport, ScenarioConfig, ScenarioError};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{config_err, fmt_f64, numerical_err, CliError, CliResult, Csv, OutputDir};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavCommand {
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<usize>,
}

fn default_realizations() -> usize {
    10
}

fn default_checkpoints() -> Vec<usize> {
    vec![10, 40, 160]
}

fn scenario_err(e: ScenarioError) -> CliError {
    match e {
        ScenarioError::InvalidConfig(_) | ScenarioError::EmptyProfileSet => config_err(e),
        other => numerical_err(other),
    }
}

impl UavCommand {
    pub fn validate(&self) -> CliResult<()> {
        self.scenario.validate().map_err(scenario_err)?;
        if self.realizations == 0 {
            return Err(config_err("realizations must be at least 1"));
        }
        if self.checkpoints.is_empty() || self.checkpoints.contains(&0) {
            return Err(config_err("checkpoints must be a non-empty list of positive integers"));
        }
        Ok(())
    }
}

pub fn rows_csv(rep: &ExperimentReport) -> String {
    let mut csv = Csv::new(&[
        "realization",
        "checkpoint_i",
        "mode",
        "radius",
        "dro_value",
        "min_true_distance",
    ]);
    for r in &rep.rows {
        csv.row(&[
            r.realization.to_string(),
            r.checkpoint.to_string(),
            r.mode.as_str().to_string(),
            fmt_f64(r.radius),
            fmt_f64(r.dro_value),
            fmt_f64(r.min_true_distance),
        ]);
    }
    csv.finish()
}

pub fn run(cfg: &UavCommand, out: &OutputDir, seed: u64) -> CliResult<()> {
    cfg.validate()?;
    out.write_manifest("uav", cfg, seed, &["uav.csv", "uav_summary.json"])?;
    let rep = run_experiment(&cfg.scenario, cfg.realizations, &cfg.checkpoints, seed).map_err(scenario_err)?;
    out.write("uav.csv", &rows_csv(&rep))?;
    let profiles: Vec<_> = rep
        .rows
        .iter()
        .map(|r| json!({"realization": r.realization, "checkpoint_i": r.checkpoint, "mode": r.mode, "profile": r.profile}))
        .collect();
    out.write_json(
        "uav_summary.json",
        &json!({
            "seed": rep.seed,
            "realizations": rep.realizations,
            "checkpoints": rep.checkpoints,
            "summary": rep.summary,
            "profiles": profiles,
        }),
    )?;
    Ok(())
}
