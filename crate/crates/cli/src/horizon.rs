//! `horizon`: effective sampling horizon with the per-κ margin table.

use dynamic_ambiguity::ambiguity::{effective_horizon, AmbiguityError, HorizonOutcome, DEFAULT_HORIZON_CAP};
use dynamic_ambiguity::concentration::RadiusConfig;
use dynamic_ambiguity::dynamics::FlowErrorModel;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::output::{config_err, fmt_f64, numerical_err, CliError, CliResult, Csv, OutputDir};
use crate::radius::RadiusCommand;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonCommand {
    pub radius: RadiusConfig,
    pub flow_error: FlowErrorModel,
    #[serde(rename = "rho_T")]
    pub rho_t: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_HORIZON_CAP
}

impl HorizonCommand {
    fn as_radius(&self, n_max: usize) -> RadiusCommand {
        RadiusCommand {
            radius: self.radius,
            flow_error: self.flow_error,
            rho_t: self.rho_t,
            delta: self.delta,
            n_min: 1,
            n_max,
            eps_star: None,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.cap == 0 {
            return Err(config_err("cap must be at least 1"));
        }
        self.as_radius(1).validate()
    }
}

/// JSON report: `N_star` is an integer, `null` (with a reason) when no
/// sample count is guaranteed to help, or `"cap"` when the search hit the cap.
pub fn report(cfg: &HorizonCommand) -> CliResult<(Value, String)> {
    cfg.validate()?;
    let eh = effective_horizon(cfg.delta, &cfg.radius, cfg.rho_t, &cfg.flow_error, cfg.cap).map_err(|e| match e {
        AmbiguityError::CriticalRegime | AmbiguityError::NonPositive { .. } => CliError::Config(e.to_string()),
        other => numerical_err(other),
    })?;
    let radius = cfg.as_radius(eh.margins.len() + 1);
    let mut table = Vec::with_capacity(eh.margins.len());
    let mut csv = Csv::new(&["N", "eps_N", "bar_eps_N", "psi_N"]);
    for (k, margin) in eh.margins.iter().enumerate() {
        let [eps, bar, psi] = radius.row(k + 1)?;
        table.push(json!({
            "kappa": k + 1,
            "eps_N": eps,
            "bar_eps_N": bar,
            "psi_N": psi,
            "margin": margin,
        }));
        csv.row(&[(k + 1).to_string(), fmt_f64(eps), fmt_f64(bar), fmt_f64(psi)]);
    }
    let last = eh.margins.len() + 1;
    let [eps, bar, psi] = radius.row(last)?;
    csv.row(&[last.to_string(), fmt_f64(eps), fmt_f64(bar), fmt_f64(psi)]);

    let mut doc = json!({
        "Delta": cfg.delta,
        "rho_T": cfg.rho_t,
        "c_bar": eh.c_bar,
        "p_bar": eh.p_bar,
        "table": table,
    });
    let star = match eh.outcome {
        HorizonOutcome::Finite(n) => {
            doc["N_star"] = json!(n);
            n.to_string()
        }
        HorizonOutcome::NoGuaranteedImprovement => {
            doc["N_star"] = Value::Null;
            doc["reason"] = json!("no guaranteed improvement");
            "null".into()
        }
        HorizonOutcome::UnboundedUpToCap(cap) => {
            doc["N_star"] = json!("cap");
            doc["cap"] = json!(cap);
            "cap".into()
        }
    };
    csv.row(&["N_star".into(), star, String::new(), String::new()]);
    Ok((doc, csv.finish()))
}

pub fn run(cfg: &HorizonCommand, out: &OutputDir, seed: u64) -> CliResult<()> {
    cfg.validate()?;
    out.write_manifest("horizon", cfg, seed, &["horizon.json", "horizon.csv"])?;
    let (doc, csv) = report(cfg)?;
    out.write_json("horizon.json", &doc)?;
    out.write("horizon.csv", &csv)?;
    Ok(())
}
