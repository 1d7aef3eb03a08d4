//! `radius`: the three radius columns over a range of sample counts.

use dynamic_ambiguity::ambiguity::{pushforward_error_term, pushforward_error_term_noisy};
use dynamic_ambiguity::concentration::{ambiguity_radius, RadiusConfig};
use dynamic_ambiguity::dynamics::FlowErrorModel;
use serde::{Deserialize, Serialize};

use crate::output::{config_err, ensure_finite, fmt_f64, CliResult, Csv, OutputDir};

const MAX_ROWS: usize = 10_000_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusCommand {
    pub radius: RadiusConfig,
    pub flow_error: FlowErrorModel,
    #[serde(rename = "rho_T")]
    pub rho_t: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    #[serde(default = "one")]
    pub n_min: usize,
    pub n_max: usize,
    /// Worst-case state-estimation error; switches to the noisy error term.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_star: Option<f64>,
}

fn one() -> usize {
    1
}

impl RadiusCommand {
    pub fn validate(&self) -> CliResult<()> {
        if !(self.rho_t > 0.0 && self.rho_t.is_finite()) {
            return Err(config_err(format!("rho_T must be positive, got {}", self.rho_t)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(config_err(format!("Delta must be positive, got {}", self.delta)));
        }
        if self.n_min == 0 || self.n_min > self.n_max {
            return Err(config_err(format!(
                "need 1 <= n_min <= n_max, got {}..{}",
                self.n_min, self.n_max
            )));
        }
        if self.n_max - self.n_min >= MAX_ROWS {
            return Err(config_err(format!("at most {MAX_ROWS} rows")));
        }
        if let Some(e) = self.eps_star {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(config_err(format!("eps_star must be nonnegative, got {e}")));
            }
        }
        Ok(())
    }

    pub fn row(&self, n: usize) -> CliResult<[f64; 3]> {
        let eps = ambiguity_radius(n, &self.radius, self.rho_t);
        let bar = match self.eps_star {
            Some(e) => pushforward_error_term_noisy(n, self.delta, self.radius.p(), &self.flow_error, e),
            None => pushforward_error_term(n, self.delta, self.radius.p(), &self.flow_error),
        };
        let psi = eps + bar;
        ensure_finite(
            &[("eps_N", eps), ("bar_eps_N", bar), ("psi_N", psi)],
            &format!("N = {n}"),
        )?;
        Ok([eps, bar, psi])
    }
}

pub fn run(cfg: &RadiusCommand, out: &OutputDir, seed: u64) -> CliResult<()> {
    cfg.validate()?;
    out.write_manifest("radius", cfg, seed, &["radius.csv"])?;
    let mut csv = Csv::new(&["N", "eps_N", "bar_eps_N", "psi_N"]);
    for n in cfg.n_min..=cfg.n_max {
        let [eps, bar, psi] = cfg.row(n)?;
        csv.row(&[n.to_string(), fmt_f64(eps), fmt_f64(bar), fmt_f64(psi)]);
    }
    out.write("radius.csv", &csv.finish())?;
    Ok(())
}
