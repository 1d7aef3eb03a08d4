//! `observe`: sampled-data observability diagnostics and a seeded
//! reconstruction check per trajectory.

use dynamic_ambiguity::ambiguity::SamplingSchedule;
use dynamic_ambiguity::observability::{
    check_schedule_observability, eigenvalue_margin, estimation_error_bound, kalman_rank, numerical_rank,
    reconstruct_state, robust_sampling_bound, sample_observability_matrix, weight_matrix, Hypothesis,
    ObservabilityError, SamplingBound, ScheduleCheck, SystemSpec, DEFAULT_FLOW_STEP,
};
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::output::{config_err, numerical_err, CliError, CliResult, OutputDir};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserveCommand {
    pub system: SystemSpec,
    /// Sample times of each trajectory.
    pub schedule: Vec<Vec<f64>>,
    #[serde(default = "half")]
    pub a: f64,
    /// Bound `δ*` on each output error; zero means noiseless outputs.
    #[serde(default)]
    pub noise_bound: f64,
    /// Sampling hypothesis to check (constant systems only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<Hypothesis>,
    /// True state at the last sample of each trajectory; drawn uniformly
    /// from `[-1, 1]^d` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<Vec<f64>>>,
    /// Grid spacing for the sup/inf in the sampling bound; `τ_low / 100`
    /// when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    #[serde(default = "default_flow_step")]
    pub flow_step: f64,
}

fn half() -> f64 {
    0.5
}

fn default_flow_step() -> f64 {
    DEFAULT_FLOW_STEP
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryReport {
    pub trajectory: usize,
    pub samples: usize,
    pub intra_sampling_gap: f64,
    pub rank: usize,
    pub state_dim: usize,
    pub eigenvalue_margin: f64,
    /// `eigenvalue_margin / λ_min(Gramian)`; at least `a` when the gap is
    /// below the bound.
    pub margin_ratio: f64,
    pub below_sampling_bound: bool,
    pub reconstruction_error: Option<f64>,
    pub eps_star: Option<f64>,
    pub within_certificate: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObserveReport {
    pub state_dim: usize,
    pub output_dim: usize,
    pub kalman_rank: Option<usize>,
    pub tau_low: f64,
    pub tau_up: f64,
    pub horizon: f64,
    pub sampling_bound: Option<SamplingBound>,
    pub sampling_bound_error: Option<String>,
    pub schedule_check: Option<ScheduleCheck>,
    pub trajectories: Vec<TrajectoryReport>,
}

fn obs_err(e: ObservabilityError) -> CliError {
    match e {
        ObservabilityError::DimensionMismatch(_)
        | ObservabilityError::NonFinite(_)
        | ObservabilityError::NonIncreasingTimes
        | ObservabilityError::TooFewSamples { .. }
        | ObservabilityError::InvalidParameter(_)
        | ObservabilityError::NotTimeInvariant
        | ObservabilityError::PatternMismatch(_) => config_err(e),
        _ => numerical_err(e),
    }
}

impl ObserveCommand {
    pub fn validate(&self) -> CliResult<()> {
        let sys = self.system.build().map_err(obs_err)?;
        SamplingSchedule::new(self.schedule.clone(), 1).map_err(config_err)?;
        if self.schedule.iter().any(|t| t.len() < 2) {
            return Err(config_err("every trajectory needs at least two samples"));
        }
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(config_err(format!("a must lie in (0, 1), got {}", self.a)));
        }
        if !(self.noise_bound >= 0.0 && self.noise_bound.is_finite()) {
            return Err(config_err(format!(
                "noise_bound must be nonnegative, got {}",
                self.noise_bound
            )));
        }
        if !(self.grid_step.unwrap_or(1.0) > 0.0 && self.flow_step > 0.0) {
            return Err(config_err("grid_step and flow_step must be positive"));
        }
        if self.hypothesis.is_some() && !sys.is_lti() {
            return Err(config_err("hypothesis checks need a time-invariant system"));
        }
        if let Some(states) = &self.states {
            if states.len() != self.schedule.len() || states.iter().any(|s| s.len() != sys.state_dim()) {
                return Err(config_err(format!(
                    "states must hold {} vectors of length {}",
                    self.schedule.len(),
                    sys.state_dim()
                )));
            }
        }
        Ok(())
    }
}

/// Output error with norm uniform in `[0, δ*]` and uniformly random direction.
fn bounded_noise(rng: &mut ChaCha8Rng, m: usize, bound: f64) -> Vec<f64> {
    if bound == 0.0 {
        return vec![0.0; m];
    }
    let dir: Vec<f64> = loop {
        let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            break v.iter().map(|x| x / n).collect();
        }
    };
    let r = rng.gen_range(0.0..=bound);
    dir.iter().map(|x| x * r).collect()
}

pub fn report(cfg: &ObserveCommand, seed: u64) -> CliResult<ObserveReport> {
    cfg.validate()?;
    let sys = cfg.system.build().map_err(obs_err)?;
    let (d, m) = (sys.state_dim(), sys.output_dim());
    let schedule = SamplingSchedule::new(cfg.schedule.clone(), 1).map_err(config_err)?;
    let k_rank = sys.constant_matrices().map(|(a, c)| kalman_rank(a, c));
    if let Some(r) = k_rank {
        if r < d {
            return Err(numerical_err(ObservabilityError::Unobservable { rank: r, dim: d }));
        }
    }
    let (tau_low, tau_up, horizon) = (schedule.tau_low(), schedule.tau_up(), schedule.horizon());
    let (sampling_bound, sampling_bound_error) = match robust_sampling_bound(
        &sys,
        tau_low,
        tau_up,
        horizon,
        cfg.a,
        cfg.grid_step.unwrap_or(tau_low / 100.0),
    ) {
        Ok(b) => (Some(b), None),
        Err(e @ ObservabilityError::SingularGramian { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(obs_err(e)),
    };
    let schedule_check = match cfg.hypothesis {
        Some(h) => Some(check_schedule_observability(&sys, &cfg.schedule, h).map_err(obs_err)?),
        None => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trajectories = Vec::with_capacity(cfg.schedule.len());
    for (i, times) in cfg.schedule.iter().enumerate() {
        let o = sample_observability_matrix(&sys, times, cfg.flow_step).map_err(obs_err)?;
        let w = weight_matrix(times, m).map_err(obs_err)?;
        let margin = eigenvalue_margin(&o, &w);
        let gap = times.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max);
        let truth: DVector<f64> = match &cfg.states {
            Some(s) => DVector::from_column_slice(&s[i]),
            None => DVector::from_fn(d, |_, _| rng.gen_range(-1.0..=1.0)),
        };
        let mut outputs = &o * &truth;
        for l in 0..times.len() {
            for (k, e) in bounded_noise(&mut rng, m, cfg.noise_bound).into_iter().enumerate() {
                outputs[l * m + k] += e;
            }
        }
        let reconstruction_error = match reconstruct_state(&o, &w, &outputs) {
            Ok(x) => Some((x - &truth).norm()),
            Err(ObservabilityError::RankDeficient { .. }) => None,
            Err(e) => return Err(obs_err(e)),
        };
        let lambda = sampling_bound.as_ref().map(|b| b.lambda_min);
        let eps_star = match lambda {
            Some(l) => Some(estimation_error_bound(tau_up, l, cfg.a, cfg.noise_bound).map_err(obs_err)?),
            None => None,
        };
        let below = sampling_bound.as_ref().is_some_and(|b| gap <= b.value);
        trajectories.push(TrajectoryReport {
            trajectory: i + 1,
            samples: times.len(),
            intra_sampling_gap: gap,
            rank: numerical_rank(&(&w * &o)),
            state_dim: d,
            eigenvalue_margin: margin,
            margin_ratio: lambda.map_or(f64::NAN, |l| margin / l),
            below_sampling_bound: below,
            reconstruction_error,
            eps_star,
            within_certificate: match (reconstruction_error, eps_star) {
                (Some(err), Some(eps)) if below => Some(err <= eps + 1e-12 * eps.max(1.0)),
                _ => None,
            },
        });
    }
    Ok(ObserveReport {
        state_dim: d,
        output_dim: m,
        kalman_rank: k_rank,
        tau_low,
        tau_up,
        horizon,
        sampling_bound,
        sampling_bound_error,
        schedule_check,
        trajectories,
    })
}

pub fn run(cfg: &ObserveCommand, out: &OutputDir, seed: u64) -> CliResult<()> {
    cfg.validate()?;
    out.write_manifest("observe", cfg, seed, &["observe.json"])?;
    let rep = report(cfg, seed)?;
    out.write_json("observe.json", &rep)?;
    Ok(())
}
