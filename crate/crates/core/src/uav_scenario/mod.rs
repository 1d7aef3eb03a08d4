//! Blue-UAV detection-avoidance scenario: a blue UAV crosses a row of square
//! regions, each patrolled by a red UAV on a circular orbit with a random
//! phase. At the centre of region `i` the blue UAV picks its velocity
//! profile for the next `2π` time units by solving a sup-inf problem over a
//! Wasserstein ball around the reconstructed states of the red UAVs seen so
//! far (dynamic) or around the last one only (static).
//!
//! Window times are measured from the window start `T_i = 2π i`. The orbit
//! reference is `2π`-periodic, so the flow from `T_i` coincides with the
//! flow from time zero.

mod dro;
mod experiment;
mod red;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concentration::calibrated_radius;
use crate::distribution::DistributionError;

pub use dro::{
    blue_positions, candidate_support, dro_objective, solve_dro, solve_inner_inf, window_grid, Ball, DroProblem,
    DroSolution, InnerProblem, ProfileSet, SolverSettings,
};
pub use experiment::{run_experiment, run_realization, ExperimentReport, ExperimentRow, Mode, ModeSummary};
pub use red::{reconstruct_red_state, PositionSample, Reconstruction, RedState, RedUav};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario configuration: {0}")]
    InvalidConfig(String),
    #[error("the velocity-profile set is empty")]
    EmptyProfileSet,
    #[error("velocity profile {0:?} is infeasible")]
    InfeasibleProfile(Vec<f64>),
    #[error("need at least 3 position samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample times do not determine position and velocity")]
    DegenerateSampling,
    #[error("no phase fits the samples (best residual {residual:e})")]
    NoConsistentPhase { residual: f64 },
    #[error("ambiguous fit: phases {first} and {second} both match the samples")]
    AmbiguousPhase { first: f64, second: f64 },
    #[error("ball centre atom {0} is not among the candidate support points")]
    CenterNotInCandidates(usize),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// Scenario parameters. Omitted velocity bounds default to `0.3 a/(2π)` and
/// `1.5 a/(2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Orbit radius `r`.
    pub orbit_radius: f64,
    /// Side `a` of each square region.
    pub side: f64,
    /// Tracking gain `κ`.
    pub kappa: f64,
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
    /// Number `n` of constant-velocity segments.
    pub segments: usize,
    /// Points `n_t` of the time grid on each window.
    pub time_grid: usize,
    /// Phase support.
    pub thetas: Vec<f64>,
    pub theta_probabilities: Vec<f64>,
    /// Calibration radius `ε_ref` at `N_ref` samples.
    pub eps_ref: f64,
    pub n_ref: usize,
    pub calibration_exponent: f64,
    /// Wasserstein exponent of the ambiguity ball.
    pub ball_exponent: f64,
    /// Position samples of UAV `k` are taken at `T_k - lag`.
    pub sample_lags: Vec<f64>,
    /// Lateral distance of the orbit centres from the blue path.
    pub orbit_offset: f64,
    /// Axis offsets per coordinate in the candidate grid.
    pub candidate_steps: usize,
    /// Centre atoms closer than this are merged.
    pub merge_tolerance: f64,
    pub solver: SolverSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            orbit_radius: 1.0,
            side: 2.5,
            kappa: 4.0,
            v_min: None,
            v_max: None,
            segments: 4,
            time_grid: 200,
            thetas: vec![2.8 * PI / 4.0, 3.5 * PI / 4.0, 4.6 * PI / 4.0],
            theta_probabilities: vec![0.3, 0.5, 0.2],
            eps_ref: 0.17,
            n_ref: 10,
            calibration_exponent: 0.25,
            ball_exponent: 1.0,
            sample_lags: vec![1.0, 0.6, 0.2],
            orbit_offset: 0.0,
            candidate_steps: 10,
            merge_tolerance: 1e-7,
            solver: SolverSettings::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn v_min(&self) -> f64 {
        self.v_min.unwrap_or(0.3 * self.side / TAU)
    }

    pub fn v_max(&self) -> f64 {
        self.v_max.unwrap_or(1.5 * self.side / TAU)
    }

    pub fn red_uav(&self) -> Result<RedUav, ScenarioError> {
        RedUav::new(self.orbit_radius, self.kappa)
    }

    /// `𝒳 = {x ∈ [v_min, v_max]^n : Σ x = a n / (2π)}`.
    pub fn profile_set(&self) -> Result<ProfileSet, ScenarioError> {
        ProfileSet::new(
            self.v_min(),
            self.v_max(),
            self.segments,
            self.side * self.segments as f64 / TAU,
        )
    }

    /// Initial states `(r cos θ, r sin θ, 0, 0, θ)` over the phase support.
    pub fn support_states(&self, uav: &RedUav) -> Vec<RedState> {
        self.thetas.iter().map(|&t| uav.initial_state(t)).collect()
    }

    /// `ε_N = ε_ref (N_ref / N)^exponent`.
    pub fn radius(&self, n: usize) -> f64 {
        calibrated_radius(self.eps_ref, self.n_ref, n, self.calibration_exponent)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidConfig(m));
        self.red_uav()?;
        if !(self.side > 0.0) {
            return bad(format!("side must be positive, got {}", self.side));
        }
        self.profile_set()?;
        if self.time_grid < 2 {
            return bad("time_grid must be at least 2".into());
        }
        if self.thetas.is_empty() || self.thetas.len() != self.theta_probabilities.len() {
            return bad("thetas and theta_probabilities must be non-empty and of equal length".into());
        }
        if self.theta_probabilities.iter().any(|&p| !(p >= 0.0)) {
            return bad("theta probabilities must be nonnegative".into());
        }
        if (self.theta_probabilities.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("theta probabilities must sum to 1".into());
        }
        if !(self.eps_ref >= 0.0) || self.n_ref == 0 || !(self.calibration_exponent > 0.0) {
            return bad("calibration needs eps_ref >= 0, n_ref >= 1, exponent > 0".into());
        }
        if !(self.ball_exponent >= 1.0) {
            return bad("ball_exponent must be at least 1".into());
        }
        if self.sample_lags.len() < 3 || self.sample_lags.iter().any(|&l| !(0.0..TAU).contains(&l)) {
            return bad("need at least 3 sample lags in [0, 2π)".into());
        }
        let mut lags = self.sample_lags.clone();
        lags.sort_by(f64::total_cmp);
        if lags.windows(2).any(|w| w[0] == w[1]) {
            return bad("sample lags must be distinct".into());
        }
        if self.candidate_steps == 0 || !(self.merge_tolerance >= 0.0) {
            return bad("candidate_steps must be positive and merge_tolerance nonnegative".into());
        }
        if self.solver.starts == 0 || !(self.solver.tolerance > 0.0) {
            return bad("solver needs at least one start and a positive tolerance".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{support_radius, RedUavField};

    #[test]
    fn defaults_are_valid() {
        let c = ScenarioConfig::default();
        c.validate().unwrap();
        assert!((c.v_min() - 0.3 * 2.5 / TAU).abs() < 1e-15);
        assert!((c.v_max() - 1.5 * 2.5 / TAU).abs() < 1e-15);
    }

    #[test]
    fn calibrated_radii() {
        let c = ScenarioConfig::default();
        for (n, r) in [(1, 0.3023), (10, 0.17), (40, 0.1201), (160, 0.085)] {
            assert!((c.radius(n) - r).abs() < 5e-4, "N = {n}: {}", c.radius(n));
        }
    }

    #[test]
    fn validation_failures() {
        let with = |f: fn(&mut ScenarioConfig)| {
            let mut c = ScenarioConfig::default();
            f(&mut c);
            c.validate()
        };
        assert!(with(|c| c.theta_probabilities = vec![0.5, 0.5, 0.5]).is_err());
        assert!(matches!(
            with(|c| c.v_min = Some(0.5)),
            Err(ScenarioError::EmptyProfileSet)
        ));
        assert!(with(|c| c.sample_lags = vec![0.1, 0.2]).is_err());
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let c: ScenarioConfig = serde_json::from_str(r#"{"side": 3.0}"#).unwrap();
        assert_eq!(c.side, 3.0);
        assert_eq!(c.segments, 4);
        let back: ScenarioConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"sidee": 3.0}"#).is_err());
    }

    #[test]
    fn support_radius_constant_over_windows() {
        let c = ScenarioConfig::default();
        let uav = c.red_uav().unwrap();
        let cloud: Vec<Vec<f64>> = c.support_states(&uav).iter().map(|s| s.to_vec()).collect();
        let field = RedUavField {
            radius: c.orbit_radius,
            kappa: c.kappa,
        };
        let r0 = support_radius(&cloud, &field, 0.0, 1e-3).unwrap();
        for i in 1..=3 {
            let ri = support_radius(&cloud, &field, i as f64 * TAU, 1e-3).unwrap();
            assert!((ri - r0).abs() < 1e-6, "window {i}: {ri} vs {r0}");
        }
    }
}
