//! Seeded Monte-Carlo comparison of dynamic and static ambiguity balls.

use std::f64::consts::TAU;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dro::{solve_dro, Ball, DroProblem};
use super::red::{reconstruct_red_state, PositionSample, RedState};
use super::{ScenarioConfig, ScenarioError};
use crate::distribution::DiscreteDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Ball centred at all reconstructed states so far.
    Dynamic,
    /// Ball centred at the last reconstructed state only.
    Static,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Dynamic => "dynamic",
            Mode::Static => "static",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub realization: usize,
    pub checkpoint: usize,
    pub mode: Mode,
    pub radius: f64,
    pub dro_value: f64,
    /// Closest approach to the red UAVs actually realized by the chosen
    /// profile (square root of the objective at the true next state).
    pub min_true_distance: f64,
    pub profile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub checkpoint: usize,
    pub mode: Mode,
    pub radius: f64,
    pub mean_value: f64,
    pub std_value: f64,
    pub mean_true_distance: f64,
    pub realizations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub realizations: usize,
    pub checkpoints: Vec<usize>,
    pub rows: Vec<ExperimentRow>,
    pub summary: Vec<ModeSummary>,
}

impl ExperimentReport {
    pub fn summary_for(&self, checkpoint: usize, mode: Mode) -> Option<&ModeSummary> {
        self.summary
            .iter()
            .find(|s| s.checkpoint == checkpoint && s.mode == mode)
    }
}

/// One realization: samples phases for UAVs `1..=max(checkpoints)+1`,
/// reconstructs each observed UAV from its position samples, and solves the
/// dynamic and static problems at every checkpoint. Realization `r` uses
/// seed `seed + r`.
pub fn run_realization(
    cfg: &ScenarioConfig,
    realization: usize,
    checkpoints: &[usize],
    seed: u64,
) -> Result<Vec<ExperimentRow>, ScenarioError> {
    let uav = cfg.red_uav()?;
    let last = *checkpoints
        .iter()
        .max()
        .ok_or_else(|| ScenarioError::InvalidConfig("no checkpoints".into()))?;
    let realization_seed = seed.wrapping_add(realization as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(realization_seed);
    let phases = WeightedIndex::new(&cfg.theta_probabilities)
        .map_err(|e| ScenarioError::InvalidConfig(format!("theta probabilities: {e}")))?;
    let initial: Vec<RedState> = (0..=last)
        .map(|_| uav.initial_state(cfg.thetas[phases.sample(&mut rng)]))
        .collect();

    let mut lags = cfg.sample_lags.clone();
    lags.sort_by(|a, b| b.total_cmp(a));
    // reconstructed state of UAV k (0-based) at its window start T_{k+1}
    let mut observed: Vec<RedState> = Vec::with_capacity(last);
    for (k, x0) in initial.iter().take(last).enumerate() {
        let t_k = (k + 1) as f64 * TAU;
        let samples: Vec<PositionSample> = lags
            .iter()
            .map(|lag| {
                let s = uav.flow(x0, 0.0, t_k - lag);
                PositionSample {
                    time: t_k - lag,
                    position: [s[0], s[1]],
                }
            })
            .collect();
        let rec = reconstruct_red_state(&uav, &samples)?;
        observed.push(uav.flow(&rec.state, rec.time, t_k));
    }

    let mut rows = Vec::with_capacity(2 * checkpoints.len());
    for &i in checkpoints {
        if i == 0 {
            return Err(ScenarioError::InvalidConfig("checkpoints start at 1".into()));
        }
        let t_i = i as f64 * TAU;
        let pushed: Vec<Vec<f64>> = observed[..i]
            .iter()
            .enumerate()
            .map(|(k, s)| uav.flow(s, (k + 1) as f64 * TAU, t_i).to_vec())
            .collect();
        let known: RedState = pushed[i - 1].as_slice().try_into().unwrap();
        let truth_next = uav.flow(&initial[i], 0.0, t_i);
        for mode in [Mode::Dynamic, Mode::Static] {
            let (center, radius) = match mode {
                Mode::Dynamic => (DiscreteDistribution::empirical(pushed.clone())?, cfg.radius(i)),
                Mode::Static => (DiscreteDistribution::dirac(known.to_vec())?, cfg.radius(1)),
            };
            let ball = Ball {
                center,
                radius,
                p: cfg.ball_exponent,
            };
            let problem = DroProblem::new(cfg, &known, &ball)?;
            // both modes start from the same points
            let mut starts = ChaCha8Rng::seed_from_u64(realization_seed);
            starts.set_stream(i as u64);
            let sol = solve_dro(&problem, &cfg.solver, &mut starts);
            let true_f = problem.objective_at(&sol.profile, &uav, &truth_next, cfg.side, cfg.orbit_offset);
            rows.push(ExperimentRow {
                realization,
                checkpoint: i,
                mode,
                radius,
                dro_value: sol.value,
                min_true_distance: true_f.sqrt(),
                profile: sol.profile,
            });
        }
    }
    Ok(rows)
}

fn summarize(rows: &[ExperimentRow], checkpoints: &[usize]) -> Vec<ModeSummary> {
    let mut out = Vec::new();
    for &c in checkpoints {
        for mode in [Mode::Dynamic, Mode::Static] {
            let sel: Vec<&ExperimentRow> = rows.iter().filter(|r| r.checkpoint == c && r.mode == mode).collect();
            let n = sel.len() as f64;
            let mean = sel.iter().map(|r| r.dro_value).sum::<f64>() / n;
            let var = if sel.len() > 1 {
                sel.iter().map(|r| (r.dro_value - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            out.push(ModeSummary {
                checkpoint: c,
                mode,
                radius: sel.first().map_or(f64::NAN, |r| r.radius),
                mean_value: mean,
                std_value: var.sqrt(),
                mean_true_distance: sel.iter().map(|r| r.min_true_distance).sum::<f64>() / n,
                realizations: sel.len(),
            });
        }
    }
    out
}

/// Runs realizations `0..n_realizations` in parallel on the current rayon
/// pool. Row order is realization-major regardless of scheduling.
pub fn run_experiment(
    cfg: &ScenarioConfig,
    n_realizations: usize,
    checkpoints: &[usize],
    seed: u64,
) -> Result<ExperimentReport, ScenarioError> {
    cfg.validate()?;
    if n_realizations == 0 || checkpoints.is_empty() {
        return Err(ScenarioError::InvalidConfig(
            "need at least one realization and one checkpoint".into(),
        ));
    }
    let per: Vec<Vec<ExperimentRow>> = (0..n_realizations)
        .into_par_iter()
        .map(|r| run_realization(cfg, r, checkpoints, seed))
        .collect::<Result<_, _>>()?;
    let rows: Vec<ExperimentRow> = per.into_iter().flatten().collect();
    Ok(ExperimentReport {
        seed,
        realizations: n_realizations,
        checkpoints: checkpoints.to_vec(),
        summary: summarize(&rows, checkpoints),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uav_scenario::SolverSettings;

    fn quick() -> ScenarioConfig {
        ScenarioConfig {
            solver: SolverSettings {
                starts: 2,
                ..Default::default()
            },
            time_grid: 60,
            ..Default::default()
        }
    }

    #[test]
    fn single_sample_modes_coincide() {
        let rep = run_experiment(&quick(), 1, &[1], 7).unwrap();
        assert_eq!(rep.rows.len(), 2);
        let (d, s) = (&rep.rows[0], &rep.rows[1]);
        assert_eq!(d.radius, s.radius);
        assert_eq!(d.dro_value, s.dro_value);
        assert_eq!(d.profile, s.profile);
    }

    #[test]
    fn reruns_are_identical() {
        let a = run_experiment(&quick(), 2, &[3, 5], 99).unwrap();
        let b = run_experiment(&quick(), 2, &[3, 5], 99).unwrap();
        assert_eq!(a, b);
        let c = run_experiment(&quick(), 2, &[3, 5], 100).unwrap();
        assert_ne!(a.rows, c.rows);
    }

    #[test]
    fn radii_follow_calibration() {
        let rep = run_experiment(&quick(), 1, &[10], 1).unwrap();
        assert_eq!(rep.summary_for(10, Mode::Dynamic).unwrap().radius, 0.17);
        assert!((rep.summary_for(10, Mode::Static).unwrap().radius - 0.3023).abs() < 5e-4);
    }
}
