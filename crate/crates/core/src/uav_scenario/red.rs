//! Red UAV dynamics `ξ̈₁ = κ²(χ(t, θ) - ξ₁)` and phase-aware state
//! reconstruction from position samples.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use super::ScenarioError;

/// State `(x, y, vx, vy, θ)`.
pub type RedState = [f64; 5];

/// Orbit radius `r` and tracking gain `κ` of the red UAVs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedUav {
    pub radius: f64,
    pub kappa: f64,
}

impl RedUav {
    pub fn new(radius: f64, kappa: f64) -> Result<Self, ScenarioError> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(ScenarioError::InvalidConfig(format!(
                "orbit radius must be nonnegative, got {radius}"
            )));
        }
        if !(kappa > 0.0 && kappa.is_finite()) || (kappa - 1.0).abs() < 1e-9 {
            return Err(ScenarioError::InvalidConfig(format!(
                "tracking gain must be positive and different from 1, got {kappa}"
            )));
        }
        Ok(Self { radius, kappa })
    }

    /// Amplitude `κ² r / (κ² - 1)` of the periodic particular solution.
    pub fn amplitude(&self) -> f64 {
        let k2 = self.kappa * self.kappa;
        k2 * self.radius / (k2 - 1.0)
    }

    /// Particular solution position and velocity at time `t`.
    fn particular(&self, theta: f64, t: f64) -> ([f64; 2], [f64; 2]) {
        let amp = self.amplitude();
        let (s, c) = (theta + t).sin_cos();
        ([amp * c, amp * s], [-amp * s, amp * c])
    }

    /// Initial state `(r cos θ, r sin θ, 0, 0, θ)` at time 0.
    pub fn initial_state(&self, theta: f64) -> RedState {
        let (s, c) = theta.sin_cos();
        [self.radius * c, self.radius * s, 0.0, 0.0, theta]
    }

    /// Exact flow from `(t0, state)` to `t` by variation of constants.
    pub fn flow(&self, state: &RedState, t0: f64, t: f64) -> RedState {
        let theta = state[4];
        let (p0, v0) = self.particular(theta, t0);
        let (p, v) = self.particular(theta, t);
        let k = self.kappa;
        let (sn, cs) = (k * (t - t0)).sin_cos();
        let mut out = [0.0; 5];
        for q in 0..2 {
            let u = state[q] - p0[q];
            let w = state[q + 2] - v0[q];
            out[q] = p[q] + cs * u + sn / k * w;
            out[q + 2] = v[q] - k * sn * u + cs * w;
        }
        out[4] = theta;
        out
    }

    /// Positions along `times` (relative to `t0`) shifted by `offset`.
    pub fn path(&self, state: &RedState, t0: f64, times: &[f64], offset: [f64; 2]) -> Vec<[f64; 2]> {
        times
            .iter()
            .map(|&t| {
                let s = self.flow(state, t0, t0 + t);
                [s[0] + offset[0], s[1] + offset[1]]
            })
            .collect()
    }
}

/// Exact position measurement of a red UAV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionSample {
    pub time: f64,
    pub position: [f64; 2],
}

/// Reconstructed state at the last sample time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction {
    pub time: f64,
    pub state: RedState,
    pub residual: f64,
}

const THETA_GRID: usize = 720;
const RESIDUAL_TOL: f64 = 1e-8;
const PHASE_SEPARATION: f64 = 1e-6;

struct PhaseFit<'a> {
    uav: RedUav,
    samples: &'a [PositionSample],
    t_last: f64,
    pinv: DMatrix<f64>,
    projector: DMatrix<f64>,
}

impl<'a> PhaseFit<'a> {
    fn new(uav: RedUav, samples: &'a [PositionSample]) -> Result<Self, ScenarioError> {
        let t_last = samples[samples.len() - 1].time;
        let k = uav.kappa;
        // rows [cos κΔ, sin κΔ / κ] with Δ = t_k - t_last
        let m = DMatrix::from_fn(samples.len(), 2, |i, j| {
            let (s, c) = (k * (samples[i].time - t_last)).sin_cos();
            if j == 0 {
                c
            } else {
                s / k
            }
        });
        let gram = m.transpose() * &m;
        if gram.determinant().abs() <= 1e-12 {
            return Err(ScenarioError::DegenerateSampling);
        }
        let pinv = gram.try_inverse().ok_or(ScenarioError::DegenerateSampling)? * m.transpose();
        let projector = DMatrix::identity(samples.len(), samples.len()) - &m * &pinv;
        Ok(Self {
            uav,
            samples,
            t_last,
            pinv,
            projector,
        })
    }

    /// Deviations of the samples from the particular solution with phase `θ`.
    fn deviations(&self, theta: f64) -> [DVector<f64>; 2] {
        let n = self.samples.len();
        let mut dev = [DVector::zeros(n), DVector::zeros(n)];
        for (i, s) in self.samples.iter().enumerate() {
            let (p, _) = self.uav.particular(theta, s.time);
            for q in 0..2 {
                dev[q][i] = s.position[q] - p[q];
            }
        }
        dev
    }

    fn residual(&self, theta: f64) -> f64 {
        let [dx, dy] = self.deviations(theta);
        ((&self.projector * dx).norm_squared() + (&self.projector * dy).norm_squared()).sqrt()
    }

    fn state(&self, theta: f64) -> RedState {
        let dev = self.deviations(theta);
        let (p, v) = self.uav.particular(theta, self.t_last);
        let mut out = [0.0; 5];
        for q in 0..2 {
            let uw = &self.pinv * &dev[q];
            out[q] = p[q] + uw[0];
            out[q + 2] = v[q] + uw[1];
        }
        out[4] = theta.rem_euclid(TAU);
        out
    }

    /// Golden-section minimization of the residual on `[lo, hi]`.
    fn refine(&self, mut lo: f64, mut hi: f64) -> (f64, f64) {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut a = hi - g * (hi - lo);
        let mut b = lo + g * (hi - lo);
        let (mut fa, mut fb) = (self.residual(a), self.residual(b));
        for _ in 0..200 {
            if hi - lo < 1e-15 {
                break;
            }
            if fa <= fb {
                hi = b;
                b = a;
                fb = fa;
                a = hi - g * (hi - lo);
                fa = self.residual(a);
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + g * (hi - lo);
                fb = self.residual(b);
            }
        }
        let t = 0.5 * (lo + hi);
        (t, self.residual(t))
    }
}

fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Recovers `(ξ₁, ξ₂, θ)` at the last sample time from at least three exact
/// position samples. For fixed `θ` the dynamics are affine, so position and
/// velocity follow from a linear least-squares fit; `θ` is located on a
/// grid and refined by golden-section search on the fit residual.
pub fn reconstruct_red_state(uav: &RedUav, samples: &[PositionSample]) -> Result<Reconstruction, ScenarioError> {
    if samples.len() < 3 {
        return Err(ScenarioError::TooFewSamples(samples.len()));
    }
    if samples.windows(2).any(|w| !(w[1].time > w[0].time)) {
        return Err(ScenarioError::InvalidConfig(
            "sample times must be strictly increasing".into(),
        ));
    }
    let fit = PhaseFit::new(*uav, samples)?;
    let h = TAU / THETA_GRID as f64;
    let grid: Vec<f64> = (0..THETA_GRID).map(|k| fit.residual(k as f64 * h)).collect();
    let mut local_minima: Vec<usize> = (0..THETA_GRID)
        .filter(|&k| {
            let prev = grid[(k + THETA_GRID - 1) % THETA_GRID];
            let next = grid[(k + 1) % THETA_GRID];
            grid[k] <= prev && grid[k] <= next
        })
        .collect();
    local_minima.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let scale = samples
        .iter()
        .flat_map(|s| s.position)
        .fold(uav.amplitude(), |m, v| m.max(v.abs()))
        .max(1.0);
    let mut fits: Vec<(f64, f64)> = Vec::new();
    for &k in local_minima.iter().take(8) {
        let centre = k as f64 * h;
        let (theta, res) = fit.refine(centre - h, centre + h);
        if res < RESIDUAL_TOL * scale {
            fits.push((theta.rem_euclid(TAU), res));
        }
    }
    let Some(&(best, res)) = fits.iter().min_by(|a, b| a.1.total_cmp(&b.1)) else {
        let best = local_minima.first().map_or(f64::INFINITY, |&k| grid[k]);
        return Err(ScenarioError::NoConsistentPhase { residual: best });
    };
    if let Some(&(other, _)) = fits.iter().find(|f| angular_distance(f.0, best) > PHASE_SEPARATION) {
        return Err(ScenarioError::AmbiguousPhase {
            first: best,
            second: other,
        });
    }
    let time = fit.t_last;
    Ok(Reconstruction {
        time,
        state: fit.state(best),
        residual: res,
    })
}
