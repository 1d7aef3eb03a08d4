//! Ambiguity balls centred at cumulative empirical distributions.
//!
//! Samples gathered at staggered times are pushed forward to a common horizon
//! `T`. The ball radius combines the concentration radius `eps_N` with a term
//! `bar_eps_N` that accounts for flow-approximation and observation errors:
//! `psi_N = eps_N(beta, rho_T) + bar_eps_N(Delta)`. Because `bar_eps_N` grows
//! with `N`, only a finite number of past samples is guaranteed to shrink the
//! ball; [`effective_horizon`] computes that number.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concentration::{ambiguity_radius, radius_scale, RadiusConfig, Regime};
use crate::distribution::{DiscreteDistribution, DistributionError};
use crate::dynamics::{integrate_flow, DynamicsError, FlowErrorModel, VectorField};

/// Default search cap for [`effective_horizon`].
pub const DEFAULT_HORIZON_CAP: usize = 1_000_000;

/// At most this many per-step margins are kept in an [`EffectiveHorizon`].
pub const MARGIN_TABLE_LIMIT: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmbiguityError {
    #[error("invalid sampling schedule: {0}")]
    InvalidSchedule(String),
    #[error("sample time {time} lies after the horizon {horizon}")]
    SampleAfterHorizon { time: f64, horizon: f64 },
    #[error("no samples")]
    NoSamples,
    #[error("effective horizon is undefined when p = d/2")]
    CriticalRegime,
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// Sample times `t_i^l` for trajectories `i = 1..=N̄`, `l = 1..=ℓ_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct SamplingSchedule {
    trajectories: Vec<Vec<f64>>,
    effective_start: usize,
}

#[derive(Serialize, Deserialize)]
struct RawSchedule {
    trajectories: Vec<Vec<f64>>,
    #[serde(default = "first")]
    effective_start: usize,
}

fn first() -> usize {
    1
}

impl TryFrom<RawSchedule> for SamplingSchedule {
    type Error = AmbiguityError;
    fn try_from(r: RawSchedule) -> Result<Self, Self::Error> {
        SamplingSchedule::new(r.trajectories, r.effective_start)
    }
}

impl From<SamplingSchedule> for RawSchedule {
    fn from(s: SamplingSchedule) -> Self {
        RawSchedule {
            trajectories: s.trajectories,
            effective_start: s.effective_start,
        }
    }
}

impl SamplingSchedule {
    /// `effective_start` is the 1-based index `N♭` of the first trajectory
    /// used in the ambiguity set.
    pub fn new(trajectories: Vec<Vec<f64>>, effective_start: usize) -> Result<Self, AmbiguityError> {
        let bad = |m: String| Err(AmbiguityError::InvalidSchedule(m));
        if trajectories.is_empty() {
            return bad("no trajectories".into());
        }
        if effective_start == 0 || effective_start > trajectories.len() {
            return bad(format!(
                "effective start {effective_start} outside 1..={}",
                trajectories.len()
            ));
        }
        for (i, times) in trajectories.iter().enumerate() {
            if times.is_empty() {
                return bad(format!("trajectory {} has no samples", i + 1));
            }
            if times.iter().any(|t| !t.is_finite()) {
                return bad(format!("trajectory {} has a non-finite time", i + 1));
            }
            if times.windows(2).any(|w| w[1] <= w[0]) {
                return bad(format!("trajectory {} times are not strictly increasing", i + 1));
            }
        }
        let lasts: Vec<f64> = trajectories.iter().map(|t| *t.last().unwrap()).collect();
        if lasts.windows(2).any(|w| w[1] < w[0]) {
            return bad("last sample times must be nondecreasing across trajectories".into());
        }
        Ok(Self {
            trajectories,
            effective_start,
        })
    }

    /// Equidistant schedule: trajectory `i` ends at `first_end + (i-1) * delta`
    /// and carries `ell` samples spaced `intra` apart.
    pub fn uniform(
        n_trajectories: usize,
        ell: usize,
        first_end: f64,
        delta: f64,
        intra: f64,
    ) -> Result<Self, AmbiguityError> {
        let trajectories = (0..n_trajectories)
            .map(|i| {
                let end = first_end + i as f64 * delta;
                (0..ell).map(|l| end - (ell - 1 - l) as f64 * intra).collect()
            })
            .collect();
        Self::new(trajectories, 1)
    }

    pub fn trajectories(&self) -> &[Vec<f64>] {
        &self.trajectories
    }

    pub fn effective_start(&self) -> usize {
        self.effective_start
    }

    /// Trajectories `N♭..=N̄`.
    pub fn effective_trajectories(&self) -> &[Vec<f64>] {
        &self.trajectories[self.effective_start - 1..]
    }

    /// `N = N̄ - N♭ + 1`.
    pub fn n_effective(&self) -> usize {
        self.trajectories.len() - self.effective_start + 1
    }

    /// `T = t_{N̄}^ℓ`.
    pub fn horizon(&self) -> f64 {
        *self.trajectories.last().unwrap().last().unwrap()
    }

    pub fn last_times(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| *t.last().unwrap()).collect()
    }

    /// Common observation length `ℓ`, if all trajectories share it.
    pub fn observation_length(&self) -> Option<usize> {
        let l = self.trajectories[0].len();
        self.trajectories.iter().all(|t| t.len() == l).then_some(l)
    }

    /// Smallest admissible `Δ`: largest gap between consecutive last-sample
    /// times (0 for a single trajectory).
    pub fn inter_trajectory_bound(&self) -> f64 {
        self.last_times().windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Smallest admissible `Δ′`: largest gap within any trajectory.
    pub fn intra_trajectory_bound(&self) -> f64 {
        self.trajectories
            .iter()
            .flat_map(|t| t.windows(2).map(|w| w[1] - w[0]))
            .fold(0.0, f64::max)
    }

    fn spans(&self) -> impl Iterator<Item = f64> + '_ {
        self.trajectories.iter().map(|t| t.last().unwrap() - t.first().unwrap())
    }

    /// `τ_low = min_i (t_i^ℓ - t_i^1)`.
    pub fn tau_low(&self) -> f64 {
        self.spans().fold(f64::INFINITY, f64::min)
    }

    /// `τ_up = max_i (t_i^ℓ - t_i^1)`.
    pub fn tau_up(&self) -> f64 {
        self.spans().fold(0.0, f64::max)
    }
}

/// A full-state sample `xi` collected at `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSample {
    pub time: f64,
    pub state: Vec<f64>,
}

impl StateSample {
    pub fn new(time: f64, state: Vec<f64>) -> Self {
        Self { time, state }
    }
}

/// Equal-weight distribution of the samples pushed forward to `horizon`
/// through the RK4 flow of `field`.
pub fn cumulative_empirical<V: VectorField + ?Sized>(
    samples: &[StateSample],
    horizon: f64,
    field: &V,
    step: f64,
) -> Result<DiscreteDistribution, AmbiguityError> {
    if samples.is_empty() {
        return Err(AmbiguityError::NoSamples);
    }
    let mut points = Vec::with_capacity(samples.len());
    for s in samples {
        if s.time > horizon {
            return Err(AmbiguityError::SampleAfterHorizon { time: s.time, horizon });
        }
        points.push(integrate_flow(field, s.time, horizon, &s.state, step)?);
    }
    Ok(DiscreteDistribution::empirical(points)?)
}

const SIMPSON_TOL: f64 = 1e-10;

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 48)
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `int_lo^hi (e^{rate s} - 1)^p ds`. Integer `p` uses the binomial closed
/// form unless cancellation has eaten more than six digits, in which case
/// (and for fractional `p`) adaptive Simpson is used.
fn growth_integral(lo: f64, hi: f64, rate: f64, p: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let integrand = |s: f64| (rate * s).exp_m1().powf(p);
    if p.fract() == 0.0 && p <= 64.0 {
        let pi = p as u32;
        let mut sum = 0.0;
        let mut largest: f64 = 0.0;
        for k in 0..=pi {
            let sign = if (pi - k).is_multiple_of(2) { 1.0 } else { -1.0 };
            let term = if k == 0 {
                hi - lo
            } else {
                let kr = k as f64 * rate;
                (kr * lo).exp() * (kr * (hi - lo)).exp_m1() / kr
            };
            let term = sign * binomial(pi, k) * term;
            largest = largest.max(term.abs());
            sum += term;
        }
        if pi <= 1 || sum.abs() >= 1e-6 * largest {
            return sum;
        }
    }
    let scale = integrand(hi).abs().max(1.0) * (hi - lo);
    adaptive_simpson(&integrand, lo, hi, SIMPSON_TOL * scale)
}

/// Approximate-pushforward term
/// `bar_eps_N = K (1/N int_1^N (e^{L Δ s} - 1)^p ds)^{1/p}`.
pub fn pushforward_error_term(n: usize, delta: f64, p: f64, model: &FlowErrorModel) -> f64 {
    assert!(n >= 1, "need at least one sample");
    if model.kappa_frak() == 0.0 || n == 1 {
        return 0.0;
    }
    let rate = model.lipschitz() * delta;
    let integral = growth_integral(1.0, n as f64, rate, p);
    model.kappa_frak() * (integral / n as f64).powf(1.0 / p)
}

/// Error term when states are reconstructed from outputs perturbed so that
/// each estimate is within `eps_star` of the truth:
/// `(2^{p-1}/N [eps*^p (e^{p L Δ N} - 1)/(p L Δ) + K^p int_1^N (e^{L Δ s}-1)^p ds])^{1/p}`.
pub fn pushforward_error_term_noisy(n: usize, delta: f64, p: f64, model: &FlowErrorModel, eps_star: f64) -> f64 {
    assert!(n >= 1, "need at least one sample");
    let rate = model.lipschitz() * delta;
    let nf = n as f64;
    let noise = if eps_star > 0.0 {
        eps_star.powf(p) * (p * rate * nf).exp_m1() / (p * rate)
    } else {
        0.0
    };
    let flow = if model.kappa_frak() > 0.0 {
        model.kappa_frak().powf(p) * growth_integral(1.0, nf, rate, p)
    } else {
        0.0
    };
    (2f64.powf(p - 1.0) / nf * (noise + flow)).powf(1.0 / p)
}

/// `psi_N = eps_N(beta, rho_T) + bar_eps_N(Δ)`; the noisy error term is used
/// when `eps_star` is given.
pub fn total_radius(
    n: usize,
    cfg: &RadiusConfig,
    rho_t: f64,
    delta: f64,
    model: &FlowErrorModel,
    eps_star: Option<f64>,
) -> f64 {
    let err = match eps_star {
        Some(e) => pushforward_error_term_noisy(n, delta, cfg.p(), model, e),
        None => pushforward_error_term(n, delta, cfg.p(), model),
    };
    ambiguity_radius(n, cfg, rho_t) + err
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum HorizonOutcome {
    /// `N*(Δ)`: `psi_N` strictly decreases on `1..=N*`.
    Finite(usize),
    /// The defining inequality held for every `κ` up to the cap.
    UnboundedUpToCap(usize),
    /// Fails already at `κ = 1`: `Δ` is at or beyond the existence threshold.
    NoGuaranteedImprovement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveHorizon {
    pub outcome: HorizonOutcome,
    /// `C̄ = (ln(C/β)/c)^{1/p̄} ρ_T`.
    pub c_bar: f64,
    /// `p̄ = max{2p, d}`.
    pub p_bar: f64,
    /// `margins[κ-1] = C̄(κ^{-1/p̄} - (κ+1)^{-1/p̄}) - (bar_eps_{κ+1} - bar_eps_κ)`,
    /// kept for `κ` up to the first failure (inclusive), truncated at
    /// [`MARGIN_TABLE_LIMIT`].
    pub margins: Vec<f64>,
}

/// Error terms `bar_eps_κ` for `κ = 1, 2, ...`, accumulating the integral
/// unit interval by unit interval.
struct ErrorTermSequence {
    delta: f64,
    p: f64,
    model: FlowErrorModel,
    next: usize,
    integral: f64,
}

impl ErrorTermSequence {
    fn new(delta: f64, p: f64, model: FlowErrorModel) -> Self {
        Self {
            delta,
            p,
            model,
            next: 1,
            integral: 0.0,
        }
    }
}

impl Iterator for ErrorTermSequence {
    type Item = f64;
    fn next(&mut self) -> Option<f64> {
        let n = self.next;
        self.next += 1;
        if self.model.kappa_frak() == 0.0 || n == 1 {
            return Some(0.0);
        }
        if self.p.fract() == 0.0 {
            return Some(pushforward_error_term(n, self.delta, self.p, &self.model));
        }
        let rate = self.model.lipschitz() * self.delta;
        self.integral += growth_integral((n - 1) as f64, n as f64, rate, self.p);
        Some(self.model.kappa_frak() * (self.integral / n as f64).powf(1.0 / self.p))
    }
}

/// Effective sampling horizon `N*(Δ)`: the first `κ` at which
/// `C̄(κ^{-1/p̄} - (κ+1)^{-1/p̄}) > bar_eps_{κ+1} - bar_eps_κ` fails (ties count
/// as failures). Searches `κ = 1..=cap`.
pub fn effective_horizon(
    delta: f64,
    cfg: &RadiusConfig,
    rho_t: f64,
    model: &FlowErrorModel,
    cap: usize,
) -> Result<EffectiveHorizon, AmbiguityError> {
    if cfg.regime() == Regime::Critical {
        return Err(AmbiguityError::CriticalRegime);
    }
    if !(delta > 0.0) {
        return Err(AmbiguityError::NonPositive {
            name: "Delta",
            value: delta,
        });
    }
    let p_bar = cfg.rate_exponent();
    let c_bar = radius_scale(cfg, rho_t);
    let mut terms = ErrorTermSequence::new(delta, cfg.p(), *model);
    let mut prev = terms.next().unwrap();
    let mut margins = Vec::new();
    let mut outcome = HorizonOutcome::UnboundedUpToCap(cap);
    for kappa in 1..=cap {
        let cur = terms.next().unwrap();
        let k = kappa as f64;
        let gain = c_bar * (k.powf(-1.0 / p_bar) - (k + 1.0).powf(-1.0 / p_bar));
        let margin = gain - (cur - prev);
        if margins.len() < MARGIN_TABLE_LIMIT {
            margins.push(margin);
        }
        // NaN (overflowed error terms) counts as failure
        if !(margin > 0.0) {
            outcome = if kappa == 1 {
                HorizonOutcome::NoGuaranteedImprovement
            } else {
                HorizonOutcome::Finite(kappa)
            };
            break;
        }
        prev = cur;
    }
    Ok(EffectiveHorizon {
        outcome,
        c_bar,
        p_bar,
        margins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::wasserstein_exact;
    use crate::dynamics::{DoubleIntegrator, ZeroField};

    fn model(k: f64, l: f64) -> FlowErrorModel {
        FlowErrorModel::new(k, l).unwrap()
    }

    #[test]
    fn schedule_derived_quantities() {
        let s = SamplingSchedule::new(vec![vec![0.0, 0.5, 1.0], vec![1.2, 2.0], vec![2.5, 2.6, 3.0]], 2).unwrap();
        assert_eq!(s.horizon(), 3.0);
        assert_eq!(s.n_effective(), 2);
        assert!((s.inter_trajectory_bound() - 1.0).abs() < 1e-15);
        assert!((s.intra_trajectory_bound() - 0.8).abs() < 1e-15);
        assert!((s.tau_low() - 0.5).abs() < 1e-15);
        assert!((s.tau_up() - 1.0).abs() < 1e-15);
        assert_eq!(s.observation_length(), None);
        assert_eq!(s.effective_trajectories().len(), 2);
    }

    #[test]
    fn schedule_rejects_bad_input() {
        assert!(SamplingSchedule::new(vec![vec![1.0, 1.0]], 1).is_err());
        assert!(SamplingSchedule::new(vec![vec![2.0], vec![1.0]], 1).is_err());
        assert!(SamplingSchedule::new(vec![vec![1.0]], 2).is_err());
        assert!(SamplingSchedule::new(vec![], 1).is_err());
    }

    #[test]
    fn uniform_schedule() {
        let s = SamplingSchedule::uniform(4, 3, 1.0, 0.5, 0.25).unwrap();
        assert_eq!(s.trajectories()[0], vec![0.5, 0.75, 1.0]);
        assert!((s.horizon() - 2.5).abs() < 1e-15);
        assert!((s.intra_trajectory_bound() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn cumulative_empirical_without_motion() {
        let samples = vec![
            StateSample::new(0.0, vec![1.0, 2.0]),
            StateSample::new(0.7, vec![-1.0, 0.0]),
        ];
        let p = cumulative_empirical(&samples, 3.0, &ZeroField(2), 0.1).unwrap();
        assert_eq!(p.points(), &[vec![1.0, 2.0], vec![-1.0, 0.0]]);
        let at_t: Vec<StateSample> = samples.iter().map(|s| StateSample::new(3.0, s.state.clone())).collect();
        let f = DoubleIntegrator { acceleration: 1.0 };
        let q = cumulative_empirical(&at_t, 3.0, &f, 0.1).unwrap();
        assert_eq!(q.points(), p.points());
        assert!(matches!(
            cumulative_empirical(&samples, 0.5, &f, 0.1),
            Err(AmbiguityError::SampleAfterHorizon { .. })
        ));
    }

    #[test]
    fn cumulative_empirical_double_integrator() {
        let f = DoubleIntegrator { acceleration: 1.0 };
        let samples = vec![
            StateSample::new(0.0, vec![0.0, 0.0]),
            StateSample::new(1.0, vec![0.5, 1.0]),
        ];
        let bar = cumulative_empirical(&samples, 1.0, &f, 0.01).unwrap();
        let truth = DiscreteDistribution::empirical(vec![vec![0.5, 1.0], vec![0.5, 1.0]]).unwrap();
        assert!(wasserstein_exact(&bar, &truth, 2.0).unwrap() < 1e-9);
    }

    #[test]
    fn error_term_closed_form_p1() {
        let m = model(1.0, 0.1);
        let v = pushforward_error_term(10, 1.0, 1.0, &m);
        let expected = ((1.0f64.exp() - 0.1f64.exp()) / 0.1 - 9.0) / 10.0;
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.713111).abs() < 1e-6);
        assert_eq!(pushforward_error_term(1, 1.0, 2.0, &m), 0.0);
        assert_eq!(pushforward_error_term(50, 1.0, 2.0, &model(0.0, 0.1)), 0.0);
    }

    #[test]
    fn integer_closed_form_matches_quadrature() {
        for p in [1.0, 2.0, 3.0, 5.0] {
            for (rate, hi) in [(0.1, 10.0), (0.02, 40.0), (1e-4, 5.0), (0.5, 3.0)] {
                let closed = growth_integral(1.0, hi, rate, p);
                let f = |s: f64| (rate * s).exp_m1().powf(p);
                let quad = adaptive_simpson(&f, 1.0, hi, 1e-14);
                assert!(
                    (closed - quad).abs() <= 1e-8 * quad.abs().max(1e-300),
                    "p={p} rate={rate}: {closed} vs {quad}"
                );
            }
        }
    }

    #[test]
    fn error_term_monotone() {
        let m = model(0.5, 0.2);
        for p in [1.0, 1.5, 2.0] {
            let v: Vec<f64> = (1..12).map(|n| pushforward_error_term(n, 0.7, p, &m)).collect();
            assert!(v.windows(2).all(|w| w[1] > w[0]), "p={p}: {v:?}");
            assert!(pushforward_error_term(5, 0.8, p, &m) > pushforward_error_term(5, 0.7, p, &m));
            assert!(pushforward_error_term(5, 0.7, p, &model(0.6, 0.2)) > pushforward_error_term(5, 0.7, p, &m));
        }
    }

    #[test]
    fn noisy_term_values() {
        assert_eq!(pushforward_error_term_noisy(5, 1.0, 2.0, &model(0.0, 0.1), 0.0), 0.0);
        let v = pushforward_error_term_noisy(1, 1.0, 1.0, &model(0.0, 0.1), 1.0);
        assert!((v - 0.1f64.exp_m1() / 0.1).abs() < 1e-12);
        assert!((v - 1.051709).abs() < 1e-6);
        // p = 1 splits into the noise part plus the flow part
        let m = model(0.3, 0.1);
        let v = pushforward_error_term_noisy(10, 1.0, 1.0, &m, 0.2);
        let split = 0.2 * 1.0f64.exp_m1() / 1.0 + pushforward_error_term(10, 1.0, 1.0, &m);
        assert!((v - split).abs() < 1e-12);
    }

    #[test]
    fn total_radius_degenerate_cases() {
        let cfg = RadiusConfig::with_unit_constants(1.0, 1, 0.05).unwrap();
        let exact = model(0.0, 0.1);
        assert_eq!(
            total_radius(7, &cfg, 2.0, 1.0, &exact, None),
            ambiguity_radius(7, &cfg, 2.0)
        );
        assert_eq!(
            total_radius(1, &cfg, 2.0, 3.0, &model(1.0, 0.1), None),
            ambiguity_radius(1, &cfg, 2.0)
        );
    }

    #[test]
    fn horizon_without_errors_hits_cap() {
        let cfg = RadiusConfig::with_unit_constants(1.0, 1, 0.05).unwrap();
        let h = effective_horizon(0.1, &cfg, 1.0, &model(0.0, 0.1), 5000).unwrap();
        assert_eq!(h.outcome, HorizonOutcome::UnboundedUpToCap(5000));
    }

    #[test]
    fn horizon_rejects_critical_and_flags_large_delta() {
        let crit = RadiusConfig::with_unit_constants(1.0, 2, 0.05).unwrap();
        assert_eq!(
            effective_horizon(0.1, &crit, 1.0, &model(1.0, 0.1), 100),
            Err(AmbiguityError::CriticalRegime)
        );
        let cfg = RadiusConfig::with_unit_constants(1.0, 1, 0.05).unwrap();
        let h = effective_horizon(50.0, &cfg, 1.0, &model(1.0, 0.1), 100).unwrap();
        assert_eq!(h.outcome, HorizonOutcome::NoGuaranteedImprovement);
    }

    #[test]
    fn horizon_matches_direct_radius_sequence() {
        let cfg = RadiusConfig::with_unit_constants(1.0, 1, 0.05).unwrap();
        let m = model(1.0, 0.1);
        for delta in [0.01, 0.05, 0.2] {
            let h = effective_horizon(delta, &cfg, 2.0, &m, 100_000).unwrap();
            let HorizonOutcome::Finite(n_star) = h.outcome else {
                panic!("expected finite horizon, got {:?}", h.outcome);
            };
            let psi = |n| total_radius(n, &cfg, 2.0, delta, &m, None);
            for n in 1..n_star {
                assert!(psi(n + 1) < psi(n), "Δ={delta} n={n}");
            }
            assert!(psi(n_star + 1) >= psi(n_star));
        }
    }

    #[test]
    fn fractional_exponent_sequence_agrees_with_direct_terms() {
        let m = model(0.4, 0.3);
        let seq: Vec<f64> = ErrorTermSequence::new(0.5, 1.5, m).take(20).collect();
        for (i, v) in seq.iter().enumerate() {
            let direct = pushforward_error_term(i + 1, 0.5, 1.5, &m);
            assert!((v - direct).abs() <= 1e-9 * direct.max(1e-12));
        }
    }
}
