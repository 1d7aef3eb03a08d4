//! Sampled-data observability of `ξ̇ = A(t) ξ`, `ζ = C(t) ξ`.
//!
//! All matrix norms are spectral norms. Extremizations over continuous time
//! ranges are replaced by grid searches; results carry the grid step used.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// RK4 step for the fundamental-matrix ODE of time-varying systems.
pub const DEFAULT_FLOW_STEP: f64 = 1e-3;
/// Central-difference step for `Ċ` when no derivative is supplied.
pub const FD_STEP: f64 = 1e-5;
/// Relative singular-value threshold below which `W O` counts as singular.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Relative tolerance for the H1 aliasing test.
pub const ALIASING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservabilityError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),
    #[error("sample times must be strictly increasing")]
    NonIncreasingTimes,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "Gramian is numerically singular (lambda_min = {lambda_min:e}); the system is not observable on the window"
    )]
    SingularGramian { lambda_min: f64 },
    #[error("weighted observability matrix is rank deficient: smallest singular value {sigma_min:e} (relative {relative:e})")]
    RankDeficient { sigma_min: f64, relative: f64 },
    #[error("the pair (A, C) is not observable (Kalman rank {rank} < {dim})")]
    Unobservable { rank: usize, dim: usize },
    #[error("operation requires a time-invariant system")]
    NotTimeInvariant,
    #[error("sampling pattern mismatch: {0}")]
    PatternMismatch(String),
}

/// Time-dependent matrix coefficient.
pub type MatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
enum SystemKind {
    Lti {
        a: DMatrix<f64>,
        c: DMatrix<f64>,
    },
    Ltv {
        a: MatrixFn,
        c: MatrixFn,
        c_dot: Option<MatrixFn>,
    },
}

/// Linear system with state dimension `d` and output dimension `m`.
#[derive(Clone)]
pub struct LinearTimeVaryingSystem {
    d: usize,
    m: usize,
    kind: SystemKind,
}

impl fmt::Debug for LinearTimeVaryingSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SystemKind::Lti { a, c } => f
                .debug_struct("LinearTimeVaryingSystem::Lti")
                .field("a", a)
                .field("c", c)
                .finish(),
            SystemKind::Ltv { c_dot, .. } => f
                .debug_struct("LinearTimeVaryingSystem::Ltv")
                .field("d", &self.d)
                .field("m", &self.m)
                .field("analytic_c_dot", &c_dot.is_some())
                .finish(),
        }
    }
}

impl LinearTimeVaryingSystem {
    pub fn lti(a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self, ObservabilityError> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(ObservabilityError::DimensionMismatch(format!(
                "A is {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if c.ncols() != a.nrows() || c.nrows() == 0 {
            return Err(ObservabilityError::DimensionMismatch(format!(
                "C is {}x{} but A is {}x{}",
                c.nrows(),
                c.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(ObservabilityError::NonFinite("system matrices"));
        }
        Ok(Self {
            d: a.nrows(),
            m: c.nrows(),
            kind: SystemKind::Lti { a, c },
        })
    }

    /// Time-varying system. Without `c_dot`, `Ċ` is approximated by central
    /// differences with step [`FD_STEP`]. Dimensions are checked at `t = 0`.
    pub fn ltv<FA, FC>(d: usize, m: usize, a: FA, c: FC, c_dot: Option<MatrixFn>) -> Result<Self, ObservabilityError>
    where
        FA: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
        FC: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        let sys = Self {
            d,
            m,
            kind: SystemKind::Ltv {
                a: Arc::new(a),
                c: Arc::new(c),
                c_dot,
            },
        };
        let (a0, c0) = (sys.a_at(0.0), sys.c_at(0.0));
        if d == 0 || m == 0 || a0.shape() != (d, d) || c0.shape() != (m, d) {
            return Err(ObservabilityError::DimensionMismatch(format!(
                "expected A {d}x{d} and C {m}x{d}, got {:?} and {:?}",
                a0.shape(),
                c0.shape()
            )));
        }
        Ok(sys)
    }

    pub fn state_dim(&self) -> usize {
        self.d
    }

    pub fn output_dim(&self) -> usize {
        self.m
    }

    pub fn is_lti(&self) -> bool {
        matches!(self.kind, SystemKind::Lti { .. })
    }

    /// `(A, C)` for time-invariant systems.
    pub fn constant_matrices(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        match &self.kind {
            SystemKind::Lti { a, c } => Some((a, c)),
            SystemKind::Ltv { .. } => None,
        }
    }

    pub fn a_at(&self, t: f64) -> DMatrix<f64> {
        match &self.kind {
            SystemKind::Lti { a, .. } => a.clone(),
            SystemKind::Ltv { a, .. } => a(t),
        }
    }

    pub fn c_at(&self, t: f64) -> DMatrix<f64> {
        match &self.kind {
            SystemKind::Lti { c, .. } => c.clone(),
            SystemKind::Ltv { c, .. } => c(t),
        }
    }

    pub fn c_dot_at(&self, t: f64) -> DMatrix<f64> {
        match &self.kind {
            SystemKind::Lti { c, .. } => DMatrix::zeros(c.nrows(), c.ncols()),
            SystemKind::Ltv { c_dot: Some(cd), .. } => cd(t),
            SystemKind::Ltv { c, .. } => (c(t + FD_STEP) - c(t - FD_STEP)) / (2.0 * FD_STEP),
        }
    }
}

/// JSON description of a system: explicit constant matrices or a named
/// built-in example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSpec {
    Lti {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "C")]
        c: Vec<Vec<f64>>,
    },
    Builtin {
        name: BuiltinSystem,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinSystem {
    /// `A = [[0,1],[0,0]]`, `C = [1,0]`.
    DoubleIntegrator,
    /// `A = [[0,1],[-1,0]]`, `C = [1,0]`.
    HarmonicOscillator,
    /// `A = 0`, `C(t) = [cos t, sin t]`.
    RotatingOutput,
    /// `A(t) = [[0,1],[-1 - 0.5 sin t, -0.2]]`, `C = [1,0]`.
    ForcedOscillator,
}

fn rows_to_matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>, ObservabilityError> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if n == 0 || k == 0 || rows.iter().any(|r| r.len() != k) {
        return Err(ObservabilityError::DimensionMismatch(format!(
            "{name} must be a non-empty rectangular array"
        )));
    }
    Ok(DMatrix::from_fn(n, k, |i, j| rows[i][j]))
}

impl SystemSpec {
    pub fn build(&self) -> Result<LinearTimeVaryingSystem, ObservabilityError> {
        match self {
            SystemSpec::Lti { a, c } => LinearTimeVaryingSystem::lti(rows_to_matrix(a, "A")?, rows_to_matrix(c, "C")?),
            SystemSpec::Builtin { name } => Ok(name.build()),
        }
    }
}

impl BuiltinSystem {
    pub fn build(self) -> LinearTimeVaryingSystem {
        let lti = |a: [f64; 4]| {
            LinearTimeVaryingSystem::lti(
                DMatrix::from_row_slice(2, 2, &a),
                DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            )
            .expect("valid built-in")
        };
        match self {
            BuiltinSystem::DoubleIntegrator => lti([0.0, 1.0, 0.0, 0.0]),
            BuiltinSystem::HarmonicOscillator => lti([0.0, 1.0, -1.0, 0.0]),
            BuiltinSystem::RotatingOutput => LinearTimeVaryingSystem::ltv(
                2,
                1,
                |_| DMatrix::zeros(2, 2),
                |t: f64| DMatrix::from_row_slice(1, 2, &[t.cos(), t.sin()]),
                Some(Arc::new(|t: f64| DMatrix::from_row_slice(1, 2, &[-t.sin(), t.cos()]))),
            )
            .expect("valid built-in"),
            BuiltinSystem::ForcedOscillator => LinearTimeVaryingSystem::ltv(
                2,
                1,
                |t: f64| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0 - 0.5 * t.sin(), -0.2]),
                |_| DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
                None,
            )
            .expect("valid built-in"),
        }
    }
}

fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<(), ObservabilityError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ObservabilityError::NonFinite(what))
    }
}

/// Spectral norm.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn lambda_min_sym(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.min()
}

/// Integrates `Ẋ = A(t) X` from `(s, x)` to `t` with equal RK4 steps no
/// longer than `step`.
fn propagate(sys: &LinearTimeVaryingSystem, s: f64, x: DMatrix<f64>, t: f64, step: f64) -> DMatrix<f64> {
    if t == s {
        return x;
    }
    if let Some((a, _)) = sys.constant_matrices() {
        return (a * (t - s)).exp() * x;
    }
    let n = ((t - s).abs() / step).ceil().max(1.0) as usize;
    let h = (t - s) / n as f64;
    let mut x = x;
    let mut tau = s;
    for _ in 0..n {
        let a0 = sys.a_at(tau);
        let am = sys.a_at(tau + 0.5 * h);
        let a1 = sys.a_at(tau + h);
        let k1 = &a0 * &x;
        let k2 = &am * (&x + &k1 * (0.5 * h));
        let k3 = &am * (&x + &k2 * (0.5 * h));
        let k4 = &a1 * (&x + &k3 * h);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        tau += h;
    }
    x
}

fn validate_step(step: f64) -> Result<(), ObservabilityError> {
    if step > 0.0 && step.is_finite() {
        Ok(())
    } else {
        Err(ObservabilityError::InvalidParameter(format!(
            "step must be positive, got {step}"
        )))
    }
}

/// `Φ(t, s)` with the default RK4 step.
pub fn fundamental_matrix(sys: &LinearTimeVaryingSystem, t: f64, s: f64) -> Result<DMatrix<f64>, ObservabilityError> {
    fundamental_matrix_with_step(sys, t, s, DEFAULT_FLOW_STEP)
}

/// `Φ(t, s)`: matrix exponential for time-invariant systems, RK4 on the
/// matrix ODE otherwise. Either time order is allowed.
pub fn fundamental_matrix_with_step(
    sys: &LinearTimeVaryingSystem,
    t: f64,
    s: f64,
    step: f64,
) -> Result<DMatrix<f64>, ObservabilityError> {
    validate_step(step)?;
    let phi = propagate(sys, s, DMatrix::identity(sys.d, sys.d), t, step);
    check_finite(&phi, "fundamental matrix")?;
    Ok(phi)
}

/// `Φ(t_k, anchor)` for every `t_k` in `times`, from one sweep that starts at
/// `anchor` and visits the times in order of distance.
fn flows_to_anchor(
    sys: &LinearTimeVaryingSystem,
    times: &[f64],
    anchor: f64,
    step: f64,
) -> Result<Vec<DMatrix<f64>>, ObservabilityError> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&i, &j| (times[i] - anchor).abs().total_cmp(&(times[j] - anchor).abs()));
    let mut out = vec![DMatrix::zeros(0, 0); times.len()];
    // sweeps on each side of the anchor restart from the identity
    let mut below = (anchor, DMatrix::identity(sys.d, sys.d));
    let mut above = below.clone();
    for i in order {
        let side = if times[i] <= anchor { &mut below } else { &mut above };
        let phi = propagate(sys, side.0, side.1.clone(), times[i], step);
        check_finite(&phi, "fundamental matrix")?;
        *side = (times[i], phi.clone());
        out[i] = phi;
    }
    Ok(out)
}

fn check_times(times: &[f64], needed: usize) -> Result<(), ObservabilityError> {
    if times.len() < needed {
        return Err(ObservabilityError::TooFewSamples {
            needed,
            got: times.len(),
        });
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(ObservabilityError::NonFinite("sample times"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ObservabilityError::NonIncreasingTimes);
    }
    Ok(())
}

/// Stacks `C(t_l) Φ(t_l, t_ℓ)` for `l = 1..=ℓ`.
pub fn sample_observability_matrix(
    sys: &LinearTimeVaryingSystem,
    times: &[f64],
    step: f64,
) -> Result<DMatrix<f64>, ObservabilityError> {
    check_times(times, 1)?;
    validate_step(step)?;
    let anchor = *times.last().unwrap();
    let flows = flows_to_anchor(sys, times, anchor, step)?;
    let (d, m) = (sys.d, sys.m);
    let mut o = DMatrix::zeros(times.len() * m, d);
    for (l, (t, phi)) in times.iter().zip(&flows).enumerate() {
        let c = sys.c_at(*t);
        if c.shape() != (m, d) {
            return Err(ObservabilityError::DimensionMismatch(format!(
                "C({t}) has shape {:?}",
                c.shape()
            )));
        }
        o.view_mut((l * m, 0), (m, d)).copy_from(&(c * phi));
    }
    Ok(o)
}

/// Trapezoid weights `w_l` (not squared).
pub fn sample_weights(times: &[f64]) -> Result<Vec<f64>, ObservabilityError> {
    check_times(times, 2)?;
    let tau: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let l = times.len();
    Ok((0..l)
        .map(|i| {
            let sq = match i {
                0 => tau[0] / 2.0,
                _ if i == l - 1 => tau[l - 2] / 2.0,
                _ => (tau[i - 1] + tau[i]) / 2.0,
            };
            sq.sqrt()
        })
        .collect())
}

/// `W = diag(w_1, ..., w_ℓ) ⊗ I_m`.
pub fn weight_matrix(times: &[f64], m: usize) -> Result<DMatrix<f64>, ObservabilityError> {
    let w = sample_weights(times)?;
    let diag = DVector::from_iterator(w.len() * m, w.iter().flat_map(|&x| std::iter::repeat_n(x, m)));
    Ok(DMatrix::from_diagonal(&diag))
}

fn k_integrand(sys: &LinearTimeVaryingSystem, s: f64, phi: &DMatrix<f64>) -> DMatrix<f64> {
    let cphi = sys.c_at(s) * phi;
    cphi.transpose() * cphi
}

/// `∂K/∂s (s, t) = Φᵀ(AᵀCᵀC + ĊᵀC + CᵀĊ + CᵀCA)Φ` with `Φ = Φ(s, t)`.
fn k_derivative(sys: &LinearTimeVaryingSystem, s: f64, phi: &DMatrix<f64>) -> DMatrix<f64> {
    let a = sys.a_at(s);
    let c = sys.c_at(s);
    let cd = sys.c_dot_at(s);
    let ctc = c.transpose() * &c;
    let inner = a.transpose() * &ctc + cd.transpose() * &c + c.transpose() * &cd + &ctc * a;
    phi.transpose() * inner * phi
}

fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect()
}

/// `𝒲_ς(t) = ∫_t^{t+ς} K(s, t+ς) ds` by the composite trapezoid rule with
/// `ceil(ς / quad_step)` panels.
pub fn observability_gramian(
    sys: &LinearTimeVaryingSystem,
    t: f64,
    varsigma: f64,
    quad_step: f64,
) -> Result<DMatrix<f64>, ObservabilityError> {
    if !(varsigma > 0.0) {
        return Err(ObservabilityError::InvalidParameter(format!(
            "window length must be positive, got {varsigma}"
        )));
    }
    validate_step(quad_step)?;
    let grid = uniform_grid(t, t + varsigma, quad_step);
    let h = varsigma / (grid.len() - 1) as f64;
    let flows = flows_to_anchor(sys, &grid, t + varsigma, quad_step.min(DEFAULT_FLOW_STEP))?;
    let mut w = DMatrix::zeros(sys.d, sys.d);
    for (k, (s, phi)) in grid.iter().zip(&flows).enumerate() {
        let weight = if k == 0 || k == grid.len() - 1 { 0.5 } else { 1.0 };
        w += k_integrand(sys, *s, phi) * (weight * h);
    }
    let w = (&w + w.transpose()) * 0.5;
    check_finite(&w, "Gramian")?;
    Ok(w)
}

/// `∫_0^ς K̂(s - ς) ds` for a time-invariant system, in closed form via the
/// block exponential `exp([[Aᵀ, CᵀC], [0, -A]] ς)`.
pub fn lti_gramian(sys: &LinearTimeVaryingSystem, varsigma: f64) -> Result<DMatrix<f64>, ObservabilityError> {
    let (a, c) = sys.constant_matrices().ok_or(ObservabilityError::NotTimeInvariant)?;
    let d = sys.d;
    let mut block = DMatrix::zeros(2 * d, 2 * d);
    block.view_mut((0, 0), (d, d)).copy_from(&a.transpose());
    block.view_mut((0, d), (d, d)).copy_from(&(c.transpose() * c));
    block.view_mut((d, d), (d, d)).copy_from(&(-a));
    let e = (block * varsigma).exp();
    let f12 = e.view((0, d), (d, d)).into_owned();
    let f22 = e.view((d, d), (d, d)).into_owned();
    // ∫_0^ς e^{-Aᵀu} CᵀC e^{-Au} du = F22ᵀ F12 with the roles of A and -A swapped
    let w = f22.transpose() * f12;
    let w = (&w + w.transpose()) * 0.5;
    check_finite(&w, "Gramian")?;
    Ok(w)
}

/// `max_{s ∈ [s_lo, s_hi]} ‖K_s(s, anchor)‖` over a uniform grid.
pub fn max_k_derivative_norm(
    sys: &LinearTimeVaryingSystem,
    anchor: f64,
    s_lo: f64,
    s_hi: f64,
    grid_step: f64,
) -> Result<f64, ObservabilityError> {
    validate_step(grid_step)?;
    let grid = uniform_grid(s_lo, s_hi, grid_step);
    let flows = flows_to_anchor(sys, &grid, anchor, grid_step.min(DEFAULT_FLOW_STEP))?;
    Ok(grid
        .iter()
        .zip(&flows)
        .map(|(s, phi)| spectral_norm(&k_derivative(sys, *s, phi)))
        .fold(0.0, f64::max))
}

/// `max_{s ∈ [0, τ]} ‖K̂(s - τ) A‖` over a uniform grid.
pub fn max_khat_a_norm(sys: &LinearTimeVaryingSystem, tau: f64, grid_step: f64) -> Result<f64, ObservabilityError> {
    let (a, c) = sys.constant_matrices().ok_or(ObservabilityError::NotTimeInvariant)?;
    validate_step(grid_step)?;
    let ctc = c.transpose() * c;
    Ok(uniform_grid(0.0, tau, grid_step)
        .into_iter()
        .map(|s| {
            let e = (a * (s - tau)).exp();
            spectral_norm(&(e.transpose() * &ctc * e * a))
        })
        .fold(0.0, f64::max))
}

/// Right side of the robust inter-sampling condition together with its
/// ingredients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingBound {
    /// Largest admissible `Δ′`.
    pub value: f64,
    /// Grid minimum of `λ_min(𝒲_{τ_low}(t))` over `t ∈ [0, T - τ_low]`.
    pub lambda_min: f64,
    /// Grid maximum of the derivative norm in the denominator.
    pub max_derivative_norm: f64,
    pub grid_step: f64,
    /// Whether the closed-form time-invariant formula was used.
    pub time_invariant: bool,
    /// Always true: the sup/inf are taken over grids.
    pub grid_approximation: bool,
}

/// Largest `Δ′` for which `λ_min(OᵀW²O) ≥ a λ_min(𝒲)` is guaranteed.
///
/// Time-varying: `4(1-a) min_t λ_min(𝒲_{τ_low}(t)) / (τ_up max ‖K_s(s,t)‖)`
/// with `t ∈ [τ_low, T]`, `s ∈ [max(0, t - τ_up), t]` in the denominator.
/// Time-invariant: `2(1-a) λ_min(Ŵ_{τ_low}) / (τ_up max_{s∈[0,τ_up]} ‖K̂(s - τ_up) A‖)`.
pub fn robust_sampling_bound(
    sys: &LinearTimeVaryingSystem,
    tau_low: f64,
    tau_up: f64,
    horizon: f64,
    a: f64,
    grid_step: f64,
) -> Result<SamplingBound, ObservabilityError> {
    if !(tau_low > 0.0 && tau_low <= tau_up && tau_up <= horizon) {
        return Err(ObservabilityError::InvalidParameter(format!(
            "need 0 < tau_low <= tau_up <= T, got {tau_low}, {tau_up}, {horizon}"
        )));
    }
    if !(a > 0.0 && a < 1.0) {
        return Err(ObservabilityError::InvalidParameter(format!(
            "a must lie in (0, 1), got {a}"
        )));
    }
    validate_step(grid_step)?;
    let singular = |lambda_min: f64, w: &DMatrix<f64>| lambda_min <= 1e-12 * spectral_norm(w).max(1.0);
    let (lambda_min, max_norm, factor) = if sys.is_lti() {
        let w = lti_gramian(sys, tau_low)?;
        let lm = lambda_min_sym(&w);
        if singular(lm, &w) {
            return Err(ObservabilityError::SingularGramian { lambda_min: lm });
        }
        (lm, max_khat_a_norm(sys, tau_up, grid_step)?, 2.0)
    } else {
        let mut lm = f64::INFINITY;
        for t in uniform_grid(0.0, horizon - tau_low, grid_step) {
            let w = observability_gramian(sys, t, tau_low, grid_step)?;
            let l = lambda_min_sym(&w);
            if singular(l, &w) {
                return Err(ObservabilityError::SingularGramian { lambda_min: l });
            }
            lm = lm.min(l);
        }
        let mut mx: f64 = 0.0;
        for t in uniform_grid(tau_low, horizon, grid_step) {
            let lo = (t - tau_up).max(0.0);
            mx = mx.max(max_k_derivative_norm(sys, t, lo, t, grid_step)?);
        }
        (lm, mx, 4.0)
    };
    let value = if max_norm > 0.0 {
        factor * (1.0 - a) * lambda_min / (tau_up * max_norm)
    } else {
        f64::INFINITY
    };
    Ok(SamplingBound {
        value,
        lambda_min,
        max_derivative_norm: max_norm,
        grid_step,
        time_invariant: sys.is_lti(),
        grid_approximation: true,
    })
}

/// Distinct eigenvalues of a constant `A` with their Jordan indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenStructure {
    /// `(re, im)` of each distinct eigenvalue.
    pub eigenvalues: Vec<(f64, f64)>,
    pub algebraic_multiplicities: Vec<usize>,
    /// Size of the largest Jordan block per eigenvalue.
    pub indices: Vec<usize>,
    /// `𝔪 = Σ 𝔪_j`.
    pub index_sum: usize,
    /// `δ`: largest difference of imaginary parts.
    pub imaginary_spread: f64,
}

fn complex_rank(m: &DMatrix<Complex64>, tol: f64) -> usize {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .filter(|&&s| s > tol)
        .count()
}

/// Eigenvalues are clustered within `1e-6 max(1, ‖A‖)` and replaced by the
/// cluster mean; indices come from rank tests of `(A - λI)^k`.
pub fn eigen_structure(a: &DMatrix<f64>) -> Result<EigenStructure, ObservabilityError> {
    if !a.is_square() {
        return Err(ObservabilityError::DimensionMismatch("A must be square".into()));
    }
    let d = a.nrows();
    let scale = spectral_norm(a).max(1.0);
    let raw = a.complex_eigenvalues();
    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for &z in raw.iter() {
        match clusters
            .iter_mut()
            .find(|c| (c.iter().sum::<Complex64>() / c.len() as f64 - z).norm() <= 1e-6 * scale)
        {
            Some(c) => c.push(z),
            None => clusters.push(vec![z]),
        }
    }
    let ac = a.map(|v| Complex64::new(v, 0.0));
    let eye = DMatrix::<Complex64>::identity(d, d);
    let mut eigenvalues = Vec::new();
    let mut mults = Vec::new();
    let mut indices = Vec::new();
    for c in &clusters {
        let lambda = c.iter().sum::<Complex64>() / c.len() as f64;
        let shifted = &ac - &eye * lambda;
        let target = d - c.len();
        let mut power = eye.clone();
        let mut index = c.len();
        for k in 1..=c.len() {
            power = &power * &shifted;
            if complex_rank(&power, 1e-9 * scale.powi(k as i32)) <= target {
                index = k;
                break;
            }
        }
        eigenvalues.push((lambda.re, lambda.im));
        mults.push(c.len());
        indices.push(index);
    }
    let (lo, hi) = eigenvalues
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, im)| {
            (lo.min(im), hi.max(im))
        });
    Ok(EigenStructure {
        index_sum: indices.iter().sum(),
        eigenvalues,
        algebraic_multiplicities: mults,
        indices,
        imaginary_spread: hi - lo,
    })
}

/// Rank of `[C; CA; ...; CA^{d-1}]`.
pub fn kalman_rank(a: &DMatrix<f64>, c: &DMatrix<f64>) -> usize {
    let d = a.nrows();
    let m = c.nrows();
    let mut k = DMatrix::zeros(d * m, d);
    let mut block = c.clone();
    for i in 0..d {
        k.view_mut((i * m, 0), (m, d)).copy_from(&block);
        block = &block * a;
    }
    numerical_rank(&k)
}

/// Number of singular values above [`RANK_TOLERANCE`] times the largest.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let tol = RANK_TOLERANCE * sv.max();
    if sv.max() == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Equidistant sampling.
    H1,
    /// Periodic non-equidistant sampling.
    H2,
    /// Irregular sampling.
    H3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleCheck {
    pub hypothesis: Hypothesis,
    pub passed: bool,
    pub diagnostics: Vec<String>,
    /// Smallest numerical rank of the sample-observability matrices.
    pub min_numerical_rank: usize,
    pub state_dim: usize,
}

fn equidistant_gap(times: &[f64]) -> Option<f64> {
    let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let g = *gaps.first()?;
    gaps.iter()
        .all(|x| (x - g).abs() <= 1e-9 * g.abs().max(1.0))
        .then_some(g)
}

/// Matches the H2 pattern: gaps repeat `(Δ′ × d̄, Δ″)`. Returns `(d̄, Δ′, Δ″)`.
fn periodic_pattern(times: &[f64]) -> Result<(usize, f64, f64), String> {
    let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    if gaps.is_empty() {
        return Err("need at least two samples".into());
    }
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0);
    let d1 = gaps[0];
    let d_bar = gaps.iter().take_while(|&&g| close(g, d1)).count();
    if d_bar == gaps.len() {
        return Err("gaps are all equal; no second gap Δ″ present".into());
    }
    let d2 = gaps[d_bar];
    for (k, &g) in gaps.iter().enumerate() {
        let expected = if k % (d_bar + 1) == d_bar { d2 } else { d1 };
        if !close(g, expected) {
            return Err(format!("gap {} is {g}, expected {expected}", k + 1));
        }
    }
    Ok((d_bar, d1, d2))
}

/// Checks one of the sampling hypotheses for every trajectory in
/// `trajectories`, and cross-checks the numerical rank of each
/// sample-observability matrix.
pub fn check_schedule_observability(
    sys: &LinearTimeVaryingSystem,
    trajectories: &[Vec<f64>],
    hypothesis: Hypothesis,
) -> Result<ScheduleCheck, ObservabilityError> {
    let (a, c) = sys.constant_matrices().ok_or(ObservabilityError::NotTimeInvariant)?;
    let d = sys.d;
    let rank = kalman_rank(a, c);
    if rank < d {
        return Err(ObservabilityError::Unobservable { rank, dim: d });
    }
    if trajectories.is_empty() {
        return Err(ObservabilityError::TooFewSamples { needed: 1, got: 0 });
    }
    for t in trajectories {
        check_times(t, 1)?;
    }
    let es = eigen_structure(a)?;
    let mut passed = true;
    let mut diagnostics = Vec::new();
    match hypothesis {
        Hypothesis::H1 => {
            for (i, times) in trajectories.iter().enumerate() {
                let ell = times.len();
                if ell < d {
                    passed = false;
                    diagnostics.push(format!("trajectory {}: ℓ = {ell} < d = {d}", i + 1));
                }
                if ell < 2 {
                    continue;
                }
                let Some(gap) = equidistant_gap(times) else {
                    passed = false;
                    diagnostics.push(format!("trajectory {}: samples are not equidistant", i + 1));
                    continue;
                };
                for (j, &(re1, im1)) in es.eigenvalues.iter().enumerate() {
                    for &(re2, im2) in &es.eigenvalues[j + 1..] {
                        let re = gap * (re1 - re2);
                        let cycles = gap * (im1 - im2) / (2.0 * PI);
                        let k = cycles.round();
                        let tol = ALIASING_TOLERANCE * cycles.abs().max(1.0);
                        if re.abs() <= tol && k != 0.0 && (cycles - k).abs() <= tol {
                            passed = false;
                            diagnostics.push(format!(
                                "trajectory {}: Δ′ = {gap} aliases eigenvalues {re1}{:+}j and {re2}{:+}j (k = {k})",
                                i + 1,
                                im1,
                                im2
                            ));
                        }
                    }
                }
            }
        }
        Hypothesis::H2 => {
            for (i, times) in trajectories.iter().enumerate() {
                let (d_bar, d1, d2) = periodic_pattern(times)
                    .map_err(|e| ObservabilityError::PatternMismatch(format!("trajectory {}: {e}", i + 1)))?;
                if d_bar < d {
                    passed = false;
                    diagnostics.push(format!("trajectory {}: d̄ = {d_bar} < d = {d}", i + 1));
                }
                if times.len() < (d_bar + 1) * d {
                    passed = false;
                    diagnostics.push(format!(
                        "trajectory {}: ℓ = {} < (d̄+1)d = {}",
                        i + 1,
                        times.len(),
                        (d_bar + 1) * d
                    ));
                }
                diagnostics.push(format!(
                    "trajectory {}: Δ′/Δ″ = {} assumed irrational (user assertion)",
                    i + 1,
                    d1 / d2
                ));
            }
        }
        Hypothesis::H3 => {
            let tau = trajectories
                .iter()
                .map(|t| t.last().unwrap() - t.first().unwrap())
                .fold(0.0, f64::max);
            let needed = es.index_sum as f64 - 1.0 + tau * es.imaginary_spread / (2.0 * PI);
            diagnostics.push(format!(
                "𝔪 = {}, δ = {}, τ = {tau}: need ℓ > {needed}",
                es.index_sum, es.imaginary_spread
            ));
            for (i, times) in trajectories.iter().enumerate() {
                if !(times.len() as f64 > needed) {
                    passed = false;
                    diagnostics.push(format!("trajectory {}: ℓ = {} too small", i + 1, times.len()));
                }
            }
        }
    }
    let mut min_rank = d;
    for times in trajectories {
        let o = sample_observability_matrix(sys, times, DEFAULT_FLOW_STEP)?;
        min_rank = min_rank.min(numerical_rank(&o));
    }
    if passed && min_rank < d {
        diagnostics.push(format!("hypothesis holds but numerical rank is {min_rank} < {d}"));
    }
    Ok(ScheduleCheck {
        hypothesis,
        passed,
        diagnostics,
        min_numerical_rank: min_rank,
        state_dim: d,
    })
}

/// `(W O)† W ζ̂`, rejecting rank-deficient `W O`.
pub fn reconstruct_state(
    o: &DMatrix<f64>,
    w: &DMatrix<f64>,
    zeta_hat: &DVector<f64>,
) -> Result<DVector<f64>, ObservabilityError> {
    if w.nrows() != w.ncols() || w.ncols() != o.nrows() || zeta_hat.len() != o.nrows() {
        return Err(ObservabilityError::DimensionMismatch(format!(
            "O is {:?}, W is {:?}, outputs have length {}",
            o.shape(),
            w.shape(),
            zeta_hat.len()
        )));
    }
    let wo = w * o;
    let d = o.ncols();
    if wo.nrows() < d {
        return Err(ObservabilityError::RankDeficient {
            sigma_min: 0.0,
            relative: 0.0,
        });
    }
    let svd = wo.svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let relative = if smax > 0.0 { smin / smax } else { 0.0 };
    if !(relative > RANK_TOLERANCE) {
        return Err(ObservabilityError::RankDeficient {
            sigma_min: smin,
            relative,
        });
    }
    svd.solve(&(w * zeta_hat), 0.0)
        .map_err(|e| ObservabilityError::InvalidParameter(e.to_string()))
}

/// `ε* = sqrt(τ_up / (a λ_min)) δ*`.
pub fn estimation_error_bound(
    tau_up: f64,
    lambda_min_gramian: f64,
    a: f64,
    delta_star: f64,
) -> Result<f64, ObservabilityError> {
    if !(lambda_min_gramian > 0.0) || !(a > 0.0 && a <= 1.0) || !(tau_up > 0.0) || delta_star < 0.0 {
        return Err(ObservabilityError::InvalidParameter(format!(
            "need tau_up > 0, lambda_min > 0, a in (0,1], delta* >= 0; got {tau_up}, {lambda_min_gramian}, {a}, {delta_star}"
        )));
    }
    Ok((tau_up / (a * lambda_min_gramian)).sqrt() * delta_star)
}

/// `λ_min(Oᵀ W² O)`, computed as the squared smallest singular value of `W O`.
pub fn eigenvalue_margin(o: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    let wo = w * o;
    if wo.nrows() < wo.ncols() || wo.is_empty() {
        return 0.0;
    }
    let smin = wo.svd(false, false).singular_values.min();
    smin * smin
}

/// Output samples of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationBatch {
    pub trajectory: usize,
    pub times: Vec<f64>,
    /// Stacked outputs, `ℓ m` entries.
    pub outputs: Vec<f64>,
    /// Bound `δ*` on each output error norm.
    #[serde(default)]
    pub noise_bound: f64,
}

impl ObservationBatch {
    pub fn validate(&self, m: usize) -> Result<(), ObservabilityError> {
        check_times(&self.times, 1)?;
        if self.outputs.len() != self.times.len() * m {
            return Err(ObservabilityError::DimensionMismatch(format!(
                "expected {} outputs, got {}",
                self.times.len() * m,
                self.outputs.len()
            )));
        }
        if !(self.noise_bound >= 0.0) {
            return Err(ObservabilityError::InvalidParameter(
                "noise bound must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Weighted least-squares estimate of the state at the last sample time.
pub fn estimate_state(
    sys: &LinearTimeVaryingSystem,
    batch: &ObservationBatch,
    step: f64,
) -> Result<DVector<f64>, ObservabilityError> {
    batch.validate(sys.m)?;
    check_times(&batch.times, 2)?;
    let o = sample_observability_matrix(sys, &batch.times, step)?;
    let w = weight_matrix(&batch.times, sys.m)?;
    reconstruct_state(&o, &w, &DVector::from_column_slice(&batch.outputs))
}
