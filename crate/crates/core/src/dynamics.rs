//! Vector fields, fixed-step RK4 flows, flow-error models and Lyapunov
//! growth bounds.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("final time {t} precedes initial time {s}")]
    BackwardTime { s: f64, t: f64 },
    #[error("integration step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("state has dimension {found}, field expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite state at t = {0}")]
    BlowUp(f64),
    #[error("invalid growth certificate: {0}")]
    InvalidCertificate(String),
    #[error("invalid flow error model: {0}")]
    InvalidErrorModel(String),
    #[error("empty point cloud")]
    EmptyPointCloud,
}

/// Right-hand side `F(t, xi)` of `xi' = F(t, xi)`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, state: &[f64], out: &mut [f64]);
}

impl<V: VectorField + ?Sized> VectorField for &V {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, t: f64, state: &[f64], out: &mut [f64]) {
        (**self).eval(t, state, out)
    }
}

impl<V: VectorField + ?Sized> VectorField for Box<V> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, t: f64, state: &[f64], out: &mut [f64]) {
        (**self).eval(t, state, out)
    }
}

/// Adapts a closure into a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64, state: &[f64], out: &mut [f64]) {
        (self.f)(t, state, out)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroField(pub usize);

impl VectorField for ZeroField {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&self, _t: f64, _state: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Planar kinematics under constant acceleration: `x1' = x2`, `x2' = acc`.
#[derive(Debug, Clone, Copy)]
pub struct DoubleIntegrator {
    pub acceleration: f64,
}

impl VectorField for DoubleIntegrator {
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, _t: f64, state: &[f64], out: &mut [f64]) {
        out[0] = state[1];
        out[1] = self.acceleration;
    }
}

/// `xi' = (alpha/2) xi + (M1/2) |xi|^{2q-2} xi`. With `V = |xi|^2` this gives
/// `DV F = alpha V + M1 V^q` with equality, so it saturates the Lyapunov
/// growth hypothesis (`r = 2`, `a1 = a2 = 1`).
#[derive(Debug, Clone, Copy)]
pub struct GrowthTestSystem {
    pub dim: usize,
    pub alpha: f64,
    pub m1: f64,
    pub q: f64,
}

impl VectorField for GrowthTestSystem {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _t: f64, state: &[f64], out: &mut [f64]) {
        let norm2: f64 = state.iter().map(|x| x * x).sum();
        let gain = if norm2 > 0.0 {
            0.5 * self.alpha + 0.5 * self.m1 * norm2.powf(self.q - 1.0)
        } else {
            0.5 * self.alpha
        };
        for (o, x) in out.iter_mut().zip(state) {
            *o = gain * x;
        }
    }
}

/// Red UAV tracking the orbit `chi(t, theta) = r (cos(theta + t), sin(theta + t))`
/// with gain `kappa`. State `(x, y, vx, vy, theta)`; `theta` is constant.
#[derive(Debug, Clone, Copy)]
pub struct RedUavField {
    pub radius: f64,
    pub kappa: f64,
}

impl VectorField for RedUavField {
    fn dim(&self) -> usize {
        5
    }
    fn eval(&self, t: f64, s: &[f64], out: &mut [f64]) {
        let k2 = self.kappa * self.kappa;
        let phase = s[4] + t;
        out[0] = s[2];
        out[1] = s[3];
        out[2] = k2 * (self.radius * phase.cos() - s[0]);
        out[3] = k2 * (self.radius * phase.sin() - s[1]);
        out[4] = 0.0;
    }
}

/// Built-in vector fields selectable by name from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FieldSpec {
    Zero {
        dim: usize,
    },
    DoubleIntegrator {
        #[serde(default = "unit")]
        acceleration: f64,
    },
    GrowthTest {
        dim: usize,
        #[serde(default)]
        alpha: f64,
        m1: f64,
        q: f64,
    },
    RedUav {
        #[serde(default = "unit")]
        radius: f64,
        #[serde(default = "default_kappa")]
        kappa: f64,
    },
}

fn unit() -> f64 {
    1.0
}

fn default_kappa() -> f64 {
    4.0
}

impl FieldSpec {
    pub fn build(&self) -> Box<dyn VectorField> {
        match *self {
            FieldSpec::Zero { dim } => Box::new(ZeroField(dim)),
            FieldSpec::DoubleIntegrator { acceleration } => Box::new(DoubleIntegrator { acceleration }),
            FieldSpec::GrowthTest { dim, alpha, m1, q } => Box::new(GrowthTestSystem { dim, alpha, m1, q }),
            FieldSpec::RedUav { radius, kappa } => Box::new(RedUavField { radius, kappa }),
        }
    }
}

fn rk4_step<V: VectorField + ?Sized>(field: &V, t: f64, h: f64, x: &mut [f64], scratch: &mut [Vec<f64>; 5]) {
    let [k1, k2, k3, k4, tmp] = scratch;
    let n = x.len();
    field.eval(t, x, k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    field.eval(t + 0.5 * h, tmp, k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    field.eval(t + 0.5 * h, tmp, k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    field.eval(t + h, tmp, k4);
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// RK4 from `s` to `t` in either direction with step magnitude `step`; the
/// final partial step lands exactly on `t`.
pub(crate) fn rk4_integrate<V: VectorField + ?Sized>(
    field: &V,
    s: f64,
    t: f64,
    xi: &[f64],
    step: f64,
) -> Result<Vec<f64>, DynamicsError> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(DynamicsError::InvalidStep(step));
    }
    let d = field.dim();
    if xi.len() != d {
        return Err(DynamicsError::DimensionMismatch {
            expected: d,
            found: xi.len(),
        });
    }
    let mut x = xi.to_vec();
    if t == s {
        return Ok(x);
    }
    let span = t - s;
    let dir = span.signum();
    let full = (span.abs() / step).floor() as u64;
    let mut scratch: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; d]);
    let mut now = s;
    for k in 0..full {
        rk4_step(field, now, dir * step, &mut x, &mut scratch);
        now = s + dir * step * (k + 1) as f64;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::BlowUp(now));
        }
    }
    let rest = t - now;
    if rest.abs() > 1e-14 * step.max(span.abs()) {
        rk4_step(field, now, rest, &mut x, &mut scratch);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::BlowUp(t));
        }
    }
    Ok(x)
}

/// Numerical flow map `Phi_{t,s}(xi)` by fixed-step RK4. Requires `t >= s`.
pub fn integrate_flow<V: VectorField + ?Sized>(
    field: &V,
    s: f64,
    t: f64,
    xi: &[f64],
    step: f64,
) -> Result<Vec<f64>, DynamicsError> {
    if t < s {
        return Err(DynamicsError::BackwardTime { s, t });
    }
    rk4_integrate(field, s, t, xi, step)
}

/// States at each of `times` (nondecreasing, all `>= s`), integrating once
/// through the whole list.
pub fn integrate_trajectory<V: VectorField + ?Sized>(
    field: &V,
    s: f64,
    xi: &[f64],
    times: &[f64],
    step: f64,
) -> Result<Vec<Vec<f64>>, DynamicsError> {
    let mut out = Vec::with_capacity(times.len());
    let mut now = s;
    let mut x = xi.to_vec();
    for &t in times {
        x = integrate_flow(field, now, t, &x, step)?;
        now = t;
        out.push(x.clone());
    }
    Ok(out)
}

/// Error model `|Phi_num - Phi| <= K (e^{L (t-s)} - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFlowErrorModel", into = "RawFlowErrorModel")]
pub struct FlowErrorModel {
    kappa_frak: f64,
    lipschitz: f64,
}

#[derive(Serialize, Deserialize)]
struct RawFlowErrorModel {
    kappa_frak: f64,
    #[serde(rename = "L")]
    lipschitz: f64,
}

impl TryFrom<RawFlowErrorModel> for FlowErrorModel {
    type Error = DynamicsError;
    fn try_from(r: RawFlowErrorModel) -> Result<Self, Self::Error> {
        FlowErrorModel::new(r.kappa_frak, r.lipschitz)
    }
}

impl From<FlowErrorModel> for RawFlowErrorModel {
    fn from(m: FlowErrorModel) -> Self {
        RawFlowErrorModel {
            kappa_frak: m.kappa_frak,
            lipschitz: m.lipschitz,
        }
    }
}

impl FlowErrorModel {
    pub fn new(kappa_frak: f64, lipschitz: f64) -> Result<Self, DynamicsError> {
        if !(kappa_frak >= 0.0 && kappa_frak.is_finite()) {
            return Err(DynamicsError::InvalidErrorModel(format!(
                "error magnitude must be >= 0, got {kappa_frak}"
            )));
        }
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(DynamicsError::InvalidErrorModel(format!(
                "growth rate L must be > 0, got {lipschitz}"
            )));
        }
        Ok(Self { kappa_frak, lipschitz })
    }

    /// Exact flow: no error.
    pub fn exact(lipschitz: f64) -> Result<Self, DynamicsError> {
        Self::new(0.0, lipschitz)
    }

    pub fn kappa_frak(&self) -> f64 {
        self.kappa_frak
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// `K (e^{L (t - s)} - 1)`.
pub fn flow_error_bound(model: &FlowErrorModel, s: f64, t: f64) -> f64 {
    model.kappa_frak * (model.lipschitz * (t - s)).exp_m1()
}

/// Error model for disturbed dynamics on `[0, horizon]`:
/// `K = min{sup |d|, eps / (e^{L horizon} - 1)}`.
pub fn disturbance_error_model(
    sup_disturbance: f64,
    eps: f64,
    lipschitz: f64,
    horizon: f64,
) -> Result<FlowErrorModel, DynamicsError> {
    let cap = eps / (lipschitz * horizon).exp_m1();
    FlowErrorModel::new(sup_disturbance.min(cap), lipschitz)
}

/// Empirical `K` for a given `L`: the coarse-step flow is compared against a
/// ten-times finer one at `checkpoints` evenly spaced times in `(s, horizon]`
/// for every start `(s, xi)`, and `K` is the largest ratio
/// `|diff| / (e^{L (t-s)} - 1)`. Not a rigorous bound.
pub fn calibrate_flow_error<V: VectorField + ?Sized>(
    field: &V,
    starts: &[(f64, Vec<f64>)],
    horizon: f64,
    coarse_step: f64,
    lipschitz: f64,
    checkpoints: usize,
) -> Result<FlowErrorModel, DynamicsError> {
    let fine_step = coarse_step / 10.0;
    let mut kappa: f64 = 0.0;
    for (s, xi) in starts {
        let span = horizon - s;
        if span <= 0.0 {
            continue;
        }
        let times: Vec<f64> = (1..=checkpoints.max(1))
            .map(|k| s + span * k as f64 / checkpoints.max(1) as f64)
            .collect();
        let coarse = integrate_trajectory(field, *s, xi, &times, coarse_step)?;
        let fine = integrate_trajectory(field, *s, xi, &times, fine_step)?;
        for ((t, a), b) in times.iter().zip(&coarse).zip(&fine) {
            let diff = crate::distribution::euclidean(a, b);
            let scale = (lipschitz * (t - s)).exp_m1();
            if scale > 0.0 {
                kappa = kappa.max(diff / scale);
            }
        }
    }
    FlowErrorModel::new(kappa, lipschitz)
}

/// `(t1, t2) -> integral of alpha over [t1, t2]`.
#[derive(Clone)]
pub struct AlphaIntegral(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl AlphaIntegral {
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `alpha(t) = rate`.
    pub fn constant(rate: f64) -> Self {
        Self(Arc::new(move |t1, t2| rate * (t2 - t1)))
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Self(Arc::new(f))
    }

    pub fn integral(&self, t1: f64, t2: f64) -> f64 {
        (self.0)(t1, t2)
    }
}

impl fmt::Debug for AlphaIntegral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AlphaIntegral(..)")
    }
}

/// Lyapunov growth data: `a1 |xi|^r <= V(xi) <= a2 |xi|^r` and
/// `DV F <= alpha(t) V + M1 V^q`, with `int_{t1}^{t2} alpha <= M2` when `M1 > 0`.
#[derive(Debug, Clone)]
pub struct GrowthCertificate {
    pub a1: f64,
    pub a2: f64,
    pub r: f64,
    pub q: f64,
    pub m1: f64,
    pub m2: f64,
    pub alpha: AlphaIntegral,
    /// Alternative convergence condition when `M1 = 0`:
    /// `int_0^t alpha <= ln(t) / q'` for `t >= t0`.
    pub q_prime: Option<f64>,
    pub t0: Option<f64>,
}

impl GrowthCertificate {
    /// Checks the structural constraints; the `M2` bound on the alpha
    /// integral is sampled on a grid over `[0, horizon]`.
    pub fn validate(&self, horizon: f64) -> Result<(), DynamicsError> {
        let bad = |m: String| Err(DynamicsError::InvalidCertificate(m));
        if !(self.a1 > 0.0 && self.a2 >= self.a1) {
            return bad(format!("need 0 < a1 <= a2, got a1={}, a2={}", self.a1, self.a2));
        }
        if !(self.r > 1.0) {
            return bad(format!("need r > 1, got {}", self.r));
        }
        if !(self.q < 1.0) {
            return bad(format!("need q < 1, got {}", self.q));
        }
        if !(self.m1 >= 0.0 && self.m2 >= 0.0) {
            return bad("M1 and M2 must be nonnegative".into());
        }
        if self.m1 > 0.0 {
            const GRID: usize = 40;
            let h = horizon.max(1.0) / GRID as f64;
            for i in 0..=GRID {
                for j in i..=GRID {
                    let v = self.alpha.integral(i as f64 * h, j as f64 * h);
                    if v > self.m2 + 1e-12 {
                        return bad(format!(
                            "alpha integral {v} over [{}, {}] exceeds M2 = {}",
                            i as f64 * h,
                            j as f64 * h,
                            self.m2
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// `r (1 - q) > max{2p, d}` with `M1 > 0`, or the `M1 = 0` alternative
    /// `r q' > max{2p, d}` with the logarithmic alpha bound sampled up to
    /// `horizon`.
    pub fn guarantees_radius_convergence(&self, p: f64, d: usize, horizon: f64) -> bool {
        let pbar = (2.0 * p).max(d as f64);
        if self.m1 > 0.0 {
            return self.r * (1.0 - self.q) > pbar;
        }
        match (self.q_prime, self.t0) {
            (Some(qp), Some(t0)) if qp > 0.0 && t0 > 0.0 && self.r * qp > pbar => (0..=100).all(|k| {
                let t = t0 + (horizon - t0).max(0.0) * k as f64 / 100.0;
                self.alpha.integral(0.0, t) <= t.ln() / qp + 1e-12
            }),
            _ => false,
        }
    }
}

/// Upper bound on `|xi(t)|` for a trajectory starting at norm `xi0_norm`.
pub fn growth_bound(cert: &GrowthCertificate, xi0_norm: f64, t: f64) -> Result<f64, DynamicsError> {
    cert.validate(t)?;
    let inv_r = 1.0 / cert.r;
    if cert.m1 == 0.0 {
        Ok((cert.a2 / cert.a1).powf(inv_r) * xi0_norm * (inv_r * cert.alpha.integral(0.0, t)).exp())
    } else {
        let m_bar = (cert.m2.exp() * (1.0 + cert.a2 * xi0_norm.powf(cert.r)) / cert.a1).powf(inv_r);
        let c_bar = cert.m1 * (1.0 - cert.q);
        Ok(m_bar * (1.0 + c_bar * t).powf(1.0 / (cert.r * (1.0 - cert.q))))
    }
}

/// Half the infinity-norm diameter of a finite point set.
pub fn half_linf_diameter(points: &[Vec<f64>]) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    (0..first.len())
        .map(|k| {
            let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(x[k]), hi.max(x[k]))
            });
            hi - lo
        })
        .fold(0.0, f64::max)
        / 2.0
}

/// `rho_T = diam_inf(Phi_T(K)) / 2` for a finite cloud `K` started at time 0.
pub fn support_radius<V: VectorField + ?Sized>(
    cloud: &[Vec<f64>],
    field: &V,
    horizon: f64,
    step: f64,
) -> Result<f64, DynamicsError> {
    if cloud.is_empty() {
        return Err(DynamicsError::EmptyPointCloud);
    }
    let images = cloud
        .iter()
        .map(|x| integrate_flow(field, 0.0, horizon, x, step))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(half_linf_diameter(&images))
}
