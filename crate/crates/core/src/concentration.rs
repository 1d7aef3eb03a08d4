//! Concentration of the empirical measure for compactly supported laws and
//! the resulting Wasserstein ambiguity radius.
//!
//! For `N` i.i.d. samples of a law whose support has half-diameter `rho`
//! (in the infinity norm), `P(W_p^p(emp_N, mu) >= eps) <= chi_N(eps, rho)`,
//! where `chi_N` has three regimes depending on how `p` compares to `d/2`.
//! Solving `chi_N(eps_N^p) = beta` gives the radius `eps_N(beta, rho)` of a
//! ball that contains the true law with probability at least `1 - beta`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConcentrationError {
    #[error("invalid radius configuration: {0}")]
    InvalidConfig(String),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// Which branch of the concentration bound applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `p > d/2`: rate `N^{-1/(2p)}`.
    LowDimension,
    /// `p = d/2`: rate governed by the inverse of `h`.
    Critical,
    /// `p < d/2`: rate `N^{-1/d}`.
    HighDimension,
}

/// Parameters of the concentration bound. `C` and `c` depend only on `p` and
/// `d` but have no published numeric values; both default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRadiusConfig", into = "RawRadiusConfig")]
pub struct RadiusConfig {
    p: f64,
    d: usize,
    beta: f64,
    big_c: f64,
    small_c: f64,
}

#[derive(Serialize, Deserialize)]
struct RawRadiusConfig {
    p: f64,
    d: usize,
    beta: f64,
    #[serde(rename = "C", default = "one")]
    big_c: f64,
    #[serde(rename = "c", default = "one")]
    small_c: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawRadiusConfig> for RadiusConfig {
    type Error = ConcentrationError;

    fn try_from(r: RawRadiusConfig) -> Result<Self, Self::Error> {
        RadiusConfig::new(r.p, r.d, r.beta, r.big_c, r.small_c)
    }
}

impl From<RadiusConfig> for RawRadiusConfig {
    fn from(c: RadiusConfig) -> Self {
        RawRadiusConfig {
            p: c.p,
            d: c.d,
            beta: c.beta,
            big_c: c.big_c,
            small_c: c.small_c,
        }
    }
}

impl RadiusConfig {
    pub fn new(p: f64, d: usize, beta: f64, big_c: f64, small_c: f64) -> Result<Self, ConcentrationError> {
        let bad = |msg: String| Err(ConcentrationError::InvalidConfig(msg));
        if !(p >= 1.0 && p.is_finite()) {
            return bad(format!("p must be >= 1, got {p}"));
        }
        if d == 0 {
            return bad("d must be >= 1".into());
        }
        if !(beta > 0.0 && beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {beta}"));
        }
        if !(big_c > 0.0 && big_c.is_finite()) {
            return bad(format!("C must be positive, got {big_c}"));
        }
        if !(small_c > 0.0 && small_c.is_finite()) {
            return bad(format!("c must be positive, got {small_c}"));
        }
        Ok(Self {
            p,
            d,
            beta,
            big_c,
            small_c,
        })
    }

    /// `C = c = 1`.
    pub fn with_unit_constants(p: f64, d: usize, beta: f64) -> Result<Self, ConcentrationError> {
        Self::new(p, d, beta, 1.0, 1.0)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn big_c(&self) -> f64 {
        self.big_c
    }

    pub fn small_c(&self) -> f64 {
        self.small_c
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self, ConcentrationError> {
        Self::new(self.p, self.d, beta, self.big_c, self.small_c)
    }

    pub fn regime(&self) -> Regime {
        // 2p vs d is exact for the values a configuration realistically holds
        let two_p = 2.0 * self.p;
        let d = self.d as f64;
        if two_p > d {
            Regime::LowDimension
        } else if two_p == d {
            Regime::Critical
        } else {
            Regime::HighDimension
        }
    }

    /// `max{2p, d}`, the inverse rate exponent away from the critical case.
    pub fn rate_exponent(&self) -> f64 {
        (2.0 * self.p).max(self.d as f64)
    }

    /// `ln(C / beta) / c`.
    fn log_ratio(&self) -> f64 {
        (self.big_c / self.beta).ln() / self.small_c
    }
}

/// `h(x) = x^2 / ln(2 + 1/x)^2`, strictly increasing on `(0, inf)`.
pub fn h(x: f64) -> f64 {
    let l = (2.0 + 1.0 / x).ln();
    x * x / (l * l)
}

/// Inverse of [`h`] by bracketed bisection, run until the bracket cannot be
/// split further in floating point.
pub fn h_inverse(y: f64) -> Result<f64, ConcentrationError> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(ConcentrationError::NonPositive { name: "y", value: y });
    }
    let mut lo = 1.0;
    let mut hi = 1.0;
    while h(lo) > y {
        lo *= 0.5;
    }
    while h(hi) < y {
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick whichever endpoint lands closer
    Ok(if (h(lo) - y).abs() <= (h(hi) - y).abs() { lo } else { hi })
}

/// Tail bound `chi_N(eps, rho)` on `P(W_p^p(emp_N, mu) >= eps)`.
pub fn chi_n(eps: f64, rho: f64, n: usize, cfg: &RadiusConfig) -> Result<f64, ConcentrationError> {
    if !(eps > 0.0) {
        return Err(ConcentrationError::NonPositive {
            name: "eps",
            value: eps,
        });
    }
    if !(rho > 0.0) {
        return Err(ConcentrationError::NonPositive {
            name: "rho",
            value: rho,
        });
    }
    let n = n as f64;
    let p = cfg.p;
    let d = cfg.d as f64;
    let c = cfg.small_c;
    let exponent = match cfg.regime() {
        Regime::LowDimension => -c * n * eps * eps / rho.powf(2.0 * p),
        Regime::Critical => {
            let l = (2.0 + rho.powf(p) / eps).ln();
            -c * n * eps * eps / (rho.powf(2.0 * p) * l * l)
        }
        Regime::HighDimension => -c * n * eps.powf(d / p) / rho.powf(d),
    };
    Ok(cfg.big_c * exponent.exp())
}

/// Ambiguity radius `eps_N(beta, rho)`: `W_p(emp_N, mu) <= eps_N` with
/// probability at least `1 - beta`. Zero when `rho = 0` or when `C <= beta`
/// (the tail bound is then below `beta` for every radius).
///
/// # Panics
/// If `n == 0`.
pub fn ambiguity_radius(n: usize, cfg: &RadiusConfig, rho: f64) -> f64 {
    assert!(n >= 1, "ambiguity radius needs at least one sample");
    let a = cfg.log_ratio();
    if rho <= 0.0 || a <= 0.0 {
        return 0.0;
    }
    let n = n as f64;
    match cfg.regime() {
        Regime::LowDimension => {
            let e = 1.0 / (2.0 * cfg.p);
            a.powf(e) * rho / n.powf(e)
        }
        Regime::Critical => {
            // a / n > 0 here, so the inverse exists
            let x = h_inverse(a / n).expect("positive argument");
            x.powf(1.0 / cfg.p) * rho
        }
        Regime::HighDimension => {
            let e = 1.0 / cfg.d as f64;
            a.powf(e) * rho / n.powf(e)
        }
    }
}

/// `(ln(C/beta)/c)^{1/pbar} * rho` with `pbar = max{2p, d}`; away from the
/// critical case `eps_N = radius_scale * N^{-1/pbar}`.
pub fn radius_scale(cfg: &RadiusConfig, rho: f64) -> f64 {
    let a = cfg.log_ratio();
    if a <= 0.0 {
        return 0.0;
    }
    a.powf(1.0 / cfg.rate_exponent()) * rho
}

/// Radius obtained by scaling a reference radius with `N^{-exponent}`:
/// `eps_ref * (n_ref / n)^exponent`.
pub fn calibrated_radius(eps_ref: f64, n_ref: usize, n: usize, exponent: f64) -> f64 {
    eps_ref * (n_ref as f64 / n as f64).powf(exponent)
}
