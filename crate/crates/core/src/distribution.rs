//! Finite discrete probability distributions and exact optimal transport.
//!
//! A [`DiscreteDistribution`] is a weighted set of atoms in `R^d`. Wasserstein
//! distances between two such distributions are computed exactly: equal-size,
//! equal-weight inputs reduce to a linear assignment problem (Hungarian
//! method), everything else is solved as a dense transportation LP.

use std::fmt;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `sum(weights) == 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Largest support accepted by [`wasserstein_exact`].
pub const MAX_EXACT_SUPPORT: usize = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("distribution has no support points")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{points} points but {weights} weights")]
    WeightCount { points: usize, weights: usize },
    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },
    #[error("sequences have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("Wasserstein exponent must be >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("support of size {0} exceeds the exact-transport limit of {MAX_EXACT_SUPPORT}")]
    TooLarge(usize),
    #[error("map failed on support point {index}: {reason}")]
    MapFailed { index: usize, reason: String },
    #[error("transport solver failed: {0}")]
    Solver(String),
}

/// Weighted finite support in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct DiscreteDistribution {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDistribution {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<RawDistribution> for DiscreteDistribution {
    type Error = DistributionError;

    fn try_from(raw: RawDistribution) -> Result<Self, Self::Error> {
        let dist = DiscreteDistribution::new(raw.points, raw.weights)?;
        if dist.dim != raw.dim {
            return Err(DistributionError::DimensionMismatch {
                expected: raw.dim,
                found: dist.dim,
            });
        }
        Ok(dist)
    }
}

impl From<DiscreteDistribution> for RawDistribution {
    fn from(d: DiscreteDistribution) -> Self {
        RawDistribution {
            dim: d.dim,
            points: d.points,
            weights: d.weights,
        }
    }
}

impl DiscreteDistribution {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self, DistributionError> {
        let first = points.first().ok_or(DistributionError::Empty)?;
        let dim = first.len();
        if points.len() != weights.len() {
            return Err(DistributionError::WeightCount {
                points: points.len(),
                weights: weights.len(),
            });
        }
        for (index, x) in points.iter().enumerate() {
            if x.len() != dim {
                return Err(DistributionError::DimensionMismatch {
                    expected: dim,
                    found: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(DistributionError::NonFinite { index });
            }
        }
        for (index, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) {
                return Err(DistributionError::NegativeWeight { index, value: w });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(DistributionError::NotNormalized { sum });
        }
        Ok(Self { dim, points, weights })
    }

    /// Equal-weight empirical distribution `1/N sum_i delta_{x_i}`.
    pub fn empirical(points: Vec<Vec<f64>>) -> Result<Self, DistributionError> {
        let n = points.len();
        if n == 0 {
            return Err(DistributionError::Empty);
        }
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        // absorb rounding so the sum is 1 to machine precision
        let drift: f64 = 1.0 - weights.iter().sum::<f64>();
        weights[n - 1] += drift;
        Self::new(points, weights)
    }

    pub fn dirac(point: Vec<f64>) -> Result<Self, DistributionError> {
        Self::new(vec![point], vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.iter().map(Vec::as_slice).zip(self.weights.iter().copied())
    }

    /// True when all atoms carry the same weight.
    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|&x| (x - w).abs() <= WEIGHT_SUM_TOLERANCE)
    }

    /// Image measure under `map`. Atoms are mapped one by one and keep their
    /// weights; coinciding images are not merged.
    pub fn pushforward<F, E>(&self, mut map: F) -> Result<Self, DistributionError>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>, E>,
        E: fmt::Display,
    {
        let mut points = Vec::with_capacity(self.len());
        for (index, x) in self.points.iter().enumerate() {
            let y = map(x).map_err(|e| DistributionError::MapFailed {
                index,
                reason: e.to_string(),
            })?;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(DistributionError::MapFailed {
                    index,
                    reason: "non-finite image".into(),
                });
            }
            points.push(y);
        }
        Self::new(points, self.weights.clone())
    }

    /// Merges atoms closer than `tol` (Euclidean), summing their weights.
    /// Representatives keep the coordinates of the first atom seen.
    pub fn merge_close_atoms(&self, tol: f64) -> Self {
        let mut points: Vec<Vec<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (x, w) in self.iter() {
            match points.iter().position(|y| euclidean(x, y) <= tol) {
                Some(k) => weights[k] += w,
                None => {
                    points.push(x.to_vec());
                    weights.push(w);
                }
            }
        }
        Self {
            dim: self.dim,
            points,
            weights,
        }
    }
}

/// Transport plan between two discrete distributions; `mass[i][j]` moves
/// from source atom `i` to target atom `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub mass: Vec<Vec<f64>>,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        self.mass.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let cols = self.mass.first().map_or(0, Vec::len);
        (0..cols).map(|j| self.mass.iter().map(|r| r[j]).sum()).collect()
    }

    /// Checks the marginal constraints against `source` and `target`.
    pub fn has_marginals(&self, source: &DiscreteDistribution, target: &DiscreteDistribution, tol: f64) -> bool {
        let rows = self.row_sums();
        let cols = self.column_sums();
        rows.len() == source.len()
            && cols.len() == target.len()
            && self.mass.iter().flatten().all(|&m| m >= -tol)
            && rows.iter().zip(source.weights()).all(|(a, b)| (a - b).abs() <= tol)
            && cols.iter().zip(target.weights()).all(|(a, b)| (a - b).abs() <= tol)
    }

    /// `sum_ij mass_ij * cost_ij`.
    pub fn cost(&self, cost: &[Vec<f64>]) -> f64 {
        self.mass
            .iter()
            .zip(cost)
            .map(|(m, c)| m.iter().zip(c).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }
}

pub(crate) fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn check_exponent(p: f64) -> Result<(), DistributionError> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(DistributionError::InvalidExponent(p))
    }
}

/// Ground cost matrix `||x_i - y_j||^p`.
pub fn cost_matrix(x: &[Vec<f64>], y: &[Vec<f64>], p: f64) -> Vec<Vec<f64>> {
    x.iter()
        .map(|a| y.iter().map(|b| euclidean(a, b).powf(p)).collect())
        .collect()
}

/// Optimal transport cost `min_pi sum pi_ij ||x_i - y_j||^p` together with
/// an optimal plan.
pub fn optimal_transport(
    source: &DiscreteDistribution,
    target: &DiscreteDistribution,
    p: f64,
) -> Result<(f64, TransportPlan), DistributionError> {
    check_exponent(p)?;
    if source.dim() != target.dim() {
        return Err(DistributionError::DimensionMismatch {
            expected: source.dim(),
            found: target.dim(),
        });
    }
    for n in [source.len(), target.len()] {
        if n > MAX_EXACT_SUPPORT {
            return Err(DistributionError::TooLarge(n));
        }
    }
    let cost = cost_matrix(source.points(), target.points(), p);
    if source.len() == target.len() && source.is_uniform() && target.is_uniform() {
        let n = source.len();
        let assignment = hungarian(&cost);
        let w = 1.0 / n as f64;
        let mut mass = vec![vec![0.0; n]; n];
        for (i, &j) in assignment.iter().enumerate() {
            mass[i][j] = w;
        }
        let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        Ok((total / n as f64, TransportPlan { mass }))
    } else {
        transport_lp(source.weights(), target.weights(), &cost)
    }
}

/// Exact `W_p(P, Q)` with Euclidean ground distance.
pub fn wasserstein_exact(
    source: &DiscreteDistribution,
    target: &DiscreteDistribution,
    p: f64,
) -> Result<f64, DistributionError> {
    let (cost, _) = optimal_transport(source, target, p)?;
    Ok(cost.max(0.0).powf(1.0 / p))
}

/// `(1/N sum_i ||X_i - Y_i||^p)^(1/p)`, the cost of the index-matching
/// coupling. Upper-bounds `W_p` of the two empirical distributions.
pub fn coupling_upper_bound(xs: &[Vec<f64>], ys: &[Vec<f64>], p: f64) -> Result<f64, DistributionError> {
    check_exponent(p)?;
    if xs.len() != ys.len() {
        return Err(DistributionError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(DistributionError::Empty);
    }
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        if x.len() != y.len() {
            return Err(DistributionError::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        total += euclidean(x, y).powf(p);
    }
    Ok((total / xs.len() as f64).powf(1.0 / p))
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with row/column potentials, O(n^3)). Returns `assignment[row] = column`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is the virtual root column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if matched_row[j] > 0 {
            assignment[matched_row[j] - 1] = j - 1;
        }
    }
    assignment
}

fn transport_lp(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> Result<(f64, TransportPlan), DistributionError> {
    let (n, m) = (a.len(), b.len());
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<_>> = (0..n)
        .map(|i| (0..m).map(|j| lp.add_var(cost[i][j], (0.0, f64::INFINITY))).collect())
        .collect();
    for i in 0..n {
        let expr: Vec<_> = vars[i].iter().map(|&v| (v, 1.0)).collect();
        lp.add_constraint(expr.as_slice(), ComparisonOp::Eq, a[i]);
    }
    // the last column constraint is implied by the others
    for j in 0..m.saturating_sub(1) {
        let expr: Vec<_> = (0..n).map(|i| (vars[i][j], 1.0)).collect();
        lp.add_constraint(expr.as_slice(), ComparisonOp::Eq, b[j]);
    }
    let solution = lp.solve().map_err(|e| DistributionError::Solver(e.to_string()))?;
    let mass: Vec<Vec<f64>> = vars
        .iter()
        .map(|row| row.iter().map(|&v| solution[v].max(0.0)).collect())
        .collect();
    let plan = TransportPlan { mass };
    Ok((plan.cost(cost), plan))
}
