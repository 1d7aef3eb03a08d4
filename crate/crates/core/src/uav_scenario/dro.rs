//! Blue UAV velocity profiles, the detection objective, and the sup-inf
//! solver over a Wasserstein ball restricted to a finite candidate support.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::red::{RedState, RedUav};
use super::{ScenarioConfig, ScenarioError};
use crate::distribution::{euclidean, DiscreteDistribution};

/// Velocity profiles `x ∈ [v_min, v_max]^n` with `Σ x = total`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSet {
    pub v_min: f64,
    pub v_max: f64,
    pub n: usize,
    pub total: f64,
}

impl ProfileSet {
    pub fn new(v_min: f64, v_max: f64, n: usize, total: f64) -> Result<Self, ScenarioError> {
        let tol = 1e-12 * total.abs().max(1.0);
        if n == 0 || !(v_min > 0.0) || !(v_min <= v_max) || !v_max.is_finite() {
            return Err(ScenarioError::InvalidConfig(format!(
                "need n >= 1 and 0 < v_min <= v_max, got n = {n}, v_min = {v_min}, v_max = {v_max}"
            )));
        }
        if n as f64 * v_min > total + tol || n as f64 * v_max < total - tol {
            return Err(ScenarioError::EmptyProfileSet);
        }
        Ok(Self { v_min, v_max, n, total })
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.n
            && x.iter().all(|&v| v >= self.v_min - tol && v <= self.v_max + tol)
            && (x.iter().sum::<f64>() - self.total).abs() <= tol * self.n as f64
    }

    /// Equal split `total / n`.
    pub fn center(&self) -> Vec<f64> {
        vec![(self.total / self.n as f64).clamp(self.v_min, self.v_max); self.n]
    }

    /// Euclidean projection onto the set: `clip(u - μ)` with the shift `μ`
    /// found by bisection so the sum matches.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        let clipped = |mu: f64| -> Vec<f64> { u.iter().map(|&v| (v - mu).clamp(self.v_min, self.v_max)).collect() };
        let sum = |mu: f64| clipped(mu).iter().sum::<f64>();
        let spread = self.v_max - self.v_min;
        let (mut lo, mut hi) = (
            u.iter().fold(f64::INFINITY, |m, &v| m.min(v)) - self.v_max - 1.0,
            u.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) - self.v_min + 1.0,
        );
        if spread == 0.0 {
            return self.center();
        }
        // sum(mu) is nonincreasing in mu
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if sum(mid) > self.total {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut x = clipped(0.5 * (lo + hi));
        // push the rounding residue onto a coordinate with room
        let residue = self.total - x.iter().sum::<f64>();
        if let Some(k) = (0..self.n).find(|&k| {
            let v = x[k] + residue;
            v >= self.v_min && v <= self.v_max
        }) {
            x[k] += residue;
        }
        x
    }

    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: Vec<f64> = (0..self.n).map(|_| rng.gen_range(self.v_min..=self.v_max)).collect();
        self.project(&u)
    }
}

/// Uniform time grid with `n_t` points on `[0, 2π]`.
pub fn window_grid(n_t: usize) -> Vec<f64> {
    (0..n_t).map(|j| TAU * j as f64 / (n_t - 1) as f64).collect()
}

/// Along-track blue position `∫_0^t v(s, x) ds` for the piecewise-constant
/// profile `x` on `n` equal segments of `[0, 2π]`.
pub fn blue_positions(x: &[f64], times: &[f64]) -> Vec<f64> {
    let n = x.len();
    let seg = TAU / n as f64;
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    for &v in x {
        cumulative.push(cumulative.last().unwrap() + v * seg);
    }
    times
        .iter()
        .map(|&t| {
            let k = ((t / seg).floor() as usize).min(n - 1);
            cumulative[k] + x[k] * (t - k as f64 * seg)
        })
        .collect()
}

fn min_sq_distance(path: &[[f64; 2]], blue: &[f64]) -> f64 {
    path.iter()
        .zip(blue)
        .map(|(p, b)| (p[0] - b).powi(2) + p[1] * p[1])
        .fold(f64::INFINITY, f64::min)
}

/// `f(x, ξ) = min_t min{‖known(t) - b(t)‖², ‖next(t) + (a, 0) - b(t)‖²}` over
/// the `n_t`-point window grid, where `known` is the observed UAV's state at
/// the start of the window and `next` the flow of `ξ`.
pub fn dro_objective(x: &[f64], xi: &RedState, known: &RedState, cfg: &ScenarioConfig) -> Result<f64, ScenarioError> {
    let profiles = cfg.profile_set()?;
    if !profiles.contains(x, 1e-9) {
        return Err(ScenarioError::InfeasibleProfile(x.to_vec()));
    }
    let uav = cfg.red_uav()?;
    let times = window_grid(cfg.time_grid);
    let blue = blue_positions(x, &times);
    let known_path = uav.path(known, 0.0, &times, [0.0, cfg.orbit_offset]);
    let next_path = uav.path(xi, 0.0, &times, [cfg.side, cfg.orbit_offset]);
    Ok(min_sq_distance(&known_path, &blue).min(min_sq_distance(&next_path, &blue)))
}

/// Wasserstein ball `{P : W_p(P, center) ≤ radius}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: DiscreteDistribution,
    pub radius: f64,
    pub p: f64,
}

/// `inf Σ_j q_j f_j` over distributions `q` on a finite candidate set within
/// the ball, as a transport-constrained linear program solved through its
/// one-dimensional Lagrangian dual
/// `max_{λ≥0} -λ ε^p + Σ_k w_k min_j (f_j + λ c_kj)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerProblem {
    weights: Vec<f64>,
    /// `costs[k][j] = ‖center_k - candidate_j‖^p`.
    costs: Vec<Vec<f64>>,
    budget: f64,
    min_positive_cost: f64,
}

const ZERO_COST: f64 = 1e-12;

impl InnerProblem {
    pub fn new(ball: &Ball, candidates: &[Vec<f64>]) -> Result<Self, ScenarioError> {
        if !(ball.radius >= 0.0) || !(ball.p >= 1.0) {
            return Err(ScenarioError::InvalidConfig(format!(
                "ball needs radius >= 0 and p >= 1, got {} and {}",
                ball.radius, ball.p
            )));
        }
        let costs: Vec<Vec<f64>> = ball
            .center
            .points()
            .iter()
            .map(|c| candidates.iter().map(|y| euclidean(c, y).powf(ball.p)).collect())
            .collect();
        if let Some(k) = costs.iter().position(|row| !row.iter().any(|&c| c <= ZERO_COST)) {
            return Err(ScenarioError::CenterNotInCandidates(k));
        }
        let min_positive_cost = costs
            .iter()
            .flatten()
            .copied()
            .filter(|&c| c > ZERO_COST)
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            weights: ball.center.weights().to_vec(),
            costs,
            budget: ball.radius.powf(ball.p),
            min_positive_cost,
        })
    }

    pub fn n_candidates(&self) -> usize {
        self.costs.first().map_or(0, Vec::len)
    }

    /// Dual value and a supergradient at `λ`.
    fn dual(&self, f: &[f64], lambda: f64) -> (f64, f64) {
        let mut value = -lambda * self.budget;
        let mut slope = -self.budget;
        for (w, row) in self.weights.iter().zip(&self.costs) {
            let mut best = f64::INFINITY;
            let mut best_cost = 0.0;
            for (fj, &c) in f.iter().zip(row) {
                let v = fj + lambda * c;
                if v < best || (v == best && c < best_cost) {
                    best = v;
                    best_cost = c;
                }
            }
            value += w * best;
            slope += w * best_cost;
        }
        (value, slope)
    }

    /// Optimal value for objective values `f` on the candidates.
    pub fn value(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.n_candidates(), "one value per candidate");
        if self.budget == 0.0 {
            return self
                .weights
                .iter()
                .zip(&self.costs)
                .map(|(w, row)| {
                    w * f
                        .iter()
                        .zip(row)
                        .filter(|(_, &c)| c <= ZERO_COST)
                        .map(|(v, _)| *v)
                        .fold(f64::INFINITY, f64::min)
                })
                .sum();
        }
        let (v0, g0) = self.dual(f, 0.0);
        if g0 <= 0.0 {
            return v0;
        }
        let (fmin, fmax) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        let mut lo = 0.0;
        let mut hi = (fmax - fmin) / self.min_positive_cost + 1.0;
        let mut best = v0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let (v, g) = self.dual(f, mid);
            best = best.max(v);
            if g > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        best.max(self.dual(f, lo).0).max(self.dual(f, hi).0)
    }
}

/// Value of the inner infimum over distributions supported on `candidates`.
pub fn solve_inner_inf(ball: &Ball, candidates: &[Vec<f64>], f_values: &[f64]) -> Result<f64, ScenarioError> {
    if f_values.len() != candidates.len() {
        return Err(ScenarioError::InvalidConfig("one objective value per candidate".into()));
    }
    Ok(InnerProblem::new(ball, candidates)?.value(f_values))
}

/// Candidate support: the known support plus, around every distinct centre
/// atom, `±k ε / steps` offsets (`k = 1..=steps`) along each coordinate axis.
pub fn candidate_support(
    center: &DiscreteDistribution,
    radius: f64,
    known_support: &[Vec<f64>],
    steps: usize,
) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = known_support.to_vec();
    for c in center.points() {
        if !out.iter().any(|y| euclidean(c, y) <= ZERO_COST) {
            out.push(c.clone());
        }
        if radius > 0.0 {
            for q in 0..c.len() {
                for k in 1..=steps {
                    for sign in [-1.0, 1.0] {
                        let mut y = c.clone();
                        y[q] += sign * radius * k as f64 / steps as f64;
                        out.push(y);
                    }
                }
            }
        }
    }
    out
}

/// Multi-start settings for the outer maximization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub starts: usize,
    /// Stop a start once a full sweep improves the value by less than this.
    pub tolerance: f64,
    /// Equally spaced probes per line search before golden-section refinement.
    pub scan_points: usize,
    pub max_sweeps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            starts: 20,
            tolerance: 1e-6,
            scan_points: 8,
            max_sweeps: 100,
        }
    }
}

/// Precomputed data for one sup-inf problem at a window start `T_i`.
#[derive(Debug, Clone)]
pub struct DroProblem {
    profiles: ProfileSet,
    times: Vec<f64>,
    known_path: Vec<[f64; 2]>,
    candidate_paths: Vec<Vec<[f64; 2]>>,
    inner: InnerProblem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroSolution {
    pub profile: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

impl DroProblem {
    /// `known` is the observed UAV's state at the window start; the ball is
    /// over the next UAV's state at the same time.
    pub fn new(cfg: &ScenarioConfig, known: &RedState, ball: &Ball) -> Result<Self, ScenarioError> {
        let uav = cfg.red_uav()?;
        let profiles = cfg.profile_set()?;
        let times = window_grid(cfg.time_grid);
        let support: Vec<Vec<f64>> = cfg.support_states(&uav).iter().map(|s| s.to_vec()).collect();
        let merged = Ball {
            center: ball.center.merge_close_atoms(cfg.merge_tolerance),
            radius: ball.radius,
            p: ball.p,
        };
        let candidates = candidate_support(&merged.center, merged.radius, &support, cfg.candidate_steps);
        let inner = InnerProblem::new(&merged, &candidates)?;
        let candidate_paths = candidates
            .iter()
            .map(|y| {
                let state: RedState = y.as_slice().try_into().expect("5-dimensional candidate");
                uav.path(&state, 0.0, &times, [cfg.side, cfg.orbit_offset])
            })
            .collect();
        Ok(Self {
            profiles,
            known_path: uav.path(known, 0.0, &times, [0.0, cfg.orbit_offset]),
            times,
            candidate_paths,
            inner,
        })
    }

    pub fn profiles(&self) -> &ProfileSet {
        &self.profiles
    }

    pub fn n_candidates(&self) -> usize {
        self.candidate_paths.len()
    }

    /// Objective value at every candidate.
    pub fn objective_values(&self, x: &[f64]) -> Vec<f64> {
        let blue = blue_positions(x, &self.times);
        let known = min_sq_distance(&self.known_path, &blue);
        self.candidate_paths
            .iter()
            .map(|p| known.min(min_sq_distance(p, &blue)))
            .collect()
    }

    /// Inner infimum at profile `x`.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(&self.objective_values(x))
    }

    /// Objective at a single state, with the same grid as the candidates.
    pub fn objective_at(&self, x: &[f64], uav: &RedUav, xi: &RedState, side: f64, offset: f64) -> f64 {
        let blue = blue_positions(x, &self.times);
        let path = uav.path(xi, 0.0, &self.times, [side, offset]);
        min_sq_distance(&self.known_path, &blue).min(min_sq_distance(&path, &blue))
    }
}

struct Counter<'a> {
    problem: &'a DroProblem,
    evaluations: usize,
}

impl Counter<'_> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        self.problem.value(x)
    }

    /// Maximizes along `x + t (e_i - e_j)`; returns the new point and value
    /// when strictly better than `current`.
    fn line_search(&mut self, x: &[f64], i: usize, j: usize, current: f64, scan: usize) -> Option<(Vec<f64>, f64)> {
        let ps = self.problem.profiles;
        let lo = (ps.v_min - x[i]).max(x[j] - ps.v_max);
        let hi = (ps.v_max - x[i]).min(x[j] - ps.v_min);
        if hi - lo <= 1e-12 {
            return None;
        }
        let at = |t: f64| {
            let mut y = x.to_vec();
            y[i] = (y[i] + t).clamp(ps.v_min, ps.v_max);
            y[j] = (y[j] - t).clamp(ps.v_min, ps.v_max);
            y
        };
        let scan = scan.max(2);
        let probes: Vec<f64> = (0..=scan).map(|k| lo + (hi - lo) * k as f64 / scan as f64).collect();
        let values: Vec<f64> = probes.iter().map(|&t| self.eval(&at(t))).collect();
        let k = (0..values.len())
            .max_by(|&a, &b| values[a].total_cmp(&values[b]))
            .unwrap();
        let (mut best_t, mut best_v) = (probes[k], values[k]);
        let (mut a, mut b) = (probes[k.saturating_sub(1)], probes[(k + 1).min(scan)]);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (self.eval(&at(c)), self.eval(&at(d)));
        while b - a > 1e-7 * (hi - lo).max(1e-3) {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = self.eval(&at(c));
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = self.eval(&at(d));
            }
        }
        for (t, v) in [(c, fc), (d, fd)] {
            if v > best_v {
                best_t = t;
                best_v = v;
            }
        }
        (best_v > current).then(|| (at(best_t), best_v))
    }
}

/// Multi-start coordinate ascent over pairwise transfers `e_i - e_j` on the
/// profile set. The first start is the equal split; the rest are random.
/// Returns the best local optimum found.
pub fn solve_dro<R: Rng + ?Sized>(problem: &DroProblem, settings: &SolverSettings, rng: &mut R) -> DroSolution {
    let ps = problem.profiles;
    let mut counter = Counter {
        problem,
        evaluations: 0,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let starts: Vec<Vec<f64>> = (0..settings.starts.max(1))
        .map(|s| if s == 0 { ps.center() } else { ps.random_point(rng) })
        .collect();
    for start in starts {
        let mut x = start;
        let mut v = counter.eval(&x);
        for _ in 0..settings.max_sweeps {
            let before = v;
            for i in 0..ps.n {
                for j in i + 1..ps.n {
                    if let Some((y, w)) = counter.line_search(&x, i, j, v, settings.scan_points) {
                        x = y;
                        v = w;
                    }
                }
            }
            if v - before < settings.tolerance {
                break;
            }
        }
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((x, v));
        }
    }
    let (profile, value) = best.unwrap();
    DroSolution {
        profile,
        value,
        evaluations: counter.evaluations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn cfg() -> ScenarioConfig {
        ScenarioConfig::default()
    }

    #[test]
    fn profile_set_projection() {
        let ps = ProfileSet::new(0.1, 0.6, 4, 1.6).unwrap();
        assert!(ps.contains(&ps.center(), 1e-12));
        let x = ps.project(&[2.0, 0.0, 0.3, -1.0]);
        assert!(ps.contains(&x, 1e-12), "{x:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert!(ps.contains(&ps.random_point(&mut rng), 1e-12));
        }
        assert!(matches!(
            ProfileSet::new(0.5, 0.6, 4, 1.6),
            Err(ScenarioError::EmptyProfileSet)
        ));
    }

    #[test]
    fn blue_path_is_piecewise_linear() {
        let x = [1.0, 2.0, 0.5, 0.5];
        let seg = TAU / 4.0;
        let b = blue_positions(&x, &[0.0, seg / 2.0, seg, 1.5 * seg, TAU]);
        assert!((b[0]).abs() < 1e-15);
        assert!((b[1] - seg / 2.0).abs() < 1e-12);
        assert!((b[2] - seg).abs() < 1e-12);
        assert!((b[3] - 2.0 * seg).abs() < 1e-12);
        assert!((b[4] - 4.0 * seg).abs() < 1e-12);
        let c = cfg();
        let x = c.profile_set().unwrap().center();
        let end = blue_positions(&x, &[TAU])[0];
        assert!((end - c.side).abs() < 1e-12);
    }

    #[test]
    fn objective_zero_when_paths_meet() {
        let mut c = cfg();
        c.orbit_offset = 0.0;
        let uav = c.red_uav().unwrap();
        // a stationary red UAV at the origin (zero-radius orbit) meets the blue UAV at t = 0
        c.orbit_radius = 0.0;
        let still = RedUav::new(0.0, uav.kappa).unwrap().initial_state(0.0);
        let x = c.profile_set().unwrap().center();
        assert_eq!(dro_objective(&x, &still, &still, &c).unwrap(), 0.0);
    }

    #[test]
    fn objective_far_away() {
        let mut c = cfg();
        c.orbit_offset = 100.0;
        let uav = c.red_uav().unwrap();
        let xi = uav.initial_state(1.0);
        let x = c.profile_set().unwrap().center();
        let f = dro_objective(&x, &xi, &xi, &c).unwrap();
        assert!(f >= (100.0 - c.side - 2.0 * c.orbit_radius).powi(2));
        assert!(f <= (100.0 + 2.0 * c.orbit_radius).powi(2));
    }

    #[test]
    fn objective_grid_refinement() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = cfg();
        let ps = c.profile_set().unwrap();
        let uav = c.red_uav().unwrap();
        for _ in 0..20 {
            let x = ps.random_point(&mut rng);
            let known = uav.initial_state(rng.gen_range(0.0..TAU));
            let xi = uav.initial_state(rng.gen_range(0.0..TAU));
            let f200 = dro_objective(&x, &xi, &known, &c).unwrap();
            let mut fine = c.clone();
            fine.time_grid = 400;
            let f400 = dro_objective(&x, &xi, &known, &fine).unwrap();
            assert!((f200 - f400).abs() < 1e-3, "{f200} vs {f400}");
        }
    }

    #[test]
    fn objective_rejects_infeasible_profile() {
        let c = cfg();
        let xi = c.red_uav().unwrap().initial_state(1.0);
        assert!(matches!(
            dro_objective(&[1.0, 1.0, 1.0, 1.0], &xi, &xi, &c),
            Err(ScenarioError::InfeasibleProfile(_))
        ));
    }

    fn line(points: &[f64], weights: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(points.iter().map(|&p| vec![p]).collect(), weights.to_vec()).unwrap()
    }

    #[test]
    fn inner_degenerate_radii() {
        let center = line(&[0.0, 1.0], &[0.4, 0.6]);
        let cands = vec![vec![0.0], vec![1.0], vec![3.0]];
        let f = [2.0, 5.0, -1.0];
        let ball = |r| Ball {
            center: center.clone(),
            radius: r,
            p: 1.0,
        };
        let v0 = solve_inner_inf(&ball(0.0), &cands, &f).unwrap();
        assert!((v0 - (0.4 * 2.0 + 0.6 * 5.0)).abs() < 1e-12);
        let vbig = solve_inner_inf(&ball(10.0), &cands, &f).unwrap();
        assert!((vbig - -1.0).abs() < 1e-12);
    }

    #[test]
    fn inner_matches_brute_force_plans() {
        let center = line(&[0.0, 1.0], &[0.5, 0.5]);
        let cands = vec![vec![0.0], vec![1.0], vec![2.5]];
        let f = [1.0, 3.0, 0.0];
        for eps in [0.05, 0.2, 0.45, 0.9] {
            let lp = solve_inner_inf(
                &Ball {
                    center: center.clone(),
                    radius: eps,
                    p: 1.0,
                },
                &cands,
                &f,
            )
            .unwrap();
            // each row of the plan moves mass (a, b, w - a - b) to the candidates
            let h: f64 = 1e-3;
            let steps = (0.5 / h).round() as usize;
            let row = |k: usize| {
                let mut opts: Vec<(f64, f64)> = Vec::new();
                for ia in 0..=steps {
                    for ib in 0..=steps - ia {
                        let (a, b) = (ia as f64 * h, ib as f64 * h);
                        let m = [a, b, 0.5 - a - b];
                        let c: f64 = (0..3).map(|j| m[j] * (center.points()[k][0] - cands[j][0]).abs()).sum();
                        let v: f64 = (0..3).map(|j| m[j] * f[j]).sum();
                        opts.push((c, v));
                    }
                }
                opts.sort_by(|x, y| x.0.total_cmp(&y.0));
                let mut prefix = Vec::with_capacity(opts.len());
                let mut m = f64::INFINITY;
                for &(c, v) in &opts {
                    m = m.min(v);
                    prefix.push((c, m));
                }
                prefix
            };
            let (r0, r1) = (row(0), row(1));
            let mut brute = f64::INFINITY;
            for &(c0, v0) in &r0 {
                let budget = eps - c0;
                if budget < -1e-12 {
                    break;
                }
                let idx = r1.partition_point(|&(c, _)| c <= budget + 1e-12);
                if idx > 0 {
                    brute = brute.min(v0 + r1[idx - 1].1);
                }
            }
            assert!((lp - brute).abs() < 1e-2, "eps = {eps}: {lp} vs {brute}");
            assert!(lp <= brute + 1e-12);
        }
    }

    #[test]
    fn inner_monotone_and_continuous_in_radius() {
        let center = line(&[0.0, 1.0, 1.5], &[0.2, 0.5, 0.3]);
        let cands: Vec<Vec<f64>> = (-4..=8).map(|k| vec![k as f64 * 0.25]).collect();
        let f: Vec<f64> = cands.iter().map(|y| (3.0 * y[0]).sin() + y[0]).collect();
        let mut prev = f64::INFINITY;
        let mut prev_eps = 0.0;
        for k in 0..=200 {
            let eps = k as f64 * 0.01;
            let v = solve_inner_inf(
                &Ball {
                    center: center.clone(),
                    radius: eps,
                    p: 1.0,
                },
                &cands,
                &f,
            )
            .unwrap();
            assert!(v <= prev + 1e-12);
            if k > 0 {
                // Lipschitz in ε^p with constant (max f - min f) / (min positive cost)
                assert!(prev - v <= (eps - prev_eps) * 2.0 * 4.0 / 0.25 + 1e-12);
            }
            prev = v;
            prev_eps = eps;
        }
    }

    #[test]
    fn inner_requires_center_in_candidates() {
        let center = line(&[0.0, 1.0], &[0.5, 0.5]);
        assert!(matches!(
            solve_inner_inf(
                &Ball {
                    center,
                    radius: 0.1,
                    p: 1.0
                },
                &[vec![0.0]],
                &[1.0]
            ),
            Err(ScenarioError::CenterNotInCandidates(1))
        ));
    }

    #[test]
    fn candidate_star_grid() {
        let center = DiscreteDistribution::dirac(vec![0.0; 5]).unwrap();
        let known = vec![vec![1.0; 5]];
        let c = candidate_support(&center, 0.3, &known, 10);
        assert_eq!(c.len(), 1 + 1 + 5 * 20);
        assert!(c
            .iter()
            .all(|y| euclidean(y, &[0.0; 5]) <= 0.3 + 1e-12 || y == &known[0]));
        assert_eq!(candidate_support(&center, 0.0, &known, 10).len(), 2);
    }

    #[test]
    fn singleton_profile_set() {
        let mut c = cfg();
        c.v_min = Some(c.side / TAU);
        c.v_max = Some(c.side / TAU);
        let uav = c.red_uav().unwrap();
        let k = uav.initial_state(3.5 * PI / 4.0);
        let ball = Ball {
            center: DiscreteDistribution::dirac(k.to_vec()).unwrap(),
            radius: 0.1,
            p: 1.0,
        };
        let prob = DroProblem::new(&c, &k, &ball).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sol = solve_dro(
            &prob,
            &SolverSettings {
                starts: 3,
                ..Default::default()
            },
            &mut rng,
        );
        for v in &sol.profile {
            assert!((v - c.side / TAU).abs() < 1e-12);
        }
        assert!((sol.value - prob.value(&sol.profile)).abs() < 1e-15);
    }

    #[test]
    fn farther_orbits_raise_the_optimum() {
        let uav = cfg().red_uav().unwrap();
        let k = uav.initial_state(2.8 * PI / 4.0);
        let ball = Ball {
            center: DiscreteDistribution::dirac(k.to_vec()).unwrap(),
            radius: 0.17,
            p: 1.0,
        };
        let settings = SolverSettings {
            starts: 4,
            ..Default::default()
        };
        let solve = |offset: f64| {
            let mut c = cfg();
            c.orbit_offset = offset;
            let prob = DroProblem::new(&c, &k, &ball).unwrap();
            solve_dro(&prob, &settings, &mut ChaCha8Rng::seed_from_u64(5)).value
        };
        assert!(solve(6.0) > solve(3.0));
    }

    #[test]
    fn solver_never_returns_worse_than_center() {
        let c = cfg();
        let uav = c.red_uav().unwrap();
        let known = uav.initial_state(3.5 * PI / 4.0);
        let center = DiscreteDistribution::empirical(vec![
            uav.initial_state(2.8 * PI / 4.0).to_vec(),
            uav.initial_state(4.6 * PI / 4.0).to_vec(),
        ])
        .unwrap();
        let prob = DroProblem::new(
            &c,
            &known,
            &Ball {
                center,
                radius: 0.17,
                p: 1.0,
            },
        )
        .unwrap();
        let sol = solve_dro(
            &prob,
            &SolverSettings {
                starts: 2,
                ..Default::default()
            },
            &mut ChaCha8Rng::seed_from_u64(2),
        );
        assert!(sol.value >= prob.value(&prob.profiles().center()));
        assert!(prob.profiles().contains(&sol.profile, 1e-9));
    }
}
