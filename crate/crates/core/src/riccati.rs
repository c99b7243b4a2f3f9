//! Logarithmic-derivative pressure equation `q' = 2 (U'/U) q + |k|^2 - q^2`, `q(-d) = 0`,
//! its explicit tanh envelope, and the vertical pressure profile built from it.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::ode::{hermite_eval, DormandPrince, OdeError, StepRecord};
use crate::profiles::{logderiv_extrema, ShearProfile};
use crate::vertical::VerticalGrid;

pub const DEFAULT_TOL: f64 = 1e-10;

/// Absolute floor for envelope checks where `q` and the bounds both vanish.
pub const ENVELOPE_FLOOR: f64 = 1e-12;

/// Default number of Chebyshev output nodes.
pub const DEFAULT_NODES: usize = 65;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiccatiError {
    #[error("wavevector must be nonzero")]
    ZeroWavevector,
    #[error("wavevector has k1 = 0")]
    ZeroFirstComponent,
    #[error("integration failed: {0}")]
    IntegrationFailure(#[from] OdeError),
    #[error("solution left the tanh envelope at x3 = {x3}: q = {q}, bounds [{lower}, {upper}]")]
    BoundViolation { x3: f64, q: f64, lower: f64, upper: f64 },
    #[error("output nodes must be increasing and lie in [-d, 0]")]
    BadNodes,
    #[error("tolerance must be positive")]
    BadTolerance,
}

/// Sampled solution `q_k` together with `int_{-d}^{x3} q_k`.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    k: [f64; 2],
    depth: f64,
    nodes: Vec<f64>,
    q: Vec<f64>,
    integral: Vec<f64>,
    q_surface: f64,
    integral_surface: f64,
    q_surface_error: f64,
    steps: Vec<StepRecord<2>>,
}

impl RiccatiSolution {
    pub fn k(&self) -> [f64; 2] {
        self.k
    }

    pub fn k_norm(&self) -> f64 {
        self.k[0].hypot(self.k[1])
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// `int_{-d}^{x3} q` at each node.
    pub fn integral(&self) -> &[f64] {
        &self.integral
    }

    pub fn q_surface(&self) -> f64 {
        self.q_surface
    }

    /// Accumulated local error estimate of the integrator.
    pub fn q_surface_error(&self) -> f64 {
        self.q_surface_error
    }

    /// Dense evaluation between output nodes.
    pub fn eval_q(&self, x3: f64) -> f64 {
        hermite_eval(&self.steps, x3, 0)
    }

    pub fn eval_integral(&self, x3: f64) -> f64 {
        hermite_eval(&self.steps, x3, 1)
    }
}

/// Closed-form solution of `l' = 2 m l + |k|^2 - l^2`, `l(-d) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TanhBound {
    pub k_norm: f64,
    pub m: f64,
    pub depth: f64,
}

impl TanhBound {
    pub fn eval(&self, x3: f64) -> f64 {
        let s = (self.m * self.m + self.k_norm * self.k_norm).sqrt();
        let t = ((x3 + self.depth) * s).tanh();
        self.k_norm * self.k_norm * t / (s - self.m * t)
    }
}

/// With `m = inf U'/U` the result bounds `q` from below, with `m = sup U'/U` from above.
pub fn riccati_bounds(k_norm: f64, m: f64, depth: f64) -> TanhBound {
    TanhBound { k_norm, m, depth }
}

/// Solves on the default Chebyshev layout.
pub fn solve_riccati(profile: &ShearProfile, k: [f64; 2], tol: f64) -> Result<RiccatiSolution, RiccatiError> {
    let grid = VerticalGrid::chebyshev(DEFAULT_NODES, profile.depth());
    solve_riccati_on(profile, k, tol, grid.nodes())
}

/// Solves and reports `q` at the given increasing nodes in `[-d, 0]`.
pub fn solve_riccati_on(
    profile: &ShearProfile,
    k: [f64; 2],
    tol: f64,
    nodes: &[f64],
) -> Result<RiccatiSolution, RiccatiError> {
    let extrema = logderiv_extrema(profile);
    solve_with_extrema(profile, k, tol, nodes, extrema)
}

fn solve_with_extrema(
    profile: &ShearProfile,
    k: [f64; 2],
    tol: f64,
    nodes: &[f64],
    (m_inf, m_sup): (f64, f64),
) -> Result<RiccatiSolution, RiccatiError> {
    if !(tol > 0.0) {
        return Err(RiccatiError::BadTolerance);
    }
    let d = profile.depth();
    let k_sq = k[0] * k[0] + k[1] * k[1];
    if k_sq == 0.0 {
        return Err(RiccatiError::ZeroWavevector);
    }
    let slack_d = 1e-12 * d;
    if nodes.is_empty()
        || nodes.windows(2).any(|w| w[1] <= w[0])
        || nodes[0] < -d - slack_d
        || nodes[nodes.len() - 1] > slack_d
    {
        return Err(RiccatiError::BadNodes);
    }

    // integrate to every interior node and finally to the surface
    let mut targets: Vec<f64> = nodes.iter().copied().filter(|&x| x > -d && x < 0.0).collect();
    targets.push(0.0);

    let rhs = |x: f64, y: &[f64; 2]| {
        let q = y[0];
        [2.0 * profile.log_derivative(x) * q + k_sq - q * q, q]
    };
    let k_norm = k_sq.sqrt();
    let solver = DormandPrince::new(tol, 1e-3 * tol * k_norm.min(1.0));
    let traj = solver.integrate(rhs, -d, [0.0, 0.0], &targets)?;

    let mut q = Vec::with_capacity(nodes.len());
    let mut integral = Vec::with_capacity(nodes.len());
    let mut it = traj.outputs.iter();
    for &x in nodes {
        if x <= -d {
            q.push(0.0);
            integral.push(0.0);
        } else {
            let y = it.next().expect("one output per interior node");
            q.push(y[0]);
            integral.push(y[1]);
        }
    }
    let surface = traj.outputs.last().expect("surface output");

    let lower = riccati_bounds(k_norm, m_inf, d);
    let upper = riccati_bounds(k_norm, m_sup, d);
    for (&x, &qx) in nodes.iter().zip(&q) {
        let (lo, hi) = (lower.eval(x), upper.eval(x));
        if qx < lo - 10.0 * tol * lo.abs() - ENVELOPE_FLOOR || qx > hi + 10.0 * tol * hi.abs() + ENVELOPE_FLOOR {
            return Err(RiccatiError::BoundViolation {
                x3: x,
                q: qx,
                lower: lo,
                upper: hi,
            });
        }
    }

    Ok(RiccatiSolution {
        k,
        depth: d,
        nodes: nodes.to_vec(),
        q,
        integral,
        q_surface: surface[0],
        integral_surface: surface[1],
        q_surface_error: traj.error_estimate,
        steps: traj.steps,
    })
}

/// `Q_k(x3) = k1^2 U(0)^2 / q_k(0) * exp(int_0^{x3} q_k)`.
#[derive(Debug, Clone)]
pub struct PressureProfile {
    k: [f64; 2],
    prefactor: f64,
    nodes: Vec<f64>,
    values: Vec<f64>,
    solution: Arc<RiccatiSolution>,
}

impl PressureProfile {
    pub fn k(&self) -> [f64; 2] {
        self.k
    }

    /// `Q(0) = k1^2 U(0)^2 / q(0)`.
    pub fn surface_value(&self) -> f64 {
        self.prefactor
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x3: f64) -> f64 {
        let s = &self.solution;
        self.prefactor * (s.eval_integral(x3) - s.integral_surface).exp()
    }
}

pub fn pressure_profile(sol: Arc<RiccatiSolution>, u0: f64) -> Result<PressureProfile, RiccatiError> {
    let k = sol.k;
    if k[0] == 0.0 {
        return Err(RiccatiError::ZeroFirstComponent);
    }
    let prefactor = k[0] * k[0] * u0 * u0 / sol.q_surface;
    let values = sol
        .integral
        .iter()
        .map(|&i| prefactor * (i - sol.integral_surface).exp())
        .collect();
    Ok(PressureProfile {
        k,
        prefactor,
        nodes: sol.nodes.clone(),
        values,
        solution: sol,
    })
}

type CacheKey = (u64, u64, u64, u64, u64);

/// Riccati solves memoized by `(profile, |k|, tolerance, nodes)`.
///
/// `q` depends on the wavevector only through `|k|^2`, so sign flips and
/// permutations with equal norm share one entry.
#[derive(Debug)]
pub struct RiccatiSolver {
    tol: f64,
    cache: Mutex<HashMap<CacheKey, Arc<RiccatiSolution>>>,
    extrema: Mutex<HashMap<u64, (f64, f64)>>,
}

impl Default for RiccatiSolver {
    fn default() -> Self {
        Self::new(DEFAULT_TOL)
    }
}

impl RiccatiSolver {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            cache: Mutex::new(HashMap::new()),
            extrema: Mutex::new(HashMap::new()),
        }
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.lock().map(|c| c.len()).unwrap_or(0)
    }

    fn extrema_for(&self, profile: &ShearProfile) -> (f64, f64) {
        let key = profile.fingerprint();
        if let Some(e) = self.extrema.lock().ok().and_then(|m| m.get(&key).copied()) {
            return e;
        }
        let e = logderiv_extrema(profile);
        if let Ok(mut m) = self.extrema.lock() {
            m.insert(key, e);
        }
        e
    }

    pub fn solve(&self, profile: &ShearProfile, k: [f64; 2], nodes: &[f64]) -> Result<Arc<RiccatiSolution>, RiccatiError> {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        nodes.iter().for_each(|v| v.to_bits().hash(&mut h));
        let k_sq = k[0] * k[0] + k[1] * k[1];
        let key = (
            profile.fingerprint(),
            k_sq.to_bits(),
            self.tol.to_bits(),
            h.finish(),
            nodes.len() as u64,
        );
        if let Some(hit) = self.cache.lock().ok().and_then(|c| c.get(&key).cloned()) {
            if hit.k == k {
                return Ok(hit);
            }
            // same |k|: reuse the data under the requested wavevector
            let mut relabeled = (*hit).clone();
            relabeled.k = k;
            return Ok(Arc::new(relabeled));
        }
        let sol = Arc::new(solve_with_extrema(profile, k, self.tol, nodes, self.extrema_for(profile))?);
        if let Ok(mut c) = self.cache.lock() {
            c.insert(key, sol.clone());
        }
        Ok(sol)
    }

    /// Solve on the default Chebyshev layout.
    pub fn solve_default(&self, profile: &ShearProfile, k: [f64; 2]) -> Result<Arc<RiccatiSolution>, RiccatiError> {
        let grid = VerticalGrid::chebyshev(DEFAULT_NODES, profile.depth());
        self.solve(profile, k, grid.nodes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform() -> ShearProfile {
        ShearProfile::constant(1.0, 1.0).unwrap()
    }

    #[test]
    fn uniform_flow_matches_tanh() {
        let sol = solve_riccati(&uniform(), [1.0, 0.0], 1e-10).unwrap();
        for (&x, &q) in sol.nodes().iter().zip(sol.q()) {
            assert_abs_diff_eq!(q, (x + 1.0).tanh(), epsilon = 1e-9);
        }
        assert_abs_diff_eq!(sol.q_surface(), 0.761_594_155_955_764_9, epsilon = 1e-9);
    }

    #[test]
    fn initial_value_is_zero() {
        let p = ShearProfile::polynomial(vec![2.0, 1.0, -0.3], 1.0).unwrap();
        let sol = solve_riccati(&p, [1.3, 0.4], 1e-10).unwrap();
        assert_eq!(sol.nodes()[0], -1.0);
        assert_eq!(sol.q()[0], 0.0);
        assert!(sol.q()[1..].iter().all(|&q| q > 0.0));
    }

    #[test]
    fn bound_closed_forms() {
        let b = riccati_bounds(1.0, 0.0, 1.0);
        assert_abs_diff_eq!(b.eval(0.0), 1f64.tanh(), epsilon = 1e-15);
        for kn in [0.3, 2.0, 7.5] {
            let b = riccati_bounds(kn, 0.0, 1.3);
            assert_abs_diff_eq!(b.eval(0.0), kn * (1.3 * kn).tanh(), epsilon = 1e-13);
        }
        for m in [-0.7, 0.4] {
            let b = riccati_bounds(1e4, m, 1.0);
            assert_abs_diff_eq!(b.eval(0.0) / 1e4, 1.0, epsilon = 1e-3);
        }
    }

    #[test]
    fn bound_solves_its_own_ode() {
        let b = riccati_bounds(1.7, 0.35, 1.0);
        let h = 1e-6;
        for x in [-0.8, -0.4, -0.1] {
            let dl = (b.eval(x + h) - b.eval(x - h)) / (2.0 * h);
            let l = b.eval(x);
            assert_abs_diff_eq!(dl, 2.0 * 0.35 * l + 1.7 * 1.7 - l * l, epsilon = 1e-7);
        }
    }

    #[test]
    fn pressure_profile_uniform_flow() {
        let sol = Arc::new(solve_riccati(&uniform(), [1.0, 0.0], 1e-10).unwrap());
        let qp = pressure_profile(sol.clone(), 1.0).unwrap();
        assert_abs_diff_eq!(qp.surface_value(), 1.0 / 1f64.tanh(), epsilon = 1e-9);
        // Q = cosh(x + 1) / sinh(1)
        for (&x, &v) in qp.nodes().iter().zip(qp.values()) {
            assert_abs_diff_eq!(v, (x + 1.0).cosh() / 1f64.sinh(), epsilon = 1e-9);
        }
        assert!(qp.values().windows(2).all(|w| w[1] > w[0] && w[0] > 0.0));
        assert_abs_diff_eq!(qp.eval(-0.45), 0.55f64.cosh() / 1f64.sinh(), epsilon = 1e-8);
    }

    #[test]
    fn pressure_profile_rejects_zero_k1() {
        let sol = Arc::new(solve_riccati(&uniform(), [0.0, 1.0], 1e-10).unwrap());
        assert_eq!(pressure_profile(sol, 1.0).unwrap_err(), RiccatiError::ZeroFirstComponent);
    }

    #[test]
    fn sign_flips_give_identical_profiles() {
        let p = ShearProfile::polynomial(vec![2.0, 1.0], 1.0).unwrap();
        let a = Arc::new(solve_riccati(&p, [1.0, 0.5], 1e-10).unwrap());
        let b = Arc::new(solve_riccati(&p, [-1.0, -0.5], 1e-10).unwrap());
        assert_eq!(a.q(), b.q());
        let qa = pressure_profile(a, 2.0).unwrap();
        let qb = pressure_profile(b, 2.0).unwrap();
        assert_eq!(qa.values(), qb.values());
    }

    #[test]
    fn zero_wavevector_rejected() {
        assert_eq!(
            solve_riccati(&uniform(), [0.0, 0.0], 1e-10).unwrap_err(),
            RiccatiError::ZeroWavevector
        );
    }

    #[test]
    fn solver_cache_reuses_norm() {
        let p = ShearProfile::polynomial(vec![2.0, 1.0], 1.0).unwrap();
        let s = RiccatiSolver::new(1e-10);
        let a = s.solve_default(&p, [1.0, 2.0]).unwrap();
        let b = s.solve_default(&p, [-1.0, 2.0]).unwrap();
        assert_eq!(s.cached_entries(), 1);
        assert_eq!(a.q(), b.q());
        assert_eq!(b.k(), [-1.0, 2.0]);
    }
}
