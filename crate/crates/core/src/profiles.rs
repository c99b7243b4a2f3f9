//! Background shear profiles, wave parameters and the horizontal lattice.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::spline::CubicSpline;

/// Number of scan nodes used for extrema and zero detection.
pub const SCAN_NODES: usize = 1024;

/// `max |U'|` below this (relative to `max |U|`) counts as a uniform flow.
pub const CONSTANT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("sampled profile needs at least 4 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("sample abscissae must be strictly increasing from -d to 0")]
    BadSampleNodes,
    #[error("x3 and U sample arrays differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("polynomial profile needs at least one coefficient")]
    EmptyPolynomial,
    #[error("validation resolution must be at least 16, got {0}")]
    ResolutionTooLow(usize),
    #[error("profile has a zero (stagnation point) near x3 = {0}")]
    Stagnant(f64),
    #[error("non-finite value in profile definition")]
    NonFinite,
    #[error("{0} must be positive, got {1}")]
    NonPositiveParameter(&'static str, f64),
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    /// Coefficients of `U(x3) = c0 + c1 x3 + c2 x3^2 + ...`.
    Poly(Vec<f64>),
    Samples(CubicSpline),
}

/// Named reference profiles on unit depth: uniform, linear, quadratic and a tabulated exponential.
pub fn catalog() -> Vec<(&'static str, ShearProfile)> {
    let xs: Vec<f64> = (0..=32).map(|i| -1.0 + i as f64 / 32.0).collect();
    let us: Vec<f64> = xs.iter().map(|x| 1.0 + 0.5 * (2.0 * x).exp()).collect();
    vec![
        ("uniform", ShearProfile::constant(1.0, 1.0).expect("valid")),
        ("linear", ShearProfile::polynomial(vec![2.0, 1.0], 1.0).expect("valid")),
        ("quadratic", ShearProfile::polynomial(vec![1.5, 0.5, 0.25], 1.0).expect("valid")),
        ("sampled-exp", ShearProfile::sampled(xs, us).expect("valid")),
    ]
}

/// Background velocity `U(x3)` on `[-d, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShearProfile {
    repr: Repr,
    depth: f64,
}

impl ShearProfile {
    pub fn polynomial(coeffs: Vec<f64>, depth: f64) -> Result<Self, ProfileError> {
        if !(depth > 0.0) {
            return Err(ProfileError::NonPositiveDepth(depth));
        }
        if coeffs.is_empty() {
            return Err(ProfileError::EmptyPolynomial);
        }
        if coeffs.iter().any(|c| !c.is_finite()) || !depth.is_finite() {
            return Err(ProfileError::NonFinite);
        }
        Ok(Self {
            repr: Repr::Poly(coeffs),
            depth,
        })
    }

    pub fn constant(value: f64, depth: f64) -> Result<Self, ProfileError> {
        Self::polynomial(vec![value], depth)
    }

    /// Tabulated profile; the depth is `-x3[0]` and the last node must be the surface.
    pub fn sampled(x3: Vec<f64>, u: Vec<f64>) -> Result<Self, ProfileError> {
        if x3.len() != u.len() {
            return Err(ProfileError::LengthMismatch(x3.len(), u.len()));
        }
        if x3.len() < 4 {
            return Err(ProfileError::TooFewNodes(x3.len()));
        }
        if x3.iter().chain(u.iter()).any(|v| !v.is_finite()) {
            return Err(ProfileError::NonFinite);
        }
        if x3.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ProfileError::BadSampleNodes);
        }
        let depth = -x3[0];
        if !(depth > 0.0) {
            return Err(ProfileError::NonPositiveDepth(depth));
        }
        if x3[x3.len() - 1].abs() > 1e-12 * depth {
            return Err(ProfileError::BadSampleNodes);
        }
        Ok(Self {
            repr: Repr::Samples(CubicSpline::natural(x3, u)),
            depth,
        })
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Poly(c) => Some(c),
            Repr::Samples(_) => None,
        }
    }

    pub fn samples(&self) -> Option<(&[f64], &[f64])> {
        match &self.repr {
            Repr::Poly(_) => None,
            Repr::Samples(s) => Some((s.nodes(), s.values())),
        }
    }

    pub fn value(&self, x3: f64) -> f64 {
        match &self.repr {
            Repr::Poly(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * x3 + ci),
            Repr::Samples(s) => s.eval(x3),
        }
    }

    pub fn derivative(&self, x3: f64) -> f64 {
        match &self.repr {
            Repr::Poly(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (i, &ci)| acc * x3 + i as f64 * ci),
            Repr::Samples(s) => s.derivative(x3),
        }
    }

    /// `U'(x3) / U(x3)`.
    pub fn log_derivative(&self, x3: f64) -> f64 {
        self.derivative(x3) / self.value(x3)
    }

    pub fn surface_value(&self) -> f64 {
        self.value(0.0)
    }

    /// Returns `c U`.
    pub fn scaled(&self, c: f64) -> Self {
        let repr = match &self.repr {
            Repr::Poly(coeffs) => Repr::Poly(coeffs.iter().map(|v| c * v).collect()),
            Repr::Samples(s) => Repr::Samples(CubicSpline::natural(
                s.nodes().to_vec(),
                s.values().iter().map(|v| c * v).collect(),
            )),
        };
        Self {
            repr,
            depth: self.depth,
        }
    }

    /// Stable hash of the profile definition, used as a memo key.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.depth.to_bits().hash(&mut h);
        match &self.repr {
            Repr::Poly(c) => {
                0u8.hash(&mut h);
                c.iter().for_each(|v| v.to_bits().hash(&mut h));
            }
            Repr::Samples(s) => {
                1u8.hash(&mut h);
                s.nodes().iter().for_each(|v| v.to_bits().hash(&mut h));
                s.values().iter().for_each(|v| v.to_bits().hash(&mut h));
            }
        }
        h.finish()
    }

    fn scan_nodes(&self, n: usize) -> impl Iterator<Item = f64> + '_ {
        let d = self.depth;
        (0..n).map(move |i| -d + d * i as f64 / (n - 1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub zero_free: bool,
    /// Location of a detected zero, if any.
    pub zero_at: Option<f64>,
    pub min_abs: f64,
    pub max_abs: f64,
    pub max_abs_derivative: f64,
    pub is_constant: bool,
}

impl ValidationReport {
    pub fn require_zero_free(&self) -> Result<(), ProfileError> {
        match self.zero_at {
            Some(at) => Err(ProfileError::Stagnant(at)),
            None => Ok(()),
        }
    }
}

/// Minimizes `f` on `[a, b]` by golden-section search.
pub(crate) fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc < fd { (c, fc) } else { (d, fd) };
    for x in [a, b] {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

fn bisect_root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a) < 1e-15 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Sign-constancy scan plus refinement around the minimum of `|U|`.
pub fn validate_profile(profile: &ShearProfile, resolution: usize) -> Result<ValidationReport, ProfileError> {
    if resolution < 16 {
        return Err(ProfileError::ResolutionTooLow(resolution));
    }
    let xs: Vec<f64> = profile.scan_nodes(resolution).collect();
    let us: Vec<f64> = xs.iter().map(|&x| profile.value(x)).collect();
    let max_abs = us.iter().fold(0.0f64, |m, u| m.max(u.abs()));
    let max_abs_derivative = xs
        .iter()
        .fold(0.0f64, |m, &x| m.max(profile.derivative(x).abs()));

    let mut zero_at = xs.iter().zip(&us).find(|(_, u)| **u == 0.0).map(|(x, _)| *x);
    if zero_at.is_none() {
        if let Some(i) = us.windows(2).position(|w| (w[0] > 0.0) != (w[1] > 0.0)) {
            zero_at = Some(bisect_root(|x| profile.value(x), xs[i], xs[i + 1]));
        }
    }

    let (imin, _) = us
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, u)| if u.abs() < bv { (i, u.abs()) } else { (bi, bv) });
    let lo = xs[imin.saturating_sub(1)];
    let hi = xs[(imin + 1).min(xs.len() - 1)];
    let (xmin, refined) = golden_min(|x| profile.value(x).abs(), lo, hi);
    let min_abs = refined.min(us[imin].abs());
    if zero_at.is_none() && min_abs <= 1e-14 * max_abs.max(f64::MIN_POSITIVE) {
        // tangential zero missed by the sign scan
        zero_at = Some(xmin);
    }
    if zero_at.is_some() {
        debug_assert!(min_abs.is_finite());
    }

    Ok(ValidationReport {
        zero_free: zero_at.is_none(),
        zero_at,
        min_abs: if zero_at.is_some() { 0.0 } else { min_abs },
        max_abs,
        max_abs_derivative,
        is_constant: max_abs_derivative <= CONSTANT_TOL * max_abs.max(1.0),
    })
}

/// Infimum and supremum of `U'/U` over `[-d, 0]`.
pub fn logderiv_extrema(profile: &ShearProfile) -> (f64, f64) {
    let xs: Vec<f64> = profile.scan_nodes(SCAN_NODES).collect();
    let ms: Vec<f64> = xs.iter().map(|&x| profile.log_derivative(x)).collect();
    let n = xs.len();
    let bracket = |i: usize| (xs[i.saturating_sub(1)], xs[(i + 1).min(n - 1)]);

    let imin = (0..n).min_by(|&a, &b| ms[a].total_cmp(&ms[b])).unwrap_or(0);
    let imax = (0..n).max_by(|&a, &b| ms[a].total_cmp(&ms[b])).unwrap_or(0);

    let (a, b) = bracket(imin);
    let (_, lo) = golden_min(|x| profile.log_derivative(x), a, b);
    let (a, b) = bracket(imax);
    let (_, neg_hi) = golden_min(|x| -profile.log_derivative(x), a, b);
    (lo.min(ms[imin]), (-neg_hi).max(ms[imax]))
}

/// Restoring coefficient `D(|k|^2)` in the linearized dynamic condition `wp_k(0) = D eta_k`.
#[derive(Clone)]
pub enum DynamicCondition {
    /// `D = g + sigma |k|^2`.
    CapillaryGravity,
    /// `D = c0 + c1 |k|^2 + c2 |k|^4 + ...`, e.g. hydroelastic plates.
    Polynomial(Vec<f64>),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for DynamicCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::CapillaryGravity => write!(f, "CapillaryGravity"),
            Self::Polynomial(c) => f.debug_tuple("Polynomial").field(c).finish(),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WaveParams {
    pub g: f64,
    pub sigma: f64,
    pub condition: DynamicCondition,
}

impl WaveParams {
    pub fn capillary_gravity(g: f64, sigma: f64) -> Result<Self, ProfileError> {
        if !(g > 0.0) {
            return Err(ProfileError::NonPositiveParameter("g", g));
        }
        if !(sigma > 0.0) {
            return Err(ProfileError::NonPositiveParameter("sigma", sigma));
        }
        Ok(Self {
            g,
            sigma,
            condition: DynamicCondition::CapillaryGravity,
        })
    }

    /// Generalized condition; `g` is still used for the mean mode and `sigma` is unused.
    pub fn with_condition(g: f64, condition: DynamicCondition) -> Result<Self, ProfileError> {
        if !(g > 0.0) {
            return Err(ProfileError::NonPositiveParameter("g", g));
        }
        Ok(Self {
            g,
            sigma: 0.0,
            condition,
        })
    }

    pub fn restoring(&self, k_sq: f64) -> f64 {
        match &self.condition {
            DynamicCondition::CapillaryGravity => self.g + self.sigma * k_sq,
            DynamicCondition::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * k_sq + ci),
            DynamicCondition::Custom(d) => d(k_sq),
        }
    }

    pub fn is_capillary_gravity(&self) -> bool {
        matches!(self.condition, DynamicCondition::CapillaryGravity)
    }
}

/// Rectangular lattice `lambda1 Z x lambda2 Z`; the dual spacings are derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatticeSpec {
    lambda1: f64,
    lambda2: f64,
}

impl LatticeSpec {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self, ProfileError> {
        if !(lambda1 > 0.0 && lambda1.is_finite()) {
            return Err(ProfileError::NonPositiveParameter("lambda1", lambda1));
        }
        if !(lambda2 > 0.0 && lambda2.is_finite()) {
            return Err(ProfileError::NonPositiveParameter("lambda2", lambda2));
        }
        Ok(Self { lambda1, lambda2 })
    }

    /// Lattice whose dual spacings are the given wavenumbers.
    pub fn from_wavenumbers(kappa1: f64, kappa2: f64) -> Result<Self, ProfileError> {
        Self::new(2.0 * PI / kappa1, 2.0 * PI / kappa2)
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn kappa1(&self) -> f64 {
        2.0 * PI / self.lambda1
    }

    pub fn kappa2(&self) -> f64 {
        2.0 * PI / self.lambda2
    }

    /// Dual-lattice vector `(i kappa1, j kappa2)`.
    pub fn wavevector(&self, i: i64, j: i64) -> [f64; 2] {
        [i as f64 * self.kappa1(), j as f64 * self.kappa2()]
    }
}
