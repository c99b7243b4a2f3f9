//! Dispersion relation `q_k(0) = k1^2 U(0)^2 / D(|k|^2)` over the dual lattice.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::profiles::{logderiv_extrema, DynamicCondition, LatticeSpec, ShearProfile, WaveParams};
use crate::riccati::{pressure_profile, riccati_bounds, PressureProfile, RiccatiError, RiccatiSolution, RiccatiSolver};

pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-8;

/// Resolution of the closed-form cutoff scan.
const CUTOFF_SCAN: usize = 8192;
/// Largest radius probed when the restoring coefficient has no usable bound.
const CUTOFF_SEARCH_LIMIT: f64 = 1e5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispersionError {
    #[error("wavevector has k1 = 0")]
    ZeroFirstComponent,
    #[error("restoring coefficient D(|k|^2) = {0} is not positive")]
    NonPositiveRestoring(f64),
    #[error("calibrated surface tension {0} is not positive; lower g or speed up the flow")]
    NotCapillary(f64),
    #[error("no finite cutoff radius found below {0}")]
    NoCutoff(f64),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
}

fn check_k1(k: [f64; 2]) -> Result<(), DispersionError> {
    if k[0] == 0.0 {
        Err(DispersionError::ZeroFirstComponent)
    } else {
        Ok(())
    }
}

/// Right-hand side `k1^2 U(0)^2 / D(|k|^2)`.
pub fn dispersion_rhs(profile: &ShearProfile, params: &WaveParams, k: [f64; 2]) -> Result<f64, DispersionError> {
    let k_sq = k[0] * k[0] + k[1] * k[1];
    let dk = params.restoring(k_sq);
    if !(dk > 0.0) {
        return Err(DispersionError::NonPositiveRestoring(dk));
    }
    let u0 = profile.surface_value();
    Ok(k[0] * k[0] * u0 * u0 / dk)
}

/// `q_k(0) - k1^2 U(0)^2 / D(|k|^2)`; positive means `q` is too large for resonance.
pub fn dispersion_residual(
    profile: &ShearProfile,
    params: &WaveParams,
    k: [f64; 2],
    solver: &RiccatiSolver,
) -> Result<f64, DispersionError> {
    check_k1(k)?;
    let rhs = dispersion_rhs(profile, params, k)?;
    let sol = solver.solve_default(profile, k)?;
    Ok(sol.q_surface() - rhs)
}

/// Upper bound on `r^2 U(0)^2 / D(r^2)` over all `r`, when one is available in closed form.
fn rhs_supremum(profile: &ShearProfile, params: &WaveParams) -> Option<f64> {
    let u0_sq = profile.surface_value().powi(2);
    match &params.condition {
        DynamicCondition::CapillaryGravity => Some(u0_sq / params.sigma),
        DynamicCondition::Polynomial(c) if c.len() >= 2 && c.iter().all(|&v| v >= 0.0) && c[1] > 0.0 => {
            Some(u0_sq / c[1])
        }
        _ => None,
    }
}

/// Radius beyond which the tanh lower bound on `q(0)` exceeds the dispersion right-hand side.
///
/// The bound `k1^2 <= |k|^2` makes the result conservative. Returns 0 when no
/// wavevector of any length can be resonant.
pub fn kernel_cutoff_radius(
    profile: &ShearProfile,
    params: &WaveParams,
    lattice: &LatticeSpec,
) -> Result<f64, DispersionError> {
    let d = profile.depth();
    let (m_inf, _) = logderiv_extrema(profile);
    let u0_sq = profile.surface_value().powi(2);
    let gap = |r: f64| {
        let lower = riccati_bounds(r, m_inf, d).eval(0.0);
        let rhs = r * r * u0_sq / params.restoring(r * r);
        (lower - rhs, 1e-9 * (lower.abs() + rhs.abs()))
    };

    let r_max = match rhs_supremum(profile, params) {
        Some(sup) => {
            // (sqrt(m^2 + r^2) - |m|) tanh(d r) is increasing and bounds l(0) from below
            let floor = |r: f64| ((m_inf * m_inf + r * r).sqrt() - m_inf.abs()) * (d * r).tanh();
            let mut hi = 1.0;
            while floor(hi) <= sup {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if floor(mid) > sup {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        }
        None => {
            let step = lattice.kappa1().min(lattice.kappa2());
            let mut hi = 8.0 * step;
            let mut clean_blocks = 0;
            loop {
                let positive = (0..1024).all(|i| {
                    let r = 0.5 * hi * (1.0 + i as f64 / 1023.0);
                    let (g, _) = gap(r);
                    g > 0.0
                });
                clean_blocks = if positive { clean_blocks + 1 } else { 0 };
                if clean_blocks >= 2 {
                    break hi;
                }
                hi *= 2.0;
                if hi > CUTOFF_SEARCH_LIMIT {
                    return Err(DispersionError::NoCutoff(CUTOFF_SEARCH_LIMIT));
                }
            }
        }
    };

    let h = r_max / CUTOFF_SCAN as f64;
    let last_fail = (1..=CUTOFF_SCAN).rev().map(|i| i as f64 * h).find(|&r| {
        let (g, margin) = gap(r);
        g <= margin
    });
    Ok(match last_fail {
        None => 0.0,
        Some(r) => (r + h).min(r_max),
    })
}

#[derive(Debug, Clone)]
pub struct ResonantMode {
    /// Lattice indices `(i, j)` with `k = (i kappa1, j kappa2)`.
    pub index: [i64; 2],
    pub k: [f64; 2],
    pub q_surface: f64,
    pub residual: f64,
    pub solution: Arc<RiccatiSolution>,
    pub pressure: PressureProfile,
}

/// Resonant wavevectors `N(U)`, closed under sign flips of either component.
#[derive(Debug, Clone)]
pub struct ResonantSet {
    pub modes: Vec<ResonantMode>,
    pub cutoff_radius: f64,
    pub membership_tol: f64,
}

impl ResonantSet {
    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn contains(&self, index: [i64; 2]) -> bool {
        self.get(index).is_some()
    }

    pub fn get(&self, index: [i64; 2]) -> Option<&ResonantMode> {
        self.modes.iter().find(|m| m.index == index)
    }

    /// Representatives with `k1 > 0`, `k2 > 0`.
    pub fn positive_quadrant(&self) -> impl Iterator<Item = &ResonantMode> {
        self.modes.iter().filter(|m| m.index[0] > 0 && m.index[1] > 0)
    }
}

/// Lattice indices with `k1 != 0` and `0 < |k| <= radius`, in the closed positive quadrant `i > 0, j >= 0`.
fn quadrant_indices(lattice: &LatticeSpec, radius: f64) -> Vec<[i64; 2]> {
    let (k1, k2) = (lattice.kappa1(), lattice.kappa2());
    let imax = (radius / k1).floor() as i64;
    let jmax = (radius / k2).floor() as i64;
    let r_sq = radius * radius * (1.0 + 1e-12);
    let mut out = Vec::new();
    for i in 1..=imax {
        for j in 0..=jmax {
            let k = lattice.wavevector(i, j);
            if k[0] * k[0] + k[1] * k[1] <= r_sq {
                out.push([i, j]);
            }
        }
    }
    out
}

/// All lattice wavevectors within the cutoff that satisfy the dispersion relation to `membership_tol`.
///
/// `nodes` fixes the vertical sampling attached to each mode.
pub fn find_kernel_set(
    profile: &ShearProfile,
    params: &WaveParams,
    lattice: &LatticeSpec,
    membership_tol: f64,
    solver: &RiccatiSolver,
    nodes: &[f64],
) -> Result<ResonantSet, DispersionError> {
    let cutoff = kernel_cutoff_radius(profile, params, lattice)?;
    let candidates = quadrant_indices(lattice, cutoff);
    let hits: Vec<Option<([i64; 2], Arc<RiccatiSolution>, f64)>> = candidates
        .par_iter()
        .map(|&idx| {
            let k = lattice.wavevector(idx[0], idx[1]);
            let rhs = dispersion_rhs(profile, params, k)?;
            let sol = solver.solve(profile, k, nodes)?;
            let res = sol.q_surface() - rhs;
            Ok((res.abs() <= membership_tol).then_some((idx, sol, res)))
        })
        .collect::<Result<_, DispersionError>>()?;

    let u0 = profile.surface_value();
    let mut modes = Vec::new();
    for (idx, sol, res) in hits.into_iter().flatten() {
        let signs: &[(i64, i64)] = if idx[1] == 0 {
            &[(1, 1), (-1, 1)]
        } else {
            &[(1, 1), (-1, 1), (1, -1), (-1, -1)]
        };
        for &(s1, s2) in signs {
            let index = [s1 * idx[0], s2 * idx[1]];
            let k = lattice.wavevector(index[0], index[1]);
            let solution = if index == idx {
                sol.clone()
            } else {
                solver.solve(profile, k, nodes)?
            };
            let pressure = pressure_profile(solution.clone(), u0)?;
            modes.push(ResonantMode {
                index,
                k,
                q_surface: solution.q_surface(),
                residual: res,
                solution,
                pressure,
            });
        }
    }
    modes.sort_by(|a, b| {
        let na = a.k[0].hypot(a.k[1]);
        let nb = b.k[0].hypot(b.k[1]);
        na.total_cmp(&nb)
            .then(a.k[0].total_cmp(&b.k[0]))
            .then(a.k[1].total_cmp(&b.k[1]))
    });
    Ok(ResonantSet {
        modes,
        cutoff_radius: cutoff,
        membership_tol,
    })
}

/// Surface tension that makes the lattice vector `(i, j)` resonant.
pub fn calibrate_sigma(
    profile: &ShearProfile,
    g: f64,
    lattice: &LatticeSpec,
    target: [i64; 2],
    solver: &RiccatiSolver,
) -> Result<f64, DispersionError> {
    let k = lattice.wavevector(target[0], target[1]);
    check_k1(k)?;
    let sol = solver.solve_default(profile, k)?;
    let u0 = profile.surface_value();
    let k_sq = k[0] * k[0] + k[1] * k[1];
    let sigma = (k[0] * k[0] * u0 * u0 / sol.q_surface() - g) / k_sq;
    if sigma > 0.0 {
        Ok(sigma)
    } else {
        Err(DispersionError::NotCapillary(sigma))
    }
}

/// `q_k(0)` along `k = (k1, k2)` for each `k2` in the list.
pub fn monotonicity_scan(
    profile: &ShearProfile,
    k1: f64,
    k2_list: &[f64],
    solver: &RiccatiSolver,
) -> Result<Vec<f64>, DispersionError> {
    check_k1([k1, 0.0])?;
    k2_list
        .par_iter()
        .map(|&k2| Ok(solver.solve_default(profile, [k1, k2])?.q_surface()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub i: i64,
    pub j: i64,
    pub k1: f64,
    pub k2: f64,
    pub k_norm: f64,
    pub q0: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Dispersion data on the closed positive quadrant up to `radius`.
pub fn dispersion_scan(
    profile: &ShearProfile,
    params: &WaveParams,
    lattice: &LatticeSpec,
    radius: f64,
    solver: &RiccatiSolver,
) -> Result<Vec<ScanRow>, DispersionError> {
    let mut rows: Vec<ScanRow> = quadrant_indices(lattice, radius)
        .par_iter()
        .map(|&[i, j]| {
            let k = lattice.wavevector(i, j);
            let rhs = dispersion_rhs(profile, params, k)?;
            let q0 = solver.solve_default(profile, k)?.q_surface();
            Ok(ScanRow {
                i,
                j,
                k1: k[0],
                k2: k[1],
                k_norm: k[0].hypot(k[1]),
                q0,
                rhs,
                residual: q0 - rhs,
            })
        })
        .collect::<Result<_, DispersionError>>()?;
    rows.sort_by(|a, b| a.k_norm.total_cmp(&b.k_norm).then(a.i.cmp(&b.i)).then(a.j.cmp(&b.j)));
    Ok(rows)
}
