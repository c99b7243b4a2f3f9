//! Residuals of the flattened steady Euler system, its linearization about a shear flow,
//! and the small-amplitude scaling probe.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fields::{background_state, build_flattening, FieldSetup, FieldsError, FlowState};
use crate::profiles::WaveParams;
use crate::spectral::{Grid3D, Parity, SpectralError, TrigField};

/// Norm below which the probe treats a residual as exactly zero.
pub const EXACT_TOL: f64 = 1e-10;

pub const DEFAULT_EPS: [f64; 7] = [1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4];

#[derive(Debug, Error)]
pub enum ResidualError {
    #[error(transparent)]
    Fields(#[from] FieldsError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("nonlinear dynamic condition needs the capillary-gravity law")]
    UnsupportedCondition,
    #[error("probe needs at least two amplitudes, got {0}")]
    TooFewAmplitudes(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Norms {
    pub max: f64,
    pub l2: f64,
}

impl Norms {
    fn of_grid(g: &Grid3D) -> Self {
        Self {
            max: g.max_abs(),
            l2: g.rms(),
        }
    }

    /// Spectral bound: `max` sums per-mode maxima, `l2` is exact by Parseval.
    fn of_field(f: &TrigField) -> Self {
        Self {
            max: f.coefficient_max_norm(),
            l2: f.rms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeResidual {
    pub index: [u32; 2],
    pub momentum: f64,
    pub divergence: f64,
    pub kinematic: f64,
    pub dynamic: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResidualReport {
    pub momentum: [Norms; 3],
    pub divergence: Norms,
    pub kinematic_top: Norms,
    pub kinematic_bottom: Norms,
    pub dynamic: Norms,
    /// Per-mode breakdown; only filled by the linear residual.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<ModeResidual>,
}

impl ResidualReport {
    pub fn momentum_max(&self) -> f64 {
        self.momentum.iter().fold(0.0f64, |m, n| m.max(n.max))
    }

    /// Largest max-norm over every equation.
    pub fn max_norm(&self) -> f64 {
        [self.divergence, self.kinematic_top, self.kinematic_bottom, self.dynamic]
            .iter()
            .fold(self.momentum_max(), |m, n| m.max(n.max))
    }
}

/// Residual fields of the nonlinear system on the collocation grid.
#[derive(Debug, Clone)]
pub struct NonlinearResidualFields {
    pub momentum: [Grid3D; 3],
    pub divergence: Grid3D,
    pub kinematic_top: Grid3D,
    pub kinematic_bottom: Grid3D,
    pub dynamic: Grid3D,
}

impl NonlinearResidualFields {
    pub fn report(&self) -> ResidualReport {
        ResidualReport {
            momentum: [
                Norms::of_grid(&self.momentum[0]),
                Norms::of_grid(&self.momentum[1]),
                Norms::of_grid(&self.momentum[2]),
            ],
            divergence: Norms::of_grid(&self.divergence),
            kinematic_top: Norms::of_grid(&self.kinematic_top),
            kinematic_bottom: Norms::of_grid(&self.kinematic_bottom),
            dynamic: Norms::of_grid(&self.dynamic),
            modes: Vec::new(),
        }
    }
}

/// Evaluates `M^T (u.grad)(M u) + grad wp`, `div u`, `u3` on both boundaries and
/// `wp - g eta + sigma div(grad eta / sqrt(1 + |grad eta|^2))` on an `n1 x n2` horizontal grid.
pub fn nonlinear_residual_fields(
    state: &FlowState,
    params: &WaveParams,
    n1: usize,
    n2: usize,
) -> Result<NonlinearResidualFields, ResidualError> {
    if !params.is_capillary_gravity() {
        return Err(ResidualError::UnsupportedCondition);
    }
    let vgrid = state.vgrid();
    let flat = build_flattening(&state.eta, vgrid, n1, n2)?;
    let s = |f: &TrigField| f.synthesize(n1, n2);
    let comps = state.u.components();
    let u: Vec<Grid3D> = comps.iter().map(s).collect::<Result<_, _>>()?;
    let du: Vec<[Grid3D; 3]> = comps
        .iter()
        .map(|c| Ok([s(&c.d1())?, s(&c.d2())?, s(&c.d3())?]))
        .collect::<Result<_, SpectralError>>()?;
    let dwp = [s(&state.wp.d1())?, s(&state.wp.d2())?, s(&state.wp.d3())?];

    let n3 = vgrid.len();
    let total = n1 * n2 * n3;
    let mut out = vec![[0.0f64; 3]; total];
    out.par_chunks_mut(n2 * n3).enumerate().for_each(|(i1, slab)| {
        for i2 in 0..n2 {
            for l in 0..n3 {
                let at = |g: &Grid3D| g.get(i1, i2, l);
                let rho = at(&flat.rho);
                let gphi = [at(&flat.grad_phi[0]), at(&flat.grad_phi[1])];
                let hphi = |a: usize, b: usize| at(&flat.hess_phi[a][b]);
                let uu = [at(&u[0]), at(&u[1]), at(&u[2])];
                let d = |c: usize, j: usize| at(&du[c][j]);
                let mix = gphi[0] * uu[0] + gphi[1] * uu[1];
                let mut adv = [0.0; 3];
                for j in 0..3 {
                    let drho = hphi(2, j);
                    let dw1 = d(0, j) / rho - uu[0] * drho / (rho * rho);
                    let dw2 = d(1, j) / rho - uu[1] * drho / (rho * rho);
                    let dw3 = (hphi(0, j) * uu[0] + gphi[0] * d(0, j) + hphi(1, j) * uu[1] + gphi[1] * d(1, j)) / rho
                        - mix * drho / (rho * rho)
                        + d(2, j);
                    adv[0] += uu[j] * dw1;
                    adv[1] += uu[j] * dw2;
                    adv[2] += uu[j] * dw3;
                }
                slab[i2 * n3 + l] = [
                    (adv[0] + gphi[0] * adv[2]) / rho + at(&dwp[0]),
                    (adv[1] + gphi[1] * adv[2]) / rho + at(&dwp[1]),
                    adv[2] + at(&dwp[2]),
                ];
            }
        }
    });
    let template = &u[0];
    let momentum = [
        template.with_values(out.iter().map(|r| r[0]).collect())?,
        template.with_values(out.iter().map(|r| r[1]).collect())?,
        template.with_values(out.iter().map(|r| r[2]).collect())?,
    ];
    let divergence = s(&state.u.divergence())?;

    // surface terms
    let eta = &state.eta;
    let (e1, e2) = (eta.d1(), eta.d2());
    let sg = |f: &TrigField| f.synthesize(n1, n2);
    let (g_eta, g1, g2) = (sg(eta)?, sg(&e1)?, sg(&e2)?);
    let (g11, g12, g22) = (sg(&e1.d1())?, sg(&e1.d2())?, sg(&e2.d2())?);
    let wp_top = sg(&state.wp.level(n3 - 1))?;
    let (g, sigma) = (params.g, params.sigma);
    let dynamic: Vec<f64> = (0..n1 * n2)
        .map(|c| {
            let v = |grid: &Grid3D| grid.values()[c];
            let (a, b) = (v(&g1), v(&g2));
            let s2 = 1.0 + a * a + b * b;
            let s = s2.sqrt();
            let lap = v(&g11) + v(&g22);
            let quad = a * a * v(&g11) + 2.0 * a * b * v(&g12) + b * b * v(&g22);
            let curvature = lap / s - quad / (s * s2);
            v(&wp_top) - g * v(&g_eta) + sigma * curvature
        })
        .collect();
    let dynamic = g_eta.with_values(dynamic)?;
    Ok(NonlinearResidualFields {
        momentum,
        divergence: divergence.clone(),
        kinematic_top: u[2].level(n3 - 1),
        kinematic_bottom: u[2].level(0),
        dynamic,
    })
}

pub fn nonlinear_residual(state: &FlowState, params: &WaveParams, n1: usize, n2: usize) -> Result<ResidualReport, ResidualError> {
    Ok(nonlinear_residual_fields(state, params, n1, n2)?.report())
}

/// Residual fields of the equations linearized about `(U(x3), 0, 0)`, in trigonometric form.
#[derive(Debug, Clone)]
pub struct LinearResidualFields {
    pub momentum: [TrigField; 3],
    pub divergence: TrigField,
    pub kinematic_top: TrigField,
    pub kinematic_bottom: TrigField,
    pub dynamic: TrigField,
}

pub fn linear_residual_fields(fields: &FlowState, setup: &FieldSetup) -> Result<LinearResidualFields, ResidualError> {
    let vgrid = &setup.vgrid;
    let n = vgrid.len();
    let d = vgrid.depth();
    let u = setup.u_nodes();
    let du = setup.du_nodes();
    let u_sq: Vec<f64> = u.iter().map(|v| v * v).collect();
    let [u1, u2, u3] = fields.u.components();
    let eta = fields.eta.inner();
    let phi = eta.lift_linear(vgrid.clone());
    let phi3 = eta.extend_with(vgrid.clone(), &vec![1.0 / d; n]);
    let wp = fields.wp.inner();

    // u3 U' e1 + U d1 u + U^2 d1 curl(phi e2) + grad wp, with curl(phi e2) = (-d3 phi, 0, d1 phi)
    let r1 = u3
        .scale_profile(&du)
        .add(&u1.d1().scale_profile(&u))?
        .axpy(-1.0, &phi3.d1().scale_profile(&u_sq))?
        .add(&wp.d1())?;
    let r2 = u2.d1().scale_profile(&u).add(&wp.d2())?;
    let r3 = u3
        .d1()
        .scale_profile(&u)
        .add(&phi.d1().d1().scale_profile(&u_sq))?
        .add(&wp.d3())?;

    let mut dynamic = TrigField::surface(setup.lattice, [Parity::Cos, Parity::Cos]);
    let top = wp.level(n - 1);
    let (k1, k2) = (setup.lattice.kappa1(), setup.lattice.kappa2());
    let keys: BTreeSet<(u32, u32)> = top.modes().map(|(k, _)| k).chain(eta.modes().map(|(k, _)| k)).collect();
    for (i, j) in keys {
        let k_sq = (i as f64 * k1).powi(2) + (j as f64 * k2).powi(2);
        let p = top.mode(i, j).map_or(0.0, |v| v[0]);
        let e = eta.mode(i, j).map_or(0.0, |v| v[0]);
        dynamic.add_mode(i, j, &[p - setup.params.restoring(k_sq) * e]);
    }
    Ok(LinearResidualFields {
        momentum: [r1, r2, r3],
        divergence: fields.u.divergence(),
        kinematic_top: u3.level(n - 1),
        kinematic_bottom: u3.level(0),
        dynamic,
    })
}

/// Mode-wise residual of the linearized system; `max` norms are sums of per-mode maxima.
pub fn linear_residual(fields: &FlowState, setup: &FieldSetup) -> Result<ResidualReport, ResidualError> {
    let r = linear_residual_fields(fields, setup)?;
    let peak = |f: &TrigField, i: u32, j: u32| {
        f.mode(i, j)
            .map_or(0.0, |p| p.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    };
    let mut keys: BTreeSet<(u32, u32)> = BTreeSet::new();
    for f in r.momentum.iter().chain([&r.divergence, &r.kinematic_top, &r.kinematic_bottom, &r.dynamic]) {
        keys.extend(f.modes().map(|(k, _)| k));
    }
    let modes = keys
        .into_iter()
        .map(|(i, j)| ModeResidual {
            index: [i, j],
            momentum: r.momentum.iter().map(|f| peak(f, i, j)).fold(0.0, f64::max),
            divergence: peak(&r.divergence, i, j),
            kinematic: peak(&r.kinematic_top, i, j).max(peak(&r.kinematic_bottom, i, j)),
            dynamic: peak(&r.dynamic, i, j),
        })
        .collect();
    Ok(ResidualReport {
        momentum: [
            Norms::of_field(&r.momentum[0]),
            Norms::of_field(&r.momentum[1]),
            Norms::of_field(&r.momentum[2]),
        ],
        divergence: Norms::of_field(&r.divergence),
        kinematic_top: Norms::of_field(&r.kinematic_top),
        kinematic_bottom: Norms::of_field(&r.kinematic_bottom),
        dynamic: Norms::of_field(&r.dynamic),
        modes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    pub eps: f64,
    pub report: ResidualReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub rows: Vec<ProbeRow>,
    /// Least-squares slope of `log(momentum max)` against `log(eps)`; `None` for an exact solution.
    pub slope: Option<f64>,
    pub exact: bool,
}

/// Nonlinear residual of `background + eps * kernel` over `eps_list`, with the fitted order.
pub fn order_scaling_probe(
    setup: &FieldSetup,
    kernel: &FlowState,
    eps_list: &[f64],
    n1: usize,
    n2: usize,
) -> Result<ProbeResult, ResidualError> {
    if eps_list.len() < 2 {
        return Err(ResidualError::TooFewAmplitudes(eps_list.len()));
    }
    let base = background_state(&setup.profile, setup.lattice, setup.vgrid.clone());
    let rows: Vec<ProbeRow> = eps_list
        .par_iter()
        .map(|&eps| {
            let state = base.perturbed(eps, kernel)?;
            let report = nonlinear_residual(&state, &setup.params, n1, n2)?;
            Ok(ProbeRow { eps, report })
        })
        .collect::<Result<_, ResidualError>>()?;
    let exact = rows.iter().all(|r| r.report.momentum_max() <= EXACT_TOL);
    let slope = if exact {
        None
    } else {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.report.momentum_max() > 0.0)
            .map(|r| (r.eps.ln(), r.report.momentum_max().ln()))
            .collect();
        least_squares_slope(&pts)
    };
    Ok(ProbeResult { rows, slope, exact })
}

fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{calibrate_sigma, find_kernel_set, DEFAULT_MEMBERSHIP_TOL};
    use crate::fields::{assemble_kernel, assemble_linear_fields, trivial_state, KernelAmplitude, KernelModeSet, ShearMode};
    use crate::profiles::{LatticeSpec, ShearProfile};
    use crate::riccati::RiccatiSolver;
    use crate::spectral::{SymmetricField, SymmetricVectorField};
    use crate::vertical::VerticalGrid;
    use std::sync::Arc;

    fn lattice() -> LatticeSpec {
        LatticeSpec::new(2.0 * std::f64::consts::PI, 4.0).unwrap()
    }

    fn sheared_setup(target: [i64; 2]) -> (FieldSetup, RiccatiSolver) {
        let profile = ShearProfile::polynomial(vec![2.0, 1.0], 1.0).unwrap();
        let solver = RiccatiSolver::default();
        let sigma = calibrate_sigma(&profile, 1.0, &lattice(), target, &solver).unwrap();
        let params = WaveParams::capillary_gravity(1.0, sigma).unwrap();
        let vg = Arc::new(VerticalGrid::chebyshev(33, 1.0));
        (FieldSetup::new(profile, params, lattice(), vg).unwrap(), solver)
    }

    #[test]
    fn trivial_states_have_zero_residual() {
        let vg = Arc::new(VerticalGrid::chebyshev(17, 1.0));
        let k2 = lattice().kappa2();
        let params = WaveParams::capillary_gravity(9.81, 0.1).unwrap();
        for s in [
            trivial_state(lattice(), vg.clone(), |_, x3| 2.0 + x3, 8).unwrap(),
            trivial_state(lattice(), vg.clone(), |x2, _| (k2 * x2).cos(), 8).unwrap(),
        ] {
            let r = nonlinear_residual(&s, &params, 8, 8).unwrap();
            assert!(r.max_norm() <= 1e-10, "{r:?}");
        }
    }

    #[test]
    fn generic_state_is_not_a_solution() {
        let vg = Arc::new(VerticalGrid::chebyshev(17, 1.0));
        let ones = vec![1.0; vg.len()];
        let mut u = SymmetricVectorField::new(lattice(), vg.clone());
        u.component_mut(0).add_mode(1, 1, &ones);
        u.component_mut(2).add_mode(1, 0, &ones);
        let mut eta = SymmetricField::surface(lattice());
        eta.add_mode(1, 0, &[0.1]);
        let state = FlowState::new(u, SymmetricField::new(lattice(), vg), eta).unwrap();
        let params = WaveParams::capillary_gravity(9.81, 0.1).unwrap();
        let r = nonlinear_residual(&state, &params, 8, 8).unwrap();
        assert!(r.momentum_max() > 0.1);
    }

    #[test]
    fn momentum_residual_has_gradient_parity() {
        let vg = Arc::new(VerticalGrid::chebyshev(9, 1.0));
        let prof: Vec<f64> = vg.nodes().iter().map(|x| 1.0 + 0.3 * x).collect();
        let mut u = SymmetricVectorField::new(lattice(), vg.clone());
        u.component_mut(0).add_mode(0, 0, &prof);
        u.component_mut(0).add_mode(1, 1, &prof);
        u.component_mut(1).add_mode(1, 2, &prof);
        u.component_mut(2).add_mode(2, 1, &prof);
        let mut wp = SymmetricField::new(lattice(), vg.clone());
        wp.add_mode(1, 1, &prof);
        let mut eta = SymmetricField::surface(lattice());
        eta.add_mode(1, 1, &[0.05]);
        let state = FlowState::new(u, wp, eta).unwrap();
        let params = WaveParams::capillary_gravity(1.0, 0.1).unwrap();
        let n = 12;
        let r = nonlinear_residual_fields(&state, &params, n, n).unwrap();
        // reflection x1 -> -x1 maps node i to (n - i) mod n
        let signs1 = [-1.0, 1.0, 1.0];
        let signs2 = [1.0, -1.0, 1.0];
        for c in 0..3 {
            let g = &r.momentum[c];
            for i1 in 0..n {
                for i2 in 0..n {
                    for l in 0..vg.len() {
                        let v = g.get(i1, i2, l);
                        let scale = 1e-12 * (1.0 + g.max_abs());
                        assert!((g.get((n - i1) % n, i2, l) - signs1[c] * v).abs() < scale);
                        assert!((g.get(i1, (n - i2) % n, l) - signs2[c] * v).abs() < scale);
                    }
                }
            }
        }
    }

    #[test]
    fn calibrated_kernel_passes_linear_residual() {
        for target in [[1, 0], [1, 1]] {
            let (setup, solver) = sheared_setup(target);
            let set = find_kernel_set(
                &setup.profile,
                &setup.params,
                &setup.lattice,
                DEFAULT_MEMBERSHIP_TOL,
                &solver,
                setup.vgrid.nodes(),
            )
            .unwrap();
            let modes = KernelModeSet {
                a0: 0.3,
                modes: vec![KernelAmplitude { k: target, a: 1.0 }],
                w: vec![ShearMode {
                    j: 1,
                    coeffs: vec![0.2, 0.1],
                }],
            };
            let k = assemble_kernel(&setup, &set, &modes, &solver).unwrap();
            let r = linear_residual(&k.to_state(), &setup).unwrap();
            assert!(r.max_norm() <= 1e-8, "{target:?}: {r:?}");
        }
    }

    #[test]
    fn off_resonance_only_dynamic_fails() {
        let (setup, solver) = sheared_setup([1, 1]);
        let modes = KernelModeSet {
            modes: vec![KernelAmplitude { k: [2, 1], a: 1.0 }],
            ..Default::default()
        };
        let k = assemble_linear_fields(&setup, &modes, &solver).unwrap();
        let r = linear_residual(&k.to_state(), &setup).unwrap();
        assert!(r.dynamic.max > 1e-3);
        assert!(r.momentum_max() <= 1e-8 && r.divergence.max <= 1e-8);
        assert!(r.kinematic_top.max <= 1e-8 && r.kinematic_bottom.max <= 1e-8);
    }

    #[test]
    fn zero_fields_probe_is_exact() {
        let (setup, solver) = sheared_setup([1, 0]);
        let k = assemble_linear_fields(&setup, &KernelModeSet::default(), &solver).unwrap();
        let r = linear_residual(&k.to_state(), &setup).unwrap();
        assert_eq!(r.max_norm(), 0.0);
        let p = order_scaling_probe(&setup, &k.to_state(), &DEFAULT_EPS, 8, 8).unwrap();
        assert!(p.exact && p.slope.is_none());
    }

    #[test]
    fn kernel_residual_is_quadratic() {
        let (setup, solver) = sheared_setup([1, 1]);
        let modes = KernelModeSet {
            modes: vec![KernelAmplitude { k: [1, 1], a: 1.0 }],
            ..Default::default()
        };
        let k = assemble_linear_fields(&setup, &modes, &solver).unwrap();
        let p = order_scaling_probe(&setup, &k.to_state(), &DEFAULT_EPS, 16, 16).unwrap();
        let slope = p.slope.unwrap();
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn slope_fit() {
        let pts: Vec<(f64, f64)> = [1.0f64, 2.0, 3.0].iter().map(|&x| (x, 2.0 * x + 1.0)).collect();
        assert!((least_squares_slope(&pts).unwrap() - 2.0).abs() < 1e-14);
    }
}
