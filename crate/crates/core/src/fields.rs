//! Flattening transform, trivial states and first-order kernel fields.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispersion::ResonantSet;
use crate::profiles::{LatticeSpec, ShearProfile, WaveParams};
use crate::riccati::{pressure_profile, RiccatiError, RiccatiSolver};
use crate::spectral::{Grid3D, SpectralError, SymmetricField, SymmetricVectorField, TrigField, SYMMETRIC_SCALAR};
use crate::vertical::VerticalGrid;

#[derive(Debug, Error)]
pub enum FieldsError {
    #[error("surface is degenerate: 1 + eta/d reaches {rho_min}")]
    DegenerateSurface { rho_min: f64 },
    #[error("shear field is not even in x2: defect {defect} at x2 = {x2}, x3 = {x3}")]
    SymmetryViolation { x2: f64, x3: f64, defect: f64 },
    #[error("wavevector index {0:?} is not in the resonant set")]
    NonResonantMode([i64; 2]),
    #[error("conflicting amplitudes for index {0:?}")]
    ConflictingAmplitude([i64; 2]),
    #[error("mode index {0:?} needs a nonzero first component")]
    AxisMode([i64; 2]),
    #[error("vertical grid depth {grid} differs from profile depth {profile}")]
    DepthMismatch { grid: f64, profile: f64 },
    #[error("surface elevation must be a surface field")]
    NotSurface,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
}

/// Flattened unknowns `(u, wp, eta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub u: SymmetricVectorField,
    pub wp: SymmetricField,
    pub eta: SymmetricField,
}

impl FlowState {
    pub fn new(u: SymmetricVectorField, wp: SymmetricField, eta: SymmetricField) -> Result<Self, FieldsError> {
        if !eta.is_surface() {
            return Err(FieldsError::NotSurface);
        }
        Ok(Self { u, wp, eta })
    }

    pub fn lattice(&self) -> &LatticeSpec {
        self.u.lattice()
    }

    pub fn vgrid(&self) -> &Arc<VerticalGrid> {
        self.wp.vgrid().expect("pressure lives on the vertical grid")
    }

    /// `self + eps * other`, field by field.
    pub fn perturbed(&self, eps: f64, other: &Self) -> Result<Self, FieldsError> {
        Ok(Self {
            u: self.u.axpy(eps, &other.u)?,
            wp: SymmetricField::from_trig(self.wp.axpy(eps, &other.wp)?)?,
            eta: SymmetricField::from_trig(self.eta.axpy(eps, &other.eta)?)?,
        })
    }

    pub fn scaled(&self, eps: f64) -> Self {
        Self {
            u: self.u.scale(eps),
            wp: SymmetricField::from_trig(self.wp.scale(eps)).expect("parity kept"),
            eta: SymmetricField::from_trig(self.eta.scale(eps)).expect("parity kept"),
        }
    }
}

/// Surface elevation with its first and second horizontal derivatives.
#[derive(Debug, Clone)]
pub struct SurfaceGeometry {
    depth: f64,
    eta: TrigField,
    d1: TrigField,
    d2: TrigField,
    d11: TrigField,
    d12: TrigField,
    d22: TrigField,
}

/// Pointwise value, gradient and Hessian of `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceJet {
    pub eta: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

impl SurfaceGeometry {
    pub fn new(eta: &TrigField, depth: f64) -> Result<Self, FieldsError> {
        if !eta.is_surface() {
            return Err(FieldsError::NotSurface);
        }
        let d1 = eta.d1();
        let d2 = eta.d2();
        Ok(Self {
            depth,
            eta: eta.clone(),
            d11: d1.d1(),
            d12: d1.d2(),
            d22: d2.d2(),
            d1,
            d2,
        })
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn jet(&self, x1: f64, x2: f64) -> SurfaceJet {
        let e = |f: &TrigField| f.eval_level(x1, x2, 0);
        let h12 = e(&self.d12);
        SurfaceJet {
            eta: e(&self.eta),
            grad: [e(&self.d1), e(&self.d2)],
            hess: [[e(&self.d11), h12], [h12, e(&self.d22)]],
        }
    }
}

/// Flattening quantities sampled on a collocation grid.
///
/// `phi = (1 + x3/d) eta`, `rho = 1 + eta/d`, `J = I + e3 (x) grad phi`, `M = J / rho`.
#[derive(Debug, Clone)]
pub struct Flattening {
    pub depth: f64,
    pub phi: Grid3D,
    /// `[d1 phi, d2 phi, d3 phi]`.
    pub grad_phi: [Grid3D; 3],
    /// Symmetric second derivatives of `phi`, indexed `[a][b]`.
    pub hess_phi: [[Grid3D; 3]; 3],
    pub rho: Grid3D,
}

impl Flattening {
    pub fn shape(&self) -> [usize; 3] {
        self.phi.shape()
    }

    pub fn jacobian_at(&self, i1: usize, i2: usize, l: usize) -> [[f64; 3]; 3] {
        let g = |f: &Grid3D| f.get(i1, i2, l);
        [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [g(&self.grad_phi[0]), g(&self.grad_phi[1]), g(&self.rho)],
        ]
    }

    pub fn m_at(&self, i1: usize, i2: usize, l: usize) -> [[f64; 3]; 3] {
        let rho = self.rho.get(i1, i2, l);
        self.jacobian_at(i1, i2, l).map(|row| row.map(|v| v / rho))
    }

    pub fn min_rho(&self) -> f64 {
        self.rho.values().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn build_flattening(eta: &TrigField, vgrid: &Arc<VerticalGrid>, n1: usize, n2: usize) -> Result<Flattening, FieldsError> {
    if !eta.is_surface() {
        return Err(FieldsError::NotSurface);
    }
    let depth = vgrid.depth();
    let phi = eta.lift_linear(vgrid.clone());
    let flat = eta.extend_with(vgrid.clone(), &vec![1.0; vgrid.len()]);
    let inv_d = vec![1.0 / depth; vgrid.len()];
    let phi1 = phi.d1();
    let phi2 = phi.d2();
    let phi3 = eta.extend_with(vgrid.clone(), &inv_d);
    let s = |f: &TrigField| f.synthesize(n1, n2);
    let g13 = s(&phi3.d1())?;
    let g23 = s(&phi3.d2())?;
    let g12 = s(&phi1.d2())?;
    let zero = s(&phi3.empty_like())?;
    let rho = s(&flat)?.map(|e| 1.0 + e / depth);
    let out = Flattening {
        depth,
        phi: s(&phi)?,
        grad_phi: [s(&phi1)?, s(&phi2)?, s(&phi3)?],
        hess_phi: [
            [s(&phi1.d1())?, g12.clone(), g13.clone()],
            [g12, s(&phi2.d2())?, g23.clone()],
            [g13, g23, zero],
        ],
        rho,
    };
    let rho_min = out.min_rho();
    if rho_min <= 0.0 {
        return Err(FieldsError::DegenerateSurface { rho_min });
    }
    Ok(out)
}

/// Value of a vector field with its Jacobian, `jacobian[i][j] = d_j v_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorJet {
    pub value: [f64; 3],
    pub jacobian: [[f64; 3]; 3],
}

impl VectorJet {
    pub fn divergence(&self) -> f64 {
        self.jacobian[0][0] + self.jacobian[1][1] + self.jacobian[2][2]
    }
}

/// Physical point `Phi(xbar) = (xbar', xbar3 + phi(xbar))`.
pub fn flatten_point(jet: &SurfaceJet, depth: f64, xbar: [f64; 3]) -> [f64; 3] {
    [xbar[0], xbar[1], xbar[2] + (1.0 + xbar[2] / depth) * jet.eta]
}

/// Inverse of [`flatten_point`] for a point above `(x1, x2)`.
pub fn unflatten_point(jet: &SurfaceJet, depth: f64, x: [f64; 3]) -> [f64; 3] {
    [x[0], x[1], depth * (x[2] - jet.eta) / (depth + jet.eta)]
}

/// Transforms a physical vector jet, taken at `Phi(xbar)`, into the flattened field at `xbar`:
/// `vbar = rho J^{-1} (v o Phi)`, differentiated by the chain rule.
pub fn pushforward_vector(v: &VectorJet, jet: &SurfaceJet, depth: f64, x3bar: f64) -> Result<VectorJet, FieldsError> {
    let rho = 1.0 + jet.eta / depth;
    if rho <= 0.0 {
        return Err(FieldsError::DegenerateSurface { rho_min: rho });
    }
    let lift = 1.0 + x3bar / depth;
    // grad phi and its derivatives
    let gphi = [lift * jet.grad[0], lift * jet.grad[1], rho];
    let dphi = |a: usize, b: usize| -> f64 {
        match (a, b) {
            (0..=1, 0..=1) => lift * jet.hess[a][b],
            (0..=1, 2) => jet.grad[a] / depth,
            (2, 0..=1) => jet.grad[b] / depth,
            _ => 0.0,
        }
    };
    let jac = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], gphi];
    // derivatives of w = v o Phi: Dw = Dv J
    let mut dw = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            dw[i][j] = (0..3).map(|l| v.jacobian[i][l] * jac[l][j]).sum();
        }
    }
    let w = v.value;
    // A = rho J^{-1} = [[rho,0,0],[0,rho,0],[-phi1,-phi2,1]]
    let a = [[rho, 0.0, 0.0], [0.0, rho, 0.0], [-gphi[0], -gphi[1], 1.0]];
    let mut value = [0.0; 3];
    for i in 0..3 {
        value[i] = (0..3).map(|l| a[i][l] * w[l]).sum();
    }
    let drho = [jet.grad[0] / depth, jet.grad[1] / depth, 0.0];
    let mut jacobian = [[0.0; 3]; 3];
    for j in 0..3 {
        let da = [
            [drho[j], 0.0, 0.0],
            [0.0, drho[j], 0.0],
            [-dphi(0, j), -dphi(1, j), 0.0],
        ];
        for i in 0..3 {
            jacobian[i][j] = (0..3).map(|l| da[i][l] * w[l] + a[i][l] * dw[l][j]).sum();
        }
    }
    Ok(VectorJet { value, jacobian })
}

/// Physical vector `v(Phi(xbar)) = J vbar / rho` recovered from a flattened value.
pub fn pullback_vector(vbar: [f64; 3], jet: &SurfaceJet, depth: f64, x3bar: f64) -> Result<[f64; 3], FieldsError> {
    let rho = 1.0 + jet.eta / depth;
    if rho <= 0.0 {
        return Err(FieldsError::DegenerateSurface { rho_min: rho });
    }
    let lift = 1.0 + x3bar / depth;
    Ok([
        vbar[0] / rho,
        vbar[1] / rho,
        (lift * jet.grad[0] * vbar[0] + lift * jet.grad[1] * vbar[1]) / rho + vbar[2],
    ])
}

/// Trivial state `u = (U(x2, x3), 0, 0)`, `wp = 0`, `eta = 0` with `U` expanded in `cos(j kappa2 x2)`
/// from `n2` samples per period.
pub fn trivial_state(
    lattice: LatticeSpec,
    vgrid: Arc<VerticalGrid>,
    u2d: impl Fn(f64, f64) -> f64 + Sync,
    n2: usize,
) -> Result<FlowState, FieldsError> {
    let x3s = vgrid.nodes();
    let lambda2 = lattice.lambda2();
    let mut scale = 0.0f64;
    let mut worst: Option<(f64, f64, f64)> = None;
    for s in 0..n2 {
        let x2 = lambda2 * (s as f64 + 0.37) / n2 as f64;
        for &x3 in x3s {
            let (a, b) = (u2d(x2, x3), u2d(-x2, x3));
            scale = scale.max(a.abs());
            let defect = (a - b).abs();
            if worst.is_none_or(|w| defect > w.2) {
                worst = Some((x2, x3, defect));
            }
        }
    }
    if let Some((x2, x3, defect)) = worst {
        if defect > 1e-12 * scale.max(1.0) {
            return Err(FieldsError::SymmetryViolation { x2, x3, defect });
        }
    }
    let grid = Grid3D::from_fn(lattice, 2, n2, &vgrid, |x| u2d(x[1], x[2]));
    let jmax = (n2 / 2).saturating_sub(1) as u32;
    let u1 = TrigField::analyze(&grid, SYMMETRIC_SCALAR, (0, jmax), Some(vgrid.clone()))?;
    let mut u = SymmetricVectorField::new(lattice, vgrid.clone());
    for ((i, j), p) in u1.modes() {
        if p.iter().any(|v| v.abs() > 1e-15 * scale) {
            u.component_mut(0).add_mode(i, j, p);
        }
    }
    Ok(FlowState {
        u,
        wp: SymmetricField::new(lattice, vgrid),
        eta: SymmetricField::surface(lattice),
    })
}

/// Trivial state for a depth-only shear profile.
pub fn background_state(profile: &ShearProfile, lattice: LatticeSpec, vgrid: Arc<VerticalGrid>) -> FlowState {
    let prof: Vec<f64> = vgrid.nodes().iter().map(|&x| profile.value(x)).collect();
    let mut u = SymmetricVectorField::new(lattice, vgrid.clone());
    u.component_mut(0).add_mode(0, 0, &prof);
    FlowState {
        u,
        wp: SymmetricField::new(lattice, vgrid),
        eta: SymmetricField::surface(lattice),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelAmplitude {
    /// Lattice indices; signs are irrelevant since amplitudes are symmetric.
    pub k: [i64; 2],
    pub a: f64,
}

/// One `cos(j kappa2 x2)` component of the shear perturbation `w(x2, x3)`, with a polynomial profile in `x3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearMode {
    pub j: u32,
    pub coeffs: Vec<f64>,
}

impl ShearMode {
    pub fn eval(&self, x3: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x3 + c)
    }
}

/// Kernel parameters: mean elevation `a0`, wave amplitudes and a shear perturbation `w`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelModeSet {
    #[serde(default)]
    pub a0: f64,
    #[serde(default)]
    pub modes: Vec<KernelAmplitude>,
    #[serde(default)]
    pub w: Vec<ShearMode>,
}

impl KernelModeSet {
    /// Amplitudes merged onto `i >= 0, j >= 0`, zero amplitudes dropped.
    pub fn quadrant_amplitudes(&self) -> Result<Vec<([i64; 2], f64)>, FieldsError> {
        let mut out: Vec<([i64; 2], f64)> = Vec::new();
        for m in &self.modes {
            let key = [m.k[0].abs(), m.k[1].abs()];
            match out.iter().find(|(k, _)| *k == key) {
                Some((_, a)) if *a != m.a => return Err(FieldsError::ConflictingAmplitude(key)),
                Some(_) => {}
                None => out.push((key, m.a)),
            }
        }
        out.retain(|(_, a)| *a != 0.0);
        out.sort_by_key(|(k, _)| *k);
        Ok(out)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            a0: c * self.a0,
            modes: self.modes.iter().map(|m| KernelAmplitude { k: m.k, a: c * m.a }).collect(),
            w: self
                .w
                .iter()
                .map(|s| ShearMode {
                    j: s.j,
                    coeffs: s.coeffs.iter().map(|v| c * v).collect(),
                })
                .collect(),
        }
    }
}

/// Inputs shared by kernel assembly and the linear residual.
#[derive(Debug, Clone)]
pub struct FieldSetup {
    pub profile: ShearProfile,
    pub params: WaveParams,
    pub lattice: LatticeSpec,
    pub vgrid: Arc<VerticalGrid>,
}

impl FieldSetup {
    pub fn new(profile: ShearProfile, params: WaveParams, lattice: LatticeSpec, vgrid: Arc<VerticalGrid>) -> Result<Self, FieldsError> {
        let (grid, prof) = (vgrid.depth(), profile.depth());
        if (grid - prof).abs() > 1e-12 * prof {
            return Err(FieldsError::DepthMismatch { grid, profile: prof });
        }
        Ok(Self {
            profile,
            params,
            lattice,
            vgrid,
        })
    }

    pub fn u_nodes(&self) -> Vec<f64> {
        self.vgrid.nodes().iter().map(|&x| self.profile.value(x)).collect()
    }

    pub fn du_nodes(&self) -> Vec<f64> {
        self.vgrid.nodes().iter().map(|&x| self.profile.derivative(x)).collect()
    }
}

/// First-order fields; `v` is the rotational part and `u = v - curl(U phi e2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFields {
    pub eta: SymmetricField,
    pub wp: SymmetricField,
    pub u: SymmetricVectorField,
    pub v: SymmetricVectorField,
}

impl KernelFields {
    pub fn to_state(&self) -> FlowState {
        FlowState {
            u: self.u.clone(),
            wp: self.wp.clone(),
            eta: self.eta.clone(),
        }
    }
}

/// Kernel fields for amplitudes on resonant wavevectors.
pub fn assemble_kernel(
    setup: &FieldSetup,
    resonant: &ResonantSet,
    modes: &KernelModeSet,
    solver: &RiccatiSolver,
) -> Result<KernelFields, FieldsError> {
    for (k, _) in modes.quadrant_amplitudes()? {
        if !resonant.contains(k) {
            return Err(FieldsError::NonResonantMode(k));
        }
    }
    assemble_linear_fields(setup, modes, solver)
}

/// Same construction as [`assemble_kernel`] without the resonance check.
///
/// Off resonance only the dynamic condition fails.
pub fn assemble_linear_fields(setup: &FieldSetup, modes: &KernelModeSet, solver: &RiccatiSolver) -> Result<KernelFields, FieldsError> {
    let lattice = setup.lattice;
    let vgrid = &setup.vgrid;
    let n = vgrid.len();
    let d = vgrid.depth();
    let u = setup.u_nodes();
    let du = setup.du_nodes();
    let u0 = setup.profile.surface_value();
    let amps = modes.quadrant_amplitudes()?;
    if let Some((k, _)) = amps.iter().find(|(k, _)| k[0] == 0) {
        return Err(FieldsError::AxisMode(*k));
    }

    struct Contribution {
        index: (u32, u32),
        eta: f64,
        wp: Vec<f64>,
        v: [Vec<f64>; 3],
    }

    let contributions: Vec<Contribution> = amps
        .par_iter()
        .map(|&(idx, a)| -> Result<Contribution, FieldsError> {
            let k = lattice.wavevector(idx[0], idx[1]);
            let sol = solver.solve(&setup.profile, k, vgrid.nodes())?;
            let q = sol.q().to_vec();
            let pp = pressure_profile(sol, u0)?;
            let big_q = pp.values();
            let c = if idx[1] > 0 { 4.0 } else { 2.0 };
            let ca = c * a;
            let k1 = k[0];
            let mut v1 = vec![0.0; n];
            let mut v2 = vec![0.0; n];
            let mut v3 = vec![0.0; n];
            for l in 0..n {
                v1[l] = ca * big_q[l] * (-1.0 / u[l] - q[l] * du[l] / (k1 * k1 * u[l] * u[l]));
                v2[l] = 4.0 * a * big_q[l] * k[1] / (k1 * u[l]);
                v3[l] = -ca * big_q[l] * q[l] / (k1 * u[l]);
            }
            Ok(Contribution {
                index: (idx[0] as u32, idx[1] as u32),
                eta: ca,
                wp: big_q.iter().map(|v| ca * v).collect(),
                v: [v1, v2, v3],
            })
        })
        .collect::<Result<_, _>>()?;

    let mut eta = SymmetricField::surface(lattice);
    let mut wp = SymmetricField::new(lattice, vgrid.clone());
    let mut v = SymmetricVectorField::new(lattice, vgrid.clone());
    if modes.a0 != 0.0 {
        eta.add_mode(0, 0, &[modes.a0]);
        wp.add_mode(0, 0, &vec![setup.params.restoring(0.0) * modes.a0; n]);
    }
    for c in &contributions {
        let (i, j) = c.index;
        eta.add_mode(i, j, &[c.eta]);
        wp.add_mode(i, j, &c.wp);
        for (comp, prof) in c.v.iter().enumerate() {
            v.component_mut(comp).add_mode(i, j, prof);
        }
    }
    for s in &modes.w {
        let prof: Vec<f64> = vgrid.nodes().iter().map(|&x| s.eval(x)).collect();
        v.component_mut(0).add_mode(0, s.j, &prof);
    }

    // u = v + (d3(U phi), 0, -U d1 phi) with phi = (1 + x3/d) eta
    let lift: Vec<f64> = vgrid.nodes().iter().map(|x| 1.0 + x / d).collect();
    let w1: Vec<f64> = (0..n).map(|l| du[l] * lift[l] + u[l] / d).collect();
    let phi = eta.extend_with(vgrid.clone(), &lift);
    let mut uf = v.clone();
    let corr1 = eta.extend_with(vgrid.clone(), &w1);
    let corr3 = phi.d1().scale_profile(&u).scale(-1.0);
    *uf.component_mut(0) = uf.component(0).add(&corr1)?;
    *uf.component_mut(2) = uf.component(2).add(&corr3)?;
    Ok(KernelFields { eta, wp, u: uf, v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{Parity, SYMMETRIC_VECTOR};
    use approx::assert_abs_diff_eq;

    fn lattice() -> LatticeSpec {
        LatticeSpec::new(2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI).unwrap()
    }

    fn surface(a: f64, i: u32, j: u32) -> TrigField {
        TrigField::surface(lattice(), SYMMETRIC_SCALAR).with_mode(i, j, &[a])
    }

    #[test]
    fn flat_surface_gives_identity() {
        let vg = Arc::new(VerticalGrid::chebyshev(9, 1.0));
        let f = build_flattening(&TrigField::surface(lattice(), SYMMETRIC_SCALAR), &vg, 4, 4).unwrap();
        assert_eq!(f.phi.max_abs(), 0.0);
        assert_eq!(f.m_at(1, 2, 3), [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn constant_elevation_gives_uniform_rho() {
        let vg = Arc::new(VerticalGrid::chebyshev(9, 2.0));
        let f = build_flattening(&surface(0.5, 0, 0), &vg, 4, 4).unwrap();
        assert!(f.rho.values().iter().all(|&r| (r - 1.25).abs() < 1e-15));
        let err = build_flattening(&surface(-3.0, 0, 0), &vg, 4, 4).unwrap_err();
        assert!(matches!(err, FieldsError::DegenerateSurface { .. }));
    }

    #[test]
    fn normalized_jacobian_is_linear_to_first_order() {
        // M - I - eps M1 = O(eps^2), M1 = e3 (x) grad phi1 - d3 phi1 I
        let vg = Arc::new(VerticalGrid::chebyshev(9, 1.0));
        let eps = [1e-2, 1e-3];
        let mut errs = Vec::new();
        for &e in &eps {
            let f = build_flattening(&surface(e, 1, 0), &vg, 8, 4).unwrap();
            let mut worst = 0.0f64;
            for i1 in 0..8 {
                for l in 0..vg.len() {
                    let m = f.m_at(i1, 0, l);
                    let g = |k: usize| f.grad_phi[k].get(i1, 0, l) / e;
                    for a in 0..3 {
                        for b in 0..3 {
                            let id = if a == b { 1.0 } else { 0.0 };
                            let m1 = if a == 2 { g(b) } else { 0.0 } - id * g(2);
                            worst = worst.max((m[a][b] - id - e * m1).abs());
                        }
                    }
                }
            }
            errs.push(worst);
        }
        let slope = (errs[0] / errs[1]).log10();
        assert!((slope - 2.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn pushforward_round_trip_and_identity() {
        let jet = SurfaceJet {
            eta: 0.1,
            grad: [0.2, -0.1],
            hess: [[0.3, 0.05], [0.05, -0.2]],
        };
        let v = VectorJet {
            value: [1.0, -2.0, 0.5],
            jacobian: [[0.0; 3]; 3],
        };
        let bar = pushforward_vector(&v, &jet, 1.0, -0.4).unwrap();
        let back = pullback_vector(bar.value, &jet, 1.0, -0.4).unwrap();
        for c in 0..3 {
            assert_abs_diff_eq!(back[c], v.value[c], epsilon = 1e-14);
        }
        let flat = SurfaceJet {
            eta: 0.0,
            grad: [0.0; 2],
            hess: [[0.0; 2]; 2],
        };
        assert_eq!(pushforward_vector(&v, &flat, 1.0, -0.4).unwrap(), v);
        let x = flatten_point(&jet, 1.0, [0.3, 0.2, -0.4]);
        assert_abs_diff_eq!(unflatten_point(&jet, 1.0, x)[2], -0.4, epsilon = 1e-15);
    }

    #[test]
    fn trivial_state_symmetry() {
        let vg = Arc::new(VerticalGrid::chebyshev(9, 1.0));
        let k2 = lattice().kappa2();
        assert!(trivial_state(lattice(), vg.clone(), |x2, _| (k2 * x2).cos(), 8).is_ok());
        let err = trivial_state(lattice(), vg.clone(), |x2, _| (k2 * x2).sin(), 8).unwrap_err();
        assert!(matches!(err, FieldsError::SymmetryViolation { .. }));
        let s = trivial_state(lattice(), vg, |x2, x3| (2.0 + x3) * (1.0 + 0.1 * (k2 * x2).cos()), 8).unwrap();
        let p = s.u.component(0).mode(0, 1).unwrap();
        assert_abs_diff_eq!(p[0], 0.1, epsilon = 1e-14);
        assert!(s.u.component(1).is_zero() && s.u.component(2).is_zero());
    }

    #[test]
    fn zero_amplitudes_give_zero_fields() {
        let profile = ShearProfile::polynomial(vec![2.0, 1.0], 1.0).unwrap();
        let vg = Arc::new(VerticalGrid::chebyshev(17, 1.0));
        let params = WaveParams::capillary_gravity(1.0, 0.5).unwrap();
        let setup = FieldSetup::new(profile, params, lattice(), vg).unwrap();
        let k = assemble_linear_fields(&setup, &KernelModeSet::default(), &RiccatiSolver::default()).unwrap();
        assert!(k.eta.is_zero() && k.wp.is_zero() && k.u.is_zero());
        assert_eq!(k.u.components().each_ref().map(|c| c.parity()), SYMMETRIC_VECTOR);
        assert_eq!(k.eta.parity(), [Parity::Cos, Parity::Cos]);
    }

    #[test]
    fn mean_elevation_only() {
        let profile = ShearProfile::polynomial(vec![2.0, 1.0], 1.0).unwrap();
        let vg = Arc::new(VerticalGrid::chebyshev(17, 1.0));
        let params = WaveParams::capillary_gravity(9.81, 0.5).unwrap();
        let setup = FieldSetup::new(profile, params, lattice(), vg.clone()).unwrap();
        let modes = KernelModeSet {
            a0: 1.0,
            ..Default::default()
        };
        let k = assemble_linear_fields(&setup, &modes, &RiccatiSolver::default()).unwrap();
        assert_eq!(k.eta.mode(0, 0).unwrap(), &[1.0]);
        assert!(k.wp.mode(0, 0).unwrap().iter().all(|&v| v == 9.81));
        // u1 = d3((2 + x3)(1 + x3)) = 3 + 2 x3
        for (x, v) in vg.nodes().iter().zip(k.u.component(0).mode(0, 0).unwrap()) {
            assert_abs_diff_eq!(*v, 3.0 + 2.0 * x, epsilon = 1e-13);
        }
        assert!(k.v.is_zero());
    }

    #[test]
    fn conflicting_amplitudes_rejected() {
        let m = KernelModeSet {
            modes: vec![KernelAmplitude { k: [1, 1], a: 1.0 }, KernelAmplitude { k: [-1, 1], a: 2.0 }],
            ..Default::default()
        };
        assert!(matches!(m.quadrant_amplitudes(), Err(FieldsError::ConflictingAmplitude([1, 1]))));
    }
}
