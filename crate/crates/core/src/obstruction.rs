//! Second-order solvability: x1-averaged bilinears of the rotational first-order velocity,
//! the averaged solvability expression, the obstruction function `f` and the verdict.

use serde::Serialize;
use thiserror::Error;

use crate::fields::{FieldSetup, FieldsError, KernelModeSet};
use crate::dispersion::ResonantSet;
use crate::profiles::{validate_profile, ProfileError};
use crate::riccati::{pressure_profile, RiccatiError, RiccatiSolver};
use crate::spectral::{pointwise_product, Grid3D, SpectralError, SymmetricVectorField, TrigField};

/// Ratio `max|U'f| / (max|U'| max|f|)` required to call an obstruction numerically established.
pub const POSITIVITY_THRESHOLD: f64 = 0.01;

/// Riccati tolerance for profiles that are differentiated twice on the collocation grid.
pub const FIELD_TOL: f64 = 1e-13;

/// `max|U'|` at or below which the flow counts as uniform.
pub const UNIFORM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ObstructionError {
    #[error(transparent)]
    Fields(#[from] FieldsError),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Per-mode vertical data on the setup's nodes.
#[derive(Debug, Clone)]
pub struct ModeData {
    pub index: [i64; 2],
    pub k: [f64; 2],
    pub a: f64,
    pub q: Vec<f64>,
    pub big_q: Vec<f64>,
}

impl ModeData {
    pub fn is_three_dimensional(&self) -> bool {
        self.index[1] != 0
    }
}

/// Riccati data for every non-mean amplitude, indices folded into the closed quadrant.
pub fn mode_data(setup: &FieldSetup, modes: &KernelModeSet, solver: &RiccatiSolver) -> Result<Vec<ModeData>, ObstructionError> {
    let u0 = setup.profile.surface_value();
    modes
        .quadrant_amplitudes()?
        .into_iter()
        .map(|(index, a)| {
            if index[0] == 0 {
                return Err(FieldsError::AxisMode(index).into());
            }
            let k = setup.lattice.wavevector(index[0], index[1]);
            let sol = solver.solve(&setup.profile, k, setup.vgrid.nodes())?;
            let q = sol.q().to_vec();
            let big_q = pressure_profile(sol, u0)?.values().to_vec();
            Ok(ModeData { index, k, a, q, big_q })
        })
        .collect()
}

/// `sum over 3D modes of term(mode, node) * sin(2 k2 x2)` on an `n2 x nodes` grid with `n1 = 1`.
fn closed_form(setup: &FieldSetup, data: &[ModeData], n2: usize, term: impl Fn(&ModeData, usize) -> f64 + Sync) -> Grid3D {
    let nodes = setup.vgrid.nodes();
    Grid3D::from_fn(setup.lattice, 1, n2, &setup.vgrid, |x| {
        let l = nodes.iter().position(|&v| v == x[2]).expect("grid node");
        data.iter()
            .filter(|m| m.is_three_dimensional())
            .map(|m| term(m, l) * (2.0 * m.k[1] * x[1]).sin())
            .sum()
    })
}

#[derive(Debug, Clone)]
pub struct AveragedBilinears {
    /// `<v2 v3>`, `d2 <v3^2>`, `d2 <v2^2>` from grid products.
    pub grid: [Grid3D; 3],
    pub closed: [Grid3D; 3],
    pub max_difference: f64,
}

fn avg_product(a: &TrigField, b: &TrigField, n1: usize, n2: usize) -> Result<Grid3D, SpectralError> {
    Ok(pointwise_product(&a.synthesize(n1, n2)?, &b.synthesize(n1, n2)?)?.x1_average())
}

/// x1-averages of the quadratic terms of the rotational velocity `v`.
///
/// `n1` must exceed twice the largest `i` so that the trapezoidal average is exact.
pub fn averaged_bilinears(
    v: &SymmetricVectorField,
    data: &[ModeData],
    setup: &FieldSetup,
    n1: usize,
    n2: usize,
) -> Result<AveragedBilinears, ObstructionError> {
    let (v2, v3) = (v.component(1), v.component(2));
    let g23 = avg_product(v2, v3, n1, n2)?;
    // d2 <f^2> = 2 <f d2 f>
    let g33 = avg_product(v3, &v3.d2(), n1, n2)?.map(|x| 2.0 * x);
    let g22 = avg_product(v2, &v2.d2(), n1, n2)?.map(|x| 2.0 * x);
    let u = setup.u_nodes();
    let w = |m: &ModeData, l: usize| m.a * m.a * m.big_q[l] * m.big_q[l] / (m.k[0] * m.k[0] * u[l] * u[l]);
    let c23 = closed_form(setup, data, n2, |m, l| -4.0 * w(m, l) * m.k[1] * m.q[l]);
    let c33 = closed_form(setup, data, n2, |m, l| -8.0 * w(m, l) * m.k[1] * m.q[l] * m.q[l]);
    let c22 = closed_form(setup, data, n2, |m, l| 8.0 * w(m, l) * m.k[1].powi(3));
    let grid = [g23, g33, g22];
    let closed = [c23, c33, c22];
    let mut max_difference = 0.0f64;
    for (g, c) in grid.iter().zip(&closed) {
        max_difference = max_difference.max(g.zip_map(c, |a, b| a - b)?.max_abs());
    }
    Ok(AveragedBilinears {
        grid,
        closed,
        max_difference,
    })
}

#[derive(Debug, Clone)]
pub struct SolvabilityAverage {
    /// `<(d2^2 - d3^2)(v2 v3) + d2 d3 (v3^2 - v2^2)>` from grid products.
    pub grid: Grid3D,
    /// `-8 U'/U^3 sum a^2 k2/k1^2 Q^2 (k1^2 - k2^2 + q^2) sin(2 k2 x2)`.
    pub closed: Grid3D,
    pub max_abs_grid: f64,
    pub max_abs_closed: f64,
    /// `max|grid - closed| / max|closed|`, or the absolute difference when `closed` vanishes.
    pub relative_difference: f64,
}

pub fn solvability_average(
    v: &SymmetricVectorField,
    data: &[ModeData],
    setup: &FieldSetup,
    n1: usize,
    n2: usize,
) -> Result<SolvabilityAverage, ObstructionError> {
    let (v2, v3) = (v.component(1), v.component(2));
    let s = |f: &TrigField| f.synthesize(n1, n2);
    let d = |f: &TrigField| -> Result<[Grid3D; 6], SpectralError> {
        let f2 = f.d2();
        let f3 = f.d3();
        Ok([s(f)?, s(&f2)?, s(&f3)?, s(&f2.d2())?, s(&f3.d3())?, s(&f2.d3())?])
    };
    let [a, a2, a3, a22, a33, a23] = d(v2)?;
    let [b, b2, b3, b22, b33, b23] = d(v3)?;
    let n3 = setup.vgrid.len();
    let mut vals = vec![0.0; n1 * n2 * n3];
    for (c, out) in vals.iter_mut().enumerate() {
        let at = |g: &Grid3D| g.values()[c];
        let (a, a2, a3, a22, a33, a23) = (at(&a), at(&a2), at(&a3), at(&a22), at(&a33), at(&a23));
        let (b, b2, b3, b22, b33, b23) = (at(&b), at(&b2), at(&b3), at(&b22), at(&b33), at(&b23));
        let d22 = a22 * b + 2.0 * a2 * b2 + a * b22;
        let d33 = a33 * b + 2.0 * a3 * b3 + a * b33;
        // d2 d3 (f^2) = 2 (f23 f + f2 f3)
        let m3 = 2.0 * (b23 * b + b2 * b3);
        let m2 = 2.0 * (a23 * a + a2 * a3);
        *out = d22 - d33 + m3 - m2;
    }
    let grid = a.with_values(vals)?.x1_average();
    let u = setup.u_nodes();
    let du = setup.du_nodes();
    let closed = closed_form(setup, data, n2, |m, l| {
        let (k1, k2) = (m.k[0], m.k[1]);
        -8.0 * du[l] / u[l].powi(3) * m.a * m.a * k2 / (k1 * k1)
            * m.big_q[l]
            * m.big_q[l]
            * (k1 * k1 - k2 * k2 + m.q[l] * m.q[l])
    });
    let max_abs_grid = grid.max_abs();
    let max_abs_closed = closed.max_abs();
    let diff = grid.zip_map(&closed, |x, y| x - y)?.max_abs();
    let relative_difference = if max_abs_closed > 0.0 { diff / max_abs_closed } else { diff };
    Ok(SolvabilityAverage {
        grid,
        closed,
        max_abs_grid,
        max_abs_closed,
        relative_difference,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeContribution {
    pub index: [i64; 2],
    pub k: [f64; 2],
    pub a: f64,
    pub f: Vec<f64>,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstructionProfile {
    pub nodes: Vec<f64>,
    pub f: Vec<f64>,
    pub f_prime: Vec<f64>,
    pub u_prime_f: Vec<f64>,
    pub contributions: Vec<ModeContribution>,
    /// Largest `delta` with `f' > 0` at every node of `(-d, -d + delta]`.
    pub positivity_delta: Option<f64>,
}

/// `f = sum a^2 k2^2/k1^2 Q^2 (k1^2 - k2^2 + q^2)` and `f' = 4 sum a^2 k2^2/k1^2 Q^2 q (k1^2 + (U'/U) q)`
/// over modes with `k1, k2 > 0`.
pub fn obstruction_f(setup: &FieldSetup, data: &[ModeData]) -> ObstructionProfile {
    let nodes = setup.vgrid.nodes().to_vec();
    let n = nodes.len();
    let u = setup.u_nodes();
    let du = setup.du_nodes();
    let mut f = vec![0.0; n];
    let mut f_prime = vec![0.0; n];
    let mut contributions = Vec::new();
    for m in data.iter().filter(|m| m.is_three_dimensional()) {
        let (k1, k2) = (m.k[0], m.k[1]);
        let w = m.a * m.a * k2 * k2 / (k1 * k1);
        let mut fm = vec![0.0; n];
        for l in 0..n {
            let (q, qq) = (m.q[l], m.big_q[l] * m.big_q[l]);
            fm[l] = w * qq * (k1 * k1 - k2 * k2 + q * q);
            f[l] += fm[l];
            f_prime[l] += 4.0 * w * qq * q * (k1 * k1 + du[l] / u[l] * q);
        }
        contributions.push(ModeContribution {
            index: m.index,
            k: m.k,
            a: m.a,
            max_abs: fm.iter().fold(0.0f64, |a, v| a.max(v.abs())),
            f: fm,
        });
    }
    let u_prime_f = f.iter().zip(&du).map(|(a, b)| a * b).collect();
    let mut positivity_delta = None;
    for l in 1..n {
        if f_prime[l] > 0.0 {
            positivity_delta = Some(nodes[l] - nodes[0]);
        } else {
            break;
        }
    }
    ObstructionProfile {
        nodes,
        f,
        f_prime,
        u_prime_f,
        contributions,
        positivity_delta,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Classification {
    UniformFlow,
    #[serde(rename = "KERNEL_2D_ONLY")]
    Kernel2dOnly,
    #[serde(rename = "OBSTRUCTED_3D")]
    Obstructed3d,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub classification: Classification,
    pub max_abs_u_prime: f64,
    pub max_abs_f: f64,
    pub max_abs_u_prime_f: f64,
    /// `max|U'f| / (max|U'| max|f|)`, zero when either factor vanishes.
    pub ratio: f64,
    pub threshold: f64,
    pub threshold_met: bool,
    pub profile: ObstructionProfile,
}

pub fn theorem_verdict(
    setup: &FieldSetup,
    resonant: &ResonantSet,
    modes: &KernelModeSet,
    solver: &RiccatiSolver,
) -> Result<Verdict, ObstructionError> {
    for (k, _) in modes.quadrant_amplitudes()? {
        if !resonant.contains(k) {
            return Err(FieldsError::NonResonantMode(k).into());
        }
    }
    let report = validate_profile(&setup.profile, 1024)?;
    let data = mode_data(setup, modes, solver)?;
    let profile = obstruction_f(setup, &data);
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let max_abs_u_prime = report.max_abs_derivative.max(max_abs(&setup.du_nodes()));
    let max_abs_f = max_abs(&profile.f);
    let max_abs_u_prime_f = max_abs(&profile.u_prime_f);
    let ratio = if max_abs_u_prime > 0.0 && max_abs_f > 0.0 {
        max_abs_u_prime_f / (max_abs_u_prime * max_abs_f)
    } else {
        0.0
    };
    let classification = if max_abs_u_prime <= UNIFORM_TOL {
        Classification::UniformFlow
    } else if data.iter().all(|m| !m.is_three_dimensional()) {
        Classification::Kernel2dOnly
    } else {
        Classification::Obstructed3d
    };
    Ok(Verdict {
        classification,
        max_abs_u_prime,
        max_abs_f,
        max_abs_u_prime_f,
        ratio,
        threshold: POSITIVITY_THRESHOLD,
        threshold_met: ratio > POSITIVITY_THRESHOLD,
        profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{calibrate_sigma, find_kernel_set, DEFAULT_MEMBERSHIP_TOL};
    use crate::fields::{assemble_kernel, KernelAmplitude};
    use crate::profiles::{LatticeSpec, ShearProfile, WaveParams};
    use crate::vertical::VerticalGrid;
    use std::sync::Arc;

    struct Case {
        setup: FieldSetup,
        solver: RiccatiSolver,
        resonant: ResonantSet,
    }

    fn case(profile: ShearProfile, target: [i64; 2]) -> Case {
        let lattice = LatticeSpec::new(2.0 * std::f64::consts::PI, 4.0).unwrap();
        let solver = RiccatiSolver::new(FIELD_TOL);
        let sigma = calibrate_sigma(&profile, 0.1, &lattice, target, &solver).unwrap();
        let params = WaveParams::capillary_gravity(0.1, sigma).unwrap();
        let vg = Arc::new(VerticalGrid::chebyshev(33, profile.depth()));
        let resonant = find_kernel_set(&profile, &params, &lattice, DEFAULT_MEMBERSHIP_TOL, &solver, vg.nodes()).unwrap();
        Case {
            setup: FieldSetup::new(profile, params, lattice, vg).unwrap(),
            solver,
            resonant,
        }
    }

    fn amps(k: [i64; 2], a: f64) -> KernelModeSet {
        KernelModeSet {
            modes: vec![KernelAmplitude { k, a }],
            ..Default::default()
        }
    }

    fn sheared() -> ShearProfile {
        ShearProfile::polynomial(vec![2.0, 1.0], 1.0).unwrap()
    }

    #[test]
    fn dual_paths_agree_for_sheared_mode() {
        let c = case(sheared(), [1, 1]);
        let m = amps([1, 1], 1.0);
        let kernel = assemble_kernel(&c.setup, &c.resonant, &m, &c.solver).unwrap();
        let data = mode_data(&c.setup, &m, &c.solver).unwrap();
        let b = averaged_bilinears(&kernel.v, &data, &c.setup, 8, 16).unwrap();
        assert!(b.max_difference < 1e-8, "{}", b.max_difference);
        let s = solvability_average(&kernel.v, &data, &c.setup, 8, 16).unwrap();
        assert!(s.max_abs_closed > 1e-3);
        assert!(s.relative_difference < 1e-7, "{}", s.relative_difference);
    }

    #[test]
    fn vanishing_cases() {
        let uniform = case(ShearProfile::constant(1.0, 1.0).unwrap(), [1, 1]);
        let flat2d = case(sheared(), [1, 0]);
        for (c, k) in [(uniform, [1, 1]), (flat2d, [1, 0])] {
            let m = amps(k, 1.0);
            let kernel = assemble_kernel(&c.setup, &c.resonant, &m, &c.solver).unwrap();
            let data = mode_data(&c.setup, &m, &c.solver).unwrap();
            let s = solvability_average(&kernel.v, &data, &c.setup, 8, 16).unwrap();
            assert!(s.max_abs_grid <= 1e-9 && s.max_abs_closed <= 1e-9, "{k:?}: {}", s.max_abs_grid);
        }
    }

    #[test]
    fn obstruction_function_properties() {
        let c = case(sheared(), [1, 1]);
        let d1 = mode_data(&c.setup, &amps([1, 1], 1.0), &c.solver).unwrap();
        let d2 = mode_data(&c.setup, &amps([1, 1], 2.0), &c.solver).unwrap();
        let (p1, p2) = (obstruction_f(&c.setup, &d1), obstruction_f(&c.setup, &d2));
        for (a, b) in p1.f.iter().zip(&p2.f) {
            assert!((b - 4.0 * a).abs() <= 1e-13 * a.abs().max(1.0));
        }
        assert!(p1.positivity_delta.unwrap() > 0.0);
        // collocation derivative of f against the analytic f'
        let fd = c.setup.vgrid.differentiate(&p1.f);
        let scale = p1.f_prime.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let n = fd.len();
        for l in 2..n - 2 {
            assert!((fd[l] - p1.f_prime[l]).abs() <= 1e-6 * scale, "{l}: {} vs {}", fd[l], p1.f_prime[l]);
        }
        let none = mode_data(&c.setup, &KernelModeSet::default(), &c.solver).unwrap();
        let p0 = obstruction_f(&c.setup, &none);
        assert!(p0.f.iter().chain(&p0.f_prime).all(|&v| v == 0.0));
    }

    #[test]
    fn verdicts() {
        let c = case(sheared(), [1, 1]);
        let v = theorem_verdict(&c.setup, &c.resonant, &amps([1, 1], 1.0), &c.solver).unwrap();
        assert_eq!(v.classification, Classification::Obstructed3d);
        assert!(v.threshold_met, "ratio {}", v.ratio);
        let c2 = case(sheared(), [1, 0]);
        let v = theorem_verdict(&c2.setup, &c2.resonant, &amps([1, 0], 1.0), &c2.solver).unwrap();
        assert_eq!(v.classification, Classification::Kernel2dOnly);
        let u = case(ShearProfile::constant(1.0, 1.0).unwrap(), [1, 1]);
        let v = theorem_verdict(&u.setup, &u.resonant, &amps([1, 1], 1.0), &u.solver).unwrap();
        assert_eq!(v.classification, Classification::UniformFlow);
        assert!(v.max_abs_u_prime_f <= 1e-12);
        assert!(matches!(
            theorem_verdict(&u.setup, &u.resonant, &amps([3, 2], 1.0), &u.solver),
            Err(ObstructionError::Fields(FieldsError::NonResonantMode(_)))
        ));
    }
}
