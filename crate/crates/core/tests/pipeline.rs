//! End-to-end checks across modules against independent oracles.

use std::f64::consts::PI;
use std::sync::Arc;

use shearwave::dispersion::{calibrate_sigma, find_kernel_set, DEFAULT_MEMBERSHIP_TOL};
use shearwave::fields::{assemble_kernel, FieldSetup, KernelAmplitude, KernelModeSet};
use shearwave::obstruction::{mode_data, solvability_average, FIELD_TOL};
use shearwave::profiles::{logderiv_extrema, LatticeSpec, ShearProfile, WaveParams};
use shearwave::riccati::{pressure_profile, solve_riccati_on, RiccatiSolver};
use shearwave::vertical::VerticalGrid;

fn lattice() -> LatticeSpec {
    LatticeSpec::new(2.0 * PI, 4.0).unwrap()
}

/// Fixed-step RK4 for `q' = 2 (U'/U) q + |k|^2 - q^2`, `q(-d) = 0`, reported at `x3 = 0`.
fn rk4_surface_q(profile: &ShearProfile, k_sq: f64, steps: usize) -> f64 {
    let d = profile.depth();
    let h = d / steps as f64;
    let f = |x: f64, q: f64| 2.0 * profile.log_derivative(x) * q + k_sq - q * q;
    let mut q = 0.0;
    for n in 0..steps {
        let x = -d + n as f64 * h;
        let k1 = f(x, q);
        let k2 = f(x + h / 2.0, q + h / 2.0 * k1);
        let k3 = f(x + h / 2.0, q + h / 2.0 * k2);
        let k4 = f(x + h, q + h * k3);
        q += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    q
}

#[test]
fn riccati_matches_rk4_oracle_on_sheared_profiles() {
    let nodes = VerticalGrid::chebyshev(17, 1.0).nodes().to_vec();
    for coeffs in [vec![2.0, 1.0], vec![1.5, 0.5, 0.25], vec![1.0, -0.3, 0.2, 0.1]] {
        let p = ShearProfile::polynomial(coeffs, 1.0).unwrap();
        for k in [[1.0, 0.0], [1.0, 1.0], [3.0, -2.0]] {
            let sol = solve_riccati_on(&p, k, 1e-12, &nodes).unwrap();
            let oracle = rk4_surface_q(&p, k[0] * k[0] + k[1] * k[1], 100_000);
            assert!((sol.q_surface() - oracle).abs() < 1e-10, "{k:?}: {} vs {oracle}", sol.q_surface());
        }
    }
}

#[test]
fn exponential_profile_has_constant_log_derivative() {
    // Taylor series of exp, exact to roundoff on [-1, 0]
    let coeffs: Vec<f64> = (0..24).scan(1.0, |c, n| {
        let out = *c;
        *c /= (n + 1) as f64;
        Some(out)
    })
    .collect();
    let p = ShearProfile::polynomial(coeffs, 1.0).unwrap();
    let (lo, hi) = logderiv_extrema(&p);
    assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12, "({lo}, {hi})");
}

struct Case {
    setup: FieldSetup,
    kernel_v: shearwave::spectral::SymmetricVectorField,
    modes: KernelModeSet,
    solver: RiccatiSolver,
}

fn sheared_case(n3: usize) -> Case {
    let profile = ShearProfile::polynomial(vec![2.0, 1.0], 1.0).unwrap();
    let solver = RiccatiSolver::new(FIELD_TOL);
    let sigma = calibrate_sigma(&profile, 1.0, &lattice(), [1, 1], &solver).unwrap();
    let params = WaveParams::capillary_gravity(1.0, sigma).unwrap();
    let vg = Arc::new(VerticalGrid::chebyshev(n3, 1.0));
    let set = find_kernel_set(&profile, &params, &lattice(), DEFAULT_MEMBERSHIP_TOL, &solver, vg.nodes()).unwrap();
    let setup = FieldSetup::new(profile, params, lattice(), vg).unwrap();
    let modes = KernelModeSet {
        modes: vec![KernelAmplitude { k: [1, 1], a: 0.7 }],
        ..Default::default()
    };
    let kernel = assemble_kernel(&setup, &set, &modes, &solver).unwrap();
    Case {
        setup,
        kernel_v: kernel.v,
        modes,
        solver,
    }
}

#[test]
fn single_mode_v2_v3_average_matches_closed_form() {
    let c = sheared_case(17);
    let p = &c.setup.profile;
    let k = lattice().wavevector(1, 1);
    let a = 0.7;
    let nodes = c.setup.vgrid.nodes().to_vec();
    let sol = Arc::new(solve_riccati_on(p, k, FIELD_TOL, &nodes).unwrap());
    let big_q = pressure_profile(sol.clone(), p.surface_value()).unwrap();
    let quad = 64;
    for (l, &x3) in nodes.iter().enumerate() {
        for x2 in [0.1, 0.37, 1.3, 2.9] {
            // x1 average by the trapezoid rule, exact for the band-limited product
            let avg: f64 = (0..quad)
                .map(|n| {
                    let x1 = 2.0 * PI * n as f64 / quad as f64;
                    let v = c.kernel_v.eval([x1, x2, x3]);
                    v[1] * v[2]
                })
                .sum::<f64>()
                / quad as f64;
            let (q, qq, u) = (sol.q()[l], big_q.values()[l], p.value(x3));
            let expected = -4.0 * a * a * k[1] * qq * qq * q / (k[0] * k[0] * u * u) * (2.0 * k[1] * x2).sin();
            assert!((avg - expected).abs() < 1e-10 * (1.0 + expected.abs()), "x3 {x3}, x2 {x2}: {avg} vs {expected}");
        }
    }
}

#[test]
fn solvability_grid_path_is_refinement_stable() {
    let c = sheared_case(33);
    let data = mode_data(&c.setup, &c.modes, &c.solver).unwrap();
    let coarse = solvability_average(&c.kernel_v, &data, &c.setup, 8, 8).unwrap();
    let fine = solvability_average(&c.kernel_v, &data, &c.setup, 32, 32).unwrap();
    assert!((coarse.max_abs_grid - fine.max_abs_grid).abs() < 1e-9 * fine.max_abs_grid);
    assert!(fine.relative_difference < 1e-7 && coarse.relative_difference < 1e-7);
}
