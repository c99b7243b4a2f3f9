//! Dormand–Prince 5(4) embedded Runge–Kutta integrator with step-size control.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at x = {0}")]
    StepUnderflow(f64),
    #[error("maximum number of steps ({0}) exceeded")]
    TooManySteps(usize),
    #[error("non-finite state at x = {0}")]
    NonFinite(f64),
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// One accepted step: abscissa, state and derivative at the step end.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord<const N: usize> {
    pub x: f64,
    pub y: [f64; N],
    pub dy: [f64; N],
}

#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    /// State at each requested output abscissa.
    pub outputs: Vec<[f64; N]>,
    /// Every accepted step including the initial point, for dense evaluation.
    pub steps: Vec<StepRecord<N>>,
    /// Sum of the accepted local error estimates (component-wise max).
    pub error_estimate: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DormandPrince {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl DormandPrince {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            max_steps: 1_000_000,
        }
    }

    /// Integrates from `x0` through the increasing abscissae `outputs`, landing on each exactly.
    pub fn integrate<const N: usize, F>(
        &self,
        f: F,
        x0: f64,
        y0: [f64; N],
        outputs: &[f64],
    ) -> Result<Trajectory<N>, OdeError>
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
    {
        let mut x = x0;
        let mut y = y0;
        let mut k1 = f(x, &y);
        let mut out = Vec::with_capacity(outputs.len());
        let mut steps = vec![StepRecord { x, y, dy: k1 }];
        let mut err_sum = 0.0;
        let span = outputs.last().map_or(0.0, |&e| (e - x0).abs()).max(f64::MIN_POSITIVE);
        let mut h = 1e-3 * span;
        let mut n_steps = 0;

        for &target in outputs {
            while x < target {
                if n_steps >= self.max_steps {
                    return Err(OdeError::TooManySteps(self.max_steps));
                }
                let last = x + h >= target || (target - x - h) < 1e-14 * span;
                let step = if last { target - x } else { h };
                if step < 1e-15 * span {
                    return Err(OdeError::StepUnderflow(x));
                }
                let (y_new, k7, err) = Self::trial(&f, x, &y, &k1, step, self.rtol, self.atol);
                n_steps += 1;
                if !err.is_finite() {
                    h = 0.25 * step;
                    continue;
                }
                if err <= 1.0 {
                    x = if last { target } else { x + step };
                    y = y_new;
                    k1 = k7;
                    if y.iter().any(|v| !v.is_finite()) {
                        return Err(OdeError::NonFinite(x));
                    }
                    err_sum += err * self.atol.max(self.rtol * y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                    steps.push(StepRecord { x, y, dy: k1 });
                    let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    // a clipped landing step says little about the natural step length
                    if !last || step >= h {
                        h = step * fac;
                    }
                } else {
                    h = step * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                }
            }
            out.push(y);
        }

        Ok(Trajectory {
            outputs: out,
            steps,
            error_estimate: err_sum,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn trial<const N: usize, F>(
        f: &F,
        x: f64,
        y: &[f64; N],
        k1: &[f64; N],
        h: f64,
        rtol: f64,
        atol: f64,
    ) -> ([f64; N], [f64; N], f64)
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
    {
        let comb = |terms: &[(f64, &[f64; N])]| {
            let mut r = *y;
            for (c, k) in terms {
                for i in 0..N {
                    r[i] += h * c * k[i];
                }
            }
            r
        };
        let k2 = f(x + C2 * h, &comb(&[(A21, k1)]));
        let k3 = f(x + C3 * h, &comb(&[(A31, k1), (A32, &k2)]));
        let k4 = f(x + C4 * h, &comb(&[(A41, k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(x + C5 * h, &comb(&[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(x + h, &comb(&[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y_new = comb(&[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = f(x + h, &y_new);
        let mut err = 0.0f64;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = atol + rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / scale).abs());
        }
        (y_new, k7, err)
    }
}

/// Cubic Hermite interpolation through accepted steps.
pub fn hermite_eval<const N: usize>(steps: &[StepRecord<N>], x: f64, component: usize) -> f64 {
    let n = steps.len();
    if n == 1 {
        return steps[0].y[component];
    }
    let i = match steps.partition_point(|s| s.x <= x) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    };
    let (a, b) = (&steps[i], &steps[i + 1]);
    let h = b.x - a.x;
    let t = (x - a.x) / h;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * a.y[component] + h10 * h * a.dy[component] + h01 * b.y[component] + h11 * h * b.dy[component]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let dp = DormandPrince::new(1e-12, 1e-14);
        let xs: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let tr = dp.integrate(|_, y: &[f64; 1]| [y[0]], 0.0, [1.0], &xs).unwrap();
        for (x, y) in xs.iter().zip(&tr.outputs) {
            assert!((y[0] - x.exp()).abs() < 1e-11 * x.exp());
        }
        assert!((hermite_eval(&tr.steps, 0.537, 0) - 0.537f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn harmonic_oscillator() {
        let dp = DormandPrince::new(1e-11, 1e-13);
        let tr = dp
            .integrate(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [0.0, 1.0], &[1.0, 5.0, 10.0])
            .unwrap();
        for (x, y) in [1.0f64, 5.0, 10.0].iter().zip(&tr.outputs) {
            assert!((y[0] - x.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn blow_up_reports_failure() {
        let dp = DormandPrince::new(1e-10, 1e-12);
        // y' = y^2, y(0)=1 blows up at x = 1
        let r = dp.integrate(|_, y: &[f64; 1]| [y[0] * y[0]], 0.0, [1.0], &[2.0]);
        assert!(r.is_err());
    }
}
