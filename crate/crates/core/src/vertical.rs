//! Vertical collocation on `[-d, 0]`: node layouts, differentiation and quadrature.

use std::f64::consts::PI;

use serde::Serialize;

use crate::spline::CubicSpline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VerticalKind {
    Chebyshev,
    Uniform,
}

/// Ascending nodes from `-d` to `0`, both endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct VerticalGrid {
    kind: VerticalKind,
    depth: f64,
    nodes: Vec<f64>,
    /// Row-major differentiation matrix (Chebyshev only).
    diff: Vec<f64>,
    weights: Vec<f64>,
}

impl VerticalGrid {
    /// Chebyshev–Gauss–Lobatto nodes; `n >= 2`.
    pub fn chebyshev(n: usize, depth: f64) -> Self {
        assert!(n >= 2, "need at least two vertical nodes");
        let m = n - 1;
        let s: Vec<f64> = (0..n).map(|j| -(PI * j as f64 / m as f64).cos()).collect();
        let mut nodes: Vec<f64> = s.iter().map(|&t| 0.5 * depth * (t - 1.0)).collect();
        nodes[0] = -depth;
        nodes[m] = 0.0;
        if m.is_multiple_of(2) {
            nodes[m / 2] = -0.5 * depth;
        }
        // barycentric weights of the Lobatto points
        let w: Vec<f64> = (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == m {
                    0.5 * sign
                } else {
                    sign
                }
            })
            .collect();
        let mut diff = vec![0.0; n * n];
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                if i != j {
                    let v = (w[j] / w[i]) / (s[i] - s[j]);
                    diff[i * n + j] = v;
                    row_sum += v;
                }
            }
            diff[i * n + i] = -row_sum;
        }
        let scale = 2.0 / depth;
        diff.iter_mut().for_each(|v| *v *= scale);
        let weights = clenshaw_curtis(n, depth);
        Self {
            kind: VerticalKind::Chebyshev,
            depth,
            nodes,
            diff,
            weights,
        }
    }

    /// Equispaced nodes; derivatives via natural cubic splines.
    pub fn uniform(n: usize, depth: f64) -> Self {
        assert!(n >= 4, "uniform grids need at least four nodes");
        let nodes: Vec<f64> = (0..n).map(|i| -depth + depth * i as f64 / (n - 1) as f64).collect();
        let h = depth / (n - 1) as f64;
        let mut weights = vec![h; n];
        weights[0] = 0.5 * h;
        weights[n - 1] = 0.5 * h;
        Self {
            kind: VerticalKind::Uniform,
            depth,
            nodes,
            diff: Vec::new(),
            weights,
        }
    }

    pub fn kind(&self) -> VerticalKind {
        self.kind
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Quadrature weights integrating over `[-d, 0]`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn differentiate(&self, values: &[f64]) -> Vec<f64> {
        let n = self.nodes.len();
        debug_assert_eq!(values.len(), n);
        match self.kind {
            VerticalKind::Chebyshev => (0..n)
                .map(|i| {
                    let row = &self.diff[i * n..(i + 1) * n];
                    row.iter().zip(values).map(|(a, b)| a * b).sum()
                })
                .collect(),
            VerticalKind::Uniform => {
                let s = CubicSpline::natural(self.nodes.clone(), values.to_vec());
                self.nodes.iter().map(|&x| s.derivative(x)).collect()
            }
        }
    }

    /// Evaluates the interpolant of nodal `values` at an arbitrary `x3`.
    pub fn interpolate(&self, values: &[f64], x3: f64) -> f64 {
        match self.kind {
            VerticalKind::Chebyshev => {
                let n = self.nodes.len();
                let m = n - 1;
                let mut num = 0.0;
                let mut den = 0.0;
                for j in 0..n {
                    let dx = x3 - self.nodes[j];
                    if dx == 0.0 {
                        return values[j];
                    }
                    let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
                    if j == 0 || j == m {
                        w *= 0.5;
                    }
                    num += w / dx * values[j];
                    den += w / dx;
                }
                num / den
            }
            VerticalKind::Uniform => CubicSpline::natural(self.nodes.clone(), values.to_vec()).eval(x3),
        }
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Clenshaw–Curtis weights for Lobatto nodes mapped to `[-d, 0]`.
fn clenshaw_curtis(n: usize, depth: f64) -> Vec<f64> {
    let m = n - 1;
    if m == 1 {
        return vec![0.5 * depth; 2];
    }
    let mut w = vec![0.0; n];
    for (j, wj) in w.iter_mut().enumerate() {
        let theta = PI * j as f64 / m as f64;
        let mut s = 0.0;
        for k in 1..=m / 2 {
            let b = if 2 * k == m { 1.0 } else { 2.0 };
            s += b / (4.0 * (k * k) as f64 - 1.0) * (2.0 * k as f64 * theta).cos();
        }
        let c = if j == 0 || j == m { 1.0 } else { 2.0 };
        *wj = c / m as f64 * (1.0 - s);
    }
    // weights above integrate over [-1, 1]
    w.iter().map(|v| v * 0.5 * depth).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chebyshev_nodes_include_endpoints() {
        let g = VerticalGrid::chebyshev(33, 2.0);
        assert_eq!(g.nodes()[0], -2.0);
        assert_eq!(g.nodes()[32], 0.0);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn chebyshev_derivative_is_spectral() {
        let g = VerticalGrid::chebyshev(33, 1.0);
        let v: Vec<f64> = g.nodes().iter().map(|x| (2.0 * x).sin() * x.exp()).collect();
        let d = g.differentiate(&v);
        for (x, dv) in g.nodes().iter().zip(&d) {
            let exact = (2.0 * (2.0 * x).cos() + (2.0 * x).sin()) * x.exp();
            assert!((dv - exact).abs() < 1e-12, "{x}: {dv} vs {exact}");
        }
    }

    #[test]
    fn affine_profile_derivative() {
        let eta = 0.7;
        let d = 1.5;
        for g in [VerticalGrid::chebyshev(17, d), VerticalGrid::uniform(17, d)] {
            let v: Vec<f64> = g.nodes().iter().map(|x| (1.0 + x / d) * eta).collect();
            for dv in g.differentiate(&v) {
                assert!((dv - eta / d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadrature_and_interpolation() {
        let g = VerticalGrid::chebyshev(21, 1.0);
        let v: Vec<f64> = g.nodes().iter().map(|x| x.exp()).collect();
        assert!((g.integrate(&v) - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
        assert!((g.interpolate(&v, -0.3141) - (-0.3141f64).exp()).abs() < 1e-14);
    }
}
