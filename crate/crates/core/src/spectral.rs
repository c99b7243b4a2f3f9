//! Real trigonometric representation of reflection-symmetric, lattice-periodic fields.
//!
//! A [`TrigField`] stores, for each non-negative index pair `(i, j)`, the vertical
//! profile multiplying `b1(i kappa1 x1) b2(j kappa2 x2)`, where each `b` is a cosine or
//! a sine depending on the field's [`Parity`]. Horizontal derivatives act exactly on
//! the coefficients and flip the parity along their axis; vertical derivatives use the
//! collocation operator of the attached [`VerticalGrid`].
//!
//! Symmetric scalars (`f(R_j x) = f(x)`) are cosine–cosine. A symmetric vector field
//! (`v(R_j x) = (-1)^j R_j v(x)`) has components on cos·cos, sin·sin and sin·cos. The
//! stored profiles are the real amplitudes of those basis functions, so the sign of the
//! second component and the factor `i` of the third component of the exponential series
//! are absorbed into the data.

use std::collections::BTreeMap;
use std::ops::Deref;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::profiles::LatticeSpec;
use crate::vertical::VerticalGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("mode index {index} along axis {axis} violates Nyquist for {points} points")]
    Alias { axis: usize, index: u32, points: usize },
    #[error("grid shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch([usize; 3], [usize; 3]),
    #[error("parity mismatch: {0:?} vs {1:?}")]
    ParityMismatch([Parity; 2], [Parity; 2]),
    #[error("field has no vertical grid")]
    NoVerticalGrid,
    #[error("horizontal grid sizes must be even and positive, got {0}x{1}")]
    OddGrid(usize, usize),
    #[error("expected {expected} vertical levels, got {got}")]
    LevelMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Cos,
    Sin,
}

impl Parity {
    fn flip(self) -> Self {
        match self {
            Self::Cos => Self::Sin,
            Self::Sin => Self::Cos,
        }
    }

    #[inline]
    pub fn basis(self, phase: f64) -> f64 {
        match self {
            Self::Cos => phase.cos(),
            Self::Sin => phase.sin(),
        }
    }

    /// Coefficient of `b'(k x)` in terms of the flipped basis: `cos' = -k sin`, `sin' = k cos`.
    fn derivative_factor(self, k: f64) -> f64 {
        match self {
            Self::Cos => -k,
            Self::Sin => k,
        }
    }
}

pub const SYMMETRIC_SCALAR: [Parity; 2] = [Parity::Cos, Parity::Cos];
pub const SYMMETRIC_VECTOR: [[Parity; 2]; 3] = [
    [Parity::Cos, Parity::Cos],
    [Parity::Sin, Parity::Sin],
    [Parity::Sin, Parity::Cos],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X1,
    X2,
    X3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrigField {
    lattice: LatticeSpec,
    vgrid: Option<Arc<VerticalGrid>>,
    parity: [Parity; 2],
    modes: BTreeMap<(u32, u32), Vec<f64>>,
}

impl TrigField {
    pub fn new(lattice: LatticeSpec, vgrid: Arc<VerticalGrid>, parity: [Parity; 2]) -> Self {
        Self {
            lattice,
            vgrid: Some(vgrid),
            parity,
            modes: BTreeMap::new(),
        }
    }

    /// Field on the surface only (one vertical level, no `x3` dependence).
    pub fn surface(lattice: LatticeSpec, parity: [Parity; 2]) -> Self {
        Self {
            lattice,
            vgrid: None,
            parity,
            modes: BTreeMap::new(),
        }
    }

    /// Same lattice, grid and parity, no modes.
    pub fn empty_like(&self) -> Self {
        Self {
            lattice: self.lattice,
            vgrid: self.vgrid.clone(),
            parity: self.parity,
            modes: BTreeMap::new(),
        }
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn vgrid(&self) -> Option<&Arc<VerticalGrid>> {
        self.vgrid.as_ref()
    }

    pub fn parity(&self) -> [Parity; 2] {
        self.parity
    }

    pub fn levels(&self) -> usize {
        self.vgrid.as_ref().map_or(1, |g| g.len())
    }

    pub fn is_surface(&self) -> bool {
        self.vgrid.is_none()
    }

    pub fn is_zero(&self) -> bool {
        self.modes.values().all(|p| p.iter().all(|&v| v == 0.0))
    }

    pub fn modes(&self) -> impl Iterator<Item = ((u32, u32), &[f64])> {
        self.modes.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn mode(&self, i: u32, j: u32) -> Option<&[f64]> {
        self.modes.get(&(i, j)).map(|v| v.as_slice())
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    /// Largest indices present along each axis.
    pub fn max_index(&self) -> (u32, u32) {
        self.modes
            .keys()
            .fold((0, 0), |(a, b), &(i, j)| (a.max(i), b.max(j)))
    }

    fn vanishes(&self, i: u32, j: u32) -> bool {
        (self.parity[0] == Parity::Sin && i == 0) || (self.parity[1] == Parity::Sin && j == 0)
    }

    /// Adds `profile` to mode `(i, j)`; modes whose basis function is identically zero are dropped.
    pub fn add_mode(&mut self, i: u32, j: u32, profile: &[f64]) {
        assert_eq!(profile.len(), self.levels(), "profile length must match vertical levels");
        if self.vanishes(i, j) {
            return;
        }
        match self.modes.get_mut(&(i, j)) {
            Some(p) => p.iter_mut().zip(profile).for_each(|(a, b)| *a += b),
            None => {
                self.modes.insert((i, j), profile.to_vec());
            }
        }
    }

    pub fn with_mode(mut self, i: u32, j: u32, profile: &[f64]) -> Self {
        self.add_mode(i, j, profile);
        self
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.modes.values_mut().for_each(|p| p.iter_mut().for_each(|v| *v *= c));
        out
    }

    /// Multiplies every profile pointwise by a function of `x3` sampled at the nodes.
    pub fn scale_profile(&self, factor: &[f64]) -> Self {
        assert_eq!(factor.len(), self.levels());
        let mut out = self.clone();
        out.modes
            .values_mut()
            .for_each(|p| p.iter_mut().zip(factor).for_each(|(v, f)| *v *= f));
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self, SpectralError> {
        self.axpy(1.0, other)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self, SpectralError> {
        if self.parity != other.parity {
            return Err(SpectralError::ParityMismatch(self.parity, other.parity));
        }
        if self.levels() != other.levels() {
            return Err(SpectralError::LevelMismatch {
                expected: self.levels(),
                got: other.levels(),
            });
        }
        let mut out = self.clone();
        for (&(i, j), p) in &other.modes {
            let scaled: Vec<f64> = p.iter().map(|v| c * v).collect();
            out.add_mode(i, j, &scaled);
        }
        Ok(out)
    }

    /// Exact horizontal derivative or collocation vertical derivative.
    pub fn differentiate(&self, axis: Axis) -> Result<Self, SpectralError> {
        match axis {
            Axis::X1 | Axis::X2 => {
                let a = if axis == Axis::X1 { 0 } else { 1 };
                let kappa = if a == 0 { self.lattice.kappa1() } else { self.lattice.kappa2() };
                let mut parity = self.parity;
                parity[a] = parity[a].flip();
                let mut out = Self {
                    lattice: self.lattice,
                    vgrid: self.vgrid.clone(),
                    parity,
                    modes: BTreeMap::new(),
                };
                for (&(i, j), p) in &self.modes {
                    let n = if a == 0 { i } else { j };
                    if n == 0 {
                        continue;
                    }
                    let f = self.parity[a].derivative_factor(n as f64 * kappa);
                    let d: Vec<f64> = p.iter().map(|v| f * v).collect();
                    out.add_mode(i, j, &d);
                }
                Ok(out)
            }
            Axis::X3 => match &self.vgrid {
                None => Ok(self.empty_like()),
                Some(g) => {
                    let mut out = self.empty_like();
                    for (&(i, j), p) in &self.modes {
                        out.modes.insert((i, j), g.differentiate(p));
                    }
                    Ok(out)
                }
            },
        }
    }

    pub fn d1(&self) -> Self {
        self.differentiate(Axis::X1).expect("horizontal derivative")
    }

    pub fn d2(&self) -> Self {
        self.differentiate(Axis::X2).expect("horizontal derivative")
    }

    pub fn d3(&self) -> Self {
        self.differentiate(Axis::X3).expect("vertical derivative")
    }

    /// Mean over one period in `x1`.
    pub fn x1_average(&self) -> Self {
        let mut out = self.empty_like();
        if self.parity[0] == Parity::Cos {
            for (&(i, j), p) in &self.modes {
                if i == 0 {
                    out.modes.insert((0, j), p.clone());
                }
            }
        }
        out
    }

    /// Profile-valued restriction to one vertical level, as a surface field.
    pub fn level(&self, l: usize) -> Self {
        let mut out = Self::surface(self.lattice, self.parity);
        for (&(i, j), p) in &self.modes {
            out.modes.insert((i, j), vec![p[l]]);
        }
        out
    }

    /// Extends a surface field as `(1 + x3/d) * value`, the lift used by the flattening.
    pub fn lift_linear(&self, vgrid: Arc<VerticalGrid>) -> Self {
        let d = vgrid.depth();
        let w: Vec<f64> = vgrid.nodes().iter().map(|x| 1.0 + x / d).collect();
        self.extend_with(vgrid, &w)
    }

    /// Extends a surface field as `value * weight(x3)`.
    pub fn extend_with(&self, vgrid: Arc<VerticalGrid>, weight: &[f64]) -> Self {
        assert!(self.is_surface());
        let mut out = TrigField::new(self.lattice, vgrid, self.parity);
        for (&(i, j), p) in &self.modes {
            let prof: Vec<f64> = weight.iter().map(|w| w * p[0]).collect();
            out.modes.insert((i, j), prof);
        }
        out
    }

    /// Value at `(x1, x2)` on vertical level `l`.
    pub fn eval_level(&self, x1: f64, x2: f64, l: usize) -> f64 {
        let (k1, k2) = (self.lattice.kappa1(), self.lattice.kappa2());
        self.modes
            .iter()
            .map(|(&(i, j), p)| {
                p[l] * self.parity[0].basis(i as f64 * k1 * x1) * self.parity[1].basis(j as f64 * k2 * x2)
            })
            .sum()
    }

    /// Value at an arbitrary point, interpolating vertically.
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        let (k1, k2) = (self.lattice.kappa1(), self.lattice.kappa2());
        self.modes
            .iter()
            .map(|(&(i, j), p)| {
                let v = match &self.vgrid {
                    Some(g) => g.interpolate(p, x[2]),
                    None => p[0],
                };
                v * self.parity[0].basis(i as f64 * k1 * x[0]) * self.parity[1].basis(j as f64 * k2 * x[1])
            })
            .sum()
    }

    /// Largest absolute coefficient difference, treating missing modes as zero.
    pub fn max_abs_difference(&self, other: &Self) -> f64 {
        let mut m = 0.0f64;
        for (k, p) in &self.modes {
            match other.modes.get(k) {
                Some(q) => p.iter().zip(q).for_each(|(a, b)| m = m.max((a - b).abs())),
                None => p.iter().for_each(|a| m = m.max(a.abs())),
            }
        }
        for (k, q) in &other.modes {
            if !self.modes.contains_key(k) {
                q.iter().for_each(|b| m = m.max(b.abs()));
            }
        }
        m
    }

    /// Sum over modes of the profile maximum; an upper bound for the sup norm.
    pub fn coefficient_max_norm(&self) -> f64 {
        self.modes
            .values()
            .map(|p| p.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .sum()
    }

    /// Root-mean-square over the periodic cell and depth (Parseval).
    pub fn rms(&self) -> f64 {
        let (weights, span) = match &self.vgrid {
            Some(g) => (g.weights().to_vec(), g.depth()),
            None => (vec![1.0], 1.0),
        };
        let mut total = 0.0;
        for (&(i, j), p) in &self.modes {
            let basis_mean = |par: Parity, n: u32| match (par, n) {
                (Parity::Cos, 0) => 1.0,
                _ => 0.5,
            };
            let w = basis_mean(self.parity[0], i) * basis_mean(self.parity[1], j);
            total += w * p.iter().zip(&weights).map(|(v, q)| v * v * q).sum::<f64>();
        }
        (total / span).sqrt()
    }

    pub fn synthesize(&self, n1: usize, n2: usize) -> Result<Grid3D, SpectralError> {
        if n1 == 0 || n2 == 0 || n1 % 2 == 1 || n2 % 2 == 1 {
            return Err(SpectralError::OddGrid(n1, n2));
        }
        let mut grid = Grid3D::zeros(self.lattice, n1, n2, self.vertical_layout());
        grid.parity = Some(self.parity);
        let levels = self.levels();
        let (k1, k2) = (self.lattice.kappa1(), self.lattice.kappa2());
        let x1s = grid.x1_nodes();
        let x2s = grid.x2_nodes();
        let b2: BTreeMap<u32, Vec<f64>> = self
            .modes
            .keys()
            .map(|&(_, j)| (j, x2s.iter().map(|&x| self.parity[1].basis(j as f64 * k2 * x)).collect()))
            .collect();
        grid.data
            .par_chunks_mut(n2 * levels)
            .enumerate()
            .for_each(|(i1, slab)| {
                for (&(i, j), p) in &self.modes {
                    let c1 = self.parity[0].basis(i as f64 * k1 * x1s[i1]);
                    if c1 == 0.0 {
                        continue;
                    }
                    let row = &b2[&j];
                    for (i2, cell) in slab.chunks_mut(levels).enumerate() {
                        let c = c1 * row[i2];
                        cell.iter_mut().zip(p).for_each(|(v, a)| *v += c * a);
                    }
                }
            });
        Ok(grid)
    }

    fn vertical_layout(&self) -> VerticalLayout {
        match &self.vgrid {
            Some(g) => VerticalLayout {
                x3: g.nodes().to_vec(),
                weights: g.weights().iter().map(|w| w / g.depth()).collect(),
            },
            None => VerticalLayout {
                x3: vec![0.0],
                weights: vec![1.0],
            },
        }
    }

    /// Discrete projection of grid values onto modes `i <= max.0`, `j <= max.1`.
    pub fn analyze(
        grid: &Grid3D,
        parity: [Parity; 2],
        max: (u32, u32),
        vgrid: Option<Arc<VerticalGrid>>,
    ) -> Result<Self, SpectralError> {
        let (n1, n2, levels) = (grid.n1, grid.n2, grid.n3());
        if 2 * max.0 as usize >= n1 {
            return Err(SpectralError::Alias {
                axis: 1,
                index: max.0,
                points: n1,
            });
        }
        if 2 * max.1 as usize >= n2 {
            return Err(SpectralError::Alias {
                axis: 2,
                index: max.1,
                points: n2,
            });
        }
        if let Some(g) = &vgrid {
            if g.len() != levels {
                return Err(SpectralError::LevelMismatch {
                    expected: g.len(),
                    got: levels,
                });
            }
        }
        let lattice = grid.lattice;
        let (k1, k2) = (lattice.kappa1(), lattice.kappa2());
        let x1s = grid.x1_nodes();
        let x2s = grid.x2_nodes();
        let norm = |par: Parity, n: u32, pts: usize| match (par, n) {
            (Parity::Cos, 0) => 1.0 / pts as f64,
            _ => 2.0 / pts as f64,
        };
        let mut field = Self {
            lattice,
            vgrid,
            parity,
            modes: BTreeMap::new(),
        };
        let indices: Vec<(u32, u32)> = (0..=max.0)
            .flat_map(|i| (0..=max.1).map(move |j| (i, j)))
            .filter(|&(i, j)| !field.vanishes(i, j))
            .collect();
        let profiles: Vec<((u32, u32), Vec<f64>)> = indices
            .par_iter()
            .map(|&(i, j)| {
                let b1: Vec<f64> = x1s.iter().map(|&x| parity[0].basis(i as f64 * k1 * x)).collect();
                let b2: Vec<f64> = x2s.iter().map(|&x| parity[1].basis(j as f64 * k2 * x)).collect();
                let mut prof = vec![0.0; levels];
                for i1 in 0..n1 {
                    for i2 in 0..n2 {
                        let c = b1[i1] * b2[i2];
                        let cell = grid.cell(i1, i2);
                        prof.iter_mut().zip(cell).for_each(|(p, v)| *p += c * v);
                    }
                }
                let s = norm(parity[0], i, n1) * norm(parity[1], j, n2);
                prof.iter_mut().for_each(|p| *p *= s);
                ((i, j), prof)
            })
            .collect();
        field.modes.extend(profiles);
        Ok(field)
    }
}

/// Free-function form of [`TrigField::differentiate`].
pub fn differentiate(field: &TrigField, axis: Axis) -> Result<TrigField, SpectralError> {
    field.differentiate(axis)
}

/// Cosine–cosine scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricField(TrigField);

impl SymmetricField {
    pub fn new(lattice: LatticeSpec, vgrid: Arc<VerticalGrid>) -> Self {
        Self(TrigField::new(lattice, vgrid, SYMMETRIC_SCALAR))
    }

    pub fn surface(lattice: LatticeSpec) -> Self {
        Self(TrigField::surface(lattice, SYMMETRIC_SCALAR))
    }

    pub fn from_trig(field: TrigField) -> Result<Self, SpectralError> {
        if field.parity != SYMMETRIC_SCALAR {
            return Err(SpectralError::ParityMismatch(field.parity, SYMMETRIC_SCALAR));
        }
        Ok(Self(field))
    }

    pub fn inner(&self) -> &TrigField {
        &self.0
    }

    pub fn into_inner(self) -> TrigField {
        self.0
    }

    pub fn add_mode(&mut self, i: u32, j: u32, profile: &[f64]) {
        self.0.add_mode(i, j, profile);
    }
}

impl Deref for SymmetricField {
    type Target = TrigField;

    fn deref(&self) -> &TrigField {
        &self.0
    }
}

/// Vector field with components on cos·cos, sin·sin and sin·cos.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricVectorField {
    components: [TrigField; 3],
}

impl SymmetricVectorField {
    pub fn new(lattice: LatticeSpec, vgrid: Arc<VerticalGrid>) -> Self {
        let c = |p| TrigField::new(lattice, vgrid.clone(), p);
        Self {
            components: [c(SYMMETRIC_VECTOR[0]), c(SYMMETRIC_VECTOR[1]), c(SYMMETRIC_VECTOR[2])],
        }
    }

    pub fn from_components(components: [TrigField; 3]) -> Result<Self, SpectralError> {
        for (c, p) in components.iter().zip(SYMMETRIC_VECTOR) {
            if c.parity != p {
                return Err(SpectralError::ParityMismatch(c.parity, p));
            }
        }
        Ok(Self { components })
    }

    pub fn component(&self, c: usize) -> &TrigField {
        &self.components[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut TrigField {
        &mut self.components[c]
    }

    pub fn components(&self) -> &[TrigField; 3] {
        &self.components
    }

    pub fn lattice(&self) -> &LatticeSpec {
        self.components[0].lattice()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            components: self.components.clone().map(|f| f.scale(c)),
        }
    }

    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self, SpectralError> {
        Ok(Self {
            components: [
                self.components[0].axpy(c, &other.components[0])?,
                self.components[1].axpy(c, &other.components[1])?,
                self.components[2].axpy(c, &other.components[2])?,
            ],
        })
    }

    pub fn eval(&self, x: [f64; 3]) -> [f64; 3] {
        [self.components[0].eval(x), self.components[1].eval(x), self.components[2].eval(x)]
    }

    /// `d1 u1 + d2 u2 + d3 u3`, a sin·cos field.
    pub fn divergence(&self) -> TrigField {
        let [u1, u2, u3] = &self.components;
        u1.d1()
            .add(&u2.d2())
            .and_then(|s| s.add(&u3.d3()))
            .expect("divergence terms share sin-cos parity")
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.is_zero())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct VerticalLayout {
    x3: Vec<f64>,
    weights: Vec<f64>,
}

/// Collocation values on `[0, lambda1) x [0, lambda2) x` vertical nodes, `x3` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3D {
    lattice: LatticeSpec,
    n1: usize,
    n2: usize,
    x3: Vec<f64>,
    /// Vertical quadrature weights normalized to sum to one.
    weights: Vec<f64>,
    parity: Option<[Parity; 2]>,
    data: Vec<f64>,
}

impl Grid3D {
    fn zeros(lattice: LatticeSpec, n1: usize, n2: usize, layout: VerticalLayout) -> Self {
        let n3 = layout.x3.len();
        Self {
            lattice,
            n1,
            n2,
            x3: layout.x3,
            weights: layout.weights,
            parity: None,
            data: vec![0.0; n1 * n2 * n3],
        }
    }

    /// Samples `f(x1, x2, x3)` at the grid nodes.
    pub fn from_fn(
        lattice: LatticeSpec,
        n1: usize,
        n2: usize,
        vgrid: &VerticalGrid,
        f: impl Fn([f64; 3]) -> f64 + Sync,
    ) -> Self {
        let layout = VerticalLayout {
            x3: vgrid.nodes().to_vec(),
            weights: vgrid.weights().iter().map(|w| w / vgrid.depth()).collect(),
        };
        let mut g = Self::zeros(lattice, n1, n2, layout);
        let x1s = g.x1_nodes();
        let x2s = g.x2_nodes();
        let x3s = g.x3.clone();
        let n3 = x3s.len();
        g.data.par_chunks_mut(n2 * n3).enumerate().for_each(|(i1, slab)| {
            for (i2, cell) in slab.chunks_mut(n3).enumerate() {
                for (l, v) in cell.iter_mut().enumerate() {
                    *v = f([x1s[i1], x2s[i2], x3s[l]]);
                }
            }
        });
        g
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.n1, self.n2, self.x3.len()]
    }

    pub fn n3(&self) -> usize {
        self.x3.len()
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn parity(&self) -> Option<[Parity; 2]> {
        self.parity
    }

    pub fn x1_nodes(&self) -> Vec<f64> {
        let l = self.lattice.lambda1();
        (0..self.n1).map(|i| l * i as f64 / self.n1 as f64).collect()
    }

    pub fn x2_nodes(&self) -> Vec<f64> {
        let l = self.lattice.lambda2();
        (0..self.n2).map(|i| l * i as f64 / self.n2 as f64).collect()
    }

    pub fn x3_nodes(&self) -> &[f64] {
        &self.x3
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i1: usize, i2: usize, l: usize) -> f64 {
        self.data[(i1 * self.n2 + i2) * self.x3.len() + l]
    }

    pub fn cell(&self, i1: usize, i2: usize) -> &[f64] {
        let n3 = self.x3.len();
        let s = (i1 * self.n2 + i2) * n3;
        &self.data[s..s + n3]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// RMS over the horizontal cell and the vertical quadrature.
    pub fn rms(&self) -> f64 {
        let n3 = self.x3.len();
        let total: f64 = self
            .data
            .chunks(n3)
            .map(|c| c.iter().zip(&self.weights).map(|(v, w)| v * v * w).sum::<f64>())
            .sum();
        (total / (self.n1 * self.n2) as f64).sqrt()
    }

    /// Applies `f` to corresponding entries of grids with identical shape.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Self, SpectralError> {
        if self.shape() != other.shape() {
            return Err(SpectralError::ShapeMismatch(self.shape(), other.shape()));
        }
        let mut out = self.clone();
        out.parity = None;
        out.data
            .par_iter_mut()
            .zip(other.data.par_iter())
            .for_each(|(a, b)| *a = f(*a, *b));
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        let mut out = self.clone();
        out.parity = None;
        out.data.par_iter_mut().for_each(|v| *v = f(*v));
        out
    }

    /// Builds a grid with the same layout from raw values.
    pub fn with_values(&self, data: Vec<f64>) -> Result<Self, SpectralError> {
        if data.len() != self.data.len() {
            return Err(SpectralError::ShapeMismatch(self.shape(), [data.len(), 1, 1]));
        }
        Ok(Self {
            data,
            parity: None,
            ..self.clone()
        })
    }

    /// Trapezoidal mean over `x1`; the result has `n1 = 1`.
    pub fn x1_average(&self) -> Self {
        let n3 = self.x3.len();
        let mut data = vec![0.0; self.n2 * n3];
        for i1 in 0..self.n1 {
            for i2 in 0..self.n2 {
                let cell = self.cell(i1, i2);
                data[i2 * n3..(i2 + 1) * n3]
                    .iter_mut()
                    .zip(cell)
                    .for_each(|(a, v)| *a += v);
            }
        }
        let inv = 1.0 / self.n1 as f64;
        data.iter_mut().for_each(|v| *v *= inv);
        Self {
            lattice: self.lattice,
            n1: 1,
            n2: self.n2,
            x3: self.x3.clone(),
            weights: self.weights.clone(),
            parity: None,
            data,
        }
    }

    /// Grid slice at vertical level `l`.
    pub fn level(&self, l: usize) -> Self {
        let n3 = self.x3.len();
        let data = self.data.chunks(n3).map(|c| c[l]).collect();
        Self {
            lattice: self.lattice,
            n1: self.n1,
            n2: self.n2,
            x3: vec![self.x3[l]],
            weights: vec![1.0],
            parity: self.parity,
            data,
        }
    }
}

/// JSON-serializable description of a [`Grid3D`] dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridHeader {
    pub lambda1: f64,
    pub lambda2: f64,
    pub shape: [usize; 3],
    pub parity: Option<[Parity; 2]>,
    pub x3: Vec<f64>,
}

impl Grid3D {
    pub fn header(&self) -> GridHeader {
        GridHeader {
            lambda1: self.lattice.lambda1(),
            lambda2: self.lattice.lambda2(),
            shape: self.shape(),
            parity: self.parity,
            x3: self.x3.clone(),
        }
    }

    /// Rows `(x1, x2, x3, value)` in storage order.
    pub fn rows(&self) -> impl Iterator<Item = [f64; 4]> + '_ {
        let x1s = self.x1_nodes();
        let x2s = self.x2_nodes();
        let n3 = self.x3.len();
        self.data.iter().enumerate().map(move |(c, &v)| {
            let l = c % n3;
            let i2 = (c / n3) % self.n2;
            let i1 = c / (n3 * self.n2);
            [x1s[i1], x2s[i2], self.x3[l], v]
        })
    }
}

pub fn pointwise_product(a: &Grid3D, b: &Grid3D) -> Result<Grid3D, SpectralError> {
    a.zip_map(b, |x, y| x * y)
}

/// Mean over `x1` of a spectral field (exact: keeps the `i = 0` modes).
pub fn x1_average(field: &TrigField) -> TrigField {
    field.x1_average()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lattice() -> LatticeSpec {
        LatticeSpec::new(2.0, 3.0).unwrap()
    }

    fn vgrid() -> Arc<VerticalGrid> {
        Arc::new(VerticalGrid::chebyshev(9, 1.0))
    }

    #[test]
    fn single_mode_synthesis() {
        let g = vgrid();
        let f = TrigField::new(lattice(), g.clone(), SYMMETRIC_SCALAR).with_mode(1, 0, &vec![1.0; g.len()]);
        let grid = f.synthesize(8, 6).unwrap();
        let k1 = lattice().kappa1();
        for (i1, x1) in grid.x1_nodes().iter().enumerate() {
            for i2 in 0..6 {
                for l in 0..g.len() {
                    assert_abs_diff_eq!(grid.get(i1, i2, l), (k1 * x1).cos(), epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn zero_field_synthesizes_to_zero() {
        let f = TrigField::new(lattice(), vgrid(), SYMMETRIC_SCALAR);
        assert_eq!(f.synthesize(4, 4).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn sine_modes_on_zero_index_are_dropped() {
        let g = vgrid();
        let f = TrigField::new(lattice(), g.clone(), [Parity::Sin, Parity::Cos]).with_mode(0, 2, &vec![1.0; g.len()]);
        assert_eq!(f.mode_count(), 0);
    }

    #[test]
    fn horizontal_derivatives() {
        let g = vgrid();
        let k1 = lattice().kappa1();
        let f = TrigField::new(lattice(), g.clone(), SYMMETRIC_SCALAR).with_mode(1, 0, &vec![1.0; g.len()]);
        let d = f.d1();
        assert_eq!(d.parity(), [Parity::Sin, Parity::Cos]);
        assert_abs_diff_eq!(d.mode(1, 0).unwrap()[0], -k1, epsilon = 1e-15);
        assert!(f.d2().is_zero());
        // affine vertical profile
        let eta = 0.35;
        let lifted = TrigField::surface(lattice(), SYMMETRIC_SCALAR)
            .with_mode(2, 1, &[eta])
            .lift_linear(g.clone());
        for v in lifted.d3().mode(2, 1).unwrap() {
            assert_abs_diff_eq!(*v, eta, epsilon = 1e-13);
        }
    }

    #[test]
    fn analysis_rejects_aliasing() {
        let g = vgrid();
        let f = TrigField::new(lattice(), g.clone(), SYMMETRIC_SCALAR);
        let grid = f.synthesize(8, 8).unwrap();
        assert!(matches!(
            TrigField::analyze(&grid, SYMMETRIC_SCALAR, (4, 1), Some(g)),
            Err(SpectralError::Alias { axis: 1, .. })
        ));
    }

    #[test]
    fn x1_average_examples() {
        let g = vgrid();
        let ones = vec![1.0; g.len()];
        let f = TrigField::new(lattice(), g.clone(), [Parity::Sin, Parity::Cos]).with_mode(1, 1, &ones);
        assert!(f.x1_average().is_zero());
        let grid = f.synthesize(16, 4).unwrap();
        assert!(grid.x1_average().max_abs() < 1e-15);
        let sq = pointwise_product(&grid, &grid).unwrap();
        let s = TrigField::new(lattice(), g.clone(), [Parity::Sin, Parity::Cos]).with_mode(1, 0, &ones);
        let s = s.synthesize(16, 4).unwrap();
        let avg = pointwise_product(&s, &s).unwrap().x1_average();
        assert!(avg.values().iter().all(|v| (v - 0.5).abs() < 1e-15));
        assert!(sq.x1_average().max_abs() <= 0.5 + 1e-15);
    }

    #[test]
    fn product_identities() {
        let g = vgrid();
        let ones = vec![1.0; g.len()];
        let a = TrigField::new(lattice(), g.clone(), SYMMETRIC_SCALAR).with_mode(2, 1, &ones);
        let b = TrigField::new(lattice(), g.clone(), SYMMETRIC_SCALAR).with_mode(1, 2, &ones);
        let (ga, gb) = (a.synthesize(12, 12).unwrap(), b.synthesize(12, 12).unwrap());
        let zero = TrigField::new(lattice(), g.clone(), SYMMETRIC_SCALAR).synthesize(12, 12).unwrap();
        let one = ga.map(|_| 1.0);
        assert_eq!(pointwise_product(&ga, &zero).unwrap().max_abs(), 0.0);
        assert_eq!(pointwise_product(&ga, &one).unwrap().values(), ga.values());
        // cos(2a)cos(b) cos(a)cos(2b) = 1/4 [cos 3a + cos a][cos 3b + cos b]
        let half = TrigField::new(lattice(), g.clone(), SYMMETRIC_SCALAR)
            .with_mode(3, 3, &vec![0.25; g.len()])
            .with_mode(3, 1, &vec![0.25; g.len()])
            .with_mode(1, 3, &vec![0.25; g.len()])
            .with_mode(1, 1, &vec![0.25; g.len()])
            .synthesize(12, 12)
            .unwrap();
        let prod = pointwise_product(&ga, &gb).unwrap();
        let diff = prod.zip_map(&half, |x, y| x - y).unwrap();
        assert!(diff.max_abs() < 1e-14);
        let bad = a.synthesize(8, 12).unwrap();
        assert!(matches!(pointwise_product(&ga, &bad), Err(SpectralError::ShapeMismatch(..))));
    }

    #[test]
    fn rms_matches_grid() {
        let g = vgrid();
        let prof: Vec<f64> = g.nodes().iter().map(|x| 1.0 + x * x).collect();
        let f = TrigField::new(lattice(), g.clone(), [Parity::Sin, Parity::Cos])
            .with_mode(1, 0, &prof)
            .with_mode(2, 3, &prof);
        let grid = f.synthesize(16, 16).unwrap();
        assert_abs_diff_eq!(f.rms(), grid.rms(), epsilon = 1e-13);
    }
}
