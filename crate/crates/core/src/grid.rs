//! Uniform periodic grids on the circle and the flat 2-torus, grid-sampled
//! fields, rectangle-rule quadrature and spectral differential operators.
//!
//! The rectangle rule is spectrally exact for periodic integrands: any
//! trigonometric polynomial of degree below `N/2` per axis integrates
//! exactly (up to round-off).

use std::f64::consts::TAU;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::Spectrum;

const MIN_POINTS: usize = 8;

/// Uniform discretization of `[0, L_x)` or `[0, L_x) x [0, L_y)` with
/// periodic identification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    dim: usize,
    points: [usize; 2],
    lengths: [f64; 2],
}

impl PeriodicGrid {
    /// Grid from per-axis point counts and lengths (one or two axes).
    pub fn new(points: &[usize], lengths: &[f64]) -> Result<Self> {
        let dim = points.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if lengths.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "{} lengths given for a {dim}-dimensional grid",
                lengths.len()
            )));
        }
        for (&n, &l) in points.iter().zip(lengths) {
            if n < MIN_POINTS || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "points per axis must be even and at least {MIN_POINTS}, got {n}"
                )));
            }
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "axis length must be positive and finite, got {l}"
                )));
            }
        }
        let mut p = [1usize; 2];
        let mut len = [1.0f64; 2];
        p[..dim].copy_from_slice(points);
        len[..dim].copy_from_slice(lengths);
        Ok(PeriodicGrid {
            dim,
            points: p,
            lengths: len,
        })
    }

    pub fn circle(n: usize, length: f64) -> Result<Self> {
        Self::new(&[n], &[length])
    }

    /// Circle of circumference 1.
    pub fn unit_circle(n: usize) -> Result<Self> {
        Self::circle(n, 1.0)
    }

    pub fn torus(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        Self::new(&[nx, ny], &[lx, ly])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points along `axis`; axes beyond the dimension report 1.
    pub fn points(&self, axis: usize) -> usize {
        self.points[axis]
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.lengths[axis]
    }

    pub fn points_per_axis(&self) -> &[usize] {
        &self.points[..self.dim]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.points[0] * self.points[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Total volume μ(M).
    pub fn total_volume(&self) -> f64 {
        self.lengths().iter().product()
    }

    /// Quadrature weight of every node.
    pub fn weight(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.lengths[a] / self.points[a] as f64)
            .product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.points[axis] as f64
    }

    /// Coordinates of node `index`; the second entry is 0 on the circle.
    pub fn node(&self, index: usize) -> [f64; 2] {
        let ny = self.points[1];
        let (ix, iy) = (index / ny, index % ny);
        let y = if self.dim == 2 {
            iy as f64 * self.spacing(1)
        } else {
            0.0
        };
        [ix as f64 * self.spacing(0), y]
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix * self.points[1] + iy
    }

    /// Signed mode number of FFT slot `i` along `axis`.
    pub fn mode(&self, axis: usize, i: usize) -> isize {
        let n = self.points[axis];
        if i <= n / 2 {
            i as isize
        } else {
            i as isize - n as isize
        }
    }

    /// Angular wavenumber `2π m / L` of FFT slot `i`.
    pub fn wavenumber(&self, axis: usize, i: usize) -> f64 {
        TAU * self.mode(axis, i) as f64 / self.lengths[axis]
    }

    pub fn is_nyquist(&self, axis: usize, i: usize) -> bool {
        self.points[axis] > 1 && i == self.points[axis] / 2
    }

    /// Same domain with `factor` times as many points per axis.
    pub fn refined(&self, factor: usize) -> PeriodicGrid {
        let mut g = *self;
        for a in 0..self.dim {
            g.points[a] *= factor;
        }
        g
    }

    pub(crate) fn check_same(&self, other: &PeriodicGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Real function sampled at the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} node values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub(crate) fn from_values_unchecked(grid: PeriodicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    /// Sample `f(x, y)` at every node (`y = 0` on the circle).
    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: &PeriodicGrid, f: F) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let [x, y] = grid.node(i);
                f(x, y)
            })
            .collect();
        ScalarField {
            grid: *grid,
            values,
        }
    }

    pub fn constant(grid: &PeriodicGrid, c: f64) -> Self {
        ScalarField {
            grid: *grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: &PeriodicGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination; panics on mismatched grids (use
    /// [`ScalarField::try_zip_map`] for a checked variant).
    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &ScalarField, f: F) -> ScalarField {
        self.try_zip_map(other, f).expect("grid mismatch")
    }

    pub fn try_zip_map<F: Fn(f64, f64) -> f64>(
        &self,
        other: &ScalarField,
        f: F,
    ) -> Result<ScalarField> {
        self.grid.check_same(&other.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> ScalarField {
        self.map(|v| v * s)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Index of the smallest node value.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn mean(&self) -> f64 {
        integrate(self) / self.grid.total_volume()
    }

    /// Largest pointwise difference to `other`.
    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Vector field with one [`ScalarField`] per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("vector field needs components".into()))?;
        let grid = *first.grid();
        if components.len() != grid.dim() {
            return Err(Error::InvalidArgument(format!(
                "{} components for a {}-dimensional grid",
                components.len(),
                grid.dim()
            )));
        }
        for c in &components[1..] {
            grid.check_same(c.grid())?;
        }
        Ok(VectorField { components })
    }

    pub fn zeros(grid: &PeriodicGrid) -> Self {
        VectorField {
            components: (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.components[0].grid()
    }

    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn sup_norm(&self) -> f64 {
        self.components
            .iter()
            .map(ScalarField::sup_norm)
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> VectorField {
        VectorField {
            components: self.components.iter().map(|c| c.scale(s)).collect(),
        }
    }
}

/// Rectangle-rule quadrature `Σ w · f`.
pub fn integrate(field: &ScalarField) -> f64 {
    field.grid.weight() * field.values.iter().sum::<f64>()
}

/// `∫ a·b dμ`.
pub fn inner(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.grid.check_same(&b.grid)?;
    let s: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok(a.grid.weight() * s)
}

fn i_k(k: f64, nyquist: bool) -> Complex64 {
    if nyquist {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, k)
    }
}

/// Spectral partial derivative along `axis` (Nyquist mode dropped).
pub fn derivative(field: &ScalarField, axis: usize) -> ScalarField {
    assert!(axis < field.grid.dim(), "axis out of range");
    Spectrum::of(field)
        .apply(|kx, ky, nyq| i_k(if axis == 0 { kx } else { ky }, nyq))
        .to_field()
}

pub fn gradient(field: &ScalarField) -> VectorField {
    VectorField {
        components: (0..field.grid.dim())
            .map(|a| derivative(field, a))
            .collect(),
    }
}

pub fn divergence(v: &VectorField) -> ScalarField {
    let mut spec: Option<Vec<Complex64>> = None;
    let grid = *v.grid();
    for (axis, comp) in v.components.iter().enumerate() {
        let s = Spectrum::of(comp).apply(|kx, ky, nyq| i_k(if axis == 0 { kx } else { ky }, nyq));
        match spec.as_mut() {
            None => spec = Some(s.coeffs().to_vec()),
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(s.coeffs()) {
                    *a += b;
                }
            }
        }
    }
    let total = spec.expect("vector field has components");
    Spectrum::from_parts(grid, total).to_field()
}

/// Spectral Laplacian.
pub fn laplacian(field: &ScalarField) -> ScalarField {
    Spectrum::of(field)
        .apply(|kx, ky, _| Complex64::new(-(kx * kx + ky * ky), 0.0))
        .to_field()
}

/// Tolerance for the zero-mean precondition, relative to `sup |values|`.
pub const MEAN_ZERO_TOL: f64 = 1e-10;

pub(crate) fn check_mean_zero(field: &ScalarField) -> Result<()> {
    let mean = field.mean();
    if mean.abs() > MEAN_ZERO_TOL * field.sup_norm().max(f64::MIN_POSITIVE) {
        Err(Error::NonZeroMean { mean })
    } else {
        Ok(())
    }
}

/// Zero-mean solution of `Δf = field`.
pub fn laplacian_inverse(field: &ScalarField) -> Result<ScalarField> {
    check_mean_zero(field)?;
    Ok(Spectrum::of(field)
        .apply(|kx, ky, _| {
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(-1.0 / k2, 0.0)
            }
        })
        .to_field())
}

/// Periodic antiderivative on the circle: the zero-mean `P` with
/// `P' = field - mean(field)`.
pub fn periodic_antiderivative(field: &ScalarField) -> ScalarField {
    assert_eq!(field.grid.dim(), 1, "antiderivative is defined on the circle");
    Spectrum::of(field)
        .apply(|k, _, nyq| {
            if k == 0.0 || nyq {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, -1.0 / k)
            }
        })
        .to_field()
}

/// 2/3-rule low-pass filter.
pub fn dealias(field: &ScalarField) -> ScalarField {
    Spectrum::of(field).dealias().to_field()
}
