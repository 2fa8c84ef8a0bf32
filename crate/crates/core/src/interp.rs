//! Evaluation of grid fields away from the nodes.
//!
//! [`TrigInterpolant`] sums the symmetric trigonometric interpolant directly
//! (`O(N^d)` per point) and is exact for band-limited data. [`FastInterpolant`]
//! samples the same interpolant on a twice-refined grid and applies a
//! ten-point periodic Lagrange stencil per axis; it is what the 2D particle
//! integrators use.

use std::f64::consts::TAU;

use rustfft::num_complex::Complex64;

use crate::grid::{PeriodicGrid, ScalarField};
use crate::spectral::Spectrum;

/// Signed modes `-N/2..=N/2` with weight 1/2 on the two Nyquist entries.
fn axis_modes(n: usize) -> Vec<(isize, usize, f64)> {
    if n == 1 {
        return vec![(0, 0, 1.0)];
    }
    let half = (n / 2) as isize;
    (-half..=half)
        .map(|m| {
            let slot = m.rem_euclid(n as isize) as usize;
            let w = if m.abs() == half { 0.5 } else { 1.0 };
            (m, slot, w)
        })
        .collect()
}

/// Exact trigonometric interpolant of a grid field.
#[derive(Debug, Clone)]
pub struct TrigInterpolant {
    grid: PeriodicGrid,
    coeffs: Vec<Complex64>,
    modes_x: Vec<(isize, usize, f64)>,
    modes_y: Vec<(isize, usize, f64)>,
}

impl TrigInterpolant {
    pub fn new(field: &ScalarField) -> Self {
        let grid = *field.grid();
        TrigInterpolant {
            grid,
            coeffs: Spectrum::of(field).normalized(),
            modes_x: axis_modes(grid.points(0)),
            modes_y: axis_modes(grid.points(1)),
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    fn phases(modes: &[(isize, usize, f64)], x: f64, length: f64) -> Vec<Complex64> {
        modes
            .iter()
            .map(|&(m, _, w)| Complex64::from_polar(w, TAU * m as f64 * x / length))
            .collect()
    }

    /// Value and first partials `(f, ∂x f, ∂y f)` at an arbitrary point.
    pub fn eval_with_gradient(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let g = &self.grid;
        let ny = g.points(1);
        let px = Self::phases(&self.modes_x, x, g.length(0));
        let py = if g.dim() == 2 {
            Self::phases(&self.modes_y, y, g.length(1))
        } else {
            vec![Complex64::new(1.0, 0.0)]
        };
        let mut val = Complex64::new(0.0, 0.0);
        let mut dx = Complex64::new(0.0, 0.0);
        let mut dy = Complex64::new(0.0, 0.0);
        for (a, &(mx, sx, _)) in self.modes_x.iter().enumerate() {
            let kx = TAU * mx as f64 / g.length(0);
            let mut row = Complex64::new(0.0, 0.0);
            let mut row_dy = Complex64::new(0.0, 0.0);
            for (b, &(my, sy, _)) in self.modes_y.iter().enumerate() {
                let term = self.coeffs[sx * ny + sy] * py[b];
                row += term;
                if g.dim() == 2 {
                    let ky = TAU * my as f64 / g.length(1);
                    row_dy += term * ky;
                }
            }
            let ex = px[a];
            val += row * ex;
            dx += row * ex * kx;
            dy += row_dy * ex;
        }
        // derivative factor i: Re(i z) = -Im z
        (val.re, -dx.im, -dy.im)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.eval_with_gradient(x, y).0
    }

    /// Value, first and second derivative on the circle.
    pub fn eval_1d_derivs(&self, x: f64) -> (f64, f64, f64) {
        assert_eq!(self.grid.dim(), 1);
        let l = self.grid.length(0);
        let mut v = Complex64::new(0.0, 0.0);
        let mut d1 = Complex64::new(0.0, 0.0);
        let mut d2 = Complex64::new(0.0, 0.0);
        for &(m, s, w) in &self.modes_x {
            let k = TAU * m as f64 / l;
            let t = self.coeffs[s] * Complex64::from_polar(w, k * x);
            v += t;
            d1 += t * Complex64::new(0.0, k);
            d2 += t * (-k * k);
        }
        (v.re, d1.re, d2.re)
    }
}

const STENCIL: usize = 10;
const UPSAMPLE: usize = 2;

/// Barycentric constants `1 / Π_{k≠j} (x_j − x_k)` for nodes `-4..=5`.
fn stencil_constants() -> [f64; STENCIL] {
    let mut c = [0.0; STENCIL];
    for (j, cj) in c.iter_mut().enumerate() {
        let mut p = 1.0;
        for k in 0..STENCIL {
            if k != j {
                p *= j as f64 - k as f64;
            }
        }
        *cj = 1.0 / p;
    }
    c
}

/// Lagrange weights at offset `s ∈ [0, 1)` from the cell's left node, for
/// nodes at offsets -4..=5.
fn lagrange_weights(s: f64, c: &[f64; STENCIL]) -> [f64; STENCIL] {
    let mut w = [0.0; STENCIL];
    if s == 0.0 {
        w[4] = 1.0;
        return w;
    }
    let mut l = 1.0;
    for j in 0..STENCIL {
        l *= s - (j as f64 - 4.0);
    }
    for j in 0..STENCIL {
        w[j] = l * c[j] / (s - (j as f64 - 4.0));
    }
    w
}

/// Twice-upsampled fields with local ten-point Lagrange interpolation. Several
/// fields on the same grid share the stencil weights.
#[derive(Debug, Clone)]
pub struct FastInterpolant {
    grid: PeriodicGrid,
    fine: Vec<Vec<f64>>,
    consts: [f64; STENCIL],
}

impl FastInterpolant {
    pub fn new(field: &ScalarField) -> Self {
        Self::new_multi(&[field])
    }

    pub fn new_multi(fields: &[&ScalarField]) -> Self {
        assert!(!fields.is_empty());
        let fine: Vec<ScalarField> = fields
            .iter()
            .map(|f| Spectrum::of(f).upsample(UPSAMPLE).to_field())
            .collect();
        FastInterpolant {
            grid: *fine[0].grid(),
            fine: fine.into_iter().map(|f| f.into_values()).collect(),
            consts: stencil_constants(),
        }
    }

    fn locate(&self, axis: usize, coord: f64) -> (isize, [f64; STENCIL]) {
        let u = coord / self.grid.spacing(axis);
        let mut base = u.floor();
        let mut s = u - base;
        // u slightly below an integer can round to s == 1
        if s >= 1.0 {
            base += 1.0;
            s = 0.0;
        }
        (base as isize, lagrange_weights(s, &self.consts))
    }

    /// Value of the first field.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut out = [0.0];
        self.eval_into(x, y, &mut out);
        out[0]
    }

    /// Values of the first `out.len()` fields.
    pub fn eval_into(&self, x: f64, y: f64, out: &mut [f64]) {
        let g = &self.grid;
        let nx = g.points(0) as isize;
        let (bx, wx) = self.locate(0, x);
        out.iter_mut().for_each(|v| *v = 0.0);
        if g.dim() == 1 {
            for (j, w) in wx.iter().enumerate() {
                let ix = (bx + j as isize - 4).rem_euclid(nx) as usize;
                for (o, f) in out.iter_mut().zip(&self.fine) {
                    *o += w * f[ix];
                }
            }
            return;
        }
        let ny = g.points(1) as isize;
        let (by, wy) = self.locate(1, y);
        let mut iys = [0usize; STENCIL];
        for (k, iy) in iys.iter_mut().enumerate() {
            *iy = (by + k as isize - 4).rem_euclid(ny) as usize;
        }
        for (o, f) in out.iter_mut().zip(&self.fine) {
            let mut acc = 0.0;
            for (j, w1) in wx.iter().enumerate() {
                let ix = (bx + j as isize - 4).rem_euclid(nx) as usize;
                let row = &f[ix * ny as usize..(ix + 1) * ny as usize];
                let mut r = 0.0;
                for (w2, &iy) in wy.iter().zip(&iys) {
                    r += w2 * row[iy];
                }
                acc += w1 * r;
            }
            *o = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn trig_interpolant_is_exact_off_grid() {
        let g = PeriodicGrid::unit_circle(32).unwrap();
        let f = ScalarField::from_fn(&g, |x, _| (TAU * x).sin() + 0.3 * (5.0 * TAU * x).cos());
        let it = TrigInterpolant::new(&f);
        for &x in &[0.013, 0.31, 0.777, 1.5] {
            let (v, d1, d2) = it.eval_1d_derivs(x);
            let e = (TAU * x).sin() + 0.3 * (5.0 * TAU * x).cos();
            let e1 = TAU * (TAU * x).cos() - 1.5 * TAU * (5.0 * TAU * x).sin();
            let e2 = -TAU * TAU * (TAU * x).sin() - 7.5 * TAU * TAU * (5.0 * TAU * x).cos();
            assert!((v - e).abs() < 1e-13);
            assert!((d1 - e1).abs() < 1e-11);
            assert!((d2 - e2).abs() < 1e-9);
            assert!((it.eval(x, 0.0) - e).abs() < 1e-13);
        }
    }

    #[test]
    fn trig_interpolant_gradient_2d() {
        let g = PeriodicGrid::torus(16, 24, 1.0, 2.0).unwrap();
        let f = ScalarField::from_fn(&g, |x, y| (TAU * x).sin() * (PI * y).cos());
        let it = TrigInterpolant::new(&f);
        let (x, y) = (0.37, 1.21);
        let (v, fx, fy) = it.eval_with_gradient(x, y);
        assert!((v - (TAU * x).sin() * (PI * y).cos()).abs() < 1e-13);
        assert!((fx - TAU * (TAU * x).cos() * (PI * y).cos()).abs() < 1e-12);
        assert!((fy + PI * (TAU * x).sin() * (PI * y).sin()).abs() < 1e-12);
    }

    #[test]
    fn fast_interpolant_accuracy() {
        let g = PeriodicGrid::torus(32, 32, 1.0, 1.0).unwrap();
        let exact = |x: f64, y: f64| (TAU * x).sin() * (2.0 * TAU * y).cos() + 0.2 * (3.0 * TAU * (x + y)).sin();
        let f = ScalarField::from_fn(&g, exact);
        let it = FastInterpolant::new(&f);
        let mut err: f64 = 0.0;
        for i in 0..50 {
            let x = 0.0137 * i as f64 - 0.2;
            let y = 0.0291 * i as f64 + 0.05;
            err = err.max((it.eval(x, y) - exact(x, y)).abs());
        }
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn fast_interpolant_reproduces_nodes_1d() {
        let g = PeriodicGrid::unit_circle(16).unwrap();
        let f = ScalarField::from_fn(&g, |x, _| (TAU * x).cos());
        let it = FastInterpolant::new(&f);
        for i in 0..16 {
            let x = i as f64 / 16.0;
            assert!((it.eval(x, 0.0) - f.values()[i]).abs() < 1e-14);
        }
    }
}
