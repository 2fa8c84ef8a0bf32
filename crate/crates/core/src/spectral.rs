//! Discrete Fourier machinery on a [`PeriodicGrid`].
//!
//! Coefficients are stored unnormalized, in the same row-major layout as the
//! node values (`index = ix * ny + iy`). Multiplying by a Fourier symbol and
//! transforming back is how every spectral operator in the crate is built.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{PeriodicGrid, ScalarField};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

fn transform(grid: &PeriodicGrid, data: &mut [Complex64], inverse: bool) {
    let nx = grid.points(0);
    let ny = grid.points(1);
    if grid.dim() == 1 {
        plan(nx, inverse).process(data);
        return;
    }
    // rows (contiguous, along y)
    let fy = plan(ny, inverse);
    fy.process(data);
    // columns (strided, along x)
    let fx = plan(nx, inverse);
    let mut column = vec![Complex64::new(0.0, 0.0); nx];
    for iy in 0..ny {
        for ix in 0..nx {
            column[ix] = data[ix * ny + iy];
        }
        fx.process(&mut column);
        for ix in 0..nx {
            data[ix * ny + iy] = column[ix];
        }
    }
}

/// Fourier coefficients of a real field.
#[derive(Debug, Clone)]
pub struct Spectrum {
    grid: PeriodicGrid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn of(field: &ScalarField) -> Self {
        let mut coeffs: Vec<Complex64> = field
            .values()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        transform(field.grid(), &mut coeffs, false);
        Spectrum {
            grid: *field.grid(),
            coeffs,
        }
    }

    pub(crate) fn from_parts(grid: PeriodicGrid, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), grid.len());
        Spectrum { grid, coeffs }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficients divided by the node count, i.e. the amplitudes of the
    /// trigonometric interpolant.
    pub fn normalized(&self) -> Vec<Complex64> {
        let scale = 1.0 / self.grid.len() as f64;
        self.coeffs.iter().map(|c| c * scale).collect()
    }

    /// Multiply every coefficient by `symbol(kx, ky, is_nyquist)`, where the
    /// wavenumbers are angular (2π m / L) and `is_nyquist` flags modes on the
    /// Nyquist line of any axis.
    pub fn apply<F>(mut self, symbol: F) -> Self
    where
        F: Fn(f64, f64, bool) -> Complex64,
    {
        let g = self.grid;
        let nx = g.points(0);
        let ny = g.points(1);
        for ix in 0..nx {
            let kx = g.wavenumber(0, ix);
            let nyq_x = g.is_nyquist(0, ix);
            for iy in 0..ny {
                let (ky, nyq_y) = if g.dim() == 2 {
                    (g.wavenumber(1, iy), g.is_nyquist(1, iy))
                } else {
                    (0.0, false)
                };
                let idx = ix * ny + iy;
                self.coeffs[idx] *= symbol(kx, ky, nyq_x || nyq_y);
            }
        }
        self
    }

    /// Zero every mode whose signed index satisfies `|m| >= n_axis / 3` on
    /// some axis (the 2/3 rule).
    pub fn dealias(self) -> Self {
        let g = self.grid;
        let cut = |axis: usize, k: f64| {
            let m = (k * g.length(axis) / std::f64::consts::TAU).round().abs();
            m >= (g.points(axis) as f64) / 3.0
        };
        self.apply(|kx, ky, _| {
            if cut(0, kx) || (g.dim() == 2 && cut(1, ky)) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
    }

    /// Inverse transform; the imaginary part (round-off only for real
    /// symbols applied to real data) is discarded.
    pub fn to_field(&self) -> ScalarField {
        let mut data = self.coeffs.clone();
        transform(&self.grid, &mut data, true);
        let scale = 1.0 / self.grid.len() as f64;
        let values = data.iter().map(|c| c.re * scale).collect();
        ScalarField::from_values_unchecked(self.grid, values)
    }

    /// Zero-pad (or truncate) to a grid with `factor` times the points per
    /// axis. Nyquist coefficients are split symmetrically so the result is
    /// the same real trigonometric interpolant sampled more finely.
    pub fn upsample(&self, factor: usize) -> Spectrum {
        assert!(factor >= 1);
        let g = self.grid;
        let fine = g.refined(factor);
        let (nx, ny) = (g.points(0), g.points(1));
        let (fx, fy) = (fine.points(0), fine.points(1));
        let mut out = vec![Complex64::new(0.0, 0.0); fine.len()];
        let axis_targets = |n: usize, fnn: usize, i: usize| -> Vec<(usize, f64)> {
            if n == 1 {
                return vec![(0, 1.0)];
            }
            let half = n / 2;
            if i < half {
                vec![(i, 1.0)]
            } else if i > half {
                vec![(fnn - (n - i), 1.0)]
            } else if factor == 1 {
                vec![(i, 1.0)]
            } else {
                vec![(half, 0.5), (fnn - half, 0.5)]
            }
        };
        for ix in 0..nx {
            for (tx, wx) in axis_targets(nx, fx, ix) {
                for iy in 0..ny {
                    for (ty, wy) in axis_targets(ny, fy, iy) {
                        out[tx * fy + ty] += self.coeffs[ix * ny + iy] * (wx * wy);
                    }
                }
            }
        }
        // keep the normalization of the interpolant: values scale with node count
        let ratio = fine.len() as f64 / g.len() as f64;
        for c in out.iter_mut() {
            *c *= ratio;
        }
        Spectrum {
            grid: fine,
            coeffs: out,
        }
    }
}
