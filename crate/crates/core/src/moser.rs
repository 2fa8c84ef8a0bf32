//! Moser's construction: flows of diffeomorphisms with a prescribed
//! Jacobian, and transport maps between densities of equal mass.
//!
//! Given a positive path `φ(t)` with `φ(0) = 1` and `∫φ(t) dμ = μ(M)`, solve
//! `Δf = −∂φ/∂t`, set `X = ∇f / φ` and flow `ξ̇ = X(t, ξ)`. Then `ξ(t)` pushes
//! `μ` to `φ(t) μ` and `η(t) = ξ(t)⁻¹` has `Jac η(t) = φ(t)`. On the circle
//! the primitive `η(t, x) = ∫₀ˣ φ(t)` does the same job exactly.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::density::Density;
use crate::error::{Error, Result};
use crate::grid::{derivative, gradient, integrate, periodic_antiderivative, PeriodicGrid, ScalarField};
use crate::hsflow::{identity_positions, FlowMap, FlowSnapshot, HsGeodesic};
use crate::interp::{FastInterpolant, TrigInterpolant};
use crate::spectral::Spectrum;

/// Tolerance on `∫φ dμ − μ(M)`, relative.
pub const MASS_TOL: f64 = 1e-8;

/// Newton iterations allowed per point when inverting a 2D map.
pub const MAX_INVERSION_ITERS: usize = 50;

/// A time-dependent positive Jacobian and its time derivative.
pub trait JacobianPath: Sync {
    fn grid(&self) -> &PeriodicGrid;
    fn value(&self, t: f64) -> ScalarField;
    fn rate(&self, t: f64) -> ScalarField;
}

impl JacobianPath for HsGeodesic {
    fn grid(&self) -> &PeriodicGrid {
        HsGeodesic::grid(self)
    }

    fn value(&self, t: f64) -> ScalarField {
        self.jacobian_formula(t)
    }

    fn rate(&self, t: f64) -> ScalarField {
        self.jacobian_rate(t)
    }
}

/// Jacobian path given by samples on a uniform time grid. Values and rates
/// between samples come from local six-point Lagrange interpolation in time.
#[derive(Debug, Clone)]
pub struct SampledJacobian {
    times: Vec<f64>,
    values: Vec<ScalarField>,
}

impl SampledJacobian {
    pub fn new(values: Vec<ScalarField>, times: Vec<f64>) -> Result<Self> {
        if values.len() != times.len() || values.len() < 2 {
            return Err(Error::InvalidArgument(
                "need at least two samples and one time per sample".into(),
            ));
        }
        let step = times[1] - times[0];
        let uniform = times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.abs().max(1e-300));
        if !(step > 0.0) || !uniform {
            return Err(Error::InvalidArgument(
                "sample times must be increasing and uniformly spaced".into(),
            ));
        }
        let grid = *values[0].grid();
        for v in &values {
            v.grid().check_same(&grid)?;
        }
        Ok(SampledJacobian { times, values })
    }

    fn window(&self, t: f64) -> (usize, usize) {
        let n = self.times.len();
        let w = n.min(6);
        let step = self.times[1] - self.times[0];
        let pos = ((t - self.times[0]) / step).floor() as isize - (w as isize / 2 - 1);
        let start = pos.clamp(0, (n - w) as isize) as usize;
        (start, w)
    }

    fn combine(&self, start: usize, weights: &[f64]) -> ScalarField {
        let mut out = self.values[start].scale(weights[0]);
        for (j, &w) in weights.iter().enumerate().skip(1) {
            out = out.add(&self.values[start + j].scale(w));
        }
        out
    }
}

fn lagrange(nodes: &[f64], s: f64) -> (Vec<f64>, Vec<f64>) {
    let p = nodes.len();
    let mut w = vec![0.0; p];
    let mut dw = vec![0.0; p];
    for j in 0..p {
        let mut prod = 1.0;
        for k in 0..p {
            if k != j {
                prod *= (s - nodes[k]) / (nodes[j] - nodes[k]);
            }
        }
        w[j] = prod;
        let mut d = 0.0;
        for m in 0..p {
            if m == j {
                continue;
            }
            let mut term = 1.0 / (nodes[j] - nodes[m]);
            for k in 0..p {
                if k != j && k != m {
                    term *= (s - nodes[k]) / (nodes[j] - nodes[k]);
                }
            }
            d += term;
        }
        dw[j] = d;
    }
    (w, dw)
}

impl JacobianPath for SampledJacobian {
    fn grid(&self) -> &PeriodicGrid {
        self.values[0].grid()
    }

    fn value(&self, t: f64) -> ScalarField {
        let (start, w) = self.window(t);
        let (weights, _) = lagrange(&self.times[start..start + w], t);
        self.combine(start, &weights)
    }

    fn rate(&self, t: f64) -> ScalarField {
        let (start, w) = self.window(t);
        let (_, dweights) = lagrange(&self.times[start..start + w], t);
        self.combine(start, &dweights)
    }
}

/// Zero-mean inverse Laplacian that silently drops the mean.
fn poisson(rhs: &ScalarField) -> ScalarField {
    Spectrum::of(rhs)
        .apply(|kx, ky, _| {
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(-1.0 / k2, 0.0)
            }
        })
        .to_field()
}

/// Moser potential `f(t)` with `Δf = −∂φ/∂t`, zero mean.
pub fn moser_potential<P: JacobianPath>(path: &P, t: f64) -> ScalarField {
    poisson(&path.rate(t).scale(-1.0))
}

fn check_value(phi: &ScalarField, t: f64) -> Result<()> {
    let i = phi.argmin();
    let min = phi.values()[i];
    if !(min > 0.0) {
        return Err(Error::NonPositiveJacobian { t, value: min });
    }
    let m = phi.grid().total_volume();
    let drift = (integrate(phi) - m).abs() / m;
    if drift > MASS_TOL {
        return Err(Error::MassDrift { t, drift });
    }
    Ok(())
}

fn check_start<P: JacobianPath>(path: &P) -> Result<()> {
    let phi0 = path.value(0.0);
    let dev = phi0.map(|v| v - 1.0).sup_norm();
    if dev > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "prescribed Jacobian must start at 1 (deviation {dev:e})"
        )));
    }
    Ok(())
}

/// Lift sampled Jacobians `φ(t_k)` to a flow with `Jac η(t_k) = φ(t_k)`.
/// The time grid must be uniform and start at 0; in 2D its spacing is the
/// integration step.
pub fn lift_flow(phi: &[ScalarField], t_grid: &[f64]) -> Result<FlowMap> {
    if t_grid.first().copied() != Some(0.0) {
        return Err(Error::InvalidArgument("time grid must start at 0".into()));
    }
    let path = SampledJacobian::new(phi.to_vec(), t_grid.to_vec())?;
    let dt = if t_grid.len() > 1 { t_grid[1] - t_grid[0] } else { 1.0 };
    lift_path(&path, t_grid, dt)
}

/// Lift a Jacobian path, recording the flow at `times` (increasing, first
/// entry 0). In 2D the ODE is advanced with RK4 steps of at most `dt`.
pub fn lift_path<P: JacobianPath>(path: &P, times: &[f64], dt: f64) -> Result<FlowMap> {
    if times.is_empty() || times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "times must increase from 0".into(),
        ));
    }
    check_start(path)?;
    let grid = *path.grid();
    if grid.dim() == 1 {
        let snaps = times
            .iter()
            .map(|&t| {
                let phi = path.value(t);
                check_value(&phi, t)?;
                Ok(primitive_snapshot(&phi, t))
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(FlowMap::new(grid, snaps));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    lift_2d(path, times, dt)
}

/// `η(x) = ∫₀ˣ φ` on the circle.
fn primitive_snapshot(phi: &ScalarField, t: f64) -> FlowSnapshot {
    let grid = *phi.grid();
    let scale = grid.total_volume() / integrate(phi);
    let disp = periodic_antiderivative(&phi.map(|v| v * scale - 1.0));
    let d0 = disp.values()[0];
    let disp = disp.map(|v| v - d0);
    let eta = identity_positions(&grid).remove(0).add(&disp);
    let jac = derivative(&disp, 0).map(|v| v + 1.0);
    FlowSnapshot {
        time: t,
        positions: vec![eta],
        jacobian: jac,
        eulerian_rho: None,
        inverse_positions: None,
    }
}

/// Velocity field `X = ∇f / φ` interpolated for particle evaluation.
struct MoserField {
    xy: FastInterpolant,
}

impl MoserField {
    fn new(phi: &ScalarField, rate: &ScalarField) -> Self {
        let f = poisson(&rate.scale(-1.0));
        let g = gradient(&f);
        let inv = phi.map(|v| 1.0 / v);
        let (x, y) = (g.component(0).mul(&inv), g.component(1).mul(&inv));
        MoserField {
            xy: FastInterpolant::new_multi(&[&x, &y]),
        }
    }

    fn eval(&self, px: &[f64], py: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let v: Vec<(f64, f64)> = px
            .par_iter()
            .zip(py.par_iter())
            .map(|(&x, &y)| {
                let mut v = [0.0; 2];
                self.xy.eval_into(x, y, &mut v);
                (v[0], v[1])
            })
            .collect();
        v.into_iter().unzip()
    }
}

fn field_at<P: JacobianPath>(path: &P, t: f64) -> Result<MoserField> {
    let phi = path.value(t);
    let i = phi.argmin();
    if !(phi.values()[i] > 0.0) {
        return Err(Error::NonPositiveJacobian {
            t,
            value: phi.values()[i],
        });
    }
    Ok(MoserField::new(&phi, &path.rate(t)))
}

/// Advance particles `(px, py)` from `t0` to `t1` with RK4 steps of at most `dt`.
fn advect<P: JacobianPath>(
    path: &P,
    px: &mut [f64],
    py: &mut [f64],
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<()> {
    let n = (((t1 - t0) / dt) - 1e-9).ceil().max(1.0) as usize;
    let h = (t1 - t0) / n as f64;
    let shifted = |p: &[f64], k: &[f64], a: f64| -> Vec<f64> {
        p.iter().zip(k).map(|(x, v)| x + a * v).collect()
    };
    let mut next_field = field_at(path, t0)?;
    for i in 0..n {
        let t = t0 + i as f64 * h;
        let mid = field_at(path, t + 0.5 * h)?;
        let end = field_at(path, t + h)?;
        let (k1x, k1y) = next_field.eval(px, py);
        let (k2x, k2y) = mid.eval(&shifted(px, &k1x, 0.5 * h), &shifted(py, &k1y, 0.5 * h));
        let (k3x, k3y) = mid.eval(&shifted(px, &k2x, 0.5 * h), &shifted(py, &k2y, 0.5 * h));
        let (k4x, k4y) = end.eval(&shifted(px, &k3x, h), &shifted(py, &k3y, h));
        for j in 0..px.len() {
            px[j] += h / 6.0 * (k1x[j] + 2.0 * k2x[j] + 2.0 * k3x[j] + k4x[j]);
            py[j] += h / 6.0 * (k1y[j] + 2.0 * k2y[j] + 2.0 * k3y[j] + k4y[j]);
        }
        next_field = end;
    }
    Ok(())
}

/// `det Dη` from node values of a map `η = id + periodic displacement`.
pub fn jacobian_2d(positions: &[ScalarField]) -> ScalarField {
    let ids = identity_positions(positions[0].grid());
    let e1 = positions[0].sub(&ids[0]);
    let e2 = positions[1].sub(&ids[1]);
    let (a, b) = (derivative(&e1, 0), derivative(&e1, 1));
    let (c, d) = (derivative(&e2, 0), derivative(&e2, 1));
    let n = a.values().len();
    let vals = (0..n)
        .map(|i| {
            (1.0 + a.values()[i]) * (1.0 + d.values()[i]) - b.values()[i] * c.values()[i]
        })
        .collect();
    ScalarField::new(*positions[0].grid(), vals).expect("same grid")
}

/// Invert `ξ = id + d` at the grid nodes by damped Newton iteration,
/// starting from `guess`.
pub fn invert_map_2d(
    xi: &[ScalarField],
    guess: Option<&[ScalarField]>,
) -> Result<Vec<ScalarField>> {
    let grid = *xi[0].grid();
    let ids = identity_positions(&grid);
    let d1 = xi[0].sub(&ids[0]);
    let d2 = xi[1].sub(&ids[1]);
    let interps = [
        FastInterpolant::new(&d1),
        FastInterpolant::new(&d2),
        FastInterpolant::new(&derivative(&d1, 0)),
        FastInterpolant::new(&derivative(&d1, 1)),
        FastInterpolant::new(&derivative(&d2, 0)),
        FastInterpolant::new(&derivative(&d2, 1)),
    ];
    let residual = |x: f64, y: f64, tx: f64, ty: f64| {
        (
            x + interps[0].eval(x, y) - tx,
            y + interps[1].eval(x, y) - ty,
        )
    };
    let scale = grid.length(0).max(grid.length(1));
    let results: Vec<Result<(f64, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let [tx, ty] = grid.node(i);
            let (mut x, mut y) = match guess {
                Some(g) => (g[0].values()[i], g[1].values()[i]),
                None => (tx - d1.values()[i], ty - d2.values()[i]),
            };
            let (mut rx, mut ry) = residual(x, y, tx, ty);
            for _ in 0..MAX_INVERSION_ITERS {
                let norm = rx.hypot(ry);
                if norm < 1e-13 * scale {
                    return Ok((x, y));
                }
                let a = 1.0 + interps[2].eval(x, y);
                let b = interps[3].eval(x, y);
                let c = interps[4].eval(x, y);
                let d = 1.0 + interps[5].eval(x, y);
                let det = a * d - b * c;
                let (sx, sy) = ((d * rx - b * ry) / det, (a * ry - c * rx) / det);
                let mut lambda = 1.0;
                loop {
                    let (nx, ny) = (x - lambda * sx, y - lambda * sy);
                    let (nrx, nry) = residual(nx, ny, tx, ty);
                    if nrx.hypot(nry) < norm || lambda < 1e-3 {
                        x = nx;
                        y = ny;
                        rx = nrx;
                        ry = nry;
                        break;
                    }
                    lambda *= 0.5;
                }
            }
            let norm = rx.hypot(ry);
            if norm < 1e-11 * scale {
                Ok((x, y))
            } else {
                Err(Error::InversionDiverged { residual: norm })
            }
        })
        .collect();
    let mut ex = Vec::with_capacity(grid.len());
    let mut ey = Vec::with_capacity(grid.len());
    for r in results {
        let (x, y) = r?;
        ex.push(x);
        ey.push(y);
    }
    Ok(vec![
        ScalarField::new(grid, ex).expect("grid"),
        ScalarField::new(grid, ey).expect("grid"),
    ])
}

fn lift_2d<P: JacobianPath>(path: &P, times: &[f64], dt: f64) -> Result<FlowMap> {
    let grid = *path.grid();
    let ids = identity_positions(&grid);
    let mut px = ids[0].values().to_vec();
    let mut py = ids[1].values().to_vec();
    let mut snaps = Vec::with_capacity(times.len());
    let mut prev_eta: Option<Vec<ScalarField>> = None;
    let mut t_prev = 0.0;
    for &t in times {
        check_value(&path.value(t), t)?;
        if t > t_prev {
            advect(path, &mut px, &mut py, t_prev, t, dt)?;
        }
        t_prev = t;
        let xi = vec![
            ScalarField::new(grid, px.clone()).expect("grid"),
            ScalarField::new(grid, py.clone()).expect("grid"),
        ];
        let eta = invert_map_2d(&xi, prev_eta.as_deref())?;
        let jac = jacobian_2d(&eta);
        let m = grid.total_volume();
        let drift = (integrate(&jac) - m).abs() / m;
        if drift > MASS_TOL {
            return Err(Error::MassDrift { t, drift });
        }
        prev_eta = Some(eta.clone());
        snaps.push(FlowSnapshot {
            time: t,
            positions: eta,
            jacobian: jac,
            eulerian_rho: None,
            inverse_positions: Some(xi),
        });
    }
    Ok(FlowMap::new(grid, snaps))
}

/// Linear path `(1−t)·source + t·target`, normalized by the source so the
/// Moser flow starts at the identity.
struct LinearPath<'a> {
    source: &'a ScalarField,
    target: &'a ScalarField,
}

impl JacobianPath for LinearPath<'_> {
    fn grid(&self) -> &PeriodicGrid {
        self.source.grid()
    }

    fn value(&self, t: f64) -> ScalarField {
        self.source.zip_map(self.target, |s, g| (1.0 - t) * s + t * g)
    }

    fn rate(&self, _t: f64) -> ScalarField {
        self.target.sub(self.source)
    }
}

fn check_transport_pair(source: &Density, target: &Density) -> Result<()> {
    source.grid().check_same(target.grid())?;
    let (a, b) = (source.mass(), target.mass());
    if (a - b).abs() > 1e-10 * a.max(b) {
        return Err(Error::MassMismatch(a, b));
    }
    for d in [source, target] {
        let i = d.field().argmin();
        if !(d.values()[i] > 0.0) {
            return Err(Error::NonPositiveInput {
                index: i,
                value: d.values()[i],
            });
        }
    }
    Ok(())
}

/// Map `η` with `Jac η · (target ∘ η) = source`.
///
/// On the circle this is the monotone rearrangement with `η(0) = 0`; on the
/// torus it is the time-one map of the Moser flow along the linear
/// interpolation, advanced with 100 RK4 steps.
pub fn transport_map(source: &Density, target: &Density) -> Result<FlowSnapshot> {
    transport_map_with(source, target, 0.01)
}

/// [`transport_map`] with an explicit step for the 2D Moser flow.
pub fn transport_map_with(source: &Density, target: &Density, dt: f64) -> Result<FlowSnapshot> {
    check_transport_pair(source, target)?;
    let grid = *source.grid();
    if grid.dim() == 1 {
        return transport_map_1d(source, target, 0.0);
    }
    let path = LinearPath {
        source: source.field(),
        target: target.field(),
    };
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let ids = identity_positions(&grid);
    let mut px = ids[0].values().to_vec();
    let mut py = ids[1].values().to_vec();
    // the flow of ∇f/ρ_t pushes source to target directly
    advect(&path, &mut px, &mut py, 0.0, 1.0, dt)?;
    let positions = vec![
        ScalarField::new(grid, px).expect("grid"),
        ScalarField::new(grid, py).expect("grid"),
    ];
    let jac = jacobian_2d(&positions);
    Ok(FlowSnapshot {
        time: 1.0,
        positions,
        jacobian: jac,
        eulerian_rho: None,
        inverse_positions: None,
    })
}

/// Monotone map on the circle with `η(0) = base` and
/// `∫_base^{η(x)} target = ∫₀ˣ source`.
pub fn transport_map_1d(source: &Density, target: &Density, base: f64) -> Result<FlowSnapshot> {
    check_transport_pair(source, target)?;
    let grid = *source.grid();
    if grid.dim() != 1 {
        return Err(Error::InvalidArgument("circle only".into()));
    }
    let l = grid.length(0);
    let mean_s = source.mass() / l;
    let mean_t = target.mass() / l;
    let ps = periodic_antiderivative(source.field());
    let ps0 = ps.values()[0];
    let pt = periodic_antiderivative(target.field());
    let pt_it = TrigInterpolant::new(&pt);
    let tg_it = TrigInterpolant::new(target.field());
    let cdf_t = |z: f64| mean_t * z + pt_it.eval(z, 0.0);
    let t_base = cdf_t(base);
    let spread = 2.0 * pt.sup_norm() / mean_t + 2.0 * ps.sup_norm() / mean_t + 1e-12;
    let mut eta = Vec::with_capacity(grid.len());
    let mut jac = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let x = grid.node(i)[0];
        let goal = t_base + mean_s * x + ps.values()[i] - ps0;
        let guess = base + goal / mean_t - t_base / mean_t;
        let (mut lo, mut hi) = (guess - spread, guess + spread);
        let mut z = guess;
        for _ in 0..200 {
            let r = cdf_t(z) - goal;
            if r.abs() < 1e-15 * target.mass() {
                break;
            }
            if r > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let d = tg_it.eval(z, 0.0);
            let newton = z - r / d;
            z = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-15 * l {
                break;
            }
        }
        let r = cdf_t(z) - goal;
        if r.abs() > 1e-11 * target.mass() {
            return Err(Error::InversionDiverged { residual: r.abs() });
        }
        eta.push(z);
        jac.push(source.values()[i] / tg_it.eval(z, 0.0));
    }
    Ok(FlowSnapshot {
        time: 1.0,
        positions: vec![ScalarField::new(grid, eta).expect("grid")],
        jacobian: ScalarField::new(grid, jac).expect("grid"),
        eulerian_rho: None,
        inverse_positions: None,
    })
}

/// `sup |Jac η · (target ∘ η) − source|` for a map sampled at the labels.
pub fn pushforward_residual(map: &FlowSnapshot, source: &Density, target: &Density) -> f64 {
    let grid = source.grid();
    let it = FastInterpolant::new(target.field());
    (0..grid.len())
        .map(|i| {
            let x = map.positions[0].values()[i];
            let y = if grid.dim() == 2 {
                map.positions[1].values()[i]
            } else {
                0.0
            };
            (map.jacobian.values()[i] * it.eval(x, y) - source.values()[i]).abs()
        })
        .fold(0.0, f64::max)
}
