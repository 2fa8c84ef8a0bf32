//! Generalized Hunter-Saxton flow
//! `ρ_t + u·∇ρ + ½ρ² = −(1/2μ(M)) ∫ρ² dμ`, `div u = ρ`.
//!
//! Along a geodesic the square root of the Jacobian traces a great circle,
//! `√Jac η(t) = cos κt + (ρ0/2κ) sin κt`, which gives every Lagrangian
//! quantity in closed form. The numerical integrators here exist to check
//! those formulas against an honest time integration.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::density::{square_map, Density, SpherePoint};
use crate::error::{Error, Result};
use crate::grid::{
    check_mean_zero, divergence, gradient, integrate, laplacian_inverse,
    periodic_antiderivative, PeriodicGrid, ScalarField, VectorField,
};
use crate::interp::{FastInterpolant, TrigInterpolant};
use crate::spectral::Spectrum;

/// Below this κ the geodesic is treated as stationary.
pub const KAPPA_ZERO: f64 = 1e-13;

/// Allowed drift of `∫ Jac dμ` during numerical flow integration.
pub const JACOBIAN_DRIFT_TOL: f64 = 1e-3;

/// Minimum of the trigonometric interpolant of `field`, starting from the
/// smallest node and refined by safeguarded Newton iterations.
pub fn refined_min(field: &ScalarField) -> f64 {
    let g = field.grid();
    let i = field.argmin();
    let node_min = field.values()[i];
    let it = TrigInterpolant::new(field);
    let [x0, y0] = g.node(i);
    let mut best = node_min;
    if g.dim() == 1 {
        let mut x = x0;
        for _ in 0..30 {
            let (_, d1, d2) = it.eval_1d_derivs(x);
            if d2 <= 0.0 {
                break;
            }
            let step = d1 / d2;
            x -= step;
            let v = it.eval(x, 0.0);
            if v < best {
                best = v;
            }
            if step.abs() < 1e-15 * g.length(0) {
                break;
            }
        }
    } else {
        let (mut x, mut y) = (x0, y0);
        let h = 1e-6 * g.length(0).min(g.length(1));
        for _ in 0..30 {
            let (_, gx, gy) = it.eval_with_gradient(x, y);
            let (_, gxp, gyp) = it.eval_with_gradient(x + h, y);
            let (_, gxm, gym) = it.eval_with_gradient(x - h, y);
            let (_, gxq, gyq) = it.eval_with_gradient(x, y + h);
            let (_, gxr, gyr) = it.eval_with_gradient(x, y - h);
            let hxx = (gxp - gxm) / (2.0 * h);
            let hyy = (gyq - gyr) / (2.0 * h);
            let hxy = 0.5 * ((gyp - gym) + (gxq - gxr)) / (2.0 * h);
            let det = hxx * hyy - hxy * hxy;
            if hxx <= 0.0 || det <= 0.0 {
                break;
            }
            let dx = (hyy * gx - hxy * gy) / det;
            let dy = (hxx * gy - hxy * gx) / det;
            x -= dx;
            y -= dy;
            let v = it.eval(x, y);
            if v < best {
                best = v;
            }
            if dx.abs().max(dy.abs()) < 1e-14 {
                break;
            }
        }
    }
    best.min(node_min)
}

/// Closed-form record of the geodesic through the identity with initial
/// divergence `ρ0`.
#[derive(Debug, Clone)]
pub struct HsGeodesic {
    grid: PeriodicGrid,
    rho0: ScalarField,
    kappa: f64,
    t_max: f64,
    mass: f64,
}

/// Geodesic with initial velocity `u0`; only `div u0` matters.
pub fn make_geodesic(u0: &VectorField) -> Result<HsGeodesic> {
    HsGeodesic::from_divergence(divergence(u0))
}

impl HsGeodesic {
    /// Geodesic from the initial divergence directly.
    pub fn from_divergence(rho0: ScalarField) -> Result<Self> {
        check_mean_zero(&rho0)?;
        let grid = *rho0.grid();
        let mass = grid.total_volume();
        let kappa = (integrate(&rho0.map(|v| v * v)) / (4.0 * mass)).sqrt();
        let sup = rho0.sup_norm();
        let t_max = if kappa < KAPPA_ZERO {
            if sup > 1e-10 {
                return Err(Error::InconsistentZeroKappa { sup });
            }
            f64::INFINITY
        } else {
            let inf = refined_min(&rho0);
            FRAC_PI_2 / kappa + (inf / (2.0 * kappa)).atan() / kappa
        };
        let kappa = if kappa < KAPPA_ZERO { 0.0 } else { kappa };
        Ok(HsGeodesic {
            grid,
            rho0,
            kappa,
            t_max,
            mass,
        })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn rho0(&self) -> &ScalarField {
        &self.rho0
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Blowup time (`+∞` when `κ = 0`).
    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    fn is_stationary(&self) -> bool {
        self.kappa == 0.0
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t >= self.t_max {
            Err(Error::BeyondBlowup {
                t,
                t_max: self.t_max,
            })
        } else {
            Ok(())
        }
    }

    /// `ρ(t, η(t, x))` at the Lagrangian labels.
    pub fn rho_along_flow(&self, t: f64) -> Result<ScalarField> {
        self.check_time(t)?;
        if self.is_stationary() {
            return Ok(ScalarField::zeros(&self.grid));
        }
        let k = self.kappa;
        Ok(self
            .rho0
            .map(|r| 2.0 * k * ((r / (2.0 * k)).atan() - k * t).tan()))
    }

    /// Great-circle point `f(t) = cos κt + (ρ0/2κ) sin κt`, defined for all t.
    pub fn sphere_field(&self, t: f64) -> ScalarField {
        if self.is_stationary() {
            return ScalarField::constant(&self.grid, 1.0);
        }
        let k = self.kappa;
        let (s, c) = (k * t).sin_cos();
        self.rho0.map(|r| c + r / (2.0 * k) * s)
    }

    /// `∂f/∂t = −κ sin κt + (ρ0/2) cos κt`.
    pub fn sphere_velocity(&self, t: f64) -> ScalarField {
        if self.is_stationary() {
            return ScalarField::zeros(&self.grid);
        }
        let k = self.kappa;
        let (s, c) = (k * t).sin_cos();
        self.rho0.map(|r| -k * s + 0.5 * r * c)
    }

    /// `Jac η(t) = f(t)²`; valid for every real t.
    pub fn jacobian_formula(&self, t: f64) -> ScalarField {
        self.sphere_field(t).map(|v| v * v)
    }

    /// `∂t Jac η(t) = 2 f ḟ`.
    pub fn jacobian_rate(&self, t: f64) -> ScalarField {
        self.sphere_field(t)
            .zip_map(&self.sphere_velocity(t), |f, fd| 2.0 * f * fd)
    }

    /// Sphere point and density at any real time; past `t_max` the density
    /// is flagged as coming from a sign-changing sphere point.
    pub fn evolve_density_global(&self, t: f64) -> (SpherePoint, Density) {
        let p = SpherePoint::from_field(self.sphere_field(t));
        let d = square_map(&p);
        (p, d)
    }

    /// Exact value of `∫ρ² dμ`, conserved along the flow.
    pub fn conserved_energy(&self) -> f64 {
        4.0 * self.kappa * self.kappa * self.mass
    }

    /// First time on a uniform scan of `[0, t_max)` with `steps` points at
    /// which `sup |ρ|` reaches `threshold`.
    pub fn first_crossing(&self, threshold: f64, steps: usize) -> Option<f64> {
        if !self.t_max.is_finite() {
            return None;
        }
        (0..steps)
            .map(|i| self.t_max * i as f64 / steps as f64)
            .find(|&t| {
                self.rho_along_flow(t)
                    .map(|r| r.sup_norm() >= threshold)
                    .unwrap_or(true)
            })
    }

    /// Lagrangian map at time `t` in the gauge that pins the base point,
    /// `η(t, 0) = 0`: `η(t, x) = ∫₀ˣ Jac η(t)` (circle only).
    pub fn pinned_map_1d(&self, t: f64) -> ScalarField {
        assert_eq!(self.grid.dim(), 1);
        let jm1 = self.jacobian_formula(t).map(|v| v - 1.0);
        let p = periodic_antiderivative(&jm1);
        let p0 = p.values()[0];
        ScalarField::from_fn(&self.grid, |x, _| x).add(&p.map(|v| v - p0))
    }

    /// Eulerian density and velocity at points `ys` on the circle, in the
    /// gauge `u(t, 0) = 0`. The labels `η(t)⁻¹(y)` are found by Newton's
    /// method on the exact interpolant of the Jacobian primitive.
    pub fn eulerian_1d(&self, t: f64, ys: &[f64]) -> Result<EulerianSample> {
        assert_eq!(self.grid.dim(), 1);
        self.check_time(t)?;
        let l = self.grid.length(0);
        let jac = self.jacobian_formula(t);
        let jm1 = jac.map(|v| v - 1.0);
        let q = periodic_antiderivative(&jm1);
        let q_it = TrigInterpolant::new(&q);
        let q0 = q_it.eval(0.0, 0.0);
        let j_it = TrigInterpolant::new(&jac);
        let rate = self.jacobian_rate(t);
        let w = periodic_antiderivative(&rate);
        let w_it = TrigInterpolant::new(&w);
        let w0 = w_it.eval(0.0, 0.0);
        let rho0_it = TrigInterpolant::new(&self.rho0);
        let k = self.kappa;

        let mut labels = Vec::with_capacity(ys.len());
        let mut rho = Vec::with_capacity(ys.len());
        let mut vel = Vec::with_capacity(ys.len());
        let spread = 2.0 * q.sup_norm() + 1e-12;
        for &y in ys {
            // η(x) − x is bounded by `spread`, which brackets the root
            let (mut lo, mut hi) = (y - spread, y + spread);
            let mut x = y;
            let mut residual = f64::INFINITY;
            for _ in 0..200 {
                let eta = x + q_it.eval(x, 0.0) - q0;
                residual = eta - y;
                if residual.abs() < 1e-15 * l.max(1.0) {
                    break;
                }
                if residual > 0.0 {
                    hi = x;
                } else {
                    lo = x;
                }
                let d = j_it.eval(x, 0.0);
                let newton = x - residual / d;
                x = if d > 0.0 && newton > lo && newton < hi {
                    newton
                } else {
                    0.5 * (lo + hi)
                };
                if hi - lo < 1e-15 * l.max(1.0) {
                    residual = x + q_it.eval(x, 0.0) - q0 - y;
                    break;
                }
            }
            if residual.abs() > 1e-12 * l.max(1.0) {
                return Err(Error::InversionDiverged {
                    residual: residual.abs(),
                });
            }
            let r0 = rho0_it.eval(x, 0.0);
            let r = if self.is_stationary() {
                0.0
            } else {
                2.0 * k * ((r0 / (2.0 * k)).atan() - k * t).tan()
            };
            labels.push(x);
            rho.push(r);
            vel.push(w_it.eval(x, 0.0) - w0);
        }
        Ok(EulerianSample {
            labels,
            rho,
            velocity: vel,
        })
    }
}

/// Eulerian fields sampled at given points.
#[derive(Debug, Clone)]
pub struct EulerianSample {
    /// Lagrangian labels of the sample points.
    pub labels: Vec<f64>,
    pub rho: Vec<f64>,
    pub velocity: Vec<f64>,
}

/// Gradient velocity `u = ∇Δ⁻¹ρ`, the choice with `div u = ρ` and no
/// divergence-free part.
pub fn velocity_from_rho(rho: &ScalarField) -> Result<VectorField> {
    Ok(gradient(&laplacian_inverse(rho)?))
}

/// `∫ρ² dμ`.
pub fn energy(rho_t: &ScalarField) -> f64 {
    integrate(&rho_t.map(|v| v * v))
}

/// Particle positions and Jacobians at one time.
#[derive(Debug, Clone)]
pub struct FlowSnapshot {
    pub time: f64,
    /// `η(t, x)` per axis, unwrapped (not reduced modulo the period).
    pub positions: Vec<ScalarField>,
    pub jacobian: ScalarField,
    /// Eulerian density on the grid, when the integrator evolves it.
    pub eulerian_rho: Option<ScalarField>,
    /// Inverse map `η(t)⁻¹` at the labels, when the construction produces it.
    pub inverse_positions: Option<Vec<ScalarField>>,
}

/// Time series of a flow of diffeomorphisms sampled at the grid labels.
#[derive(Debug, Clone)]
pub struct FlowMap {
    grid: PeriodicGrid,
    snapshots: Vec<FlowSnapshot>,
}

impl FlowMap {
    pub(crate) fn new(grid: PeriodicGrid, snapshots: Vec<FlowSnapshot>) -> Self {
        FlowMap { grid, snapshots }
    }

    /// Identity flow held at the given times.
    pub fn identity(grid: &PeriodicGrid, times: &[f64]) -> Self {
        let snapshots = times
            .iter()
            .map(|&time| FlowSnapshot {
                time,
                positions: identity_positions(grid),
                jacobian: ScalarField::constant(grid, 1.0),
                eulerian_rho: None,
                inverse_positions: None,
            })
            .collect();
        FlowMap {
            grid: *grid,
            snapshots,
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn snapshots(&self) -> &[FlowSnapshot] {
        &self.snapshots
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> &FlowSnapshot {
        self.snapshots.last().expect("flow has at least one snapshot")
    }

    /// Largest `|∫ Jac dμ − μ(M)| / μ(M)` over the stored times.
    pub fn max_mass_drift(&self) -> f64 {
        let m = self.grid.total_volume();
        self.snapshots
            .iter()
            .map(|s| (integrate(&s.jacobian) - m).abs() / m)
            .fold(0.0, f64::max)
    }
}

pub(crate) fn identity_positions(grid: &PeriodicGrid) -> Vec<ScalarField> {
    (0..grid.dim())
        .map(|a| ScalarField::from_fn(grid, |x, y| if a == 0 { x } else { y }))
        .collect()
}

/// Number of equal steps covering `[0, t_final]` with step at most `dt`.
pub(crate) fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0 and t_final >= 0 (got dt = {dt}, t_final = {t_final})"
        )));
    }
    Ok(((t_final / dt) - 1e-9).ceil().max(1.0) as usize)
}

/// Indices of the steps at which snapshots are recorded.
pub(crate) fn snapshot_steps(steps: usize, snapshots: usize) -> Vec<usize> {
    let k = snapshots.clamp(1, steps);
    let mut v: Vec<usize> = (0..=k).map(|i| i * steps / k).collect();
    v.dedup();
    v
}

/// Integrate the flow numerically with fixed-step RK4, keeping ten
/// snapshots besides the initial one.
pub fn integrate_flow(g: &HsGeodesic, t_final: f64, dt: f64) -> Result<FlowMap> {
    integrate_flow_with(g, t_final, dt, 10)
}

/// [`integrate_flow`] with a chosen number of stored snapshots.
///
/// On the circle the velocity at the particles is `∇Δ⁻¹` of the Eulerian
/// density, written in label coordinates: `u(η(x)) = c + ∫₀ˣ ρ(η) Jac η`,
/// with `c` fixing `∫ u = 0`; `ρ(η)` comes from the closed form. On the torus
/// the Eulerian density is evolved pseudospectrally and sampled at the
/// particles by interpolation.
pub fn integrate_flow_with(
    g: &HsGeodesic,
    t_final: f64,
    dt: f64,
    snapshots: usize,
) -> Result<FlowMap> {
    g.check_time(t_final)?;
    let steps = step_count(t_final, dt)?;
    let h = t_final / steps as f64;
    let keep = snapshot_steps(steps, snapshots);
    if g.is_stationary() {
        let times: Vec<f64> = keep.iter().map(|&i| i as f64 * h).collect();
        return Ok(FlowMap::identity(&g.grid, &times));
    }
    if g.grid.dim() == 1 {
        integrate_1d(g, steps, h, &keep)
    } else {
        integrate_2d(g, steps, h, &keep)
    }
}

fn check_drift(grid: &PeriodicGrid, jac: &ScalarField, t: f64) -> Result<()> {
    let m = grid.total_volume();
    let drift = (integrate(jac) - m).abs() / m;
    if drift > JACOBIAN_DRIFT_TOL || !drift.is_finite() {
        return Err(Error::StepTooLarge(format!(
            "Jacobian mass drift {drift:e} at t = {t}"
        )));
    }
    Ok(())
}

fn integrate_1d(g: &HsGeodesic, steps: usize, h: f64, keep: &[usize]) -> Result<FlowMap> {
    let grid = g.grid;
    let rhs = |t: f64, jac: &ScalarField| -> Result<(ScalarField, ScalarField)> {
        let rho = g.rho_along_flow(t)?;
        let jdot = rho.mul(jac);
        let w = periodic_antiderivative(&jdot);
        let c = -integrate(&w.mul(jac)) / integrate(jac);
        Ok((w.map(|v| v + c), jdot))
    };
    let mut eta = identity_positions(&grid).remove(0);
    let mut jac = ScalarField::constant(&grid, 1.0);
    let mut out = Vec::with_capacity(keep.len());
    let mut next = 0;
    for step in 0..=steps {
        let t = step as f64 * h;
        if next < keep.len() && keep[next] == step {
            out.push(FlowSnapshot {
                time: t,
                positions: vec![eta.clone()],
                jacobian: jac.clone(),
                eulerian_rho: None,
                inverse_positions: None,
            });
            next += 1;
        }
        if step == steps {
            break;
        }
        let (k1e, k1j) = rhs(t, &jac)?;
        let (k2e, k2j) = rhs(t + 0.5 * h, &jac.add(&k1j.scale(0.5 * h)))?;
        let (k3e, k3j) = rhs(t + 0.5 * h, &jac.add(&k2j.scale(0.5 * h)))?;
        let (k4e, k4j) = rhs(t + h, &jac.add(&k3j.scale(h)))?;
        let comb = |a: &ScalarField, b: &ScalarField, c: &ScalarField, d: &ScalarField| {
            a.add(&b.scale(2.0)).add(&c.scale(2.0)).add(d).scale(h / 6.0)
        };
        eta = eta.add(&comb(&k1e, &k2e, &k3e, &k4e));
        jac = jac.add(&comb(&k1j, &k2j, &k3j, &k4j));
        check_drift(&grid, &jac, t + h)?;
    }
    Ok(FlowMap::new(grid, out))
}

/// State of the coupled Eulerian/particle system on the torus.
#[derive(Clone)]
struct State2d {
    rho: ScalarField,
    px: Vec<f64>,
    py: Vec<f64>,
    jac: Vec<f64>,
}

impl State2d {
    fn axpy(&self, a: f64, d: &State2d) -> State2d {
        let lin = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p + a * q).collect();
        State2d {
            rho: self.rho.add(&d.rho.scale(a)),
            px: lin(&self.px, &d.px),
            py: lin(&self.py, &d.py),
            jac: lin(&self.jac, &d.jac),
        }
    }
}

fn mean_free_velocity(rho: &ScalarField) -> (ScalarField, ScalarField) {
    let pot = Spectrum::of(rho)
        .apply(|kx, ky, _| {
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(-1.0 / k2, 0.0)
            }
        })
        .to_field();
    let v = gradient(&pot);
    (v.component(0).clone(), v.component(1).clone())
}

fn rhs_2d(s: &State2d, mass: f64) -> State2d {
    let (ux, uy) = mean_free_velocity(&s.rho);
    let d = gradient(&s.rho);
    let c = integrate(&s.rho.map(|v| v * v)) / (2.0 * mass);
    let n = s.rho.values().len();
    let mut nl = vec![0.0; n];
    let (rv, uxv, uyv) = (s.rho.values(), ux.values(), uy.values());
    let (dxv, dyv) = (d.component(0).values(), d.component(1).values());
    for i in 0..n {
        nl[i] = uxv[i] * dxv[i] + uyv[i] * dyv[i] + 0.5 * rv[i] * rv[i];
    }
    let nl = Spectrum::of(&ScalarField::from_values_unchecked(*s.rho.grid(), nl))
        .dealias()
        .to_field();
    let drho = nl.map(|v| -v - c);

    let it = FastInterpolant::new_multi(&[&ux, &uy, &s.rho]);
    let sampled: Vec<(f64, f64, f64)> = (0..s.px.len())
        .into_par_iter()
        .map(|i| {
            let mut v = [0.0; 3];
            it.eval_into(s.px[i], s.py[i], &mut v);
            (v[0], v[1], v[2] * s.jac[i])
        })
        .collect();
    State2d {
        rho: drho,
        px: sampled.iter().map(|v| v.0).collect(),
        py: sampled.iter().map(|v| v.1).collect(),
        jac: sampled.iter().map(|v| v.2).collect(),
    }
}

fn integrate_2d(g: &HsGeodesic, steps: usize, h: f64, keep: &[usize]) -> Result<FlowMap> {
    let grid = g.grid;
    let ids = identity_positions(&grid);
    let mut s = State2d {
        rho: g.rho0.clone(),
        px: ids[0].values().to_vec(),
        py: ids[1].values().to_vec(),
        jac: vec![1.0; grid.len()],
    };
    let mut out = Vec::with_capacity(keep.len());
    let mut next = 0;
    for step in 0..=steps {
        let t = step as f64 * h;
        if next < keep.len() && keep[next] == step {
            out.push(FlowSnapshot {
                time: t,
                positions: vec![
                    ScalarField::from_values_unchecked(grid, s.px.clone()),
                    ScalarField::from_values_unchecked(grid, s.py.clone()),
                ],
                jacobian: ScalarField::from_values_unchecked(grid, s.jac.clone()),
                eulerian_rho: Some(s.rho.clone()),
                inverse_positions: None,
            });
            next += 1;
        }
        if step == steps {
            break;
        }
        let k1 = rhs_2d(&s, g.mass);
        let k2 = rhs_2d(&s.axpy(0.5 * h, &k1), g.mass);
        let k3 = rhs_2d(&s.axpy(0.5 * h, &k2), g.mass);
        let k4 = rhs_2d(&s.axpy(h, &k3), g.mass);
        s = s
            .axpy(h / 6.0, &k1)
            .axpy(h / 3.0, &k2)
            .axpy(h / 3.0, &k3)
            .axpy(h / 6.0, &k4);
        let jac = ScalarField::from_values_unchecked(grid, s.jac.clone());
        check_drift(&grid, &jac, t + h)?;
    }
    Ok(FlowMap::new(grid, out))
}
