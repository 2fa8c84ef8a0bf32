//! α-connections on circle densities and pseudospectral integrators for the
//! 1D Euler-Arnold equations.
//!
//! Densities on the circle are realized as diffeomorphisms fixing `x = 0`, so
//! velocities are normalized by `u(0) = 0`. The α-geodesic equation is
//! `u_t + u u_x + Γ^α(u, u) = 0`; differentiating twice gives
//! `u_txx + (2 − α) u_x u_xx + u u_xxx = 0`, which is Hunter-Saxton at α = 0
//! and μ-Burgers at α = −1.

use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{
    check_mean_zero, dealias, derivative, integrate, periodic_antiderivative, PeriodicGrid,
    ScalarField,
};
use crate::interp::TrigInterpolant;
use crate::spectral::Spectrum;

/// CFL bound on `speed · sup|u| · dt · N / L`.
pub const CFL_LIMIT: f64 = 0.5;

fn require_circle(grid: &PeriodicGrid) -> Result<()> {
    if grid.dim() != 1 {
        return Err(Error::InvalidGrid(
            "operation is defined on the circle only".into(),
        ));
    }
    Ok(())
}

/// `A⁻¹u(x) = −∫₀ˣ∫₀ʸ u + (x/L) ∫₀ᴸ∫₀ʸ u`, the inverse of `−∂ₓ²` vanishing
/// at the base point.
pub fn a_inverse(u: &ScalarField) -> Result<ScalarField> {
    require_circle(u.grid())?;
    check_mean_zero(u)?;
    Ok(a_inverse_unchecked(u))
}

fn a_inverse_unchecked(u: &ScalarField) -> ScalarField {
    let g = *u.grid();
    let l = g.length(0);
    // ∫₀ˣ u = p(x) − p(0), ∫₀ˣ∫₀ʸ u = q(x) − q(0) − x p(0)
    let p = periodic_antiderivative(u);
    let q = periodic_antiderivative(&p);
    let (p0, q0) = (p.values()[0], q.values()[0]);
    let total = -l * p0;
    let values = (0..g.len())
        .map(|i| {
            let x = g.node(i)[0];
            let double = q.values()[i] - q0 - x * p0;
            -double + x / l * total
        })
        .collect();
    ScalarField::from_values_unchecked(g, values)
}

/// The connection `∇^α` on circle densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaConnection {
    alpha: f64,
}

impl AlphaConnection {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be finite, got {alpha}")));
        }
        Ok(AlphaConnection { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The dual connection `∇^{−α}`.
    pub fn dual(&self) -> Self {
        AlphaConnection { alpha: -self.alpha }
    }

    fn factor(&self) -> f64 {
        0.5 * (1.0 + self.alpha)
    }
}

/// `Γ^α(v, w) = ((1+α)/2) A⁻¹ ∂ₓ(vₓ wₓ)`.
pub fn christoffel(c: &AlphaConnection, v: &ScalarField, w: &ScalarField) -> Result<ScalarField> {
    require_circle(v.grid())?;
    v.grid().check_same(w.grid())?;
    let prod = derivative(v, 0).mul(&derivative(w, 0));
    Ok(christoffel_of_product(c, &prod))
}

fn christoffel_of_product(c: &AlphaConnection, vw_x: &ScalarField) -> ScalarField {
    if c.factor() == 0.0 {
        return ScalarField::zeros(vw_x.grid());
    }
    a_inverse_unchecked(&derivative(vw_x, 0)).scale(c.factor())
}

fn check_cfl(u: &ScalarField, dt: f64, speed: f64) -> Result<()> {
    let g = u.grid();
    let number = speed * u.sup_norm() * dt * g.points(0) as f64 / g.length(0);
    if !(number <= CFL_LIMIT) {
        return Err(Error::StepTooLarge(format!(
            "CFL number {number:.3} exceeds {CFL_LIMIT}"
        )));
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

fn rk4<F: Fn(&ScalarField) -> ScalarField>(u: &ScalarField, dt: f64, f: F) -> ScalarField {
    let k1 = f(u);
    let k2 = f(&u.add(&k1.scale(0.5 * dt)));
    let k3 = f(&u.add(&k2.scale(0.5 * dt)));
    let k4 = f(&u.add(&k3.scale(dt)));
    let incr = k1.add(&k2.scale(2.0)).add(&k3.scale(2.0)).add(&k4);
    u.add(&incr.scale(dt / 6.0))
}

fn alpha_rhs(c: &AlphaConnection, u: &ScalarField) -> ScalarField {
    let ux = derivative(u, 0);
    let transport = dealias(&u.mul(&ux));
    let gamma = christoffel_of_product(c, &dealias(&ux.mul(&ux)));
    transport.add(&gamma).scale(-1.0)
}

fn regauge(u: ScalarField) -> ScalarField {
    let u0 = u.values()[0];
    u.map(|v| v - u0)
}

/// One RK4 step of `u_t + u u_x + Γ^α(u, u) = 0`, re-based to `u(0) = 0`.
pub fn alpha_geodesic_step(c: &AlphaConnection, u: &ScalarField, dt: f64) -> Result<ScalarField> {
    require_circle(u.grid())?;
    check_dt(dt)?;
    check_cfl(u, dt, 1.0)?;
    Ok(regauge(rk4(u, dt, |v| alpha_rhs(c, v))))
}

/// The classic equations obtained from particular Euler-Arnold metrics on the circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassicEquation {
    /// `u_t + 3 u u_x = 0`
    Burgers,
    /// `u_t − u_txx + 3 u u_x − 2 u_x u_xx − u u_xxx = 0`
    CamassaHolm,
    /// `u_txx + 2 u_x u_xx + u u_xxx = 0`
    HunterSaxton,
    /// `u_txx + 3 u_x u_xx + u u_xxx = 0`
    MuBurgers,
}

impl ClassicEquation {
    pub fn name(&self) -> &'static str {
        match self {
            ClassicEquation::Burgers => "burgers",
            ClassicEquation::CamassaHolm => "camassa_holm",
            ClassicEquation::HunterSaxton => "hunter_saxton",
            ClassicEquation::MuBurgers => "mu_burgers",
        }
    }

    /// Advection speed relative to `u`, used for the CFL monitor.
    fn speed(&self) -> f64 {
        match self {
            ClassicEquation::Burgers => 3.0,
            _ => 1.0,
        }
    }
}

impl FromStr for ClassicEquation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "burgers" => Ok(ClassicEquation::Burgers),
            "camassa_holm" | "ch" => Ok(ClassicEquation::CamassaHolm),
            "hunter_saxton" | "hs" => Ok(ClassicEquation::HunterSaxton),
            "mu_burgers" => Ok(ClassicEquation::MuBurgers),
            other => Err(Error::Parse(format!("unknown equation '{other}'"))),
        }
    }
}

/// `(1 − ∂ₓ²)⁻¹`.
fn helmholtz_inverse(f: &ScalarField) -> ScalarField {
    Spectrum::of(f)
        .apply(|k, _, _| Complex64::new(1.0 / (1.0 + k * k), 0.0))
        .to_field()
}

fn camassa_holm_rhs(u: &ScalarField) -> ScalarField {
    let ux = derivative(u, 0);
    let uxx = derivative(&ux, 0);
    let uxxx = derivative(&uxx, 0);
    let n = u.values().len();
    let (uv, a, b, c) = (u.values(), ux.values(), uxx.values(), uxxx.values());
    let nl: Vec<f64> = (0..n)
        .map(|i| 3.0 * uv[i] * a[i] - 2.0 * a[i] * b[i] - uv[i] * c[i])
        .collect();
    let nl = dealias(&ScalarField::from_values_unchecked(*u.grid(), nl));
    helmholtz_inverse(&nl).scale(-1.0)
}

/// One RK4 step of the chosen equation. Hunter-Saxton and μ-Burgers are the
/// α = 0 and α = −1 geodesic equations and keep the `u(0) = 0` gauge.
pub fn classic_1d_step(eq: ClassicEquation, u: &ScalarField, dt: f64) -> Result<ScalarField> {
    require_circle(u.grid())?;
    check_dt(dt)?;
    check_cfl(u, dt, eq.speed())?;
    Ok(match eq {
        ClassicEquation::Burgers => rk4(u, dt, |v| {
            dealias(&v.mul(&derivative(v, 0))).scale(-3.0)
        }),
        ClassicEquation::CamassaHolm => rk4(u, dt, camassa_holm_rhs),
        ClassicEquation::HunterSaxton => {
            let c = AlphaConnection { alpha: 0.0 };
            regauge(rk4(u, dt, |v| alpha_rhs(&c, v)))
        }
        ClassicEquation::MuBurgers => {
            let c = AlphaConnection { alpha: -1.0 };
            regauge(rk4(u, dt, |v| alpha_rhs(&c, v)))
        }
    })
}

/// Sampled solution of a time integration.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ScalarField>,
}

impl Trajectory {
    pub fn last(&self) -> &ScalarField {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Integrate from `u0` to `t_final` with uniform steps no larger than `dt`,
/// keeping `samples` (≥ 2) equally spaced states.
pub fn evolve<F>(u0: &ScalarField, t_final: f64, dt: f64, samples: usize, step: F) -> Result<Trajectory>
where
    F: Fn(&ScalarField, f64) -> Result<ScalarField>,
{
    check_dt(dt)?;
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_final must be non-negative, got {t_final}")));
    }
    let steps = ((t_final / dt).ceil() as usize).max(1);
    let h = t_final / steps as f64;
    let samples = samples.clamp(2, steps + 1);
    let keep: Vec<usize> = (0..samples)
        .map(|j| (j * steps + (samples - 1) / 2) / (samples - 1))
        .collect();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![u0.clone()],
    };
    let mut u = u0.clone();
    let mut next = 1;
    for s in 1..=steps {
        if h > 0.0 {
            u = step(&u, h)?;
        }
        while next < keep.len() && keep[next] == s {
            traj.times.push(s as f64 * h);
            traj.states.push(u.clone());
            next += 1;
        }
    }
    Ok(traj)
}

/// Closed-form α = 1 geodesic at time `t`.
#[derive(Debug, Clone)]
pub struct AlphaOneSolution {
    /// Eulerian velocity `u(t, ·)` at the grid nodes.
    pub u: ScalarField,
    /// Positions `η_t(x_i)`; increasing from 0, not periodic.
    pub eta: ScalarField,
}

/// α = 1 geodesic from `u0` (with `u0(0) = 0`):
/// `η_t(x) = ∫₀ˣ e^{t u0ₓ} / Z`, `Z = (1/L)∫₀ᴸ e^{t u0ₓ}`, and
/// `u(t, x) = Z⁻¹ ∫₀^{η_t⁻¹(x)} u0ₓ e^{t u0ₓ} − x Z′/Z`.
pub fn alpha_one_explicit(u0: &ScalarField, t: f64) -> Result<AlphaOneSolution> {
    let g = *u0.grid();
    require_circle(&g)?;
    let base = u0.values()[0];
    if base.abs() > 1e-10 * u0.sup_norm().max(1.0) {
        return Err(Error::InvalidArgument(format!("u0(0) must vanish, got {base:e}")));
    }
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("t must be finite, got {t}")));
    }
    let l = g.length(0);
    let d = derivative(u0, 0);
    let e = d.map(|v| (t * v).exp());
    let de = d.mul(&e);
    let z = integrate(&e) / l;
    let zp = integrate(&de) / l;
    let pe = TrigInterpolant::new(&periodic_antiderivative(&e));
    let pg = TrigInterpolant::new(&periodic_antiderivative(&de));
    let pe0 = pe.eval(0.0, 0.0);
    let pg0 = pg.eval(0.0, 0.0);
    let eta_at = |y: f64| {
        let (v, d1, _) = pe.eval_1d_derivs(y);
        (y + (v - pe0) / z, 1.0 + d1 / z)
    };

    let nodes: Vec<f64> = (0..g.len()).map(|i| g.node(i)[0]).collect();
    let solved: Vec<Result<(f64, f64)>> = nodes
        .par_iter()
        .map(|&x| {
            // safeguarded Newton for η(y) = x on [0, L]
            let (mut lo, mut hi) = (0.0, l);
            let mut y = x;
            for _ in 0..100 {
                let (f, fp) = eta_at(y);
                let r = f - x;
                if r.abs() < 1e-14 * l {
                    // one more step to reach round-off
                    y -= r / fp;
                    let gval = zp * y + pg.eval(y, 0.0) - pg0;
                    return Ok((y, gval / z - x * zp / z));
                }
                if r > 0.0 {
                    hi = y;
                } else {
                    lo = y;
                }
                let mut next = y - r / fp;
                if !(next > lo && next < hi) {
                    next = 0.5 * (lo + hi);
                }
                y = next;
            }
            Err(Error::InversionDiverged {
                residual: (eta_at(y).0 - x).abs(),
            })
        })
        .collect();
    let mut u = Vec::with_capacity(g.len());
    for r in solved {
        u.push(r?.1);
    }
    let eta = nodes.iter().map(|&x| eta_at(x).0).collect();
    Ok(AlphaOneSolution {
        u: ScalarField::from_values_unchecked(g, u),
        eta: ScalarField::from_values_unchecked(g, eta),
    })
}

/// Pointwise residual of `u_txx + (2 − α) u_x u_xx + u u_xxx` given `u` and an
/// approximation of `u_t`. Both inputs are low-pass filtered by the 2/3 rule
/// first, so round-off is not amplified by the top modes.
pub fn alpha_equation_residual(alpha: f64, u: &ScalarField, u_t: &ScalarField) -> Result<ScalarField> {
    require_circle(u.grid())?;
    u.grid().check_same(u_t.grid())?;
    let (u, u_t) = (&dealias(u), &dealias(u_t));
    let ux = derivative(u, 0);
    let uxx = derivative(&ux, 0);
    let uxxx = derivative(&uxx, 0);
    let utxx = derivative(&derivative(u_t, 0), 0);
    let n = u.values().len();
    let values = (0..n)
        .map(|i| {
            utxx.values()[i]
                + (2.0 - alpha) * ux.values()[i] * uxx.values()[i]
                + u.values()[i] * uxxx.values()[i]
        })
        .collect();
    Ok(ScalarField::from_values_unchecked(*u.grid(), values))
}

/// `⟨⟨∇^α_u v, w⟩⟩ + ⟨⟨v, ∇^{−α}_u w⟩⟩` in the Ḣ¹ pairing `¼∫ fₓ gₓ`;
/// zero when the two connections are dual.
pub fn duality_residual(
    alpha: f64,
    u: &ScalarField,
    v: &ScalarField,
    w: &ScalarField,
) -> Result<f64> {
    require_circle(u.grid())?;
    u.grid().check_same(v.grid())?;
    u.grid().check_same(w.grid())?;
    for f in [u, v, w] {
        check_mean_zero(f)?;
    }
    let c = AlphaConnection::new(alpha)?;
    let (vx, wx) = (derivative(v, 0), derivative(w, 0));
    let cov_v = vx.mul(u).add(&christoffel(&c, u, v)?);
    let cov_w = wx.mul(u).add(&christoffel(&c.dual(), u, w)?);
    let first = integrate(&derivative(&cov_v, 0).mul(&wx));
    let second = integrate(&vx.mul(&derivative(&cov_w, 0)));
    Ok(0.25 * (first + second))
}

/// Mean-zero real trigonometric polynomial of the given degree with
/// coefficients uniform in `[−1, 1]`.
pub fn random_trig_polynomial<R: Rng>(grid: &PeriodicGrid, degree: usize, rng: &mut R) -> Result<ScalarField> {
    require_circle(grid)?;
    if 2 * degree >= grid.points(0) {
        return Err(Error::InvalidArgument(format!(
            "degree {degree} is not resolved by {} points",
            grid.points(0)
        )));
    }
    let l = grid.length(0);
    let coeffs: Vec<(f64, f64)> = (0..degree)
        .map(|_| (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)))
        .collect();
    Ok(ScalarField::from_fn(grid, |x, _| {
        coeffs
            .iter()
            .enumerate()
            .map(|(m, &(a, b))| {
                let k = std::f64::consts::TAU * (m + 1) as f64 / l;
                a * (k * x).cos() + b * (k * x).sin()
            })
            .sum()
    }))
}

/// Ḣ¹ energy `∫ uₓ² dx` of a circle velocity.
pub fn slope_energy(u: &ScalarField) -> f64 {
    let ux = derivative(u, 0);
    integrate(&ux.mul(&ux))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hsflow::HsGeodesic;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn circle(n: usize) -> PeriodicGrid {
        PeriodicGrid::unit_circle(n).unwrap()
    }

    #[test]
    fn a_inverse_examples() {
        let g = circle(64);
        let s = ScalarField::from_fn(&g, |x, _| (TAU * x).sin());
        let r = a_inverse(&s).unwrap();
        let e = s.scale(1.0 / (4.0 * PI * PI));
        assert!(r.max_abs_diff(&e) < 1e-14);

        let c = ScalarField::from_fn(&g, |x, _| (TAU * x).cos());
        let r = a_inverse(&c).unwrap();
        let e = c.map(|v| (v - 1.0) / (4.0 * PI * PI));
        assert!(r.max_abs_diff(&e) < 1e-14);

        let z = a_inverse(&ScalarField::zeros(&g)).unwrap();
        assert_eq!(z.sup_norm(), 0.0);

        let bad = ScalarField::constant(&g, 1.0);
        assert!(matches!(a_inverse(&bad), Err(Error::NonZeroMean { .. })));
    }

    #[test]
    fn a_inverse_on_longer_circle() {
        let g = PeriodicGrid::circle(64, 3.0).unwrap();
        let k = TAU / 3.0;
        let c = ScalarField::from_fn(&g, |x, _| (2.0 * k * x).cos() + (k * x).sin());
        let r = a_inverse(&c).unwrap();
        let lap = derivative(&derivative(&r, 0), 0).scale(-1.0);
        assert!(lap.max_abs_diff(&c) < 1e-12);
        assert!(r.values()[0].abs() < 1e-15);
    }

    #[test]
    fn christoffel_properties() {
        let g = circle(64);
        let v = ScalarField::from_fn(&g, |x, _| (TAU * x).sin());
        let w = ScalarField::from_fn(&g, |x, _| (2.0 * TAU * x).cos() + 0.3 * (TAU * x).sin());
        let c = AlphaConnection::new(-1.0).unwrap();
        assert_eq!(christoffel(&c, &v, &w).unwrap().sup_norm(), 0.0);

        let c = AlphaConnection::new(0.0).unwrap();
        let vw = christoffel(&c, &v, &w).unwrap();
        let wv = christoffel(&c, &w, &v).unwrap();
        assert_eq!(vw.max_abs_diff(&wv), 0.0);
        let v2w = christoffel(&c, &v, &w.scale(2.0)).unwrap();
        assert!(v2w.max_abs_diff(&vw.scale(2.0)) < 1e-14);

        // v = w = sin 2πx: vₓ² = 2π²(1 + cos 4πx), ∂ₓ(vₓ²) = −8π³ sin 4πx,
        // A⁻¹ sin 4πx = sin 4πx / 16π², so Γ = ½ · (−π/2) sin 4πx.
        let vv = christoffel(&c, &v, &v).unwrap();
        let e = ScalarField::from_fn(&g, |x, _| -0.25 * PI * (2.0 * TAU * x).sin());
        assert!(vv.max_abs_diff(&e) < 1e-13);
    }

    #[test]
    fn zero_is_stationary() {
        let g = circle(32);
        let z = ScalarField::zeros(&g);
        let c = AlphaConnection::new(0.3).unwrap();
        assert_eq!(alpha_geodesic_step(&c, &z, 0.1).unwrap().sup_norm(), 0.0);
        for eq in [
            ClassicEquation::Burgers,
            ClassicEquation::CamassaHolm,
            ClassicEquation::HunterSaxton,
            ClassicEquation::MuBurgers,
        ] {
            assert_eq!(classic_1d_step(eq, &z, 0.1).unwrap().sup_norm(), 0.0);
        }
    }

    #[test]
    fn cfl_monitor() {
        let g = circle(128);
        let u = ScalarField::from_fn(&g, |x, _| (TAU * x).sin());
        let c = AlphaConnection::new(0.0).unwrap();
        assert!(matches!(
            alpha_geodesic_step(&c, &u, 0.01),
            Err(Error::StepTooLarge(_))
        ));
        assert!(alpha_geodesic_step(&c, &u, 1e-3).is_ok());
        assert!(matches!(
            classic_1d_step(ClassicEquation::Burgers, &u, 2e-3),
            Err(Error::StepTooLarge(_))
        ));
    }

    #[test]
    fn alpha_zero_matches_hunter_saxton_closed_form() {
        let g = circle(512);
        let rho0 = ScalarField::from_fn(&g, |x, _| (TAU * x).sin());
        let u0 = ScalarField::from_fn(&g, |x, _| (1.0 - (TAU * x).cos()) / TAU);
        let hs = HsGeodesic::from_divergence(rho0).unwrap();
        let t = 0.5 * hs.t_max();
        let c = AlphaConnection::new(0.0).unwrap();
        let e0 = slope_energy(&u0);
        let traj = evolve(&u0, t, 1e-4, 5, |u, h| alpha_geodesic_step(&c, u, h)).unwrap();
        let mut drift: f64 = 0.0;
        for s in &traj.states {
            drift = drift.max((slope_energy(s) - e0).abs() / e0);
        }
        assert!(drift < 1e-8, "energy drift {drift:e}");

        let u = traj.last();
        let xs: Vec<f64> = (0..g.len()).map(|i| g.node(i)[0]).collect();
        let exact = hs.eulerian_1d(t, &xs).unwrap();
        let ux = derivative(u, 0);
        let err = ux
            .values()
            .iter()
            .zip(&exact.rho)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "rho error {err:e}");
        let verr = u
            .values()
            .iter()
            .zip(&exact.velocity)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(verr < 1e-6, "velocity error {verr:e}");
    }

    fn alpha_one_u0(g: &PeriodicGrid) -> ScalarField {
        ScalarField::from_fn(g, |x, _| (TAU * x).sin() / TAU)
    }

    #[test]
    fn alpha_one_initial_state() {
        let g = circle(64);
        let u0 = alpha_one_u0(&g);
        let s = alpha_one_explicit(&u0, 0.0).unwrap();
        assert!(s.u.max_abs_diff(&u0) < 1e-14);
        let id = ScalarField::from_fn(&g, |x, _| x);
        assert!(s.eta.max_abs_diff(&id) < 1e-14);
    }

    #[test]
    fn alpha_one_flow_is_monotone_and_pinned() {
        let g = circle(128);
        let u0 = alpha_one_u0(&g);
        let s = alpha_one_explicit(&u0, 0.7).unwrap();
        let eta = s.eta.values();
        assert!(eta[0].abs() < 1e-15);
        assert!(eta.windows(2).all(|w| w[1] > w[0]));
        assert!(*eta.last().unwrap() < 1.0);
        assert!(s.u.values()[0].abs() < 1e-14);
    }

    #[test]
    fn alpha_one_closed_form_solves_equation() {
        let g = circle(512);
        let u0 = alpha_one_u0(&g);
        let (t, h) = (0.3, 1e-3);
        let at = |s: f64| alpha_one_explicit(&u0, s).unwrap().u;
        let ut = at(t - 2.0 * h)
            .sub(&at(t + 2.0 * h))
            .add(&at(t + h).sub(&at(t - h)).scale(8.0))
            .scale(1.0 / (12.0 * h));
        let r = alpha_equation_residual(1.0, &at(t), &ut).unwrap();
        assert!(r.sup_norm() < 1e-6, "residual {:e}", r.sup_norm());
        // the residual is sensitive to α
        let r0 = alpha_equation_residual(0.0, &at(t), &ut).unwrap();
        assert!(r0.sup_norm() > 1e-2);
    }

    #[test]
    fn alpha_one_integrator_matches_closed_form() {
        let g = circle(512);
        let u0 = alpha_one_u0(&g);
        let c = AlphaConnection::new(1.0).unwrap();
        let traj = evolve(&u0, 0.3, 1e-4, 2, |u, h| alpha_geodesic_step(&c, u, h)).unwrap();
        let exact = alpha_one_explicit(&u0, 0.3).unwrap();
        let err = traj.last().max_abs_diff(&exact.u);
        assert!(err < 1e-5, "err {err:e}");
    }

    #[test]
    fn burgers_matches_characteristics() {
        let g = circle(512);
        let u0f = |x: f64| (TAU * x).sin();
        let u0 = ScalarField::from_fn(&g, |x, _| u0f(x));
        let t = 0.02;
        let traj = evolve(&u0, t, 1e-4, 2, |u, h| {
            classic_1d_step(ClassicEquation::Burgers, u, h)
        })
        .unwrap();
        let it = TrigInterpolant::new(traj.last());
        let mut err: f64 = 0.0;
        for i in 0..200 {
            let x = i as f64 / 200.0;
            let y = x + 3.0 * t * u0f(x);
            err = err.max((it.eval(y, 0.0) - u0f(x)).abs());
        }
        assert!(err < 1e-6, "err {err:e}");
    }

    #[test]
    fn camassa_holm_invariants() {
        let g = circle(256);
        let u0 = ScalarField::from_fn(&g, |x, _| 0.2 * (TAU * x).sin());
        let h1 = |u: &ScalarField| {
            let ux = derivative(u, 0);
            integrate(&u.mul(u).add(&ux.mul(&ux)))
        };
        let (m0, e0) = (integrate(&u0), h1(&u0));
        let traj = evolve(&u0, 0.5, 1e-3, 11, |u, h| {
            classic_1d_step(ClassicEquation::CamassaHolm, u, h)
        })
        .unwrap();
        for s in &traj.states {
            assert!((integrate(s) - m0).abs() < 1e-7);
            assert!((h1(s) - e0).abs() / e0 < 1e-7);
        }
        assert!(traj.last().max_abs_diff(&u0) > 1e-2);
    }

    #[test]
    fn mu_burgers_is_alpha_minus_one() {
        let g = circle(64);
        let u = ScalarField::from_fn(&g, |x, _| (1.0 - (TAU * x).cos()) / TAU * 0.5);
        let a = classic_1d_step(ClassicEquation::MuBurgers, &u, 1e-3).unwrap();
        let c = AlphaConnection::new(-1.0).unwrap();
        let b = alpha_geodesic_step(&c, &u, 1e-3).unwrap();
        assert_eq!(a.max_abs_diff(&b), 0.0);
    }

    #[test]
    fn equation_names_round_trip() {
        for eq in [
            ClassicEquation::Burgers,
            ClassicEquation::CamassaHolm,
            ClassicEquation::HunterSaxton,
            ClassicEquation::MuBurgers,
        ] {
            assert_eq!(eq.name().parse::<ClassicEquation>().unwrap(), eq);
        }
        assert!("kdv".parse::<ClassicEquation>().is_err());
    }

    #[test]
    fn duality_over_seeds() {
        let g = circle(64);
        let mut worst: f64 = 0.0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let alpha = if seed == 0 { 0.7 } else { rng.gen_range(-2.0..2.0) };
            let u = random_trig_polynomial(&g, 8, &mut rng).unwrap();
            let v = random_trig_polynomial(&g, 8, &mut rng).unwrap();
            let w = random_trig_polynomial(&g, 8, &mut rng).unwrap();
            let r = duality_residual(alpha, &u, &v, &w).unwrap();
            let swapped = duality_residual(-alpha, &u, &w, &v).unwrap();
            assert!((r - swapped).abs() < 1e-10);
            worst = worst.max(r.abs());
        }
        assert!(worst < 1e-10, "worst {worst:e}");
        let z = ScalarField::zeros(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let v = random_trig_polynomial(&g, 8, &mut rng).unwrap();
        assert_eq!(duality_residual(0.7, &z, &v, &v).unwrap(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn a_inverse_inverts_minus_laplacian(coeffs in prop::collection::vec(-1.0f64..1.0, 12)) {
            let g = circle(64);
            let u = ScalarField::from_fn(&g, |x, _| {
                coeffs.chunks(2).enumerate().map(|(m, c)| {
                    let k = TAU * (m + 1) as f64;
                    c[0] * (k * x).cos() + c[1] * (k * x).sin()
                }).sum()
            });
            let r = a_inverse(&u).unwrap();
            let back = derivative(&derivative(&r, 0), 0).scale(-1.0);
            prop_assert!(back.max_abs_diff(&u) < 1e-10);
            prop_assert!(r.values()[0].abs() < 1e-14);
        }

        #[test]
        fn christoffel_symmetric(alpha in -3.0f64..3.0, a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let g = circle(32);
            let v = ScalarField::from_fn(&g, |x, _| a * (TAU * x).sin() + (2.0 * TAU * x).cos());
            let w = ScalarField::from_fn(&g, |x, _| b * (3.0 * TAU * x).cos() + (TAU * x).sin());
            let c = AlphaConnection::new(alpha).unwrap();
            let vw = christoffel(&c, &v, &w).unwrap();
            let wv = christoffel(&c, &w, &v).unwrap();
            prop_assert_eq!(vw.max_abs_diff(&wv), 0.0);
        }
    }
}
