//! Metric geometry of the density sphere: affinity, distances, great-circle
//! geodesics, the Ḣ¹ and Fisher-Rao inner products, and Ḣ¹ gradients.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::density::{sqrt_map, square_map, Density, SpherePoint};
use crate::error::{Error, Result};
use crate::grid::{divergence, inner, integrate, laplacian, ScalarField, VectorField};
use crate::spectral::Spectrum;

/// Below this central angle the geodesic falls back to a renormalized
/// linear blend.
pub const SMALL_ANGLE: f64 = 1e-12;

fn check_pair(a: &Density, b: &Density) -> Result<()> {
    a.grid().check_same(b.grid())?;
    let (ma, mb) = (a.mass(), b.mass());
    if (ma - mb).abs() > 1e-10 * ma.abs().max(mb.abs()) {
        return Err(Error::MassMismatch(ma, mb));
    }
    Ok(())
}

/// Affinity `(1/μ(M)) ∫ √(a b) dμ`.
pub fn bhattacharyya(a: &Density, b: &Density) -> Result<f64> {
    check_pair(a, b)?;
    let s: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x.max(0.0) * y.max(0.0)).sqrt())
        .sum();
    Ok(a.grid().weight() * s / a.mass())
}

/// Central angle on the sphere, `2 atan2(‖√a − √b‖, ‖√a + √b‖)`; equal to
/// `arccos BC` but without its loss of accuracy near 0 and π.
fn central_angle(a: &Density, b: &Density) -> Result<f64> {
    check_pair(a, b)?;
    let (mut minus, mut plus) = (0.0, 0.0);
    for (x, y) in a.values().iter().zip(b.values()) {
        let (x, y) = (x.max(0.0).sqrt(), y.max(0.0).sqrt());
        minus += (x - y) * (x - y);
        plus += (x + y) * (x + y);
    }
    Ok(2.0 * minus.sqrt().atan2(plus.sqrt()))
}

/// Geodesic distance `√μ(M) · arccos BC`, evaluated through the chord.
pub fn spherical_distance(a: &Density, b: &Density) -> Result<f64> {
    Ok(a.mass().sqrt() * central_angle(a, b)?)
}

/// `‖√a − √b‖_{L²}`; for unit mass this is `2 sin(d/2)` with `d` the
/// spherical distance, bounded by `√2`.
pub fn hellinger_distance(a: &Density, b: &Density) -> Result<f64> {
    check_pair(a, b)?;
    let s: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| {
            let d = x.max(0.0).sqrt() - y.max(0.0).sqrt();
            d * d
        })
        .sum();
    Ok((a.grid().weight() * s).sqrt())
}

/// Great-circle arc between two sphere points.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    start: SpherePoint,
    end: SpherePoint,
    angle: f64,
}

impl GeodesicPath {
    pub fn start(&self) -> &SpherePoint {
        &self.start
    }

    pub fn end(&self) -> &SpherePoint {
        &self.end
    }

    /// Central angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn radius(&self) -> f64 {
        self.start.radius()
    }

    /// Arc length `r · angle`.
    pub fn length(&self) -> f64 {
        self.radius() * self.angle
    }

    /// Point at parameter `t ∈ [0, 1]`.
    pub fn sample(&self, t: f64) -> SpherePoint {
        let f = self.start.field();
        let g = self.end.field();
        if self.angle <= SMALL_ANGLE {
            let blend = f.zip_map(g, |a, b| (1.0 - t) * a + t * b);
            let norm = integrate(&blend.map(|v| v * v)).sqrt();
            let r = self.radius();
            let field = if norm > 0.0 { blend.scale(r / norm) } else { blend };
            return SpherePoint::from_field(field);
        }
        let s = self.angle.sin();
        let (wa, wb) = (((1.0 - t) * self.angle).sin() / s, (t * self.angle).sin() / s);
        SpherePoint::from_field(f.zip_map(g, |a, b| wa * a + wb * b))
    }

    /// Density at parameter `t`.
    pub fn density(&self, t: f64) -> Density {
        square_map(&self.sample(t))
    }

    /// `n` equally spaced samples including both endpoints.
    pub fn samples(&self, n: usize) -> Vec<SpherePoint> {
        let n = n.max(2);
        (0..n)
            .into_par_iter()
            .map(|i| self.sample(i as f64 / (n - 1) as f64))
            .collect()
    }

    /// Sum of L² chord lengths between `n` equally spaced samples.
    pub fn polyline_length(&self, n: usize) -> f64 {
        let pts = self.samples(n);
        pts.windows(2)
            .map(|w| {
                let d = w[0].field().sub(w[1].field());
                integrate(&d.map(|v| v * v)).sqrt()
            })
            .sum()
    }
}

/// Great circle joining the square roots of two densities of equal mass.
pub fn geodesic(a: &Density, b: &Density) -> Result<GeodesicPath> {
    let angle = central_angle(a, b)?;
    Ok(GeodesicPath {
        start: sqrt_map(a)?,
        end: sqrt_map(b)?,
        angle,
    })
}

fn div_pair(u: &VectorField, v: &VectorField) -> Result<f64> {
    u.grid().check_same(v.grid())?;
    inner(&divergence(u), &divergence(v))
}

/// Ḣ¹ inner product `¼ ∫ div u · div v dμ`.
pub fn h1dot_inner(u: &VectorField, v: &VectorField) -> Result<f64> {
    Ok(0.25 * div_pair(u, v)?)
}

/// Fisher-Rao inner product `∫ div u · div v dμ`, four times the Ḣ¹ one.
pub fn fisher_rao_inner(u: &VectorField, v: &VectorField) -> Result<f64> {
    div_pair(u, v)
}

/// Ḣ¹ gradient `h'(ρ)` of `H(ρ) = ∫ h(ρ) dμ`.
pub fn functional_gradient<F: Fn(f64) -> f64>(h_prime: F, d: &Density) -> ScalarField {
    d.field().map(h_prime)
}

/// Ḣ¹ gradient `−Δρ` of the Dirichlet energy `½ ∫ |∇ρ|² dμ`.
pub fn dirichlet_gradient(d: &Density) -> ScalarField {
    laplacian(d.field()).scale(-1.0)
}

/// Gradient flow of the Dirichlet energy, i.e. the heat equation
/// `ρ_t = Δρ`, advanced by the exact per-mode propagator `exp(dt Δ)`.
/// Any `dt > 0` is stable; `dt` only sets how the interval is split.
pub fn heat_flow_demo(d0: &Density, t_final: f64, dt: f64) -> Result<Density> {
    if !(t_final >= 0.0 && t_final.is_finite()) || !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need t_final >= 0 and dt > 0 (got {t_final}, {dt})"
        )));
    }
    let steps = (t_final / dt).ceil() as usize;
    let mut spec = Spectrum::of(d0.field());
    let mut t = 0.0;
    for _ in 0..steps {
        let h = dt.min(t_final - t);
        spec = spec.apply(|kx, ky, _| Complex64::new((-(kx * kx + ky * ky) * h).exp(), 0.0));
        t += h;
    }
    Ok(Density::from_field_unchecked(spec.to_field(), d0.mass()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{mollified_peak, normalize};
    use crate::grid::{gradient, PeriodicGrid};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn circle(n: usize) -> PeriodicGrid {
        PeriodicGrid::unit_circle(n).unwrap()
    }

    fn wave(g: &PeriodicGrid) -> Density {
        Density::new(ScalarField::from_fn(g, |x, _| 1.0 + 0.5 * (TAU * x).sin())).unwrap()
    }

    /// Composite Simpson on [0,1], independent of the grid quadrature.
    fn simpson<F: Fn(f64) -> f64>(f: F, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn affinity_examples() {
        let g = circle(256);
        let u = Density::uniform(&g);
        assert!((bhattacharyya(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        let oracle = simpson(|x| (1.0 + 0.5 * (TAU * x).sin()).sqrt(), 20000);
        let bc = bhattacharyya(&u, &wave(&g)).unwrap();
        assert!((bc - oracle).abs() < 1e-12, "{bc} vs {oracle}");
        assert!((bc - 0.983343).abs() < 1e-6);

        let fine = circle(1 << 18);
        let peak = mollified_peak(&fine, 1e4, 0.5).unwrap();
        assert!(bhattacharyya(&Density::uniform(&fine), &peak).unwrap() < 0.02);
    }

    #[test]
    fn distance_examples() {
        let g = circle(256);
        let u = Density::uniform(&g);
        assert_eq!(spherical_distance(&u, &u).unwrap(), 0.0);
        let oracle = simpson(|x| (1.0 + 0.5 * (TAU * x).sin()).sqrt(), 20000).acos();
        let d = spherical_distance(&u, &wave(&g)).unwrap();
        assert!((d - oracle).abs() < 1e-10);
        assert!((d - 0.182777).abs() < 1e-6);
        let h = hellinger_distance(&u, &wave(&g)).unwrap();
        assert!((h - 2.0 * (oracle / 2.0).sin()).abs() < 1e-10);
        assert!(hellinger_distance(&u, &u).unwrap() == 0.0);
    }

    #[test]
    fn mass_and_grid_mismatch() {
        let g = circle(32);
        let t = PeriodicGrid::torus(8, 8, 1.0, 1.0).unwrap();
        let a = Density::uniform(&g);
        let b = normalize(&ScalarField::constant(&g, 1.0), 2.0).unwrap();
        assert!(matches!(bhattacharyya(&a, &b), Err(Error::MassMismatch(..))));
        assert!(matches!(
            spherical_distance(&a, &Density::uniform(&t)),
            Err(Error::GridMismatch)
        ));
        assert!(geodesic(&a, &b).is_err());
    }

    #[test]
    fn disjoint_peaks_reach_root_two() {
        let g = circle(1 << 14);
        let a = mollified_peak(&g, 20.0, 0.25).unwrap();
        let b = mollified_peak(&g, 20.0, 0.75).unwrap();
        let h = hellinger_distance(&a, &b).unwrap();
        assert!((h - 2f64.sqrt()).abs() < 1e-12);
        assert!((spherical_distance(&a, &b).unwrap() - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn diameter_sequence() {
        let g = circle(1 << 18);
        let u = Density::uniform(&g);
        let d: Vec<f64> = (1..=4)
            .map(|k| {
                let p = mollified_peak(&g, 10f64.powi(k), 0.5).unwrap();
                spherical_distance(&u, &p).unwrap()
            })
            .collect();
        assert!(d.windows(2).all(|w| w[1] > w[0]), "{d:?}");
        assert!(d[3] >= FRAC_PI_2 - 0.05 && d[3] < FRAC_PI_2);
    }

    #[test]
    fn degenerate_geodesic_is_constant() {
        let g = circle(64);
        let w = wave(&g);
        let path = geodesic(&w, &w).unwrap();
        assert!(path.angle() <= SMALL_ANGLE);
        let f = sqrt_map(&w).unwrap();
        for &t in &[0.0, 0.3, 1.0] {
            assert!(path.sample(t).field().max_abs_diff(f.field()) < 1e-14);
        }
    }

    #[test]
    fn geodesic_midpoint_and_length() {
        let g = circle(256);
        let (u, w) = (Density::uniform(&g), wave(&g));
        let path = geodesic(&u, &w).unwrap();
        let mid = path.density(0.5);
        let da = spherical_distance(&u, &mid).unwrap();
        let db = spherical_distance(&mid, &w).unwrap();
        assert!((da - db).abs() < 1e-10);
        let d = spherical_distance(&u, &w).unwrap();
        assert!((path.length() - d).abs() < 1e-15);
        assert!((path.polyline_length(100) - d).abs() < 1e-6);
        for p in path.samples(11) {
            assert!(p.constraint_residual() < 1e-10);
        }
        assert!(path.sample(0.0).field().max_abs_diff(path.start().field()) < 1e-12);
        assert!(path.sample(1.0).field().max_abs_diff(path.end().field()) < 1e-12);
    }

    #[test]
    fn inner_products() {
        let g = circle(64);
        // u = -cos(2πx)/2π has div u = sin(2πx)
        let u = VectorField::new(vec![ScalarField::from_fn(&g, |x, _| -(TAU * x).cos() / TAU)])
            .unwrap();
        assert!((fisher_rao_inner(&u, &u).unwrap() - 0.5).abs() < 1e-14);
        assert!((h1dot_inner(&u, &u).unwrap() - 0.125).abs() < 1e-14);
        let v = VectorField::new(vec![ScalarField::from_fn(&g, |x, _| (TAU * x).sin() / TAU)])
            .unwrap();
        assert!(h1dot_inner(&u, &v).unwrap().abs() < 1e-15);

        let t = PeriodicGrid::torus(32, 32, 1.0, 1.0).unwrap();
        let psi = ScalarField::from_fn(&t, |x, y| (TAU * x).sin() * (2.0 * TAU * y).cos());
        let dpsi = gradient(&psi);
        let curl_free = VectorField::new(vec![
            dpsi.component(1).clone(),
            dpsi.component(0).scale(-1.0),
        ])
        .unwrap();
        let grad = gradient(&ScalarField::from_fn(&t, |x, y| (TAU * (x + y)).cos()));
        assert!(fisher_rao_inner(&curl_free, &grad).unwrap().abs() < 1e-12);
        assert!(matches!(h1dot_inner(&u, &grad), Err(Error::GridMismatch)));
    }

    #[test]
    fn gradient_examples() {
        let g = circle(64);
        let u = Density::uniform(&g);
        let sq = functional_gradient(|r| 2.0 * r, &u);
        assert!(sq.values().iter().all(|&v| v == 2.0));
        let ent = functional_gradient(|r| 1.0 + r.ln(), &u);
        assert!(ent.values().iter().all(|&v| v == 1.0));

        // directional derivative of ∫ρ³ along mean-zero β
        let w = wave(&g);
        let beta = ScalarField::from_fn(&g, |x, _| (2.0 * TAU * x).cos());
        let cube = |r: &ScalarField| integrate(&r.map(|v| v * v * v));
        let eps = 1e-5;
        let fd = (cube(&w.field().add(&beta.scale(eps))) - cube(&w.field().sub(&beta.scale(eps))))
            / (2.0 * eps);
        let grad = functional_gradient(|r| 3.0 * r * r, &w);
        assert!((fd - inner(&grad, &beta).unwrap()).abs() < 1e-7);

        let dg = dirichlet_gradient(&w);
        let expected = ScalarField::from_fn(&g, |x, _| 0.5 * TAU * TAU * (TAU * x).sin());
        assert!(dg.max_abs_diff(&expected) < 1e-10);
    }

    #[test]
    fn heat_flow_examples() {
        let g = circle(64);
        let u = Density::uniform(&g);
        let out = heat_flow_demo(&u, 0.3, 0.01).unwrap();
        assert!(out.field().max_abs_diff(u.field()) < 1e-15);

        let eps = 0.4;
        let d0 = Density::new(ScalarField::from_fn(&g, |x, _| 1.0 + eps * (TAU * x).sin())).unwrap();
        let t = 0.05;
        let out = heat_flow_demo(&d0, t, 0.007).unwrap();
        let decay = (-4.0 * PI * PI * t).exp();
        let expected = ScalarField::from_fn(&g, |x, _| 1.0 + eps * decay * (TAU * x).sin());
        assert!(out.field().max_abs_diff(&expected) < 1e-14);
        assert!((integrate(out.field()) - 1.0).abs() < 1e-12);
        assert!(heat_flow_demo(&d0, 1.0, 0.0).is_err());
    }

    fn random_density(c: &[(f64, f64)], g: &PeriodicGrid) -> Density {
        let raw = ScalarField::from_fn(g, |x, _| {
            let s: f64 = c
                .iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    let m = (k + 1) as f64;
                    a * (TAU * m * x).cos() + b * (TAU * m * x).sin()
                })
                .sum();
            2.0 + s.tanh() * 1.9
        });
        normalize(&raw, 1.0).unwrap()
    }

    fn coeffs() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..6)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn triangle_and_symmetry(a in coeffs(), b in coeffs(), c in coeffs()) {
            let g = circle(128);
            let (a, b, c) = (random_density(&a, &g), random_density(&b, &g), random_density(&c, &g));
            let ab = spherical_distance(&a, &b).unwrap();
            let bc = spherical_distance(&b, &c).unwrap();
            let ac = spherical_distance(&a, &c).unwrap();
            prop_assert_eq!(ab, spherical_distance(&b, &a).unwrap());
            prop_assert!(ac <= ab + bc + 1e-10);
            prop_assert!(ab < FRAC_PI_2);
            let h = hellinger_distance(&a, &b).unwrap();
            prop_assert!((h - 2.0 * (ab / 2.0).sin()).abs() < 1e-12);
        }
    }
}
