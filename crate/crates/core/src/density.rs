//! Densities of fixed total mass and their square roots on the sphere
//! `S_r = { f : ∫ f² dμ = r² }` with `r = √mass`.
//!
//! The square-root map sends the Ḣ¹ geometry of densities isometrically onto
//! the round L² geometry of (the positive part of) this sphere.

use crate::error::{Error, Result};
use crate::grid::{integrate, ScalarField};

/// Values below this are treated as zero; `sqrt_map` rejects anything below
/// its negative.
pub const POSITIVITY_TOL: f64 = 1e-12;

const MASS_REL_TOL: f64 = 1e-10;

/// Radon-Nikodym derivative of a measure with respect to the grid volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    field: ScalarField,
    mass: f64,
    degenerate: bool,
    sign_changed: bool,
}

fn first_below(field: &ScalarField, bound: f64) -> Option<(usize, f64)> {
    field
        .values()
        .iter()
        .enumerate()
        .find(|(_, &v)| v < bound || v.is_nan())
        .map(|(i, &v)| (i, v))
}

impl Density {
    /// Wrap a non-negative field whose integral is the grid volume μ(M).
    pub fn new(field: ScalarField) -> Result<Self> {
        let mass = field.grid().total_volume();
        Self::with_mass(field, mass)
    }

    /// Wrap a non-negative field integrating to `mass`.
    pub fn with_mass(field: ScalarField, mass: f64) -> Result<Self> {
        if let Some((index, value)) = first_below(&field, -POSITIVITY_TOL) {
            return Err(Error::NegativeDensity { index, value });
        }
        let total = integrate(&field);
        if (total - mass).abs() > MASS_REL_TOL * mass.abs().max(1.0) {
            return Err(Error::MassMismatch(total, mass));
        }
        let degenerate = field.min() <= POSITIVITY_TOL;
        Ok(Density {
            field,
            mass,
            degenerate,
            sign_changed: false,
        })
    }

    /// Wrap without validation; flags are still computed.
    pub(crate) fn from_field_unchecked(field: ScalarField, mass: f64) -> Self {
        let degenerate = field.min() <= POSITIVITY_TOL;
        Density {
            field,
            mass,
            degenerate,
            sign_changed: false,
        }
    }

    /// Uniform density (constant 1) on the grid.
    pub fn uniform(grid: &crate::grid::PeriodicGrid) -> Self {
        Density {
            field: ScalarField::constant(grid, 1.0),
            mass: grid.total_volume(),
            degenerate: false,
            sign_changed: false,
        }
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn grid(&self) -> &crate::grid::PeriodicGrid {
        self.field.grid()
    }

    /// Some node value is (numerically) zero.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Produced by squaring a sphere point that changes sign; only such
    /// densities arise past the blowup time.
    pub fn sign_changed(&self) -> bool {
        self.sign_changed
    }
}

/// Point `f` of the L² sphere of radius `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint {
    field: ScalarField,
    radius: f64,
}

impl SpherePoint {
    /// Wrap `f`; the radius is taken from `‖f‖`.
    pub fn from_field(field: ScalarField) -> Self {
        let radius = integrate(&field.map(|v| v * v)).sqrt();
        SpherePoint { field, radius }
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `|∫f² dμ - r²| / r²`.
    pub fn constraint_residual(&self) -> f64 {
        let r2 = self.radius * self.radius;
        (integrate(&self.field.map(|v| v * v)) - r2).abs() / r2
    }
}

/// Smooth bump of total mass `grid volume`, supported on an interval of
/// length `L / concentration` centred at `center` (1D only). As the
/// concentration grows the density approaches a point mass.
pub fn mollified_peak(
    grid: &crate::grid::PeriodicGrid,
    concentration: f64,
    center: f64,
) -> Result<Density> {
    if grid.dim() != 1 {
        return Err(Error::InvalidArgument("peaked densities are 1D".into()));
    }
    if !(concentration >= 1.0 && concentration.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "concentration must be >= 1, got {concentration}"
        )));
    }
    let l = grid.length(0);
    let half_width = 0.5 * l / concentration;
    let bump = ScalarField::from_fn(grid, |x, _| {
        let d = (x - center + 0.5 * l).rem_euclid(l) - 0.5 * l;
        let s = d / half_width;
        if s.abs() < 1.0 {
            (-1.0 / (1.0 - s * s)).exp()
        } else {
            0.0
        }
    });
    let total = integrate(&bump);
    if total <= 0.0 {
        return Err(Error::InvalidArgument(
            "grid too coarse to resolve the peak".into(),
        ));
    }
    let mass = grid.total_volume();
    Ok(Density::from_field_unchecked(bump.scale(mass / total), mass))
}

/// Pointwise square root, landing on the sphere of radius `√mass`.
pub fn sqrt_map(d: &Density) -> Result<SpherePoint> {
    if let Some((index, value)) = first_below(&d.field, -POSITIVITY_TOL) {
        return Err(Error::NegativeDensity { index, value });
    }
    Ok(SpherePoint {
        field: d.field.map(|v| v.max(0.0).sqrt()),
        radius: d.mass.sqrt(),
    })
}

/// Pointwise square. Zeros are allowed; a point that changes sign yields a
/// density flagged as such (and degenerate, since it must vanish in between).
pub fn square_map(p: &SpherePoint) -> Density {
    let field = p.field.map(|v| v * v);
    let sign_changed = p.field.min() < 0.0 && p.field.max() > 0.0;
    let degenerate = sign_changed || field.min() <= POSITIVITY_TOL;
    Density {
        field,
        mass: p.radius * p.radius,
        degenerate,
        sign_changed,
    }
}

/// Rescale a strictly positive field to integrate to `mass`.
pub fn normalize(field: &ScalarField, mass: f64) -> Result<Density> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mass must be positive, got {mass}"
        )));
    }
    if let Some((index, value)) = first_below(field, f64::MIN_POSITIVE) {
        return Err(Error::NonPositiveInput { index, value });
    }
    let total = integrate(field);
    Ok(Density {
        field: field.scale(mass / total),
        mass,
        degenerate: false,
        sign_changed: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use std::f64::consts::{PI, TAU};

    fn circle(n: usize) -> PeriodicGrid {
        PeriodicGrid::unit_circle(n).unwrap()
    }

    #[test]
    fn uniform_maps_to_constant_one() {
        let g = circle(64);
        let p = sqrt_map(&Density::uniform(&g)).unwrap();
        assert!(p.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert_eq!(p.radius(), 1.0);
    }

    #[test]
    fn perturbed_density_lands_on_sphere() {
        let g = circle(128);
        let rho = ScalarField::from_fn(&g, |x, _| 1.0 + 0.5 * (TAU * x).sin());
        let p = sqrt_map(&Density::new(rho).unwrap()).unwrap();
        assert!(p.constraint_residual() < 1e-12);
    }

    #[test]
    fn torus_radius_is_root_volume() {
        let g = PeriodicGrid::torus(16, 16, 2.0, 2.0).unwrap();
        let d = Density::new(ScalarField::constant(&g, 1.0)).unwrap();
        assert_eq!(d.mass(), 4.0);
        let p = sqrt_map(&d).unwrap();
        assert_eq!(p.radius(), 2.0);
        assert!(p.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn negative_density_rejected() {
        let g = circle(16);
        let mut v = vec![1.0; 16];
        v[3] = -1e-6;
        v[4] = 1.0 + 1e-6;
        let f = ScalarField::new(g, v).unwrap();
        assert!(matches!(
            Density::new(f),
            Err(Error::NegativeDensity { index: 3, .. })
        ));
    }

    #[test]
    fn tiny_negative_round_off_is_tolerated() {
        let g = circle(16);
        let mut v = vec![1.0; 16];
        v[0] = -1e-13;
        v[1] = 2.0 + 1e-13;
        let d = Density::new(ScalarField::new(g, v).unwrap()).unwrap();
        assert!(d.is_degenerate());
        assert_eq!(sqrt_map(&d).unwrap().values()[0], 0.0);
    }

    #[test]
    fn square_of_constant_is_uniform() {
        let g = circle(32);
        let d = square_map(&SpherePoint::from_field(ScalarField::constant(&g, 1.0)));
        assert_eq!(d, Density::uniform(&g));
    }

    #[test]
    fn great_circle_squares_to_unit_mass() {
        let g = circle(64);
        // unit vector orthogonal to the constant function
        let e = ScalarField::from_fn(&g, |x, _| 2f64.sqrt() * (TAU * x).sin());
        for &t in &[0.0f64, 0.4, 1.3, 2.9, 5.0] {
            let f = ScalarField::from_fn(&g, |_, _| t.cos()).add(&e.scale(t.sin()));
            let d = square_map(&SpherePoint::from_field(f));
            assert!((integrate(d.field()) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_and_sign_change_flags() {
        let g = circle(32);
        let with_zero = ScalarField::from_fn(&g, |x, _| 1.0 - (TAU * x).cos());
        let d = square_map(&SpherePoint::from_field(with_zero));
        assert!(d.is_degenerate());
        assert!(!d.sign_changed());
        let crossing = ScalarField::from_fn(&g, |x, _| (TAU * x).sin());
        let d = square_map(&SpherePoint::from_field(crossing));
        assert!(d.is_degenerate() && d.sign_changed());
    }

    #[test]
    fn normalize_cases() {
        let g = circle(64);
        let d = normalize(&ScalarField::constant(&g, 2.0), 1.0).unwrap();
        assert!(d.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let rho = ScalarField::from_fn(&g, |x, _| 1.0 + 0.5 * (TAU * x).sin());
        let d = normalize(&rho, 1.0).unwrap();
        assert!(d.field().max_abs_diff(&rho) < 1e-14);

        // ∫ e^{sin 2πx} dx = I0(1) = 1.2660658777520082 (series oracle)
        let i0: f64 = (0..30)
            .map(|k| {
                let fact: f64 = (1..=k).map(|j| j as f64).product();
                0.25f64.powi(k) / (fact * fact)
            })
            .sum();
        let e = ScalarField::from_fn(&g, |x, _| (TAU * x).sin().exp());
        let d = normalize(&e, 1.0).unwrap();
        let expected = e.scale(1.0 / i0);
        assert!(d.field().max_abs_diff(&expected) < 1e-13);

        let bad = ScalarField::from_fn(&g, |x, _| (PI * x).sin());
        assert!(matches!(
            normalize(&bad, 1.0),
            Err(Error::NonPositiveInput { index: 0, .. })
        ));
    }

    #[test]
    fn peak_has_unit_mass_and_narrow_support() {
        let g = circle(4096);
        let d = mollified_peak(&g, 100.0, 0.5).unwrap();
        assert!((integrate(d.field()) - 1.0).abs() < 1e-13);
        assert!(d.is_degenerate());
        let support = d.values().iter().filter(|&&v| v > 0.0).count();
        assert!(support <= 41);
        assert!(mollified_peak(&g, 0.5, 0.0).is_err());
    }

    #[test]
    fn square_then_sqrt_roundtrip() {
        let g = circle(64);
        let rho = ScalarField::from_fn(&g, |x, _| 1.0 + 0.9 * (3.0 * TAU * x).cos());
        let d = Density::new(rho).unwrap();
        let back = square_map(&sqrt_map(&d).unwrap());
        assert!(back.field().max_abs_diff(d.field()) < 1e-14);
    }
}
