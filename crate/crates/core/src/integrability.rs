//! Conserved quantities of the geodesic flow on the sphere of square-root
//! densities.
//!
//! In an orthonormal basis `{e_j}` a sphere point and its velocity have
//! coordinates `q_j = ∫ f e_j`, `p_j = ∫ ḟ e_j`. The angular momenta
//! `h_ij = p_i q_j − p_j q_i` are conserved along great circles and satisfy
//! the `so(K)` commutation relations; from them two chains of commuting
//! integrals are built,
//! `H_m = Σ_{i<j≤m+1} h_ij²` and `H^(k) = |p^(k)|²|q^(k)|² − (p^(k)·q^(k))²`,
//! where `p^(k), q^(k)` drop the first `k` coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::density::SpherePoint;
use crate::error::{Error, Result};
use crate::grid::{inner, PeriodicGrid, ScalarField};
use crate::hsflow::HsGeodesic;
use crate::spectral::Spectrum;

/// Largest truncation used when none is requested.
pub const DEFAULT_MAX_MODES: usize = 33;

/// Default truncation `min(33, N/2 − 1)`, with `N` the smallest axis size.
pub fn default_truncation(grid: &PeriodicGrid) -> usize {
    let n = (0..grid.dim()).map(|a| grid.points(a)).min().unwrap_or(2);
    DEFAULT_MAX_MODES.min(n / 2 - 1)
}

/// Real Fourier basis element: `e₁ = 1/√μ`, then `√(2/μ) cos(k·x)` and
/// `√(2/μ) sin(k·x)` ordered by `|k|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisFunction {
    Constant,
    Cos(isize, isize),
    Sin(isize, isize),
}

/// The first `count` real Fourier basis functions on `grid`.
pub fn fourier_basis(grid: &PeriodicGrid, count: usize) -> Vec<BasisFunction> {
    let half = |a: usize| {
        if a < grid.dim() {
            grid.points(a) as isize / 2 - 1
        } else {
            0
        }
    };
    let (hx, hy) = (half(0), half(1));
    let mut modes = Vec::new();
    for mx in 0..=hx {
        for my in -hy..=hy {
            // one representative of each ±k pair
            if mx == 0 && my <= 0 {
                continue;
            }
            modes.push((mx, my));
        }
    }
    let k2 = |&(mx, my): &(isize, isize)| {
        let a = mx as f64 / grid.length(0);
        let b = if grid.dim() == 2 { my as f64 / grid.length(1) } else { 0.0 };
        a * a + b * b
    };
    modes.sort_by(|a, b| k2(a).total_cmp(&k2(b)).then(a.cmp(b)));
    let mut basis = vec![BasisFunction::Constant];
    for (mx, my) in modes {
        basis.push(BasisFunction::Cos(mx, my));
        basis.push(BasisFunction::Sin(mx, my));
    }
    basis.truncate(count);
    basis
}

/// Basis coordinates `(q, p)` of a point and tangent vector on the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSphereCoords {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// Sphere radius `√μ(M)`.
    pub radius: f64,
    /// `|f|² − Σq²`, the part of `f` outside the truncated span.
    pub leak_q: f64,
    /// `|ḟ|² − Σp²`.
    pub leak_p: f64,
}

impl TruncatedSphereCoords {
    /// Coordinates given directly; no leak.
    pub fn from_parts(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() || q.is_empty() {
            return Err(Error::InvalidArgument(
                "q and p must be non-empty and of equal length".into(),
            ));
        }
        let radius = dot(&q, &q).sqrt();
        Ok(TruncatedSphereCoords { q, p, radius, leak_q: 0.0, leak_p: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// `|Σq² − r²|`.
    pub fn sphere_residual(&self) -> f64 {
        (dot(&self.q, &self.q) - self.radius * self.radius).abs()
    }

    /// `|Σ p q|`.
    pub fn tangent_residual(&self) -> f64 {
        dot(&self.p, &self.q).abs()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn coefficients(field: &ScalarField, basis: &[BasisFunction]) -> Vec<f64> {
    let g = field.grid();
    let mu = g.total_volume();
    let spec = Spectrum::of(field);
    let c = spec.coeffs();
    let ny = g.points(1);
    let slot = |mx: isize, my: isize| {
        let ix = mx.rem_euclid(g.points(0) as isize) as usize;
        let iy = my.rem_euclid(ny as isize) as usize;
        ix * ny + iy
    };
    let w = g.weight();
    let s = (2.0 / mu).sqrt();
    basis
        .iter()
        .map(|b| match *b {
            BasisFunction::Constant => w * c[0].re / mu.sqrt(),
            BasisFunction::Cos(mx, my) => s * w * c[slot(mx, my)].re,
            BasisFunction::Sin(mx, my) => -s * w * c[slot(mx, my)].im,
        })
        .collect()
}

/// Coordinates of `(f, ḟ)` in the first `k` real Fourier basis functions.
pub fn project(f: &SpherePoint, fdot: &ScalarField, k: usize) -> Result<TruncatedSphereCoords> {
    let g = *f.field().grid();
    g.check_same(fdot.grid())?;
    let limit = (0..g.dim()).map(|a| g.points(a)).min().unwrap_or(2) / 2 - 1;
    if k == 0 || k > limit {
        return Err(Error::InvalidArgument(format!(
            "truncation {k} must lie in 1..={limit}"
        )));
    }
    let ff = inner(f.field(), f.field())?;
    let dd = inner(fdot, fdot)?;
    let fd = inner(f.field(), fdot)?;
    if fd.abs() > 1e-8 * (ff * dd).sqrt().max(1.0) {
        return Err(Error::NotTangent(fd));
    }
    let basis = fourier_basis(&g, k);
    let q = coefficients(f.field(), &basis);
    let p = coefficients(fdot, &basis);
    let leak_q = ff - dot(&q, &q);
    let leak_p = dd - dot(&p, &p);
    Ok(TruncatedSphereCoords {
        q,
        p,
        radius: f.radius(),
        leak_q,
        leak_p,
    })
}

/// Antisymmetric matrix `h_ij = p_i q_j − p_j q_i`.
pub fn angular_momenta(c: &TruncatedSphereCoords) -> Vec<Vec<f64>> {
    let k = c.len();
    (0..k)
        .map(|i| (0..k).map(|j| c.p[i] * c.q[j] - c.p[j] * c.q[i]).collect())
        .collect()
}

/// `H_m = Σ_{i<j≤m+1} h_ij²` for `m = 1..K−1`.
pub fn chain_hk(c: &TruncatedSphereCoords) -> Vec<f64> {
    let h = angular_momenta(c);
    let k = c.len();
    let mut out = Vec::with_capacity(k.saturating_sub(1));
    let mut acc = 0.0;
    for j in 1..k {
        for row in h.iter().take(j) {
            acc += row[j] * row[j];
        }
        out.push(acc);
    }
    out
}

/// `H^(k) = |p^(k)|²|q^(k)|² − (p^(k)·q^(k))²` for `k = 0..K−2`.
pub fn chain_hproj(c: &TruncatedSphereCoords) -> Vec<f64> {
    let n = c.len();
    (0..n.saturating_sub(1))
        .map(|k| {
            let (q, p) = (&c.q[k..], &c.p[k..]);
            let pq = dot(p, q);
            dot(p, p) * dot(q, q) - pq * pq
        })
        .collect()
}

/// Gradient `(∂/∂q, ∂/∂p)` of an observable.
type Gradient = (Vec<f64>, Vec<f64>);

fn bracket(a: &Gradient, b: &Gradient) -> f64 {
    dot(&a.0, &b.1) - dot(&a.1, &b.0)
}

fn grad_h(q: &[f64], p: &[f64], i: usize, j: usize) -> Gradient {
    let n = q.len();
    let (mut gq, mut gp) = (vec![0.0; n], vec![0.0; n]);
    gp[i] += q[j];
    gp[j] -= q[i];
    gq[j] += p[i];
    gq[i] -= p[j];
    (gq, gp)
}

fn grad_chain_hk(q: &[f64], p: &[f64], m: usize) -> Gradient {
    let n = q.len();
    let (mut gq, mut gp) = (vec![0.0; n], vec![0.0; n]);
    for j in 1..=m {
        for i in 0..j {
            let h = p[i] * q[j] - p[j] * q[i];
            let (a, b) = grad_h(q, p, i, j);
            for t in 0..n {
                gq[t] += 2.0 * h * a[t];
                gp[t] += 2.0 * h * b[t];
            }
        }
    }
    (gq, gp)
}

fn grad_chain_hproj(q: &[f64], p: &[f64], k: usize) -> Gradient {
    let n = q.len();
    let (qq, pp, pq) = (dot(&q[k..], &q[k..]), dot(&p[k..], &p[k..]), dot(&p[k..], &q[k..]));
    let (mut gq, mut gp) = (vec![0.0; n], vec![0.0; n]);
    for t in k..n {
        gq[t] = 2.0 * pp * q[t] - 2.0 * pq * p[t];
        gp[t] = 2.0 * qq * p[t] - 2.0 * pq * q[t];
    }
    (gq, gp)
}

/// Maximal residuals of the canonical brackets at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BracketResiduals {
    /// `max |{h_ij, h_jk} − h_ik|` over distinct `i, j, k`.
    pub angular: f64,
    /// `max |{H_a, H_b}|`.
    pub chain: f64,
    /// `max |{H^(a), H^(b)}|`.
    pub projected: f64,
}

impl BracketResiduals {
    pub fn max(&self) -> f64 {
        self.angular.max(self.chain).max(self.projected)
    }

    fn merge(self, o: Self) -> Self {
        BracketResiduals {
            angular: self.angular.max(o.angular),
            chain: self.chain.max(o.chain),
            projected: self.projected.max(o.projected),
        }
    }
}

/// Canonical brackets `{F, G} = Σ ∂F/∂q ∂G/∂p − ∂F/∂p ∂G/∂q` of the angular
/// momenta and both chains, from closed-form gradients at `(q, p)`.
pub fn bracket_residuals(q: &[f64], p: &[f64]) -> BracketResiduals {
    let n = q.len();
    let mut r = BracketResiduals::default();
    let grads: Vec<Vec<Gradient>> = (0..n)
        .map(|i| (0..n).map(|j| grad_h(q, p, i, j)).collect())
        .collect();
    for (i, row) in grads.iter().enumerate() {
        for (j, g_ij) in row.iter().enumerate() {
            for k in 0..n {
                if i == j || j == k || i == k {
                    continue;
                }
                let h_ik = p[i] * q[k] - p[k] * q[i];
                let b = bracket(g_ij, &grads[j][k]);
                r.angular = r.angular.max((b - h_ik).abs());
            }
        }
    }
    let hk: Vec<Gradient> = (1..n).map(|m| grad_chain_hk(q, p, m)).collect();
    let hp: Vec<Gradient> = (0..n.saturating_sub(1)).map(|k| grad_chain_hproj(q, p, k)).collect();
    for a in 0..hk.len() {
        for b in a + 1..hk.len() {
            r.chain = r.chain.max(bracket(&hk[a], &hk[b]).abs());
        }
    }
    for a in 0..hp.len() {
        for b in a + 1..hp.len() {
            r.projected = r.projected.max(bracket(&hp[a], &hp[b]).abs());
        }
    }
    r
}

/// Number of random points used by [`poisson_bracket_check`].
pub const BRACKET_POINTS: usize = 100;
/// Dimension used by [`poisson_bracket_check`].
pub const BRACKET_DIM: usize = 8;

/// Worst bracket residuals over 100 random `(q, p)` in `[−1, 1]^{2·8}`.
pub fn poisson_bracket_check(seed: u64) -> BracketResiduals {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = BracketResiduals::default();
    for _ in 0..BRACKET_POINTS {
        let q: Vec<f64> = (0..BRACKET_DIM).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let p: Vec<f64> = (0..BRACKET_DIM).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        worst = worst.merge(bracket_residuals(&q, &p));
    }
    worst
}

/// Drift of the conserved quantities along a sampled geodesic.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantAudit {
    pub times: Vec<f64>,
    pub truncation: usize,
    /// Initial values of `H_m`, `m = 1..K−1`.
    pub hk: Vec<f64>,
    /// Initial values of `H^(k)`, `k = 0..K−2`.
    pub hproj: Vec<f64>,
    /// `max_t |Δh_ij| / max |h_ij(0)|`.
    pub angular_drift: f64,
    /// Per-index `max_t |ΔH_m| / max(|H_m(0)|, floor · max_m |H_m(0)|)`.
    pub hk_drift: Vec<f64>,
    pub hproj_drift: Vec<f64>,
    /// Largest truncation leak `|f|² − Σq²` seen.
    pub max_leak: f64,
}

impl InvariantAudit {
    pub fn max_drift(&self) -> f64 {
        self.hk_drift
            .iter()
            .chain(&self.hproj_drift)
            .fold(self.angular_drift, |a, &b| a.max(b))
    }
}

/// Below this fraction of the family's largest value a quantity is treated
/// as zero and its drift is measured against the family scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

fn relative(delta: f64, initial: f64, family_max: f64) -> f64 {
    let scale = initial.abs().max(RELATIVE_FLOOR * family_max).max(f64::MIN_POSITIVE);
    delta / scale
}

/// Project the global geodesic `t ↦ (f(t), ḟ(t))` at `samples` equally spaced
/// times over one period `[0, 2π/κ]` and record how far every `h_ij`, `H_m`
/// and `H^(k)` moves.
pub fn audit_geodesic(g: &HsGeodesic, samples: usize, k: usize) -> Result<InvariantAudit> {
    let samples = samples.max(2);
    let period = if g.kappa() > 0.0 {
        std::f64::consts::TAU / g.kappa()
    } else {
        1.0
    };
    let times: Vec<f64> = (0..samples)
        .map(|i| period * i as f64 / (samples - 1) as f64)
        .collect();
    let coords: Vec<Result<TruncatedSphereCoords>> = times
        .par_iter()
        .map(|&t| {
            let (p, _) = g.evolve_density_global(t);
            project(&p, &g.sphere_velocity(t), k)
        })
        .collect();
    let coords: Vec<TruncatedSphereCoords> = coords.into_iter().collect::<Result<_>>()?;
    let h0 = angular_momenta(&coords[0]);
    let hk0 = chain_hk(&coords[0]);
    let hp0 = chain_hproj(&coords[0]);
    let hmax = h0.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs()));
    let hkmax = hk0.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let hpmax = hp0.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let mut angular_drift: f64 = 0.0;
    let mut hk_drift = vec![0.0f64; hk0.len()];
    let mut hproj_drift = vec![0.0f64; hp0.len()];
    let mut max_leak: f64 = 0.0;
    for c in &coords {
        max_leak = max_leak.max(c.leak_q.abs()).max(c.leak_p.abs());
        let h = angular_momenta(c);
        for (row, row0) in h.iter().zip(&h0) {
            for (v, v0) in row.iter().zip(row0) {
                angular_drift = angular_drift.max((v - v0).abs() / hmax.max(f64::MIN_POSITIVE));
            }
        }
        for (m, (v, v0)) in chain_hk(c).iter().zip(&hk0).enumerate() {
            hk_drift[m] = hk_drift[m].max(relative((v - v0).abs(), *v0, hkmax));
        }
        for (m, (v, v0)) in chain_hproj(c).iter().zip(&hp0).enumerate() {
            hproj_drift[m] = hproj_drift[m].max(relative((v - v0).abs(), *v0, hpmax));
        }
    }
    Ok(InvariantAudit {
        times,
        truncation: k,
        hk: hk0,
        hproj: hp0,
        angular_drift,
        hk_drift,
        hproj_drift,
        max_leak,
    })
}
