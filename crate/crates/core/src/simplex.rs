//! The probability simplex on finitely many outcomes.
//!
//! `p ↦ 2√p` embeds the simplex isometrically (Fisher-Rao metric) into the
//! sphere of radius 2, so geodesics are great circles and distances are
//! angles. A great circle leaves the positive orthant, but its squared
//! coordinates stay a probability vector: the path touches a face and comes
//! back.

use crate::error::{Error, Result};

/// Tolerance on `Σ p = 1`.
pub const SUM_TOL: f64 = 1e-12;

/// A probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint {
    probs: Vec<f64>,
}

impl SimplexPoint {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidSimplexPoint("no outcomes".into()));
        }
        if let Some((i, v)) = probs.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidSimplexPoint(format!(
                "probability {v} at index {i}"
            )));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidSimplexPoint(format!("probabilities sum to {s}")));
        }
        Ok(SimplexPoint { probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSimplexPoint("no outcomes".into()));
        }
        Ok(SimplexPoint { probs: vec![1.0 / n as f64; n] })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// `p ↦ (2√p_1, …, 2√p_n)`.
pub fn embed(s: &SimplexPoint) -> Vec<f64> {
    s.probs.iter().map(|p| 2.0 * p.sqrt()).collect()
}

/// The great circle through the embedded uniform distribution,
/// `γ(t) = cos t · (2/√3)(1,1,1) + sin t · (√2, −√2, 0)`.
pub fn geodesic_point(t: f64) -> [f64; 3] {
    let (s, c) = t.sin_cos();
    // 2·√(1/3) squares to exactly 4/3 in floating point
    let a = 2.0 * (1.0f64 / 3.0).sqrt();
    let b = 2f64.sqrt();
    [a * c + b * s, a * c - b * s, a * c]
}

/// `γ'(t)`.
pub fn geodesic_velocity(t: f64) -> [f64; 3] {
    let (s, c) = t.sin_cos();
    let a = 2.0 * (1.0f64 / 3.0).sqrt();
    let b = 2f64.sqrt();
    [-a * s + b * c, -a * s - b * c, -a * s]
}

/// Probabilities `¼γ(t)²` along the demo geodesic:
/// `P(a) = ¼(2/√3 cos t + √2 sin t)²`, `P(b) = ¼(2/√3 cos t − √2 sin t)²`,
/// `P(c) = ⅓ cos² t`.
pub fn geodesic_probs(t: f64) -> SimplexPoint {
    let g = geodesic_point(t);
    SimplexPoint {
        probs: g.iter().map(|v| 0.25 * v * v).collect(),
    }
}

/// Time of the first contact with the face `P(b) = 0`: `atan √(2/3)`.
pub fn wall_contact_time() -> f64 {
    (2.0f64 / 3.0).sqrt().atan()
}

/// Radius convention for simplex distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceConvention {
    /// Unit sphere: `arccos Σ√(a_i b_i)`.
    SphericalHellinger,
    /// Radius-2 sphere: `2 arccos Σ√(a_i b_i)`.
    FisherRao,
}

impl std::str::FromStr for DistanceConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "sphericalhellinger" | "spherical" => Ok(DistanceConvention::SphericalHellinger),
            "fisherrao" => Ok(DistanceConvention::FisherRao),
            other => Err(Error::Parse(format!("unknown distance convention '{other}'"))),
        }
    }
}

/// Bhattacharyya affinity `Σ √(a_i b_i)`, clamped to `[0, 1]`.
pub fn affinity(a: &SimplexPoint, b: &SimplexPoint) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "points have {} and {} outcomes",
            a.len(),
            b.len()
        )));
    }
    let bc: f64 = a.probs.iter().zip(&b.probs).map(|(x, y)| (x * y).sqrt()).sum();
    Ok(bc.clamp(0.0, 1.0))
}

pub fn fisher_rao_distance(a: &SimplexPoint, b: &SimplexPoint, convention: DistanceConvention) -> Result<f64> {
    let bc = affinity(a, b)?;
    let angle = bc.acos();
    Ok(match convention {
        DistanceConvention::SphericalHellinger => angle,
        DistanceConvention::FisherRao => 2.0 * angle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    fn pt(v: &[f64]) -> SimplexPoint {
        SimplexPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn validation() {
        assert!(SimplexPoint::new(vec![]).is_err());
        assert!(SimplexPoint::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexPoint::new(vec![1.2, -0.2]).is_err());
        assert!(SimplexPoint::new(vec![f64::NAN, 1.0]).is_err());
        assert!(SimplexPoint::new(vec![1.0, 0.0]).is_ok());
    }

    #[test]
    fn embed_examples() {
        let u = embed(&SimplexPoint::uniform(3).unwrap());
        for v in &u {
            assert!((v - 2.0 / 3f64.sqrt()).abs() < 1e-15);
        }
        assert_eq!(embed(&pt(&[1.0, 0.0, 0.0])), vec![2.0, 0.0, 0.0]);
        let h = embed(&pt(&[0.5, 0.5, 0.0]));
        assert!((h[0] - 2f64.sqrt()).abs() < 1e-15 && h[2] == 0.0);
    }

    #[test]
    fn geodesic_examples() {
        assert_eq!(geodesic_probs(0.0).probs(), &[1.0 / 3.0; 3]);
        let tc = wall_contact_time();
        assert!((tc - 0.68472).abs() < 1e-5);
        assert!(geodesic_probs(tc).probs()[1] < 1e-15);
        for t in [0.5, 1.0, 2.0] {
            let s: f64 = geodesic_probs(t).probs().iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
        // closed-form coordinates
        let t = 0.37f64;
        let p = geodesic_probs(t);
        let a = 2.0 / 3f64.sqrt() * t.cos();
        let b = 2f64.sqrt() * t.sin();
        assert!((p.probs()[0] - 0.25 * (a + b).powi(2)).abs() < 1e-15);
        assert!((p.probs()[1] - 0.25 * (a - b).powi(2)).abs() < 1e-15);
        assert!((p.probs()[2] - t.cos().powi(2) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn velocity_tangent_to_simplex() {
        // d/dt Σ ¼γ² = ½ γ·γ'
        let (g, v) = (geodesic_point(0.0), geodesic_velocity(0.0));
        let rate: f64 = g.iter().zip(&v).map(|(a, b)| 0.5 * a * b).sum();
        assert!(rate.abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        let u = SimplexPoint::uniform(3).unwrap();
        let h = pt(&[0.5, 0.5, 0.0]);
        let sh = DistanceConvention::SphericalHellinger;
        assert_eq!(fisher_rao_distance(&u, &u, sh).unwrap(), 0.0);
        let d = fisher_rao_distance(&u, &h, sh).unwrap();
        assert!((d - (2.0 / 6f64.sqrt()).acos()).abs() < 1e-15);
        assert!((d - 0.61548).abs() < 1e-5);
        let e = fisher_rao_distance(&pt(&[1.0, 0.0, 0.0]), &pt(&[0.0, 1.0, 0.0]), sh).unwrap();
        assert!((e - PI / 2.0).abs() < 1e-15);
        let fr = fisher_rao_distance(&u, &h, DistanceConvention::FisherRao).unwrap();
        assert!((fr - 2.0 * d).abs() < 1e-15);
        assert!(fisher_rao_distance(&u, &pt(&[1.0]), sh).is_err());
    }

    #[test]
    fn convention_parsing() {
        assert_eq!("fisher-rao".parse::<DistanceConvention>().unwrap(), DistanceConvention::FisherRao);
        assert_eq!(
            "sphericalHellinger".parse::<DistanceConvention>().unwrap(),
            DistanceConvention::SphericalHellinger
        );
        assert!("l2".parse::<DistanceConvention>().is_err());
    }

    proptest! {
        #[test]
        fn geodesic_stays_on_simplex(t in -20.0f64..20.0) {
            let p = geodesic_probs(t);
            let s: f64 = p.probs().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-14);
            prop_assert!(p.probs().iter().all(|v| *v >= 0.0));
            let q = geodesic_probs(t + TAU);
            for (a, b) in p.probs().iter().zip(q.probs()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn embedding_preserves_distance(a in prop::collection::vec(0.0f64..1.0, 4), b in prop::collection::vec(0.0f64..1.0, 4)) {
            let sa: f64 = a.iter().sum();
            let sb: f64 = b.iter().sum();
            prop_assume!(sa > 1e-3 && sb > 1e-3);
            let pa = SimplexPoint::new(a.iter().map(|v| v / sa).collect()).unwrap();
            let pb = SimplexPoint::new(b.iter().map(|v| v / sb).collect()).unwrap();
            let (ea, eb) = (embed(&pa), embed(&pb));
            let na: f64 = ea.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((na - 2.0).abs() < 1e-12);
            let cos = (ea.iter().zip(&eb).map(|(x, y)| x * y).sum::<f64>() / 4.0).clamp(-1.0, 1.0);
            let d = fisher_rao_distance(&pa, &pb, DistanceConvention::FisherRao).unwrap();
            prop_assert!((2.0 * cos.acos() - d).abs() < 1e-12);
        }
    }
}
