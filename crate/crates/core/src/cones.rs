//! Circular convex cones `Σ = {x ∈ ℝ^d : x·e₁ ≥ |x| cos θ}`, their sections
//! `Σ_h = Σ ∩ {x·e₁ ≥ h}`, and the exact relative isoperimetric profile of the
//! wedge `Σ×ℝ` when `d = 2`.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::{Error, Result};

/// A circular cone around `e₁` in `ℝ^d` with half-opening angle `θ ∈ (0, π/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub base_dim: usize,
    #[serde(rename = "half_angle_rad")]
    pub half_angle: f64,
}

impl ConeSpec {
    pub fn new(base_dim: usize, half_angle: f64) -> Result<Self> {
        let cone = Self {
            base_dim,
            half_angle,
        };
        cone.validate()?;
        Ok(cone)
    }

    /// The planar sector used for bodies in `ℝ³`.
    pub fn planar(half_angle: f64) -> Result<Self> {
        Self::new(2, half_angle)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_dim < 2 {
            return Err(Error::InvalidInput(format!(
                "cone base dimension must be >= 2, got {}",
                self.base_dim
            )));
        }
        if !(self.half_angle > 0.0 && self.half_angle < FRAC_PI_2) {
            return Err(Error::InvalidInput(format!(
                "half angle must lie in (0, pi/2), got {}",
                self.half_angle
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn cos_half_angle(&self) -> f64 {
        self.half_angle.cos()
    }

    /// Membership test `x·e₁ ≥ |x| cos θ`.
    pub fn contains(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.base_dim);
        x[0] >= norm(x) * self.cos_half_angle()
    }

    /// `A₁ = sup_{x ∈ Σ∖{0}} |x| / (x·e₁)`, attained on the boundary rays.
    pub fn a1(&self) -> f64 {
        1.0 / self.cos_half_angle()
    }

    /// Euclidean distance from a point of `Σ` to `∂Σ`.
    ///
    /// For an interior point at angle `ψ` from the axis the nearest boundary point
    /// lies on the generator in the same half-plane, at distance `|x| sin(θ − ψ)`.
    pub fn wall_distance(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        if r == 0.0 {
            return 0.0;
        }
        let psi = (x[0] / r).clamp(-1.0, 1.0).acos();
        let gap = self.half_angle - psi;
        if gap <= 0.0 {
            0.0
        } else {
            r * gap.sin()
        }
    }
}

/// `Σ_h = Σ ∩ {x·e₁ ≥ h}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionSpec {
    pub cone: ConeSpec,
    pub height: f64,
}

impl SectionSpec {
    pub fn new(cone: ConeSpec, height: f64) -> Result<Self> {
        if !(height > 0.0) {
            return Err(Error::InvalidInput(format!(
                "section height must be positive, got {height}"
            )));
        }
        Ok(Self { cone, height })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.cone.contains(x) && x[0] >= self.height
    }
}

pub fn cone_contains(cone: &ConeSpec, x: &[f64]) -> bool {
    cone.contains(x)
}

pub fn cone_a1(cone: &ConeSpec) -> f64 {
    cone.a1()
}

pub fn section_contains(section: &SectionSpec, x: &[f64]) -> bool {
    section.contains(x)
}

/// Relative perimeter of the ball sector of volume `v` centred on the edge of a
/// dihedral wedge with opening angle `opening` (radians, in `(0, 2π]`).
///
/// The sector of radius `r` has volume `(2·opening/3)·r³` and curved area
/// `2·opening·r²`.
pub fn dihedral_sector_profile(opening: f64, v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::InvalidInput(format!("volume must be positive, got {v}")));
    }
    if !(opening > 0.0 && opening <= 2.0 * std::f64::consts::PI) {
        return Err(Error::InvalidInput(format!(
            "opening angle must lie in (0, 2pi], got {opening}"
        )));
    }
    Ok((2.0 * opening).cbrt() * (3.0 * v).powf(2.0 / 3.0))
}

/// Radius of the edge-centred ball sector of volume `v` in a wedge of the given opening.
pub fn dihedral_sector_radius(opening: f64, v: f64) -> f64 {
    (3.0 * v / (2.0 * opening)).cbrt()
}

/// Exact profile `I_{Σ×ℝ}(v) = (4θ)^{1/3} (3v)^{2/3}` of the wedge over a planar sector.
pub fn wedge_profile_exact(cone: &ConeSpec, v: f64) -> Result<f64> {
    if cone.base_dim != 2 {
        return Err(Error::InvalidInput(format!(
            "closed-form wedge profile needs base_dim = 2, got {}",
            cone.base_dim
        )));
    }
    dihedral_sector_profile(2.0 * cone.half_angle, v)
}

/// Profile of the half-space `{x₁ ≥ 0}` in `ℝ³` (half-balls on the wall).
pub fn half_space_profile(v: f64) -> Result<f64> {
    dihedral_sector_profile(std::f64::consts::PI, v)
}

/// Profile of `ℝ³` (round balls).
pub fn free_space_profile(v: f64) -> Result<f64> {
    dihedral_sector_profile(2.0 * std::f64::consts::PI, v)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    /// `I(v) / v^{(N−1)/N}` per sample.
    pub normalized: Vec<f64>,
    pub mean: f64,
    pub max_rel_deviation: f64,
}

/// Checks the cone scaling law `I(λ^N v) = λ^{N−1} I(v)` by measuring how far
/// `I(v)/v^{(N−1)/N}` strays from its mean across samples.
pub fn cone_scaling_check(samples: &[(f64, f64)], ambient_dim: usize) -> Result<ScalingReport> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(
            "scaling check needs at least two samples".into(),
        ));
    }
    if ambient_dim < 2 {
        return Err(Error::InvalidInput("ambient dimension must be >= 2".into()));
    }
    let expo = (ambient_dim as f64 - 1.0) / ambient_dim as f64;
    let normalized: Vec<f64> = samples.iter().map(|&(v, i)| i / v.powf(expo)).collect();
    let mean = normalized.iter().sum::<f64>() / normalized.len() as f64;
    let max_rel_deviation = normalized
        .iter()
        .map(|q| ((q - mean) / mean).abs())
        .fold(0.0, f64::max);
    Ok(ScalingReport {
        normalized,
        mean,
        max_rel_deviation,
    })
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}
