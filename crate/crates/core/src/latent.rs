//! The class × pose latent space `𝒵 = 𝕊ᵐ × G`.
//!
//! `G` acts trivially on the class sphere and by left multiplication on the
//! pose. The joint dissimilarity is `−⟨a, b⟩ + d_G(pose_a, pose_b)`, which can
//! be negative; nearest-neighbour searches compare raw values.

use alloc::vec::Vec;

use libm::sqrt;

use crate::error::{Error, Result};
use crate::liegroup::{self, GroupElement, GroupSpec};

/// Unit-norm tolerance for class vectors passed to [`class_dissimilarity`].
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentSpaceSpec {
    /// Sphere dimension `m`; class points have `m + 1` coordinates.
    pub class_dim: usize,
    pub group: GroupSpec,
    /// Weight on the class term of [`joint_distance`]; 1.0 is the unweighted sum.
    pub class_weight: f64,
}

impl LatentSpaceSpec {
    pub fn new(class_dim: usize, group: GroupSpec) -> Result<Self> {
        if class_dim < 1 {
            return Err(Error::InvalidSpec("class sphere dimension must be >= 1"));
        }
        Ok(Self { class_dim, group, class_weight: 1.0 })
    }

    pub fn class_len(&self) -> usize {
        self.class_dim + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentPoint {
    pub class_point: Vec<f64>,
    pub pose: GroupElement,
}

impl LatentPoint {
    pub fn new(class_point: Vec<f64>, pose: GroupElement) -> Result<Self> {
        let norm = norm(&class_point);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::NonUnitVector { norm });
        }
        Ok(Self { class_point, pose })
    }

    /// Class floats followed by the pose's flat serialization.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.class_point.clone();
        out.extend(self.pose.to_flat());
        out
    }

    pub fn from_flat(spec: &LatentSpaceSpec, flat: &[f64]) -> Result<Self> {
        let expected = spec.class_len() + spec.group.algebra_dim();
        if flat.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: flat.len() });
        }
        let (class, pose) = flat.split_at(spec.class_len());
        Self::new(class.to_vec(), GroupElement::from_flat(&spec.group, pose)?)
    }
}

/// `g · (e, h) = (e, g h)`.
pub fn act(g: &GroupElement, z: &LatentPoint) -> Result<LatentPoint> {
    Ok(LatentPoint { class_point: z.class_point.clone(), pose: liegroup::compose(g, &z.pose)? })
}

/// Cosine dissimilarity `−⟨a, b⟩` of two unit vectors.
pub fn class_dissimilarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    for v in [a, b] {
        let n = norm(v);
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NonUnitVector { norm: n });
        }
    }
    Ok(-dot(a, b))
}

pub fn joint_distance(spec: &LatentSpaceSpec, a: &LatentPoint, b: &LatentPoint) -> Result<f64> {
    if !a.pose.matches(&spec.group) || !b.pose.matches(&spec.group) {
        return Err(Error::IncompatibleGroups("pose does not match latent spec"));
    }
    Ok(spec.class_weight * class_dissimilarity(&a.class_point, &b.class_point)?
        + liegroup::distance_sq(&a.pose, &b.pose)?)
}

pub fn normalize_to_sphere(raw: &[f64]) -> Result<Vec<f64>> {
    let n = norm(raw);
    if !(n > 1e-12) {
        return Err(Error::DegenerateDirection { norm: n });
    }
    Ok(raw.iter().map(|x| x / n).collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}
