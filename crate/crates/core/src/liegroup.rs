//! Closed-form Lie group arithmetic for ℝⁿ, SO(2), SO(3) and finite products.
//!
//! Elements are stored as matrices (rotations) or vectors (translations) so the
//! Frobenius / Euclidean metrics apply directly to the payload. Algebra vectors
//! are the factor-by-factor concatenation of translation coordinates, planar
//! angles and axis-angle vectors.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{atan2, cos, sin, sqrt};
use rand::Rng;

use crate::error::{Error, Result};

/// Below this angle the Rodrigues coefficients switch to their Taylor series.
pub const SMALL_ANGLE: f64 = 1e-6;
/// `log` refuses rotations whose angle is within this margin of π.
pub const PI_BRANCH_MARGIN: f64 = 1e-6;
/// Orthogonality drift that triggers re-orthonormalization after composition.
const REORTHO_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FactorKind {
    Translation(usize),
    Rotation2,
    Rotation3,
}

impl FactorKind {
    pub fn algebra_dim(self) -> usize {
        match self {
            FactorKind::Translation(n) => n,
            FactorKind::Rotation2 => 1,
            FactorKind::Rotation3 => 3,
        }
    }

    /// Number of floats in the matrix/vector payload.
    pub fn payload_len(self) -> usize {
        match self {
            FactorKind::Translation(n) => n,
            FactorKind::Rotation2 => 4,
            FactorKind::Rotation3 => 9,
        }
    }
}

/// An ordered product of group factors.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<FactorKind>", into = "Vec<FactorKind>"))]
pub struct GroupSpec {
    factors: Vec<FactorKind>,
}

impl TryFrom<Vec<FactorKind>> for GroupSpec {
    type Error = Error;

    fn try_from(factors: Vec<FactorKind>) -> Result<Self> {
        GroupSpec::new(factors)
    }
}

impl From<GroupSpec> for Vec<FactorKind> {
    fn from(spec: GroupSpec) -> Self {
        spec.factors
    }
}

impl GroupSpec {
    pub fn new(factors: Vec<FactorKind>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidSpec("a group needs at least one factor"));
        }
        if factors.iter().any(|f| matches!(f, FactorKind::Translation(0))) {
            return Err(Error::InvalidSpec("translation factors need dimension >= 1"));
        }
        Ok(Self { factors })
    }

    pub fn translation(n: usize) -> Result<Self> {
        Self::new(vec![FactorKind::Translation(n)])
    }

    pub fn rotation2() -> Self {
        Self { factors: vec![FactorKind::Rotation2] }
    }

    pub fn rotation3() -> Self {
        Self { factors: vec![FactorKind::Rotation3] }
    }

    pub fn factors(&self) -> &[FactorKind] {
        &self.factors
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn algebra_dim(&self) -> usize {
        self.factors.iter().map(|f| f.algebra_dim()).sum()
    }

    /// Start offset of each factor inside an algebra vector.
    pub fn algebra_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.factors.len());
        let mut at = 0;
        for f in &self.factors {
            offsets.push(at);
            at += f.algebra_dim();
        }
        offsets
    }

    /// Total number of stored floats of an element.
    pub fn payload_len(&self) -> usize {
        self.factors.iter().map(|k| k.payload_len()).sum()
    }

    pub fn is_single_rotation3(&self) -> bool {
        self.factors == [FactorKind::Rotation3]
    }
}

/// Payload of one factor of a group element.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Translation(Vec<f64>),
    /// Row-major `[cos, -sin, sin, cos]`.
    Rotation2([f64; 4]),
    /// Row-major 3×3 rotation matrix.
    Rotation3([f64; 9]),
}

impl Factor {
    pub fn kind(&self) -> FactorKind {
        match self {
            Factor::Translation(t) => FactorKind::Translation(t.len()),
            Factor::Rotation2(_) => FactorKind::Rotation2,
            Factor::Rotation3(_) => FactorKind::Rotation3,
        }
    }

    pub fn identity(kind: FactorKind) -> Self {
        match kind {
            FactorKind::Translation(n) => Factor::Translation(vec![0.0; n]),
            FactorKind::Rotation2 => Factor::Rotation2([1.0, 0.0, 0.0, 1.0]),
            FactorKind::Rotation3 => Factor::Rotation3(IDENTITY3),
        }
    }

    pub fn payload(&self) -> &[f64] {
        match self {
            Factor::Translation(t) => t,
            Factor::Rotation2(m) => m,
            Factor::Rotation3(m) => m,
        }
    }

    fn compose(&self, other: &Factor) -> Result<Factor> {
        match (self, other) {
            (Factor::Translation(a), Factor::Translation(b)) if a.len() == b.len() => {
                Ok(Factor::Translation(a.iter().zip(b).map(|(x, y)| x + y).collect()))
            }
            (Factor::Rotation2(a), Factor::Rotation2(b)) => {
                let m = matmul::<2>(a, b);
                let drift = (m[0] * m[0] + m[2] * m[2] - 1.0).abs() + (m[0] - m[3]).abs() + (m[1] + m[2]).abs();
                Ok(Factor::Rotation2(if drift > REORTHO_TOLERANCE { reorthonormalize2(m) } else { [m[0], m[1], m[2], m[3]] }))
            }
            (Factor::Rotation3(a), Factor::Rotation3(b)) => {
                let mut m = matmul::<3>(a, b);
                if orthogonality_error3(&m) > REORTHO_TOLERANCE {
                    m = reorthonormalize3(&m);
                }
                Ok(Factor::Rotation3(m))
            }
            _ => Err(Error::IncompatibleGroups("factor kinds differ")),
        }
    }

    fn inverse(&self) -> Factor {
        match self {
            Factor::Translation(t) => Factor::Translation(t.iter().map(|x| -x).collect()),
            Factor::Rotation2(m) => Factor::Rotation2(transpose::<2, 4>(m)),
            Factor::Rotation3(m) => Factor::Rotation3(transpose::<3, 9>(m)),
        }
    }

    fn distance_sq(&self, other: &Factor) -> Result<f64> {
        match (self, other) {
            (Factor::Translation(a), Factor::Translation(b)) if a.len() == b.len() => {
                Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
            }
            // first columns, i.e. points on the unit circle
            (Factor::Rotation2(a), Factor::Rotation2(b)) => {
                let dc = a[0] - b[0];
                let ds = a[2] - b[2];
                Ok(dc * dc + ds * ds)
            }
            (Factor::Rotation3(a), Factor::Rotation3(b)) => {
                Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
            }
            _ => Err(Error::IncompatibleGroups("factor kinds differ")),
        }
    }
}

/// A concrete symmetry: one payload per factor of its [`GroupSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    factors: Vec<Factor>,
}

impl GroupElement {
    /// Builds an element from payloads, validating rotation payloads.
    pub fn from_factors(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidSpec("a group needs at least one factor"));
        }
        for f in &factors {
            match f {
                Factor::Translation(t) if t.is_empty() => {
                    return Err(Error::InvalidSpec("translation factors need dimension >= 1"))
                }
                Factor::Rotation2(m) => check_rotation::<2>(m)?,
                Factor::Rotation3(m) => check_rotation::<3>(m)?,
                _ => {}
            }
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, i: usize) -> &Factor {
        &self.factors[i]
    }

    pub fn spec(&self) -> GroupSpec {
        GroupSpec { factors: self.factors.iter().map(Factor::kind).collect() }
    }

    pub fn matches(&self, spec: &GroupSpec) -> bool {
        self.factors.len() == spec.factors.len()
            && self.factors.iter().zip(&spec.factors).all(|(f, k)| f.kind() == *k)
    }

    pub fn translation(t: &[f64]) -> Result<Self> {
        Self::from_factors(vec![Factor::Translation(t.to_vec())])
    }

    pub fn rotation2(angle: f64) -> Self {
        Self { factors: vec![Factor::Rotation2(rot2_matrix(angle))] }
    }

    /// SO(3) element from an axis-angle vector.
    pub fn rotation3(axis_angle: [f64; 3]) -> Self {
        Self { factors: vec![Factor::Rotation3(rodrigues(axis_angle))] }
    }

    /// Replaces every factor except `keep` by its identity.
    pub fn restrict_to_factor(&self, keep: usize) -> Self {
        let factors = self
            .factors
            .iter()
            .enumerate()
            .map(|(i, f)| if i == keep { f.clone() } else { Factor::identity(f.kind()) })
            .collect();
        Self { factors }
    }

    /// Flat serialization: translation coordinates, planar angles and
    /// axis-angle vectors, in factor order. Length equals the algebra dimension.
    ///
    /// Unlike [`log`], rotations at angle π are accepted and mapped to a
    /// canonical axis with non-negative leading component.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for f in &self.factors {
            match f {
                Factor::Translation(t) => out.extend_from_slice(t),
                Factor::Rotation2(m) => out.push(atan2(m[2], m[0])),
                Factor::Rotation3(m) => out.extend_from_slice(&rotation_vector_total(m)),
            }
        }
        out
    }

    /// Inverse of [`GroupElement::to_flat`].
    pub fn from_flat(spec: &GroupSpec, flat: &[f64]) -> Result<Self> {
        exp(spec, &AlgebraVector::new(spec, flat.to_vec())?)
    }

    /// Concatenated raw payloads in factor order.
    pub fn payload_vec(&self) -> Vec<f64> {
        self.factors.iter().flat_map(|f| f.payload().iter().copied()).collect()
    }

    /// Inverse of [`GroupElement::payload_vec`]; rotation blocks are
    /// validated like in [`GroupElement::from_factors`].
    pub fn from_payload(spec: &GroupSpec, payload: &[f64]) -> Result<Self> {
        if payload.len() != spec.payload_len() {
            return Err(Error::DimensionMismatch { expected: spec.payload_len(), got: payload.len() });
        }
        let mut rest = payload;
        let mut factors = Vec::with_capacity(spec.factors.len());
        for kind in &spec.factors {
            let (head, tail) = rest.split_at(kind.payload_len());
            rest = tail;
            factors.push(match kind {
                FactorKind::Translation(_) => Factor::Translation(head.to_vec()),
                FactorKind::Rotation2 => Factor::Rotation2(head.try_into().expect("length checked")),
                FactorKind::Rotation3 => Factor::Rotation3(head.try_into().expect("length checked")),
            });
        }
        Self::from_factors(factors)
    }

    /// Max over rotation factors of ‖RᵀR − I‖_F.
    pub fn orthogonality_error(&self) -> f64 {
        self.factors
            .iter()
            .map(|f| match f {
                Factor::Translation(_) => 0.0,
                Factor::Rotation2(m) => orthogonality_error2(m),
                Factor::Rotation3(m) => orthogonality_error3(m),
            })
            .fold(0.0, f64::max)
    }
}

/// Tangent coordinates at the identity, laid out factor by factor.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraVector {
    coeffs: Vec<f64>,
}

impl AlgebraVector {
    pub fn new(spec: &GroupSpec, coeffs: Vec<f64>) -> Result<Self> {
        let expected = spec.algebra_dim();
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: coeffs.len() });
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(spec: &GroupSpec) -> Self {
        Self { coeffs: vec![0.0; spec.algebra_dim()] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }
}

pub fn identity(spec: &GroupSpec) -> GroupElement {
    GroupElement { factors: spec.factors.iter().map(|k| Factor::identity(*k)).collect() }
}

/// Factor-wise composition `a·b`.
pub fn compose(a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
    if a.factors.len() != b.factors.len() {
        return Err(Error::IncompatibleGroups("factor counts differ"));
    }
    let factors = a
        .factors
        .iter()
        .zip(&b.factors)
        .map(|(x, y)| x.compose(y))
        .collect::<Result<Vec<_>>>()?;
    Ok(GroupElement { factors })
}

pub fn inverse(a: &GroupElement) -> GroupElement {
    GroupElement { factors: a.factors.iter().map(Factor::inverse).collect() }
}

/// Exponential map. The identity on translation coordinates, `θ ↦ R(θ)` on
/// SO(2) and Rodrigues' formula on SO(3).
pub fn exp(spec: &GroupSpec, v: &AlgebraVector) -> Result<GroupElement> {
    let expected = spec.algebra_dim();
    if v.coeffs.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: v.coeffs.len() });
    }
    let mut at = 0;
    let mut factors = Vec::with_capacity(spec.factors.len());
    for kind in &spec.factors {
        let slice = &v.coeffs[at..at + kind.algebra_dim()];
        factors.push(match kind {
            FactorKind::Translation(_) => Factor::Translation(slice.to_vec()),
            FactorKind::Rotation2 => Factor::Rotation2(rot2_matrix(slice[0])),
            FactorKind::Rotation3 => Factor::Rotation3(rodrigues([slice[0], slice[1], slice[2]])),
        });
        at += kind.algebra_dim();
    }
    Ok(GroupElement { factors })
}

/// Principal logarithm. Fails for SO(3) rotations within
/// [`PI_BRANCH_MARGIN`] of angle π.
pub fn log(a: &GroupElement) -> Result<AlgebraVector> {
    let mut coeffs = Vec::new();
    for f in &a.factors {
        match f {
            Factor::Translation(t) => coeffs.extend_from_slice(t),
            Factor::Rotation2(m) => coeffs.push(atan2(m[2], m[0])),
            Factor::Rotation3(m) => {
                let (axis_sin, angle) = axis_sin_angle(m);
                if angle > PI - PI_BRANCH_MARGIN {
                    return Err(Error::LogBranchAmbiguous { angle });
                }
                coeffs.extend_from_slice(&scale_axis(axis_sin, angle));
            }
        }
    }
    Ok(AlgebraVector { coeffs })
}

/// Sum over factors of squared Euclidean (translations, SO(2) first columns)
/// and squared Frobenius (SO(3)) distances.
pub fn distance_sq(a: &GroupElement, b: &GroupElement) -> Result<f64> {
    if a.factors.len() != b.factors.len() {
        return Err(Error::IncompatibleGroups("factor counts differ"));
    }
    a.factors.iter().zip(&b.factors).map(|(x, y)| x.distance_sq(y)).sum()
}

/// Per-factor squared distances, used by the disentanglement check.
pub fn factor_distances_sq(a: &GroupElement, b: &GroupElement) -> Result<Vec<f64>> {
    if a.factors.len() != b.factors.len() {
        return Err(Error::IncompatibleGroups("factor counts differ"));
    }
    a.factors.iter().zip(&b.factors).map(|(x, y)| x.distance_sq(y)).collect()
}

/// Random element with one magnitude per factor: translations uniform in
/// `[-s, s]ⁿ`, planar angles uniform in `[-sπ, sπ]`, spatial rotations with a
/// uniform axis and an angle uniform in `[0, sπ]`.
pub fn sample_uniform<R: Rng + ?Sized>(
    spec: &GroupSpec,
    rng: &mut R,
    scale: &[f64],
) -> Result<GroupElement> {
    if scale.len() != spec.factors.len() {
        return Err(Error::DimensionMismatch { expected: spec.factors.len(), got: scale.len() });
    }
    if let Some(&s) = scale.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::NegativeScale(s));
    }
    let factors = spec
        .factors
        .iter()
        .zip(scale)
        .map(|(kind, &s)| match kind {
            FactorKind::Translation(n) => {
                Factor::Translation((0..*n).map(|_| symmetric(rng, s)).collect())
            }
            FactorKind::Rotation2 => Factor::Rotation2(rot2_matrix(symmetric(rng, s * PI))),
            FactorKind::Rotation3 => {
                let axis = unit_sphere(rng);
                let angle = rng.random::<f64>() * s * PI;
                Factor::Rotation3(rodrigues([axis[0] * angle, axis[1] * angle, axis[2] * angle]))
            }
        })
        .collect();
    Ok(GroupElement { factors })
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, s: f64) -> f64 {
    (2.0 * rng.random::<f64>() - 1.0) * s
}

/// Uniform direction on S².
pub fn unit_sphere<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let z = 2.0 * rng.random::<f64>() - 1.0;
    let phi = 2.0 * PI * rng.random::<f64>();
    let r = sqrt((1.0 - z * z).max(0.0));
    [r * cos(phi), r * sin(phi), z]
}

// ---------------------------------------------------------------------------
// matrix helpers

pub const IDENTITY3: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

pub fn rot2_matrix(angle: f64) -> [f64; 4] {
    let (s, c) = (sin(angle), cos(angle));
    [c, -s, s, c]
}

/// Skew-symmetric matrix `[v]ₓ`, row-major.
pub fn hat(v: [f64; 3]) -> [f64; 9] {
    [0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0]
}

/// `sin θ / θ` and `(1 − cos θ) / θ²`, with a Taylor fallback near zero.
pub fn rodrigues_coefficients(theta: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        let a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0 - t2 * t2 * t2 / 5040.0;
        let b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0 - t2 * t2 * t2 / 40320.0;
        (a, b)
    } else {
        (sin(theta) / theta, (1.0 - cos(theta)) / (theta * theta))
    }
}

/// `exp([v]ₓ) = I + A [v]ₓ + B [v]ₓ²`.
pub fn rodrigues(v: [f64; 3]) -> [f64; 9] {
    let theta = sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    let (a, b) = rodrigues_coefficients(theta);
    let k = hat(v);
    let k2 = matmul::<3>(&k, &k);
    let mut r = IDENTITY3;
    for i in 0..9 {
        r[i] += a * k[i] + b * k2[i];
    }
    r
}

/// Returns `vee(R − Rᵀ)/2 = sin θ · axis` and the angle θ ∈ [0, π].
fn axis_sin_angle(m: &[f64; 9]) -> ([f64; 3], f64) {
    let w = [(m[7] - m[5]) * 0.5, (m[2] - m[6]) * 0.5, (m[3] - m[1]) * 0.5];
    let s = sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
    let c = ((m[0] + m[4] + m[8]) - 1.0) * 0.5;
    (w, atan2(s, c))
}

fn scale_axis(w: [f64; 3], theta: f64) -> [f64; 3] {
    // θ / sin θ, expanded near zero
    let k = if theta < 1e-4 {
        let t2 = theta * theta;
        1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
    } else {
        theta / sin(theta)
    };
    [w[0] * k, w[1] * k, w[2] * k]
}

/// Axis-angle vector for any rotation; at and near π the axis is read off
/// `(R + I)/2 = a aᵀ` and oriented by the sign of `vee(R − Rᵀ)`.
fn rotation_vector_total(m: &[f64; 9]) -> [f64; 3] {
    let (w, theta) = axis_sin_angle(m);
    if theta <= PI - 1e-3 {
        return scale_axis(w, theta);
    }
    // symmetric part of R is cos θ·I + (1 − cos θ)·a aᵀ
    let c = cos(theta);
    let k = 1.0 - c;
    let diag = [(m[0] - c) / k, (m[4] - c) / k, (m[8] - c) / k];
    let i = (0..3).fold(0, |best, j| if diag[j] > diag[best] { j } else { best });
    let mut axis = [0.0; 3];
    axis[i] = sqrt(diag[i].max(0.0));
    for j in 0..3 {
        if j != i {
            axis[j] = (m[3 * i + j] + m[3 * j + i]) * 0.5 / (k * axis[i]);
        }
    }
    let n = sqrt(axis.iter().map(|x| x * x).sum::<f64>());
    for x in &mut axis {
        *x /= n;
    }
    let dot = axis[0] * w[0] + axis[1] * w[1] + axis[2] * w[2];
    let flip = if dot < 0.0 || (dot == 0.0 && axis.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0)) {
        -1.0
    } else {
        1.0
    };
    [axis[0] * theta * flip, axis[1] * theta * flip, axis[2] * theta * flip]
}

/// Row-major `N×N` product, returned in the first `N²` entries.
pub fn matmul<const N: usize>(a: &[f64], b: &[f64]) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..N {
        for j in 0..N {
            let mut acc = 0.0;
            for k in 0..N {
                acc += a[i * N + k] * b[k * N + j];
            }
            out[i * N + j] = acc;
        }
    }
    out
}

fn transpose<const N: usize, const L: usize>(m: &[f64; L]) -> [f64; L] {
    let mut out = [0.0; L];
    for i in 0..N {
        for j in 0..N {
            out[j * N + i] = m[i * N + j];
        }
    }
    out
}

/// `M v` for a row-major 3×3 matrix.
pub fn mat3_vec(m: &[f64; 9], v: [f64; 3]) -> [f64; 3] {
    [
        m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
        m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
        m[6] * v[0] + m[7] * v[1] + m[8] * v[2],
    ]
}

fn orthogonality_error2(m: &[f64; 4]) -> f64 {
    let mtm = [
        m[0] * m[0] + m[2] * m[2] - 1.0,
        m[0] * m[1] + m[2] * m[3],
        m[1] * m[1] + m[3] * m[3] - 1.0,
    ];
    sqrt(mtm[0] * mtm[0] + 2.0 * mtm[1] * mtm[1] + mtm[2] * mtm[2])
}

fn orthogonality_error3(m: &[f64; 9]) -> f64 {
    let mut acc = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let mut d = if i == j { -1.0 } else { 0.0 };
            for k in 0..3 {
                d += m[k * 3 + i] * m[k * 3 + j];
            }
            acc += d * d;
        }
    }
    sqrt(acc)
}

fn det3(m: &[f64; 9]) -> f64 {
    m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
        + m[2] * (m[3] * m[7] - m[4] * m[6])
}

fn check_rotation<const N: usize>(m: &[f64]) -> Result<()> {
    let (ortho, det) = if N == 2 {
        let a: [f64; 4] = [m[0], m[1], m[2], m[3]];
        (orthogonality_error2(&a), a[0] * a[3] - a[1] * a[2])
    } else {
        let mut a = [0.0; 9];
        a.copy_from_slice(m);
        (orthogonality_error3(&a), det3(&a))
    };
    if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSpec("rotation payload is not in SO(n)"));
    }
    Ok(())
}

fn reorthonormalize2(m: [f64; 9]) -> [f64; 4] {
    let n = sqrt(m[0] * m[0] + m[2] * m[2]);
    let (c, s) = (m[0] / n, m[2] / n);
    [c, -s, s, c]
}

/// Gram–Schmidt on the columns, third column as the cross product.
fn reorthonormalize3(m: &[f64; 9]) -> [f64; 9] {
    let c0 = [m[0], m[3], m[6]];
    let c1 = [m[1], m[4], m[7]];
    let n0 = sqrt(c0.iter().map(|x| x * x).sum::<f64>());
    let e0 = [c0[0] / n0, c0[1] / n0, c0[2] / n0];
    let d = e0[0] * c1[0] + e0[1] * c1[1] + e0[2] * c1[2];
    let u1 = [c1[0] - d * e0[0], c1[1] - d * e0[1], c1[2] - d * e0[2]];
    let n1 = sqrt(u1.iter().map(|x| x * x).sum::<f64>());
    let e1 = [u1[0] / n1, u1[1] / n1, u1[2] / n1];
    let e2 = [
        e0[1] * e1[2] - e0[2] * e1[1],
        e0[2] * e1[0] - e0[0] * e1[2],
        e0[0] * e1[1] - e0[1] * e1[0],
    ];
    [e0[0], e1[0], e2[0], e0[1], e1[1], e2[1], e0[2], e1[2], e2[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rot3(m: &GroupElement) -> [f64; 9] {
        match m.factor(0) {
            Factor::Rotation3(r) => *r,
            _ => panic!("not a rotation"),
        }
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// Truncated matrix power series, independent of the closed form.
    fn series_exp3(v: [f64; 3]) -> [f64; 9] {
        let k = hat(v);
        let mut term = IDENTITY3;
        let mut acc = IDENTITY3;
        for n in 1..=30 {
            let next = matmul::<3>(&term, &k);
            for i in 0..9 {
                term[i] = next[i] / n as f64;
                acc[i] += term[i];
            }
        }
        acc
    }

    #[test]
    fn identities() {
        let t2 = identity(&GroupSpec::translation(2).unwrap());
        assert_eq!(t2.factor(0), &Factor::Translation(vec![0.0, 0.0]));
        assert_eq!(rot3(&identity(&GroupSpec::rotation3())), IDENTITY3);
        let prod = GroupSpec::new(vec![FactorKind::Translation(1), FactorKind::Rotation2]).unwrap();
        let e = identity(&prod);
        assert_eq!(e.factors(), &[Factor::Translation(vec![0.0]), Factor::Rotation2([1.0, 0.0, 0.0, 1.0])]);
    }

    #[test]
    fn invalid_specs() {
        assert!(GroupSpec::new(vec![]).is_err());
        assert!(GroupSpec::translation(0).is_err());
        let spec = GroupSpec::new(vec![FactorKind::Translation(2), FactorKind::Rotation3]).unwrap();
        assert_eq!(spec.algebra_dim(), 5);
        assert_eq!(spec.algebra_offsets(), vec![0, 2]);
    }

    #[test]
    fn compose_examples() {
        let a = GroupElement::translation(&[1.0, 2.0]).unwrap();
        let b = GroupElement::translation(&[3.0, -1.0]).unwrap();
        assert_eq!(compose(&a, &b).unwrap().factor(0), &Factor::Translation(vec![4.0, 1.0]));

        // planar: explicit 2x2 products
        let p = compose(&GroupElement::rotation2(PI / 3.0), &GroupElement::rotation2(PI / 6.0)).unwrap();
        let (c3, s3) = (0.5, 3f64.sqrt() / 2.0);
        let (c6, s6) = (3f64.sqrt() / 2.0, 0.5);
        let by_hand = [c3 * c6 - s3 * s6, -(c3 * s6 + s3 * c6), s3 * c6 + c3 * s6, c3 * c6 - s3 * s6];
        match p.factor(0) {
            Factor::Rotation2(m) => {
                assert!(max_abs_diff(m, &by_hand) < 1e-12);
                assert!(max_abs_diff(m, &[0.0, -1.0, 1.0, 0.0]) < 1e-12);
            }
            _ => unreachable!(),
        }

        let rz = GroupElement::rotation3([0.0, 0.0, PI / 2.0]);
        let rz2 = compose(&rz, &rz).unwrap();
        assert!(max_abs_diff(&rot3(&rz2), &[-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0]) < 1e-12);
    }

    #[test]
    fn compose_mismatch() {
        let a = GroupElement::translation(&[1.0, 2.0]).unwrap();
        let b = GroupElement::rotation2(0.1);
        assert!(matches!(compose(&a, &b), Err(Error::IncompatibleGroups(_))));
        let c = GroupElement::translation(&[1.0]).unwrap();
        assert!(compose(&a, &c).is_err());
    }

    #[test]
    fn inverse_examples() {
        let a = GroupElement::translation(&[1.0, -2.0, 5.0]).unwrap();
        assert_eq!(inverse(&a).factor(0), &Factor::Translation(vec![-1.0, 2.0, -5.0]));

        let r = GroupElement::rotation3([0.3, -0.2, 0.9]);
        let ri = inverse(&r);
        let rr = compose(&r, &ri).unwrap();
        assert!(max_abs_diff(&rot3(&rr), &IDENTITY3) < 1e-12);

        let prod = GroupElement::from_factors(vec![
            Factor::Translation(vec![2.0, 0.0]),
            Factor::Rotation3(rodrigues([0.0, 0.0, PI / 2.0])),
        ])
        .unwrap();
        let inv = inverse(&prod);
        assert_eq!(inv.factor(0), &Factor::Translation(vec![-2.0, -0.0]));
        match inv.factor(1) {
            Factor::Rotation3(m) => assert!(max_abs_diff(m, &rodrigues([0.0, 0.0, -PI / 2.0])) < 1e-12),
            _ => unreachable!(),
        }
    }

    #[test]
    fn exp_examples() {
        let spec = GroupSpec::new(vec![FactorKind::Translation(2), FactorKind::Rotation2, FactorKind::Rotation3]).unwrap();
        assert_eq!(exp(&spec, &AlgebraVector::zeros(&spec)).unwrap(), identity(&spec));

        let v = [0.0, 0.0, PI / 2.0];
        let expected = [0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let series = series_exp3(v);
        assert!(max_abs_diff(&series, &expected) < 1e-12);
        assert!(max_abs_diff(&rodrigues(v), &series) < 1e-12);

        // planar: cos/sin against the 2x2 series of [[0,-π],[π,0]]
        let r = rot2_matrix(PI);
        let mut term = [1.0, 0.0, 0.0, 1.0];
        let mut acc = term;
        let gen = [0.0, -PI, PI, 0.0];
        for n in 1..=40 {
            let t = [
                term[0] * gen[0] + term[1] * gen[2],
                term[0] * gen[1] + term[1] * gen[3],
                term[2] * gen[0] + term[3] * gen[2],
                term[2] * gen[1] + term[3] * gen[3],
            ];
            for i in 0..4 {
                term[i] = t[i] / n as f64;
                acc[i] += term[i];
            }
        }
        assert!(max_abs_diff(&r, &acc) < 1e-12);
        assert!(max_abs_diff(&r, &[-1.0, 0.0, 0.0, -1.0]) < 1e-12);

        assert!(matches!(
            exp(&spec, &AlgebraVector { coeffs: vec![0.0; 3] }),
            Err(Error::DimensionMismatch { expected: 6, got: 3 })
        ));
    }

    #[test]
    fn rodrigues_matches_series_including_small_angles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for scale in [1e-9, 1e-7, 1e-5, 1e-2, 1.0, 3.0] {
            for _ in 0..20 {
                let a = unit_sphere(&mut rng);
                let t = scale * rng.random::<f64>();
                let v = [a[0] * t, a[1] * t, a[2] * t];
                assert!(max_abs_diff(&rodrigues(v), &series_exp3(v)) < 1e-12);
            }
        }
    }

    #[test]
    fn log_examples() {
        let spec = GroupSpec::new(vec![FactorKind::Translation(2), FactorKind::Rotation3]).unwrap();
        assert_eq!(log(&identity(&spec)).unwrap().as_slice(), &[0.0; 5]);
        let rz = GroupElement::rotation3([0.0, 0.0, PI / 2.0]);
        assert!(max_abs_diff(log(&rz).unwrap().as_slice(), &[0.0, 0.0, PI / 2.0]) < 1e-12);
        let t = GroupElement::translation(&[4.0, 1.0]).unwrap();
        assert_eq!(log(&t).unwrap().as_slice(), &[4.0, 1.0]);

        let flip = GroupElement::rotation3([0.0, 0.0, PI]);
        assert!(matches!(log(&flip), Err(Error::LogBranchAmbiguous { .. })));
        let near = GroupElement::rotation3([0.0, PI - 1e-7, 0.0]);
        assert!(log(&near).is_err());
    }

    #[test]
    fn distance_examples() {
        let a = GroupElement::rotation3([0.1, 0.2, 0.3]);
        assert_eq!(distance_sq(&a, &a).unwrap(), 0.0);
        let i = identity(&GroupSpec::rotation3());
        let flip = GroupElement::from_factors(vec![Factor::Rotation3([-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0])]).unwrap();
        assert!((distance_sq(&i, &flip).unwrap() - 8.0).abs() < 1e-15);
        let o = GroupElement::translation(&[0.0, 0.0]).unwrap();
        let p = GroupElement::translation(&[3.0, 4.0]).unwrap();
        assert_eq!(distance_sq(&o, &p).unwrap(), 25.0);
        // opposite points on the unit circle
        let d = distance_sq(&GroupElement::rotation2(0.0), &GroupElement::rotation2(PI)).unwrap();
        assert!((d - 4.0).abs() < 1e-12);
        assert!(distance_sq(&o, &a).is_err());
    }

    #[test]
    fn sampling() {
        let spec = GroupSpec::new(vec![FactorKind::Translation(2), FactorKind::Rotation2, FactorKind::Rotation3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zero = sample_uniform(&spec, &mut rng, &[0.0, 0.0, 0.0]).unwrap();
        assert!(distance_sq(&zero, &identity(&spec)).unwrap() < 1e-30);

        let t2 = GroupSpec::translation(2).unwrap();
        let a = sample_uniform(&t2, &mut ChaCha8Rng::seed_from_u64(42), &[1.0]).unwrap();
        let b = sample_uniform(&t2, &mut ChaCha8Rng::seed_from_u64(42), &[1.0]).unwrap();
        assert_eq!(a, b);
        assert!(a.factor(0).payload().iter().all(|x| x.abs() <= 1.0));

        let so2 = GroupSpec::rotation2();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| log(&sample_uniform(&so2, &mut rng, &[1.0]).unwrap()).unwrap().as_slice()[0])
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.05, "mean angle {mean}");

        assert!(matches!(sample_uniform(&t2, &mut rng, &[-1.0]), Err(Error::NegativeScale(_))));
        assert!(sample_uniform(&t2, &mut rng, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn flat_roundtrip_handles_pi() {
        let spec = GroupSpec::rotation3();
        for v in [[0.0, 0.0, PI], [PI, 0.0, 0.0], [0.0, -PI, 0.0], [1.0, 1.0, 1.0]] {
            let g = GroupElement::rotation3(v);
            let back = GroupElement::from_flat(&spec, &g.to_flat()).unwrap();
            assert!(distance_sq(&g, &back).unwrap() < 1e-20, "{v:?}");
        }
        let near = [0.0, (PI - 1e-4) / 2f64.sqrt(), (PI - 1e-4) / 2f64.sqrt()];
        let g = GroupElement::rotation3(near);
        let back = GroupElement::from_flat(&spec, &g.to_flat()).unwrap();
        let d = distance_sq(&g, &back).unwrap();
        assert!(d < 1e-18, "{d:e}");
    }

    #[test]
    fn invalid_rotation_payload_rejected() {
        assert!(GroupElement::from_factors(vec![Factor::Rotation2([2.0, 0.0, 0.0, 0.5])]).is_err());
        let reflection = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0];
        assert!(GroupElement::from_factors(vec![Factor::Rotation3(reflection)]).is_err());
    }

    #[test]
    fn long_composition_chains_stay_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = GroupSpec::new(vec![FactorKind::Rotation2, FactorKind::Rotation3]).unwrap();
        let mut acc = identity(&spec);
        for _ in 0..1000 {
            let g = sample_uniform(&spec, &mut rng, &[1.0, 1.0]).unwrap();
            acc = compose(&acc, &g).unwrap();
            acc = compose(&inverse(&g), &acc).unwrap();
            assert!(acc.orthogonality_error() <= 1e-8);
        }
    }

    #[test]
    fn payload_roundtrip_and_validation() {
        let spec = GroupSpec::new(vec![FactorKind::Translation(2), FactorKind::Rotation2, FactorKind::Rotation3]).unwrap();
        assert_eq!(spec.payload_len(), 2 + 4 + 9);
        let g = sample_uniform(&spec, &mut ChaCha8Rng::seed_from_u64(5), &[1.0, 1.0, 1.0]).unwrap();
        let p = g.payload_vec();
        assert_eq!(GroupElement::from_payload(&spec, &p).unwrap(), g);
        let mut bad = p.clone();
        bad[3] += 0.5;
        assert!(GroupElement::from_payload(&spec, &bad).is_err());
        assert!(GroupElement::from_payload(&spec, &p[1..]).is_err());
    }
}
