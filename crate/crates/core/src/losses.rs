//! Training objectives on the tape: the class/pose equivariance loss, the
//! InfoNCE class term and the baselines' hinge spread term.

use alloc::vec::Vec;

use crate::autodiff::{BoundMlp, Encoder, Tape, Var};
use crate::datasets::Triple;
use crate::error::{Error, Result};
use crate::latent::LatentPoint;
use crate::liegroup::{Factor, FactorKind, GroupElement, GroupSpec};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LossConfig {
    pub temperature: f64,
    /// Upper bound on in-batch negatives per anchor.
    pub negatives_per_anchor: usize,
    pub hinge_margin: f64,
    pub hinge_weight: f64,
    pub class_weight: f64,
    pub pose_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 2.0,
            negatives_per_anchor: 15,
            hinge_margin: 1.0,
            hinge_weight: 1.0,
            class_weight: 1.0,
            pose_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if self.negatives_per_anchor < 1 {
            return Err(Error::Config("need at least one negative per anchor".into()));
        }
        Ok(())
    }
}

/// Loss nodes reported per step.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub class: Var,
    pub pose: Var,
}

/// A latent point living on a tape: unit class vector and per-factor pose
/// payloads (translation vector, row-major rotation matrices).
#[derive(Debug, Clone)]
pub struct TapeLatent {
    pub class: Var,
    pub pose: Vec<Var>,
}

impl TapeLatent {
    /// Normalizes the raw class output and exponentiates the algebra output.
    pub fn from_encoder_output(tape: &mut Tape, group: &GroupSpec, raw_class: Var, v: Var) -> Result<Self> {
        let class = tape.normalize(raw_class)?;
        let mut pose = Vec::with_capacity(group.num_factors());
        for (kind, off) in group.factors().iter().zip(group.algebra_offsets()) {
            let slice = tape.slice(v, off, kind.algebra_dim());
            pose.push(match kind {
                FactorKind::Translation(_) => slice,
                FactorKind::Rotation2 => tape.rot2(slice),
                FactorKind::Rotation3 => tape.rodrigues(slice),
            });
        }
        Ok(Self { class, pose })
    }

    pub fn constant(tape: &mut Tape, z: &LatentPoint) -> Self {
        let class = tape.constant(z.class_point.clone());
        let pose = z.pose.factors().iter().map(|f| tape.constant(f.payload().to_vec())).collect();
        Self { class, pose }
    }
}

/// `g · pose` on the tape.
pub fn act_pose(tape: &mut Tape, g: &GroupElement, pose: &[Var]) -> Result<Vec<Var>> {
    if g.factors().len() != pose.len() {
        return Err(Error::IncompatibleGroups("pose and element have different factor counts"));
    }
    g.factors()
        .iter()
        .zip(pose)
        .map(|(f, p)| {
            let len = tape.value(*p).len();
            if len != f.kind().payload_len() {
                return Err(Error::IncompatibleGroups("pose payload does not match element"));
            }
            Ok(match f {
                Factor::Translation(t) => tape.add_const(*p, t),
                Factor::Rotation2(m) => tape.left_matmul(m, 2, *p),
                Factor::Rotation3(m) => tape.left_matmul(m, 3, *p),
            })
        })
        .collect()
}

/// Differentiable counterpart of [`crate::liegroup::distance_sq`].
pub fn pose_distance_sq(tape: &mut Tape, group: &GroupSpec, a: &[Var], b: &[Var]) -> Result<Var> {
    if a.len() != group.num_factors() || b.len() != group.num_factors() {
        return Err(Error::IncompatibleGroups("pose factor count does not match group"));
    }
    let mut parts = Vec::with_capacity(a.len());
    for ((kind, x), y) in group.factors().iter().zip(a).zip(b) {
        let diff = tape.sub(*x, *y);
        let sq = tape.sum_sq(diff);
        parts.push(match kind {
            // [c,-s,s,c]: half the squared Frobenius norm is the first-column distance
            FactorKind::Rotation2 => tape.scale(sq, 0.5),
            _ => sq,
        });
    }
    Ok(tape.sum_scalars(&parts))
}

/// `−⟨a, b⟩` on the tape.
pub fn class_dissimilarity(tape: &mut Tape, a: Var, b: Var) -> Var {
    let d = tape.dot(a, b);
    tape.scale(d, -1.0)
}

/// `d_ℰ(z_y, z_x) + d_G(z_y, g · z_x)`.
pub fn equivariance_loss(
    tape: &mut Tape,
    group: &GroupSpec,
    z_x: &TapeLatent,
    g: &GroupElement,
    z_y: &TapeLatent,
) -> Result<Var> {
    if !g.matches(group) {
        return Err(Error::IncompatibleGroups("element does not match latent group"));
    }
    let class = class_dissimilarity(tape, z_y.class, z_x.class);
    let moved = act_pose(tape, g, &z_x.pose)?;
    let pose = pose_distance_sq(tape, group, &z_y.pose, &moved)?;
    Ok(tape.add(class, pose))
}

/// `(1/τ) d_ℰ(positive, anchor) + mean_j exp(−(1/τ) d_ℰ(negative_j, anchor))`.
pub fn infonce_class_loss(tape: &mut Tape, anchor: Var, positive: Var, negatives: &[Var], tau: f64) -> Result<Var> {
    if negatives.is_empty() {
        return Err(Error::EmptyNegatives);
    }
    if !(tau > 0.0) {
        return Err(Error::Config("temperature must be positive".into()));
    }
    let pos = class_dissimilarity(tape, positive, anchor);
    let pos = tape.scale(pos, 1.0 / tau);
    let mut terms = Vec::with_capacity(negatives.len());
    for n in negatives {
        // exp(-(1/τ)(-⟨n, a⟩)) = exp(⟨n, a⟩/τ)
        let d = tape.dot(*n, anchor);
        let s = tape.scale(d, 1.0 / tau);
        terms.push(tape.exp(s));
    }
    let neg = tape.mean_scalars(&terms);
    Ok(tape.add(pos, neg))
}

/// `max(0, margin − ‖a − b‖²)`.
pub fn hinge_spread_loss(tape: &mut Tape, a: Var, b: Var, margin: f64) -> Var {
    let diff = tape.sub(a, b);
    let d = tape.sum_sq(diff);
    let neg = tape.scale(d, -1.0);
    let shifted = tape.add_const(neg, &[margin]);
    tape.relu(shifted)
}

/// Mean over the batch of the InfoNCE class term (in-batch anchors as
/// negatives) plus the pose equivariance term. A batch of one has no
/// negatives, so its class term is the positive part alone.
pub fn total_loss(
    tape: &mut Tape,
    encoder: &Encoder,
    bound: &BoundMlp,
    group: &GroupSpec,
    batch: &[&Triple],
    config: &LossConfig,
) -> Result<LossTerms> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut xs = Vec::with_capacity(batch.len());
    let mut ys = Vec::with_capacity(batch.len());
    for t in batch {
        let (c, v) = encoder.forward(tape, bound, &t.x)?;
        xs.push(TapeLatent::from_encoder_output(tape, group, c, v)?);
        let (c, v) = encoder.forward(tape, bound, &t.y)?;
        ys.push(TapeLatent::from_encoder_output(tape, group, c, v)?);
    }
    let n = batch.len();
    let mut class_terms = Vec::with_capacity(n);
    let mut pose_terms = Vec::with_capacity(n);
    for i in 0..n {
        let class = if n == 1 {
            log::warn!("batch of one: InfoNCE negative term skipped");
            let d = class_dissimilarity(tape, ys[i].class, xs[i].class);
            tape.scale(d, 1.0 / config.temperature)
        } else {
            let negatives: Vec<Var> = (1..n)
                .map(|k| xs[(i + k) % n].class)
                .take(config.negatives_per_anchor)
                .collect();
            infonce_class_loss(tape, xs[i].class, ys[i].class, &negatives, config.temperature)?
        };
        let moved = act_pose(tape, &batch[i].g, &xs[i].pose)?;
        let pose = pose_distance_sq(tape, group, &ys[i].pose, &moved)?;
        class_terms.push(tape.scale(class, config.class_weight));
        pose_terms.push(tape.scale(pose, config.pose_weight));
    }
    let class = tape.mean_scalars(&class_terms);
    let pose = tape.mean_scalars(&pose_terms);
    let total = tape.add(class, pose);
    Ok(LossTerms { total, class, pose })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::{self, LatentPoint};
    use crate::liegroup;
    use alloc::vec;
    use libm::exp;

    fn unit(tape: &mut Tape, v: &[f64]) -> Var {
        let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        tape.constant(v.iter().map(|x| x / n).collect())
    }

    #[test]
    fn equivariance_minimum_at_exact_action() {
        let group = GroupSpec::new(vec![FactorKind::Translation(2), FactorKind::Rotation3]).unwrap();
        let zx = LatentPoint::new(
            vec![0.0, 0.6, 0.8],
            liegroup::GroupElement::from_factors(vec![
                Factor::Translation(vec![1.0, 2.0]),
                Factor::Rotation3(liegroup::rodrigues([0.1, 0.2, 0.3])),
            ])
            .unwrap(),
        )
        .unwrap();
        let g = liegroup::GroupElement::from_factors(vec![
            Factor::Translation(vec![-0.5, 0.25]),
            Factor::Rotation3(liegroup::rodrigues([0.4, -0.1, 0.9])),
        ])
        .unwrap();
        let zy = latent::act(&g, &zx).unwrap();
        let mut tape = Tape::new(0);
        let a = TapeLatent::constant(&mut tape, &zx);
        let b = TapeLatent::constant(&mut tape, &zy);
        let l = equivariance_loss(&mut tape, &group, &a, &g, &b).unwrap();
        assert!((tape.scalar(l) + 1.0).abs() < 1e-12);

        let e = liegroup::identity(&group);
        let l = equivariance_loss(&mut tape, &group, &a, &e, &a).unwrap();
        assert!((tape.scalar(l) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn equivariance_one_dimensional_by_hand() {
        let group = GroupSpec::translation(1).unwrap();
        let zx = LatentPoint::new(vec![1.0, 0.0], liegroup::GroupElement::translation(&[0.0]).unwrap()).unwrap();
        let zy = LatentPoint::new(vec![1.0, 0.0], liegroup::GroupElement::translation(&[5.0]).unwrap()).unwrap();
        let g = liegroup::GroupElement::translation(&[2.0]).unwrap();
        let mut tape = Tape::new(0);
        let a = TapeLatent::constant(&mut tape, &zx);
        let b = TapeLatent::constant(&mut tape, &zy);
        let l = equivariance_loss(&mut tape, &group, &a, &g, &b).unwrap();
        assert_eq!(tape.scalar(l), -1.0 + 9.0);
        let wrong = liegroup::GroupElement::rotation2(0.1);
        assert!(equivariance_loss(&mut tape, &group, &a, &wrong, &b).is_err());
    }

    #[test]
    fn infonce_examples() {
        let mut tape = Tape::new(0);
        let a = tape.constant(vec![1.0, 0.0]);
        let anti = tape.constant(vec![-1.0, 0.0]);
        let l = infonce_class_loss(&mut tape, a, a, &[anti], 1.0).unwrap();
        assert!((tape.scalar(l) - (-1.0 + exp(-1.0))).abs() < 1e-15);
        assert!((tape.scalar(l) + 0.6321).abs() < 1e-4);

        let o = tape.constant(vec![0.0, 1.0]);
        let l = infonce_class_loss(&mut tape, a, o, &[o], 1.0).unwrap();
        assert_eq!(tape.scalar(l), 1.0);

        assert!(matches!(infonce_class_loss(&mut tape, a, o, &[], 1.0), Err(Error::EmptyNegatives)));
    }

    #[test]
    fn infonce_temperature_scaling() {
        let mut tape = Tape::new(0);
        let a = unit(&mut tape, &[1.0, 2.0, 0.5]);
        let p = unit(&mut tape, &[0.8, 1.5, 1.0]);
        let n = unit(&mut tape, &[-1.0, 0.3, 0.2]);
        let pos1 = -latent::class_dissimilarity(tape.value(p), tape.value(a)).unwrap();
        let d_neg = latent::class_dissimilarity(tape.value(n), tape.value(a)).unwrap();
        let l1 = infonce_class_loss(&mut tape, a, p, &[n], 1.0).unwrap();
        let l2 = infonce_class_loss(&mut tape, a, p, &[n], 2.0).unwrap();
        assert!((tape.scalar(l1) - (-pos1 + exp(-d_neg))).abs() < 1e-14);
        // τ → 2 halves the first term and square-roots the exponential factor
        assert!((tape.scalar(l2) - (-pos1 / 2.0 + libm::sqrt(exp(-d_neg)))).abs() < 1e-14);
    }

    #[test]
    fn hinge_examples() {
        let mut tape = Tape::new(0);
        let a = tape.constant(vec![0.0, 0.0]);
        let far = tape.constant(vec![1.0, 0.5]);
        let h = hinge_spread_loss(&mut tape, a, far, 1.0);
        assert_eq!(tape.scalar(h), 0.0);
        let h = hinge_spread_loss(&mut tape, a, a, 1.0);
        assert_eq!(tape.scalar(h), 1.0);
        let q = tape.constant(vec![0.5, 0.0]);
        let h = hinge_spread_loss(&mut tape, a, q, 1.0);
        assert_eq!(tape.scalar(h), 0.75);
    }
}
