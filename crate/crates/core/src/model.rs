//! Trainable models and the interfaces evaluation relies on.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Encoder, EncoderConfig, Tape};
use crate::datasets::{SceneState, Triple};
use crate::error::{Error, Result};
use crate::latent::{self, LatentPoint, LatentSpaceSpec};
use crate::liegroup::{self, AlgebraVector, GroupElement};
use crate::losses::{self, LossConfig, LossTerms};

/// A representation with its own latent action and metric, which is all
/// hit-rate evaluation needs.
pub trait LatentModel {
    type Code: Clone;

    fn encode(&self, x: &[f64]) -> Result<Self::Code>;
    fn act(&self, g: &GroupElement, z: &Self::Code) -> Result<Self::Code>;
    fn distance(&self, a: &Self::Code, b: &Self::Code) -> Result<f64>;
}

/// Encoders with a class/pose split.
pub trait ClassPoseEncoder {
    fn latent_spec(&self) -> &LatentSpaceSpec;
    fn encode_latent(&self, x: &[f64]) -> Result<LatentPoint>;
}

/// Parameterized models trained by [`crate::train::train`].
pub trait Trainable {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Records the batch loss on `tape`, which was created for
    /// `self.params().len()` parameters.
    fn batch_loss(&self, tape: &mut Tape, batch: &[&Triple]) -> Result<LossTerms>;
}

/// The class-pose model: `x ↦ (normalize(φ^ℰ(x)), exp(φ^G(x)))`.
#[derive(Debug, Clone)]
pub struct ClassPoseModel {
    latent: LatentSpaceSpec,
    encoder: Encoder,
    loss: LossConfig,
    params: Vec<f64>,
}

impl ClassPoseModel {
    /// Builds the model with Glorot-initialized weights from `seed`.
    /// `hidden_dims` and `activation` are taken from `encoder`; its output
    /// sizes are overwritten to match `latent`.
    pub fn new(latent: LatentSpaceSpec, mut encoder: EncoderConfig, loss: LossConfig, seed: u64) -> Result<Self> {
        loss.validate()?;
        encoder.class_output_dim = latent.class_len();
        encoder.algebra_output_dim = latent.group.algebra_dim();
        let encoder = Encoder::new(encoder, 0)?;
        let mut params = vec![0.0; encoder.num_params()];
        encoder.mlp().init(&mut params, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self { latent, encoder, loss, params })
    }

    pub fn from_params(latent: LatentSpaceSpec, encoder: EncoderConfig, loss: LossConfig, params: Vec<f64>) -> Result<Self> {
        let mut model = Self::new(latent, encoder, loss, 0)?;
        if params.len() != model.params.len() {
            return Err(Error::DimensionMismatch { expected: model.params.len(), got: params.len() });
        }
        model.params = params;
        Ok(model)
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn loss_config(&self) -> &LossConfig {
        &self.loss
    }

    /// The raw algebra output `φ^G(x)` before exponentiation.
    pub fn algebra(&self, x: &[f64]) -> Result<AlgebraVector> {
        self.encoder.algebra(&self.latent.group, &self.params, x)
    }
}

impl ClassPoseEncoder for ClassPoseModel {
    fn latent_spec(&self) -> &LatentSpaceSpec {
        &self.latent
    }

    fn encode_latent(&self, x: &[f64]) -> Result<LatentPoint> {
        let (raw, v) = self.encoder.forward_plain(&self.params, x)?;
        let class_point = latent::normalize_to_sphere(&raw)?;
        let pose = liegroup::exp(&self.latent.group, &AlgebraVector::new(&self.latent.group, v)?)?;
        Ok(LatentPoint { class_point, pose })
    }
}

impl<T: ClassPoseEncoder> LatentModel for T {
    type Code = LatentPoint;

    fn encode(&self, x: &[f64]) -> Result<LatentPoint> {
        self.encode_latent(x)
    }

    fn act(&self, g: &GroupElement, z: &LatentPoint) -> Result<LatentPoint> {
        latent::act(g, z)
    }

    fn distance(&self, a: &LatentPoint, b: &LatentPoint) -> Result<f64> {
        latent::joint_distance(self.latent_spec(), a, b)
    }
}

impl Trainable for ClassPoseModel {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn batch_loss(&self, tape: &mut Tape, batch: &[&Triple]) -> Result<LossTerms> {
        let bound = self.encoder.bind(tape, &self.params);
        losses::total_loss(tape, &self.encoder, &bound, &self.latent.group, batch, &self.loss)
    }
}

/// Ground-truth encoder: looks an observation up among registered generator
/// states and returns `(one-hot orbit, pose)`. Exactly equivariant.
#[derive(Debug, Clone)]
pub struct OracleEncoder {
    latent: LatentSpaceSpec,
    table: BTreeMap<Vec<u64>, SceneState>,
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

impl OracleEncoder {
    /// `num_orbits` fixes the one-hot width, so the class sphere is
    /// `𝕊^(num_orbits−1)`.
    pub fn new(num_orbits: u32, group: liegroup::GroupSpec) -> Result<Self> {
        if num_orbits < 2 {
            return Err(Error::InvalidSpec("oracle encoder needs at least two orbits"));
        }
        Ok(Self { latent: LatentSpaceSpec::new(num_orbits as usize - 1, group)?, table: BTreeMap::new() })
    }

    pub fn insert(&mut self, x: &[f64], state: &SceneState) {
        self.table.insert(key(x), state.clone());
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn state_of(&self, x: &[f64]) -> Result<&SceneState> {
        self.table.get(&key(x)).ok_or(Error::UnknownObservation)
    }
}

impl ClassPoseEncoder for OracleEncoder {
    fn latent_spec(&self) -> &LatentSpaceSpec {
        &self.latent
    }

    fn encode_latent(&self, x: &[f64]) -> Result<LatentPoint> {
        let s = self.state_of(x)?;
        let mut class_point = vec![0.0; self.latent.class_len()];
        *class_point.get_mut(s.orbit as usize).ok_or(Error::UnknownObservation)? = 1.0;
        Ok(LatentPoint { class_point, pose: s.pose.clone() })
    }
}

/// Wraps an encoder and post-composes its pose with a fixed permutation of
/// factor slots. Used to test that evaluation follows the slots.
#[derive(Debug, Clone)]
pub struct SlotPermuted<E> {
    pub inner: E,
    pub perm: Vec<usize>,
    latent: LatentSpaceSpec,
}

impl<E: ClassPoseEncoder> SlotPermuted<E> {
    /// `perm[j]` is the inner slot shown at position `j`; all permuted
    /// factors must have the same kind.
    pub fn new(inner: E, perm: Vec<usize>) -> Result<Self> {
        let spec = inner.latent_spec().clone();
        let kinds = spec.group.factors();
        if perm.len() != kinds.len() || perm.iter().enumerate().any(|(j, &i)| i >= kinds.len() || kinds[i] != kinds[j]) {
            return Err(Error::InvalidSpec("slot permutation must map factors to factors of the same kind"));
        }
        Ok(Self { inner, perm, latent: spec })
    }
}

impl<E: ClassPoseEncoder> ClassPoseEncoder for SlotPermuted<E> {
    fn latent_spec(&self) -> &LatentSpaceSpec {
        &self.latent
    }

    fn encode_latent(&self, x: &[f64]) -> Result<LatentPoint> {
        let z = self.inner.encode_latent(x)?;
        let factors = self.perm.iter().map(|&i| z.pose.factor(i).clone()).collect();
        Ok(LatentPoint { class_point: z.class_point, pose: GroupElement::from_factors(factors)? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate, Generator, Sprites};
    use crate::liegroup::GroupSpec;

    #[test]
    fn model_sizes_follow_latent_spec() {
        let group = GroupSpec::rotation3();
        let latent = LatentSpaceSpec::new(2, group).unwrap();
        let mut enc = EncoderConfig::new(10, 0, 0);
        enc.hidden_dims = vec![8];
        let m = ClassPoseModel::new(latent, enc, LossConfig::default(), 0).unwrap();
        assert_eq!(m.encoder().config().class_output_dim, 3);
        assert_eq!(m.encoder().config().algebra_output_dim, 3);
        let z = m.encode(&[0.1; 10]).unwrap();
        assert_eq!(z.class_point.len(), 3);
        assert!(z.pose.orthogonality_error() < 1e-12);
    }

    #[test]
    fn oracle_is_exactly_equivariant() {
        let gen = Sprites::new();
        let data = generate(&gen, 0, 20, None).unwrap();
        let mut oracle = OracleEncoder::new(gen.num_orbits(), gen.group()).unwrap();
        for (t, (s, e)) in data.triples.iter().zip(&data.states) {
            oracle.insert(&t.x, s);
            oracle.insert(&t.y, e);
        }
        for t in &data.triples {
            let zx = oracle.encode(&t.x).unwrap();
            let zy = oracle.encode(&t.y).unwrap();
            let moved = oracle.act(&t.g, &zx).unwrap();
            assert!(oracle.distance(&moved, &zy).unwrap() + 1.0 <= 1e-12);
        }
        assert!(matches!(oracle.encode(&[0.5; 256]), Err(Error::UnknownObservation)));
    }

    #[test]
    fn slot_permutation_checks_kinds() {
        let gen = crate::datasets::Apartments::new();
        let oracle = OracleEncoder::new(2, gen.group()).unwrap();
        assert!(SlotPermuted::new(oracle.clone(), vec![1, 0]).is_err());
        assert!(SlotPermuted::new(oracle, vec![0, 1]).is_ok());
    }
}
