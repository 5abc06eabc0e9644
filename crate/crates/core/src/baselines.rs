//! Comparison models: an MDP homomorphism with a learned latent action, and
//! a linear model where `SO(3)` acts on `ℝ³` by matrix multiplication.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{check_input, Activation, Mlp, Tape, Var};
use crate::datasets::Triple;
use crate::error::{Error, Result};
use crate::liegroup::{self, Factor, GroupElement, GroupSpec};
use crate::losses::{hinge_spread_loss, LossConfig, LossTerms};
use crate::model::{LatentModel, Trainable};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct BaselineConfig {
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    /// Hidden widths of the MDPH transition network.
    pub transition_hidden: Vec<usize>,
    /// MDPH latent dimension is `extra_latent_dims + dim G`.
    pub extra_latent_dims: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { hidden_dims: vec![128, 128], activation: Activation::Tanh, transition_hidden: vec![128, 128], extra_latent_dims: 8 }
    }
}

fn sq_euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Mean of `‖target − predicted‖²` over the batch.
pub fn latent_action_loss(tape: &mut Tape, predicted: &[Var], targets: &[Var]) -> Var {
    let terms: Vec<Var> = predicted
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            let d = tape.sub(*t, *p);
            tape.sum_sq(d)
        })
        .collect();
    tape.mean_scalars(&terms)
}

/// Mean hinge spread term over all distinct pairs of `codes`.
pub fn pairwise_hinge(tape: &mut Tape, codes: &[Var], margin: f64) -> Result<Var> {
    if codes.len() < 2 {
        return Err(Error::Config("baseline losses need a batch of at least two".into()));
    }
    let mut terms = Vec::with_capacity(codes.len() * (codes.len() - 1) / 2);
    for i in 0..codes.len() {
        for j in i + 1..codes.len() {
            terms.push(hinge_spread_loss(tape, codes[i], codes[j], margin));
        }
    }
    Ok(tape.mean_scalars(&terms))
}

fn combine(tape: &mut Tape, action: Var, hinge: Var, loss: &LossConfig) -> LossTerms {
    let weighted = tape.scale(hinge, loss.hinge_weight);
    let total = tape.add(action, weighted);
    LossTerms { total, class: weighted, pose: action }
}

/// MDPH: unstructured latent `ℝ^(8 + dim G)` and a learned transition
/// `T(g, z)` fed with `g`'s flat serialization.
#[derive(Debug, Clone)]
pub struct MdphModel {
    group: GroupSpec,
    encoder: Mlp,
    transition: Mlp,
    loss: LossConfig,
    params: Vec<f64>,
}

impl MdphModel {
    pub fn new(group: GroupSpec, input_dim: usize, config: &BaselineConfig, loss: LossConfig, seed: u64) -> Result<Self> {
        let latent = config.extra_latent_dims + group.algebra_dim();
        let flat = group.algebra_dim();
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(&config.hidden_dims);
        sizes.push(latent);
        let encoder = Mlp::new(sizes, config.activation, 0)?;
        let mut tsizes = vec![flat + latent];
        tsizes.extend_from_slice(&config.transition_hidden);
        tsizes.push(latent);
        let transition = Mlp::new(tsizes, Activation::Relu, encoder.num_params())?;
        let mut params = vec![0.0; encoder.num_params() + transition.num_params()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        encoder.init(&mut params, &mut rng);
        transition.init(&mut params, &mut rng);
        Ok(Self { group, encoder, transition, loss, params })
    }

    pub fn from_params(
        group: GroupSpec,
        input_dim: usize,
        config: &BaselineConfig,
        loss: LossConfig,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut m = Self::new(group, input_dim, config, loss, 0)?;
        if params.len() != m.params.len() {
            return Err(Error::DimensionMismatch { expected: m.params.len(), got: params.len() });
        }
        m.params = params;
        Ok(m)
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }
}

impl LatentModel for MdphModel {
    type Code = Vec<f64>;

    fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_input(x, self.encoder.input_dim())?;
        Ok(self.encoder.forward(&self.params, x))
    }

    fn act(&self, g: &GroupElement, z: &Vec<f64>) -> Result<Vec<f64>> {
        if !g.matches(&self.group) {
            return Err(Error::IncompatibleGroups("element does not match the model's group"));
        }
        let mut input = g.to_flat();
        input.extend_from_slice(z);
        check_input(&input, self.transition.input_dim())?;
        Ok(self.transition.forward(&self.params, &input))
    }

    fn distance(&self, a: &Vec<f64>, b: &Vec<f64>) -> Result<f64> {
        sq_euclidean(a, b)
    }
}

impl Trainable for MdphModel {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn batch_loss(&self, tape: &mut Tape, batch: &[&Triple]) -> Result<LossTerms> {
        let enc = self.encoder.bind(tape, &self.params);
        let trans = self.transition.bind(tape, &self.params);
        let mut xs = Vec::with_capacity(batch.len());
        let mut ys = Vec::with_capacity(batch.len());
        let mut preds = Vec::with_capacity(batch.len());
        for t in batch {
            if !t.g.matches(&self.group) {
                return Err(Error::IncompatibleGroups("element does not match the model's group"));
            }
            check_input(&t.x, self.encoder.input_dim())?;
            check_input(&t.y, self.encoder.input_dim())?;
            let x = tape.constant(t.x.clone());
            let zx = self.encoder.forward_tape(tape, &enc, x);
            let y = tape.constant(t.y.clone());
            let zy = self.encoder.forward_tape(tape, &enc, y);
            let g = tape.constant(t.g.to_flat());
            let input = tape.concat(&[g, zx]);
            preds.push(self.transition.forward_tape(tape, &trans, input));
            xs.push(zx);
            ys.push(zy);
        }
        let hinge = pairwise_hinge(tape, &xs, self.loss.hinge_margin)?;
        let action = latent_action_loss(tape, &preds, &ys);
        Ok(combine(tape, action, hinge, &self.loss))
    }
}

/// Linear baseline: `φ: 𝒳 → ℝ³` with `g ∈ SO(3)` acting by `z ↦ R z`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    encoder: Mlp,
    loss: LossConfig,
    params: Vec<f64>,
}

fn rotation_of(g: &GroupElement) -> Result<&[f64; 9]> {
    match g.factors() {
        [Factor::Rotation3(m)] => Ok(m),
        _ => Err(Error::Config("the linear baseline requires G = SO(3)".into())),
    }
}

impl LinearModel {
    pub fn new(group: &GroupSpec, input_dim: usize, config: &BaselineConfig, loss: LossConfig, seed: u64) -> Result<Self> {
        if !group.is_single_rotation3() {
            return Err(Error::Config("the linear baseline requires G = SO(3)".into()));
        }
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(&config.hidden_dims);
        sizes.push(3);
        let encoder = Mlp::new(sizes, config.activation, 0)?;
        let mut params = vec![0.0; encoder.num_params()];
        encoder.init(&mut params, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self { encoder, loss, params })
    }

    pub fn from_params(
        group: &GroupSpec,
        input_dim: usize,
        config: &BaselineConfig,
        loss: LossConfig,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut m = Self::new(group, input_dim, config, loss, 0)?;
        if params.len() != m.params.len() {
            return Err(Error::DimensionMismatch { expected: m.params.len(), got: params.len() });
        }
        m.params = params;
        Ok(m)
    }
}

impl LatentModel for LinearModel {
    type Code = [f64; 3];

    fn encode(&self, x: &[f64]) -> Result<[f64; 3]> {
        check_input(x, self.encoder.input_dim())?;
        let z = self.encoder.forward(&self.params, x);
        Ok([z[0], z[1], z[2]])
    }

    fn act(&self, g: &GroupElement, z: &[f64; 3]) -> Result<[f64; 3]> {
        Ok(liegroup::mat3_vec(rotation_of(g)?, *z))
    }

    fn distance(&self, a: &[f64; 3], b: &[f64; 3]) -> Result<f64> {
        sq_euclidean(a, b)
    }
}

impl Trainable for LinearModel {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn batch_loss(&self, tape: &mut Tape, batch: &[&Triple]) -> Result<LossTerms> {
        let enc = self.encoder.bind(tape, &self.params);
        let mut xs = Vec::with_capacity(batch.len());
        let mut ys = Vec::with_capacity(batch.len());
        let mut preds = Vec::with_capacity(batch.len());
        for t in batch {
            let r = rotation_of(&t.g)?;
            check_input(&t.x, self.encoder.input_dim())?;
            check_input(&t.y, self.encoder.input_dim())?;
            let x = tape.constant(t.x.clone());
            let zx = self.encoder.forward_tape(tape, &enc, x);
            let y = tape.constant(t.y.clone());
            let zy = self.encoder.forward_tape(tape, &enc, y);
            preds.push(tape.left_matmul(r, 3, zx));
            xs.push(zx);
            ys.push(zy);
        }
        let hinge = pairwise_hinge(tape, &xs, self.loss.hinge_margin)?;
        let action = latent_action_loss(tape, &preds, &ys);
        Ok(combine(tape, action, hinge, &self.loss))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_2;

    fn triple(x: f64, g: f64, y: f64) -> Triple {
        Triple { x: vec![x], g: GroupElement::translation(&[g]).unwrap(), y: vec![y], orbit_label: 0 }
    }

    fn toy_mdph(margin: f64) -> MdphModel {
        let config = BaselineConfig { hidden_dims: vec![], transition_hidden: vec![], extra_latent_dims: 0, ..Default::default() };
        let loss = LossConfig { hinge_margin: margin, ..Default::default() };
        // z = 2x ; T(g, z) = g + z + 0.5
        MdphModel::from_params(GroupSpec::translation(1).unwrap(), 1, &config, loss, vec![2.0, 0.0, 1.0, 1.0, 0.5]).unwrap()
    }

    #[test]
    fn mdph_toy_by_hand() {
        let batch = [triple(1.0, 1.0, 3.0), triple(0.0, -1.0, 0.0)];
        let refs: Vec<&Triple> = batch.iter().collect();
        // predictions 3.5 and -0.5 against targets 6 and 0 → (6.25 + 0.25) / 2
        let m = toy_mdph(1.0);
        let mut tape = Tape::new(m.params().len());
        let terms = m.batch_loss(&mut tape, &refs).unwrap();
        assert!((tape.scalar(terms.pose) - 3.25).abs() < 1e-12);
        assert_eq!(tape.scalar(terms.class), 0.0);
        // margin 5 against pair distance 4 → hinge 1
        let m = toy_mdph(5.0);
        let mut tape = Tape::new(m.params().len());
        let terms = m.batch_loss(&mut tape, &refs).unwrap();
        assert!((tape.scalar(terms.total) - 4.25).abs() < 1e-12);
    }

    #[test]
    fn mdph_perfect_transition_has_zero_action_term() {
        // z = x and T(g, z) = g + z exactly reproduce y = x + g
        let config = BaselineConfig { hidden_dims: vec![], transition_hidden: vec![], extra_latent_dims: 0, ..Default::default() };
        let m = MdphModel::from_params(
            GroupSpec::translation(1).unwrap(),
            1,
            &config,
            LossConfig::default(),
            vec![1.0, 0.0, 1.0, 1.0, 0.0],
        )
        .unwrap();
        let batch = [triple(0.3, 0.2, 0.5), triple(-1.0, 0.4, -0.6)];
        let refs: Vec<&Triple> = batch.iter().collect();
        let mut tape = Tape::new(m.params().len());
        let terms = m.batch_loss(&mut tape, &refs).unwrap();
        assert!(tape.scalar(terms.pose).abs() < 1e-12);
    }

    #[test]
    fn collapsed_codes_pay_the_margin() {
        let mut tape = Tape::new(0);
        let codes: Vec<Var> = (0..4).map(|_| tape.constant(vec![0.0, 0.0, 0.0])).collect();
        let h = pairwise_hinge(&mut tape, &codes, 1.0).unwrap();
        assert_eq!(tape.scalar(h), 1.0);
        assert!(pairwise_hinge(&mut tape, &codes[..1], 1.0).is_err());

        let config = BaselineConfig { hidden_dims: vec![4], ..Default::default() };
        let mut m = LinearModel::new(&GroupSpec::rotation3(), 2, &config, LossConfig::default(), 0).unwrap();
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let g = GroupElement::rotation3([0.0, 0.0, 0.3]);
        let batch: Vec<Triple> = (0..3)
            .map(|i| Triple { x: vec![i as f64, 1.0], g: g.clone(), y: vec![1.0, i as f64], orbit_label: 0 })
            .collect();
        let refs: Vec<&Triple> = batch.iter().collect();
        let mut tape = Tape::new(m.params().len());
        let terms = m.batch_loss(&mut tape, &refs).unwrap();
        assert_eq!(tape.scalar(terms.class), 1.0);
        assert_eq!(tape.scalar(terms.pose), 0.0);
    }

    #[test]
    fn linear_axis_is_fixed() {
        let m = LinearModel::new(&GroupSpec::rotation3(), 2, &BaselineConfig::default(), LossConfig::default(), 0).unwrap();
        let axis = [0.0, 0.6, 0.8];
        for angle in [0.1, 1.0, 3.0] {
            let g = GroupElement::rotation3([axis[0] * angle, axis[1] * angle, axis[2] * angle]);
            let moved = m.act(&g, &axis).unwrap();
            assert!(m.distance(&moved, &axis).unwrap() < 1e-24);
        }
        // exact equivariance under a quarter turn about z
        let z = [0.48, -0.6, 0.64];
        let g = GroupElement::rotation3([0.0, 0.0, FRAC_PI_2]);
        let y = m.act(&g, &z).unwrap();
        assert!((y[0] - 0.6).abs() < 1e-12 && (y[1] - 0.48).abs() < 1e-12);
        let n = |v: &[f64; 3]| v.iter().map(|a| a * a).sum::<f64>();
        assert!((n(&y) - n(&z)).abs() < 1e-12);
    }

    #[test]
    fn linear_requires_so3() {
        let err = LinearModel::new(&GroupSpec::translation(3).unwrap(), 2, &BaselineConfig::default(), LossConfig::default(), 0);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn mdph_latent_dim() {
        let group = GroupSpec::new(vec![liegroup::FactorKind::Translation(2), liegroup::FactorKind::Rotation2]).unwrap();
        let m = MdphModel::new(group, 5, &BaselineConfig::default(), LossConfig::default(), 0).unwrap();
        assert_eq!(m.latent_dim(), 11);
        let z = m.encode(&[0.0; 5]).unwrap();
        let g = GroupElement::from_factors(vec![Factor::Translation(vec![0.1, 0.2]), Factor::Rotation2(liegroup::rot2_matrix(0.3))]).unwrap();
        assert_eq!(m.act(&g, &z).unwrap().len(), 11);
    }
}
