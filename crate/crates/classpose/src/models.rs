//! One type for every trainable model, so that commands and checkpoints can
//! treat them alike.

use classpose_core::autodiff::Tape;
use classpose_core::baselines::{LinearModel, MdphModel};
use classpose_core::datasets::{Generator, Trajectory, Triple};
use classpose_core::eval;
use classpose_core::losses::LossTerms;
use classpose_core::model::{ClassPoseModel, OracleEncoder, Trainable};

use crate::config::{ExperimentConfig, ModelKind};
use crate::invalid;

#[derive(Debug, Clone)]
pub enum AnyModel {
    Ours(ClassPoseModel),
    Mdph(MdphModel),
    Linear(LinearModel),
}

impl AnyModel {
    /// A freshly initialized model for `config`, seeded by `model.init_seed`.
    pub fn new(config: &ExperimentConfig, obs_dim: usize) -> anyhow::Result<Self> {
        Self::build(config, obs_dim, None)
    }

    /// Rebuilds a model from stored parameters.
    pub fn from_params(config: &ExperimentConfig, obs_dim: usize, params: Vec<f64>) -> anyhow::Result<Self> {
        Self::build(config, obs_dim, Some(params))
    }

    fn build(config: &ExperimentConfig, obs_dim: usize, params: Option<Vec<f64>>) -> anyhow::Result<Self> {
        let group = config.dataset.generator.build().group();
        let loss = config.loss.clone();
        let seed = config.model.init_seed;
        let base = &config.model.baseline;
        Ok(match config.model.kind {
            ModelKind::Ours => {
                let (latent, enc) = (config.latent_spec()?, config.encoder_config(obs_dim));
                AnyModel::Ours(match params {
                    Some(p) => ClassPoseModel::from_params(latent, enc, loss, p)?,
                    None => ClassPoseModel::new(latent, enc, loss, seed)?,
                })
            }
            ModelKind::Mdph => AnyModel::Mdph(match params {
                Some(p) => MdphModel::from_params(group, obs_dim, base, loss, p)?,
                None => MdphModel::new(group, obs_dim, base, loss, seed)?,
            }),
            ModelKind::Linear => AnyModel::Linear(match params {
                Some(p) => LinearModel::from_params(&group, obs_dim, base, loss, p)?,
                None => LinearModel::new(&group, obs_dim, base, loss, seed)?,
            }),
            ModelKind::Oracle => return invalid("the oracle model has no parameters to train or load"),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Ours(_) => ModelKind::Ours,
            AnyModel::Mdph(_) => ModelKind::Mdph,
            AnyModel::Linear(_) => ModelKind::Linear,
        }
    }

    pub fn as_class_pose(&self) -> Option<&ClassPoseModel> {
        match self {
            AnyModel::Ours(m) => Some(m),
            _ => None,
        }
    }

    pub fn hit_rate(&self, trajectories: &[Trajectory], pool: &[Vec<f64>], distractors: usize, seed: u64) -> classpose_core::Result<f64> {
        match self {
            AnyModel::Ours(m) => eval::hit_rate(m, trajectories, pool, distractors, seed),
            AnyModel::Mdph(m) => eval::hit_rate(m, trajectories, pool, distractors, seed),
            AnyModel::Linear(m) => eval::hit_rate(m, trajectories, pool, distractors, seed),
        }
    }
}

impl Trainable for AnyModel {
    fn params(&self) -> &[f64] {
        match self {
            AnyModel::Ours(m) => m.params(),
            AnyModel::Mdph(m) => m.params(),
            AnyModel::Linear(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> &mut [f64] {
        match self {
            AnyModel::Ours(m) => m.params_mut(),
            AnyModel::Mdph(m) => m.params_mut(),
            AnyModel::Linear(m) => m.params_mut(),
        }
    }

    fn batch_loss(&self, tape: &mut Tape, batch: &[&Triple]) -> classpose_core::Result<LossTerms> {
        match self {
            AnyModel::Ours(m) => m.batch_loss(tape, batch),
            AnyModel::Mdph(m) => m.batch_loss(tape, batch),
            AnyModel::Linear(m) => m.batch_loss(tape, batch),
        }
    }
}

/// The ground-truth encoder for a set of test trajectories.
pub fn oracle_for(generator: &dyn Generator, trajectories: &[Trajectory]) -> classpose_core::Result<OracleEncoder> {
    let mut oracle = OracleEncoder::new(generator.num_orbits(), generator.group())?;
    for t in trajectories {
        oracle.insert(&t.x, &t.start);
        oracle.insert(&t.y, &t.end);
    }
    Ok(oracle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use classpose_core::datasets::GeneratorId;

    fn small(kind: ModelKind, generator: GeneratorId) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.generator = generator;
        cfg.model.kind = kind;
        cfg.model.hidden_dims = vec![8];
        cfg.model.baseline.hidden_dims = vec![8];
        cfg.model.baseline.transition_hidden = vec![8];
        cfg
    }

    #[test]
    fn params_roundtrip_for_every_kind() {
        for (kind, id) in [(ModelKind::Ours, GeneratorId::Sprites), (ModelKind::Mdph, GeneratorId::Shapes), (ModelKind::Linear, GeneratorId::Chairs)] {
            let cfg = small(kind, id);
            let dim = id.build().obs_dim();
            let m = AnyModel::new(&cfg, dim).unwrap();
            assert_eq!(m.kind(), kind);
            let back = AnyModel::from_params(&cfg, dim, m.params().to_vec()).unwrap();
            assert_eq!(back.params(), m.params());
            assert!(AnyModel::from_params(&cfg, dim, vec![0.0; 3]).is_err());
        }
    }

    #[test]
    fn oracle_kind_cannot_be_built() {
        let err = AnyModel::new(&small(ModelKind::Oracle, GeneratorId::Sprites), 4).unwrap_err();
        assert!(err.is::<crate::ValidationError>());
    }
}
