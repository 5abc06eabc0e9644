//! Experiment configuration, read from and written to TOML.
//!
//! Every field has a default, so an empty file describes the reference
//! Sprites run. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::Context;
use classpose_core::autodiff::{Activation, EncoderConfig};
use classpose_core::baselines::BaselineConfig;
use classpose_core::datasets::GeneratorId;
use classpose_core::eval::{DEFAULT_DISTRACTORS, DEFAULT_STEPS, RUN_SEEDS};
use classpose_core::latent::LatentSpaceSpec;
use classpose_core::losses::LossConfig;
use classpose_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::ValidationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ours,
    Mdph,
    Linear,
    /// Ground-truth encoder rebuilt from generator states. Has no
    /// parameters and is only meaningful for evaluation.
    Oracle,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ours => "ours",
            ModelKind::Mdph => "mdph",
            ModelKind::Linear => "linear",
            ModelKind::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub generator: GeneratorId,
    pub seed: u64,
    pub size: usize,
    /// Per-factor move magnitudes; the generator default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<Vec<f64>>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { generator: GeneratorId::Sprites, seed: 0, size: 5000, scale: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// Sphere dimension `m` of the class component `𝕊ᵐ`.
    pub class_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub pose_head_scale: f64,
    pub init_seed: u64,
    pub baseline: BaselineConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::Ours,
            class_dim: 2,
            hidden_dims: vec![128, 128],
            activation: Activation::Tanh,
            pose_head_scale: 1.0,
            init_seed: 0,
            baseline: BaselineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// When set, the learning rate follows a cosine from `learning_rate`
    /// at the first epoch down to this value at the last.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_learning_rate: Option<f64>,
    pub shuffle_seed: u64,
    /// Write a checkpoint after every epoch besides the final one.
    pub checkpoint_every_epoch: bool,
    /// Fill the wall-clock column of the loss CSV. Off by default so that
    /// identical runs produce identical files.
    pub record_wall_clock: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 16,
            learning_rate: 1e-3,
            final_learning_rate: None,
            shuffle_seed: 0,
            checkpoint_every_epoch: true,
            record_wall_clock: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub distractors: usize,
    pub steps: Vec<usize>,
    pub runs: Vec<u64>,
    /// Trajectories per run and step count.
    pub test_size: usize,
    /// Held-out observations for orbit purity.
    pub purity_size: usize,
    /// Single-factor moves per factor for the leakage matrix.
    pub leakage_size: usize,
    /// Base seed of held-out data; offset from the training seed.
    pub test_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            distractors: DEFAULT_DISTRACTORS,
            steps: DEFAULT_STEPS.to_vec(),
            runs: RUN_SEEDS.to_vec(),
            test_size: 500,
            purity_size: 1000,
            leakage_size: 500,
            test_seed: 1_000_003,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSection {
    pub resolution: usize,
    /// Observations used to fill and align the maps.
    pub samples: usize,
    /// Held-out observations for the localization demo.
    pub localize_samples: usize,
}

impl Default for MapSection {
    fn default() -> Self {
        Self { resolution: 32, samples: 10_000, localize_samples: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub loss: LossConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub map: MapSection,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSection::default(),
            model: ModelSection::default(),
            loss: LossConfig::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            map: MapSection::default(),
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| ValidationError(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let fail = |msg: String| -> anyhow::Result<()> { Err(ValidationError(msg).into()) };
        let group = self.dataset.generator.build().group();
        if self.dataset.size == 0 {
            return fail("dataset.size must be >= 1".into());
        }
        if let Some(scale) = &self.dataset.scale {
            if scale.len() != group.num_factors() {
                return fail(format!("dataset.scale needs {} entries, one per group factor", group.num_factors()));
            }
            if scale.iter().any(|s| !(*s >= 0.0)) {
                return fail("dataset.scale entries must be non-negative".into());
            }
        }
        if self.model.kind == ModelKind::Linear && !group.is_single_rotation3() {
            return fail(format!("the linear model needs G = SO(3), but {} has {:?}", self.dataset.generator, group.factors()));
        }
        if self.model.class_dim == 0 || self.model.hidden_dims.contains(&0) {
            return fail("model dimensions must be >= 1".into());
        }
        if !(self.model.pose_head_scale > 0.0) {
            return fail("model.pose_head_scale must be positive".into());
        }
        if self.train.batch_size < 2 {
            return fail("train.batch_size must be >= 2 for in-batch negatives".into());
        }
        if !(self.train.learning_rate > 0.0) || self.train.final_learning_rate.is_some_and(|lr| !(lr > 0.0)) {
            return fail("train learning rates must be positive".into());
        }
        if let Err(e) = self.loss.validate() {
            return fail(format!("loss: {e}"));
        }
        let ev = &self.eval;
        if ev.distractors == 0 || ev.steps.is_empty() || ev.steps.contains(&0) || ev.runs.is_empty() {
            return fail("eval needs distractors >= 1, a non-empty step list without 0, and at least one run".into());
        }
        if ev.test_size <= ev.distractors || ev.purity_size < 2 {
            return fail(format!(
                "eval.test_size must exceed eval.distractors ({}) since distractors come from the test set, and eval.purity_size must be >= 2",
                ev.distractors
            ));
        }
        if self.map.resolution == 0 {
            return fail("map.resolution must be >= 1".into());
        }
        Ok(())
    }

    pub fn latent_spec(&self) -> anyhow::Result<LatentSpaceSpec> {
        Ok(LatentSpaceSpec::new(self.model.class_dim, self.dataset.generator.build().group())?)
    }

    pub fn encoder_config(&self, input_dim: usize) -> EncoderConfig {
        let mut enc = EncoderConfig::new(input_dim, 0, 0);
        enc.hidden_dims = self.model.hidden_dims.clone();
        enc.activation = self.model.activation;
        enc.pose_head_scale = self.model.pose_head_scale;
        enc
    }

    /// Optimizer settings for one epoch.
    pub fn train_config(&self, epoch: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs.max(1),
            batch_size: self.train.batch_size,
            learning_rate: self.learning_rate_at(epoch),
            seed: self.train.shuffle_seed,
        }
    }

    /// Learning rate of `epoch` under the configured schedule.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let start = self.train.learning_rate;
        match self.train.final_learning_rate {
            Some(end) if self.train.epochs > 1 => {
                let frac = epoch.min(self.train.epochs - 1) as f64 / (self.train.epochs - 1) as f64;
                end + 0.5 * (start - end) * (1.0 + (std::f64::consts::PI * frac).cos())
            }
            _ => start,
        }
    }

    /// Replaces every seed by one derived from `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.dataset.seed = seed;
        self.model.init_seed = seed;
        self.train.shuffle_seed = seed;
        self.eval.test_seed = seed.wrapping_add(1_000_003);
    }
}

/// A reference configuration per generator. These are the settings used by
/// the acceptance suite.
pub fn preset(generator: GeneratorId) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.generator = generator;
    cfg.train.epochs = 30;
    cfg.output_dir = PathBuf::from(format!("runs/{generator}"));
    if generator == GeneratorId::MultiSprites {
        // 27 orbits need more room than 𝕊²
        cfg.model.class_dim = 5;
    }
    cfg
}

/// The Apartments configuration used for mapping. Localization needs pose
/// estimates well inside one grid cell, so it trains longer and anneals the
/// learning rate.
pub fn mapping_preset() -> ExperimentConfig {
    let mut cfg = preset(GeneratorId::Apartments);
    cfg.train.epochs = 100;
    cfg.train.final_learning_rate = Some(1e-5);
    cfg.output_dir = PathBuf::from("runs/apartments_map");
    cfg
}
