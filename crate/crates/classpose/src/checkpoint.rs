//! Parameter checkpoints.
//!
//! Layout: the magic `CLSPCKPT`, a `u32` version, a `u32` header length and
//! a JSON [`CheckpointHeader`], then `num_params` little-endian `f64`
//! parameters followed by the Adam first and second moments.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use classpose_core::autodiff::AdamState;
use classpose_core::model::Trainable;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelKind};
use crate::dataset_io::{read_f64s, read_header, write_f64s, write_header};
use crate::invalid;
use crate::models::AnyModel;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CLSPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    /// Configuration of the run that wrote the checkpoint.
    pub config: ExperimentConfig,
    pub obs_dim: usize,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: u64,
    pub num_params: usize,
    /// Seconds since the Unix epoch at write time. The only field that
    /// differs between otherwise identical runs.
    pub created_unix: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f64>,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn new(config: &ExperimentConfig, obs_dim: usize, model: &AnyModel, adam: &AdamState, epoch: usize) -> Self {
        let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self {
            header: CheckpointHeader {
                kind: model.kind(),
                config: config.clone(),
                obs_dim,
                epoch,
                step: adam.step,
                num_params: model.params().len(),
                created_unix,
            },
            params: model.params().to_vec(),
            adam: adam.clone(),
        }
    }

    /// A parameter-free checkpoint that stands for the ground-truth encoder.
    pub fn oracle(config: &ExperimentConfig, obs_dim: usize) -> Self {
        let mut config = config.clone();
        config.model.kind = ModelKind::Oracle;
        Self {
            header: CheckpointHeader {
                kind: ModelKind::Oracle,
                config,
                obs_dim,
                epoch: 0,
                step: 0,
                num_params: 0,
                created_unix: 0,
            },
            params: Vec::new(),
            adam: AdamState::new(0, 0.0),
        }
    }

    /// Fails with a validation error when the checkpoint was written for a
    /// different model or dataset than `config` describes.
    pub fn check_compatible(&self, config: &ExperimentConfig) -> anyhow::Result<()> {
        let theirs = &self.header.config;
        if self.header.kind != config.model.kind {
            return invalid(format!(
                "checkpoint holds a {} model but the config asks for {}",
                self.header.kind.as_str(),
                config.model.kind.as_str()
            ));
        }
        if theirs.dataset.generator != config.dataset.generator {
            return invalid(format!(
                "checkpoint was trained on {} but the config uses {}",
                theirs.dataset.generator, config.dataset.generator
            ));
        }
        if self.header.kind != ModelKind::Oracle && theirs.model != config.model {
            return invalid("checkpoint model architecture differs from the config");
        }
        Ok(())
    }

    /// The model stored in the checkpoint.
    pub fn model(&self) -> anyhow::Result<AnyModel> {
        AnyModel::from_params(&self.header.config, self.header.obs_dim, self.params.clone())
    }
}

pub fn write_checkpoint<W: Write>(w: &mut W, ckpt: &Checkpoint) -> anyhow::Result<()> {
    let n = ckpt.header.num_params;
    if ckpt.params.len() != n || ckpt.adam.m.len() != n || ckpt.adam.v.len() != n {
        return invalid("checkpoint arrays disagree with the header");
    }
    write_header(w, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, &ckpt.header)?;
    write_f64s(w, &ckpt.params)?;
    write_f64s(w, &ckpt.adam.m)?;
    write_f64s(w, &ckpt.adam.v)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> anyhow::Result<Checkpoint> {
    let header: CheckpointHeader = read_header(r, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, "checkpoint")?;
    let n = header.num_params;
    let params = read_f64s(r, n)?;
    let mut adam = AdamState::new(n, header.config.train.learning_rate);
    adam.m = read_f64s(r, n)?;
    adam.v = read_f64s(r, n)?;
    adam.step = header.step;
    if r.read(&mut [0u8; 1])? != 0 {
        return invalid("trailing bytes after the checkpoint payload");
    }
    Ok(Checkpoint { header, params, adam })
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> anyhow::Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_checkpoint(&mut w, ckpt)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> anyhow::Result<Checkpoint> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_checkpoint(&mut BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}
