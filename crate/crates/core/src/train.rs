//! Minibatch training loop shared by every model.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AdamState, Tape};
use crate::datasets::Triple;
use crate::error::{Error, Result};
use crate::model::Trainable;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 16, learning_rate: 1e-3, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 || self.epochs < 1 {
            return Err(Error::Config("epochs and batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Loss values of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub total: f64,
    pub class_term: f64,
    pub pose_term: f64,
}

/// Splits `0..n` into consecutive batches. A trailing batch of one is merged
/// into the previous batch so contrastive and pairwise terms always see two
/// samples when the dataset has them.
pub fn batch_bounds(n: usize, batch_size: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n).step_by(batch_size).map(|s| (s, (s + batch_size).min(n))).collect();
    if out.len() >= 2 && out.last().is_some_and(|(s, e)| e - s == 1) {
        let (_, e) = out.pop().unwrap();
        out.last_mut().unwrap().1 = e;
    }
    out
}

/// One optimizer step on `batch`.
pub fn train_step<M: Trainable>(model: &mut M, adam: &mut AdamState, batch: &[&Triple], step: u64) -> Result<StepRecord> {
    let mut tape = Tape::new(model.params().len());
    let terms = model.batch_loss(&mut tape, batch)?;
    let record = StepRecord {
        step,
        epoch: 0,
        total: tape.scalar(terms.total),
        class_term: tape.scalar(terms.class),
        pose_term: tape.scalar(terms.pose),
    };
    if !record.total.is_finite() {
        return Err(Error::NonFiniteLoss { step });
    }
    let grad = tape.backward(terms.total)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss { step });
    }
    adam.step(model.params_mut(), &grad)?;
    Ok(record)
}

/// Runs epoch `epoch` of training: one pass over a shuffle of `data`
/// seeded by `(config.seed, epoch)`. Resuming at a later epoch therefore
/// sees the same batches as an uninterrupted run.
pub fn train_epoch<M, F>(
    model: &mut M,
    adam: &mut AdamState,
    data: &[Triple],
    config: &TrainConfig,
    epoch: usize,
    mut on_step: F,
) -> Result<Vec<StepRecord>>
where
    M: Trainable,
    F: FnMut(&StepRecord),
{
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if adam.m.len() != model.params().len() {
        return Err(Error::ShapeMismatch("optimizer state does not match the model"));
    }
    adam.lr = config.learning_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let bounds = batch_bounds(data.len(), config.batch_size);
    let mut history = Vec::with_capacity(bounds.len());
    for &(s, e) in &bounds {
        let batch: Vec<&Triple> = order[s..e].iter().map(|&i| &data[i]).collect();
        let mut rec = train_step(model, adam, &batch, adam.step)?;
        rec.epoch = epoch;
        on_step(&rec);
        history.push(rec);
    }
    if let Some(last) = history.last() {
        log::debug!("epoch {epoch}: loss {:.5}", last.total);
    }
    Ok(history)
}

/// Trains for `config.epochs` passes, calling `on_step` after every update.
/// Aborts with the step index on a non-finite loss or gradient.
pub fn train<M, F>(model: &mut M, adam: &mut AdamState, data: &[Triple], config: &TrainConfig, mut on_step: F) -> Result<Vec<StepRecord>>
where
    M: Trainable,
    F: FnMut(&StepRecord),
{
    config.validate()?;
    let mut history = Vec::new();
    for epoch in 0..config.epochs {
        history.extend(train_epoch(model, adam, data, config, epoch, &mut on_step)?);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::EncoderConfig;
    use crate::datasets::{generate, Generator, Sprites};
    use crate::latent::LatentSpaceSpec;
    use crate::losses::LossConfig;
    use crate::model::ClassPoseModel;
    use alloc::vec;

    #[test]
    fn batches_cover_and_avoid_singletons() {
        assert_eq!(batch_bounds(33, 16), vec![(0, 16), (16, 33)]);
        assert_eq!(batch_bounds(32, 16), vec![(0, 16), (16, 32)]);
        assert_eq!(batch_bounds(1, 16), vec![(0, 1)]);
        assert_eq!(batch_bounds(20, 16), vec![(0, 16), (16, 20)]);
        assert_eq!(batch_bounds(40, 16).len(), 3);
    }

    fn small_model(gen: &Sprites, seed: u64) -> ClassPoseModel {
        let latent = LatentSpaceSpec::new(2, gen.group()).unwrap();
        let mut enc = EncoderConfig::new(gen.obs_dim(), 0, 0);
        enc.hidden_dims = vec![16];
        ClassPoseModel::new(latent, enc, LossConfig::default(), seed).unwrap()
    }

    #[test]
    fn loss_decreases_and_is_deterministic() {
        let gen = Sprites::new();
        let data = generate(&gen, 0, 64, None).unwrap();
        let cfg = TrainConfig { epochs: 10, learning_rate: 3e-3, ..Default::default() };
        let run = || {
            let mut m = small_model(&gen, 1);
            let mut adam = AdamState::new(m.params().len(), cfg.learning_rate);
            let hist = train(&mut m, &mut adam, &data.triples, &cfg, |_| {}).unwrap();
            (hist, m.params().to_vec())
        };
        let (h1, p1) = run();
        let (h2, p2) = run();
        assert_eq!(p1, p2);
        assert_eq!(h1, h2);
        assert_eq!(h1.len(), 10 * 4);
        let first: f64 = h1[..4].iter().map(|r| r.total).sum();
        let last: f64 = h1[h1.len() - 4..].iter().map(|r| r.total).sum();
        assert!(last < first, "{first} -> {last}");
        assert!(h1.iter().enumerate().all(|(i, r)| r.step == i as u64));
    }

    #[test]
    fn nan_input_aborts_with_step() {
        let gen = Sprites::new();
        let mut data = generate(&gen, 0, 8, None).unwrap().triples;
        let mut m = small_model(&gen, 0);
        let mut adam = AdamState::new(m.params().len(), 1e-3);
        let before = m.params().to_vec();
        data.iter_mut().for_each(|t| t.x[0] = f64::NAN);
        let err = train(&mut m, &mut adam, &data, &TrainConfig::default(), |_| {}).unwrap_err();
        assert!(matches!(err, Error::NonFiniteInput | Error::NonFiniteLoss { step: 0 }));
        assert_eq!(m.params(), before.as_slice());
    }
}
