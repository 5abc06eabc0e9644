//! The commands behind the CLI: `generate`, `train`, `eval`, `map` and
//! `oracle`. Each takes a validated [`ExperimentConfig`] and writes into its
//! output directory.

use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::Context;
use classpose_core::autodiff::AdamState;
use classpose_core::datasets::{self, Apartments, Dataset, GeneratorId, Generator, SceneState, Triple};
use classpose_core::eval::{self, DensityMap, MapConfig, OrbitClassifier, Rigid2};
use classpose_core::liegroup::FactorKind;
use classpose_core::model::{ClassPoseEncoder, OracleEncoder, Trainable};
use classpose_core::train::train_epoch;

use crate::checkpoint::{self, Checkpoint};
use crate::config::{ExperimentConfig, ModelKind};
use crate::dataset_io::{self, DatasetFile};
use crate::fixtures::{self, FixtureReport};
use crate::models::{oracle_for, AnyModel};
use crate::report::{self, EvalScores, LocalizationRow, LossCsv, MapMetadata};
use crate::{invalid, AcceptanceFailure};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "CLASSPOSE_THREADS";

const PURITY_STREAM: u64 = 0x7075_7269_7479;
const LEAKAGE_STREAM: u64 = 0x6c65_616b;
const MAP_STREAM: u64 = 0x6d61_7073;
const LOCALIZE_STREAM: u64 = 0x6c6f_6361_6c69;

/// Worker threads for generation and evaluation: `CLASSPOSE_THREADS` when
/// set to a positive integer, otherwise the available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Applies `f` to every item on a pool of scoped threads. Results are
/// returned in item order whatever the scheduling.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = thread_count().min(items.len()).max(1);
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every slot is filled")).collect()
}

/// File layout of an output directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.bin")
    }

    pub fn dataset_jsonl(&self) -> PathBuf {
        self.root.join("dataset.jsonl")
    }

    pub fn dataset_hash(&self) -> PathBuf {
        self.root.join("dataset.sha256")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn epoch_checkpoint(&self, epoch: usize) -> PathBuf {
        self.checkpoints().join(format!("epoch_{epoch:04}.ckpt"))
    }

    pub fn final_checkpoint(&self) -> PathBuf {
        self.checkpoints().join("final.ckpt")
    }

    pub fn loss_csv(&self) -> PathBuf {
        self.root.join("loss.csv")
    }

    pub fn hit_rate_csv(&self) -> PathBuf {
        self.root.join("hit_rate.csv")
    }

    pub fn scores_json(&self) -> PathBuf {
        self.root.join("scores.json")
    }

    pub fn maps(&self) -> PathBuf {
        self.root.join("maps")
    }

    pub fn map_pgm(&self, orbit: u32) -> PathBuf {
        self.maps().join(format!("orbit_{orbit}.pgm"))
    }

    pub fn map_json(&self, orbit: u32) -> PathBuf {
        self.maps().join(format!("orbit_{orbit}.json"))
    }

    pub fn localization_csv(&self) -> PathBuf {
        self.maps().join("localization.csv")
    }
}

fn create_dir(path: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn resolved_scale(cfg: &ExperimentConfig, generator: &dyn Generator) -> Vec<f64> {
    cfg.dataset.scale.clone().unwrap_or_else(|| generator.default_move_scale())
}

/// [`datasets::generate`] split into index ranges across worker threads.
/// Records depend only on their index, so the result is the same for any
/// thread count.
pub fn generate_sharded(generator: &(dyn Generator + Sync), seed: u64, size: usize, scale: Option<&[f64]>) -> anyhow::Result<Dataset> {
    let shards = thread_count().clamp(1, size.max(1));
    let per = size.div_ceil(shards);
    let ranges: Vec<_> = (0..shards).map(|i| (i * per).min(size)..((i + 1) * per).min(size)).filter(|r| !r.is_empty()).collect();
    let parts = parallel_map(&ranges, |r| datasets::generate_range(generator, seed, r.clone(), scale));
    let mut out = Dataset {
        generator: generator.id(),
        group: generator.group(),
        obs_dim: generator.obs_dim(),
        seed,
        triples: Vec::with_capacity(size),
        states: Vec::with_capacity(size),
    };
    for part in parts {
        let part = part?;
        out.triples.extend(part.triples);
        out.states.extend(part.states);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub path: PathBuf,
    pub hash: String,
    pub size: usize,
}

pub fn cmd_generate(cfg: &ExperimentConfig) -> anyhow::Result<GenerateSummary> {
    cfg.validate()?;
    let dir = RunDir::new(&cfg.output_dir);
    create_dir(&dir.root)?;
    let gen = cfg.dataset.generator.build();
    let data = generate_sharded(gen.as_ref(), cfg.dataset.seed, cfg.dataset.size, cfg.dataset.scale.as_deref())?;
    let file = DatasetFile::from_dataset(&data, resolved_scale(cfg, gen.as_ref()));
    dataset_io::save(&dir.dataset(), &file)?;
    let mut jsonl = BufWriter::new(fs::File::create(dir.dataset_jsonl())?);
    dataset_io::write_jsonl(&mut jsonl, &file)?;
    jsonl.flush()?;
    let hash = dataset_io::file_hash(&dir.dataset())?;
    fs::write(dir.dataset_hash(), format!("{hash}  dataset.bin\n"))?;
    log::info!("wrote {} records of {} to {}", file.triples.len(), cfg.dataset.generator, dir.dataset().display());
    Ok(GenerateSummary { path: dir.dataset(), hash, size: file.triples.len() })
}

fn load_training_set(cfg: &ExperimentConfig, dir: &RunDir) -> anyhow::Result<DatasetFile> {
    if !dir.dataset().exists() {
        log::info!("no dataset at {}, generating it", dir.dataset().display());
        cmd_generate(cfg)?;
    }
    let file = dataset_io::load(&dir.dataset())?;
    let h = &file.header;
    let gen = cfg.dataset.generator.build();
    let matches = h.generator == cfg.dataset.generator
        && h.seed == cfg.dataset.seed
        && h.size == cfg.dataset.size
        && h.scale == resolved_scale(cfg, gen.as_ref());
    if !matches {
        return invalid(format!("{} was generated from a different dataset section; rerun `generate`", dir.dataset().display()));
    }
    Ok(file)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub epochs: usize,
    pub steps: u64,
    pub first_total: Option<f64>,
    pub last_total: Option<f64>,
}

/// Trains the configured model on the dataset file, generating the file
/// first when it is missing. With `resume`, continues from that checkpoint
/// and appends to the loss CSV.
pub fn cmd_train(cfg: &ExperimentConfig, resume: Option<&Path>) -> anyhow::Result<TrainSummary> {
    cfg.validate()?;
    if cfg.model.kind == ModelKind::Oracle {
        return invalid("the oracle model is not trainable");
    }
    let dir = RunDir::new(&cfg.output_dir);
    create_dir(&dir.checkpoints())?;
    let file = load_training_set(cfg, &dir)?;
    let obs_dim = file.header.obs_dim;
    let (mut model, mut adam, start_epoch) = match resume {
        Some(path) => {
            let ckpt = checkpoint::load(path)?;
            ckpt.check_compatible(cfg)?;
            if ckpt.header.obs_dim != obs_dim {
                return invalid("checkpoint observation size differs from the dataset");
            }
            (ckpt.model()?, ckpt.adam.clone(), ckpt.header.epoch)
        }
        None => {
            let model = AnyModel::new(cfg, obs_dim)?;
            let adam = AdamState::new(model.params().len(), cfg.train.learning_rate);
            (model, adam, 0)
        }
    };
    let appending = resume.is_some() && dir.loss_csv().exists();
    let out = BufWriter::new(OpenOptions::new().create(true).append(appending).write(true).truncate(!appending).open(dir.loss_csv())?);
    let mut csv = if appending { LossCsv::resume(out) } else { LossCsv::new(out)? };

    let clock = Instant::now();
    let (mut first_total, mut last_total) = (None, None);
    for epoch in start_epoch..cfg.train.epochs {
        let tc = cfg.train_config(epoch);
        let mut stamps = Vec::new();
        let records = train_epoch(&mut model, &mut adam, &file.triples, &tc, epoch, |_| {
            stamps.push(if cfg.train.record_wall_clock { clock.elapsed().as_millis() as u64 } else { 0 })
        })
        .with_context(|| format!("training aborted in epoch {epoch}"))?;
        for (rec, ms) in records.iter().zip(stamps) {
            csv.row(rec, ms)?;
        }
        first_total = first_total.or(records.first().map(|r| r.total));
        if let Some(last) = records.last() {
            last_total = Some(last.total);
            log::info!(
                "epoch {}/{}: total {:.5} class {:.5} pose {:.5} lr {:.2e}",
                epoch + 1,
                cfg.train.epochs,
                last.total,
                last.class_term,
                last.pose_term,
                tc.learning_rate
            );
        }
        if cfg.train.checkpoint_every_epoch {
            checkpoint::save(&dir.epoch_checkpoint(epoch + 1), &Checkpoint::new(cfg, obs_dim, &model, &adam, epoch + 1))?;
        }
    }
    csv.into_inner().flush()?;
    let epochs = cfg.train.epochs.max(start_epoch);
    checkpoint::save(&dir.final_checkpoint(), &Checkpoint::new(cfg, obs_dim, &model, &adam, epochs))?;
    Ok(TrainSummary { checkpoint: dir.final_checkpoint(), epochs, steps: adam.step, first_total, last_total })
}

fn load_checkpoint(cfg: &ExperimentConfig, path: Option<&Path>) -> anyhow::Result<Checkpoint> {
    let default = RunDir::new(&cfg.output_dir).final_checkpoint();
    let ckpt = checkpoint::load(path.unwrap_or(&default))?;
    ckpt.check_compatible(cfg)?;
    Ok(ckpt)
}

/// Seed of the test trajectories for step count `steps` in run `run`.
fn trajectory_seed(cfg: &ExperimentConfig, steps: usize, run: u64) -> u64 {
    cfg.eval.test_seed.wrapping_add(run.wrapping_mul(1_000_033)).wrapping_add(steps as u64)
}

/// Held-out orbit accuracy and, for product groups, the leakage matrix.
fn class_pose_scores<E: ClassPoseEncoder>(
    encoder: &E,
    purity: &[Triple],
    per_factor: &[Vec<Triple>],
) -> anyhow::Result<(f64, Option<Vec<Vec<f64>>>)> {
    let xs: Vec<Vec<f64>> = purity.iter().map(|t| t.x.clone()).collect();
    let labels: Vec<u32> = purity.iter().map(|t| t.orbit_label).collect();
    let separation = eval::orbit_separation(encoder, &xs, &labels)?;
    let leakage = if per_factor.len() >= 2 { Some(eval::disentanglement_check(encoder, per_factor)?) } else { None };
    Ok((separation, leakage))
}

/// Hit-rates over the configured step counts and runs, orbit purity and,
/// for product groups, the leakage matrix. Writes `hit_rate.csv` and
/// `scores.json`.
pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint_path: Option<&Path>) -> anyhow::Result<EvalScores> {
    cfg.validate()?;
    let ckpt = load_checkpoint(cfg, checkpoint_path)?;
    let gen = cfg.dataset.generator.build();
    let gen: &(dyn Generator + Sync) = gen.as_ref();
    if ckpt.header.obs_dim != gen.obs_dim() {
        return invalid("checkpoint observation size differs from the generator");
    }
    let model = match ckpt.header.kind {
        ModelKind::Oracle => None,
        _ => Some(ckpt.model()?),
    };
    let scale = cfg.dataset.scale.as_deref();
    let ev = &cfg.eval;

    let jobs: Vec<(usize, u64)> = ev.steps.iter().flat_map(|&t| ev.runs.iter().map(move |&r| (t, r))).collect();
    let results = parallel_map(&jobs, |&(steps, run)| -> anyhow::Result<f64> {
        let trajs = datasets::gen_trajectory_testset(gen, ev.test_size, steps, trajectory_seed(cfg, steps, run), scale)?;
        let pool: Vec<Vec<f64>> = trajs.iter().map(|t| t.x.clone()).collect();
        let rate = match &model {
            Some(m) => m.hit_rate(&trajs, &pool, ev.distractors, run)?,
            None => eval::hit_rate(&oracle_for(gen, &trajs)?, &trajs, &pool, ev.distractors, run)?,
        };
        log::info!("T={steps} run {run}: hit-rate {rate}");
        Ok(rate)
    });
    let rates = results.into_iter().collect::<anyhow::Result<Vec<f64>>>()?;
    let per_step: Vec<Vec<f64>> = rates.chunks(ev.runs.len()).map(|c| c.to_vec()).collect();
    let hit_rate = eval::HitRateReport::new(&ev.steps, per_step, ev.distractors, ev.test_size);

    let kind = ckpt.header.kind;
    let (orbit_purity, leakage) = if matches!(kind, ModelKind::Ours | ModelKind::Oracle) {
        let purity = generate_sharded(gen, ev.test_seed ^ PURITY_STREAM, ev.purity_size, scale)?;
        let k = gen.group().num_factors();
        let factor_sets = if k >= 2 && ev.leakage_size > 0 {
            (0..k)
                .map(|i| datasets::generate_factor_moves(gen, ev.test_seed ^ LEAKAGE_STREAM, ev.leakage_size, i, scale))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            Vec::new()
        };
        let per_factor: Vec<Vec<Triple>> = factor_sets.iter().map(|s| s.iter().map(|(t, _)| t.clone()).collect()).collect();
        let (sep, leak) = match &model {
            Some(AnyModel::Ours(m)) => class_pose_scores(m, &purity.triples, &per_factor)?,
            _ => {
                let mut oracle = OracleEncoder::new(gen.num_orbits(), gen.group())?;
                for (t, (a, _)) in purity.triples.iter().zip(&purity.states) {
                    oracle.insert(&t.x, a);
                }
                for (t, (a, b)) in factor_sets.iter().flatten() {
                    oracle.insert(&t.x, a);
                    oracle.insert(&t.y, b);
                }
                class_pose_scores(&oracle, &purity.triples, &per_factor)?
            }
        };
        (Some(sep), leak)
    } else {
        (None, None)
    };
    let scores = EvalScores {
        dataset: cfg.dataset.generator.to_string(),
        model: kind.as_str().to_string(),
        leakage_diagonally_dominant: leakage.as_ref().map(|m| eval::is_diagonally_dominant(m, 3.0)),
        hit_rate,
        orbit_purity,
        leakage,
    };
    let dir = RunDir::new(&cfg.output_dir);
    create_dir(&dir.root)?;
    report::write_file(&dir.hit_rate_csv(), |w| report::write_hit_rate_csv(w, &scores.dataset, &scores.model, &scores.hit_rate))?;
    report::write_json(&dir.scores_json(), &scores)?;
    Ok(scores)
}

#[derive(Debug, Clone)]
pub struct MapSummary {
    pub maps: Vec<MapMetadata>,
    pub localization: Vec<LocalizationRow>,
}

impl MapSummary {
    pub fn localization_accuracy(&self) -> f64 {
        report::localization_accuracy(&self.localization)
    }
}

struct Probe<'a> {
    x: &'a [f64],
    state: &'a SceneState,
}

fn map_with<E: ClassPoseEncoder>(
    encoder: &E,
    fill: &[Probe<'_>],
    probes: &[Probe<'_>],
    map_cfg: &MapConfig,
) -> anyhow::Result<(Vec<DensityMap>, Vec<LocalizationRow>)> {
    let xs: Vec<Vec<f64>> = fill.iter().map(|p| p.x.to_vec()).collect();
    let world: Vec<[f64; 2]> = fill.iter().map(|p| Apartments::position(p.state)).collect();
    let labels: Vec<u32> = fill.iter().map(|p| p.state.orbit).collect();
    let class_points = xs.iter().map(|x| encoder.encode_latent(x).map(|z| z.class_point)).collect::<Result<Vec<_>, _>>()?;
    let classifier = OrbitClassifier::fit(&class_points, &labels)?;
    let maps = eval::build_density_maps(encoder, &classifier, &xs, Some(&world), map_cfg)?;
    let rows = probes
        .iter()
        .map(|p| {
            let loc = eval::localize(encoder, &classifier, &maps, p.x)?;
            let (true_cell, _) = eval::cell_of(Apartments::position(p.state), map_cfg.origin, map_cfg.extent, map_cfg.resolution);
            Ok(LocalizationRow {
                true_orbit: p.state.orbit,
                true_cell,
                pred_orbit: loc.orbit,
                pred_cell: (loc.row, loc.col),
                clamped: loc.clamped,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok((maps, rows))
}

/// Density maps of the encoded positions per orbit, rigidly aligned to the
/// world frame, and a localization table for held-out observations.
pub fn cmd_map(cfg: &ExperimentConfig, checkpoint_path: Option<&Path>) -> anyhow::Result<MapSummary> {
    cfg.validate()?;
    let id = cfg.dataset.generator;
    let group = id.build().group();
    if !group.factors().contains(&FactorKind::Translation(2)) {
        return invalid(format!("mapping needs a planar translation factor, but {id} acts by {:?}", group.factors()));
    }
    if id != GeneratorId::Apartments {
        return invalid(format!("mapping needs a floor-plan generator; {id} has no world frame"));
    }
    let ckpt = load_checkpoint(cfg, checkpoint_path)?;
    let apt = Apartments::new();
    let map_cfg = MapConfig {
        num_orbits: apt.num_orbits(),
        resolution: cfg.map.resolution,
        origin: [0.0, 0.0],
        extent: apt.extent(),
    };
    let scale = cfg.dataset.scale.as_deref();
    let (maps, localization) = if cfg.map.samples == 0 {
        log::warn!("the map split is empty; writing zero-filled maps");
        let empty = (0..map_cfg.num_orbits)
            .map(|orbit| DensityMap {
                orbit,
                resolution: map_cfg.resolution,
                origin: map_cfg.origin,
                extent: map_cfg.extent,
                alignment: Rigid2::IDENTITY,
                counts: vec![0; map_cfg.resolution * map_cfg.resolution],
            })
            .collect();
        (empty, Vec::new())
    } else {
        let fill = generate_sharded(&apt, cfg.eval.test_seed ^ MAP_STREAM, cfg.map.samples, scale)?;
        let held_out = match cfg.map.localize_samples {
            0 => None,
            n => Some(generate_sharded(&apt, cfg.eval.test_seed ^ LOCALIZE_STREAM, n, scale)?),
        };
        let probes_of = |d: &'_ Dataset| -> Vec<(Vec<f64>, SceneState)> {
            d.triples.iter().zip(&d.states).map(|(t, (s, _))| (t.x.clone(), s.clone())).collect()
        };
        let fill_pairs = probes_of(&fill);
        let probe_pairs = held_out.as_ref().map(probes_of).unwrap_or_default();
        let fill_p: Vec<Probe<'_>> = fill_pairs.iter().map(|(x, s)| Probe { x, state: s }).collect();
        let probe_p: Vec<Probe<'_>> = probe_pairs.iter().map(|(x, s)| Probe { x, state: s }).collect();
        match ckpt.header.kind {
            ModelKind::Oracle => {
                let mut oracle = OracleEncoder::new(apt.num_orbits(), apt.group())?;
                for p in fill_p.iter().chain(&probe_p) {
                    oracle.insert(p.x, p.state);
                }
                map_with(&oracle, &fill_p, &probe_p, &map_cfg)?
            }
            _ => match ckpt.model()? {
                AnyModel::Ours(m) => map_with(&m, &fill_p, &probe_p, &map_cfg)?,
                other => return invalid(format!("the {} model has no pose component to map", other.kind().as_str())),
            },
        }
    };

    let dir = RunDir::new(&cfg.output_dir);
    create_dir(&dir.maps())?;
    let mut metadata = Vec::with_capacity(maps.len());
    for map in &maps {
        let iou = if map.resolution == datasets::GRID && map.extent == apt.extent() {
            Some(eval::cell_overlap(map, &apt.plan(map.orbit).reachable_cells())?)
        } else {
            None
        };
        let meta = MapMetadata::new(map, iou);
        report::write_file(&dir.map_pgm(map.orbit), |w| report::write_pgm(w, map))?;
        report::write_json(&dir.map_json(map.orbit), &meta)?;
        metadata.push(meta);
    }
    report::write_file(&dir.localization_csv(), |w| report::write_localization_csv(w, &localization))?;
    Ok(MapSummary { maps: metadata, localization })
}

/// Checks every built-in finite action, plus the `*.txt` fixtures in
/// `extra_dir`.
pub fn cmd_oracle(extra_dir: Option<&Path>) -> anyhow::Result<Vec<FixtureReport>> {
    let mut all = fixtures::builtin()?;
    if let Some(dir) = extra_dir {
        all.extend(fixtures::load_dir(dir)?);
    }
    Ok(parallel_map(&all, fixtures::check))
}

/// Turns failed fixture reports into an [`AcceptanceFailure`].
pub fn oracle_verdict(reports: &[FixtureReport]) -> anyhow::Result<()> {
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed()).map(|r| r.name.clone()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(AcceptanceFailure(failed).into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u64> = (0..50).collect();
        assert_eq!(parallel_map(&items, |x| x * x), items.iter().map(|x| x * x).collect::<Vec<_>>());
        assert!(parallel_map(&Vec::<u8>::new(), |x| *x).is_empty());
    }

    #[test]
    fn sharded_generation_matches_serial() {
        let gen = Apartments::new();
        let a = generate_sharded(&gen, 5, 37, None).unwrap();
        let b = datasets::generate(&gen, 5, 37, None).unwrap();
        assert_eq!(a.triples, b.triples);
    }
}
