use std::fs;
use std::path::Path;
use std::process::Command;

use classpose::checkpoint::{self, Checkpoint};
use classpose::config::{ExperimentConfig, ModelKind};
use classpose::dataset_io;
use classpose::experiment::{cmd_eval, cmd_generate, cmd_map, cmd_oracle, cmd_train, oracle_verdict, RunDir};
use classpose::report::{parse_loss_csv, HIT_RATE_CSV_HEADER, LOSS_CSV_HEADER};
use classpose::{exit_code, exit_code_for, AnyModel};
use classpose_core::datasets::GeneratorId;
use classpose_core::model::Trainable;
use classpose_core::oracle::FiniteAction;

fn small(id: GeneratorId, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.generator = id;
    cfg.dataset.size = 64;
    cfg.model.hidden_dims = vec![16];
    cfg.model.baseline.hidden_dims = vec![16];
    cfg.model.baseline.transition_hidden = vec![16];
    cfg.train.epochs = 2;
    cfg.eval.steps = vec![1, 10];
    cfg.eval.runs = vec![0, 1];
    cfg.eval.test_size = 40;
    cfg.eval.purity_size = 40;
    cfg.eval.leakage_size = 20;
    cfg.map.samples = 400;
    cfg.map.localize_samples = 50;
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn oracle_checkpoint(cfg: &ExperimentConfig) -> std::path::PathBuf {
    let mut cfg = cfg.clone();
    cfg.model.kind = ModelKind::Oracle;
    fs::create_dir_all(&cfg.output_dir).unwrap();
    let path = cfg.output_dir.join("oracle.ckpt");
    checkpoint::save(&path, &Checkpoint::oracle(&cfg, cfg.dataset.generator.build().obs_dim())).unwrap();
    path
}

fn is_validation(e: &anyhow::Error) -> bool {
    exit_code_for(e) == exit_code::VALIDATION
}

#[test]
fn generation_is_reproducible_and_exported() {
    let tmp = tempfile::tempdir().unwrap();
    let a = cmd_generate(&small(GeneratorId::Shapes, &tmp.path().join("a"))).unwrap();
    let b = cmd_generate(&small(GeneratorId::Shapes, &tmp.path().join("b"))).unwrap();
    assert_eq!(a.hash, b.hash);
    assert_eq!(fs::read(&a.path).unwrap(), fs::read(&b.path).unwrap());
    let dir = RunDir::new(tmp.path().join("a"));
    assert_eq!(dataset_io::count_jsonl_records(std::io::BufReader::new(fs::File::open(dir.dataset_jsonl()).unwrap())).unwrap(), 64);
    assert!(fs::read_to_string(dir.dataset_hash()).unwrap().starts_with(&a.hash));

    let mut other = small(GeneratorId::Shapes, &tmp.path().join("c"));
    other.dataset.seed = 1;
    assert_ne!(cmd_generate(&other).unwrap().hash, a.hash);
}

#[test]
fn multi_sprites_header_names_the_product_group() {
    let tmp = tempfile::tempdir().unwrap();
    let s = cmd_generate(&small(GeneratorId::MultiSprites, tmp.path())).unwrap();
    let file = dataset_io::load(&s.path).unwrap();
    assert_eq!(file.header.group.num_factors(), 3);
    assert_eq!(file.header.group.algebra_dim(), 6);
    assert_eq!(file.triples.len(), 64);
}

#[test]
fn empty_dataset_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(GeneratorId::Sprites, tmp.path());
    cfg.dataset.size = 0;
    assert!(is_validation(&cmd_generate(&cfg).unwrap_err()));
}

#[test]
fn zero_epochs_saves_the_initial_model() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(GeneratorId::Chairs, tmp.path());
    cfg.train.epochs = 0;
    let s = cmd_train(&cfg, None).unwrap();
    assert_eq!(s.steps, 0);
    let ckpt = checkpoint::load(&s.checkpoint).unwrap();
    let init = AnyModel::new(&cfg, ckpt.header.obs_dim).unwrap();
    assert_eq!(ckpt.params, init.params());
    let csv = fs::read_to_string(RunDir::new(tmp.path()).loss_csv()).unwrap();
    assert_eq!(csv.trim(), LOSS_CSV_HEADER);
}

#[test]
fn loss_csv_has_one_row_per_step_and_reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let cfg = small(GeneratorId::Sprites, &tmp.path().join(name));
        cmd_train(&cfg, None).unwrap();
        cmd_eval(&cfg, None).unwrap();
        let dir = RunDir::new(&cfg.output_dir);
        (fs::read_to_string(dir.loss_csv()).unwrap(), fs::read_to_string(dir.hit_rate_csv()).unwrap())
    };
    let (loss, hits) = run("a");
    let rows = parse_loss_csv(&loss).unwrap();
    assert_eq!(rows.len(), 2 * 64 / 16);
    assert_eq!(rows.iter().map(|r| r.step).collect::<Vec<_>>(), (0..8).collect::<Vec<_>>());
    assert!(loss.lines().skip(1).all(|l| l.ends_with(",0")));
    assert_eq!(run("b"), (loss, hits));
}

#[test]
fn training_lowers_the_loss() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(GeneratorId::Apartments, tmp.path());
    cfg.dataset.size = 256;
    cfg.model.hidden_dims = vec![32];
    cfg.train.epochs = 6;
    cmd_train(&cfg, None).unwrap();
    let rows = parse_loss_csv(&fs::read_to_string(RunDir::new(tmp.path()).loss_csv()).unwrap()).unwrap();
    let mean = |r: &[classpose::report::LossRow]| r.iter().map(|r| r.total).sum::<f64>() / r.len() as f64;
    let (head, tail) = (mean(&rows[..16]), mean(&rows[rows.len() - 16..]));
    assert!(tail < head, "loss went from {head} to {tail}");
}

#[test]
fn resuming_matches_an_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let straight = small(GeneratorId::Shapes, &tmp.path().join("straight"));
    cmd_train(&straight, None).unwrap();

    let mut first = small(GeneratorId::Shapes, &tmp.path().join("resumed"));
    first.train.epochs = 1;
    cmd_train(&first, None).unwrap();
    let resumed = small(GeneratorId::Shapes, &tmp.path().join("resumed"));
    let s = cmd_train(&resumed, Some(&RunDir::new(&resumed.output_dir).epoch_checkpoint(1))).unwrap();
    assert_eq!(s.epochs, 2);

    let a = checkpoint::load(&RunDir::new(&straight.output_dir).final_checkpoint()).unwrap();
    let b = checkpoint::load(&s.checkpoint).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.adam.step, b.adam.step);
    let csv = |c: &ExperimentConfig| fs::read_to_string(RunDir::new(&c.output_dir).loss_csv()).unwrap();
    assert_eq!(csv(&straight), csv(&resumed));
}

#[test]
fn resume_rejects_a_different_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(GeneratorId::Chairs, tmp.path());
    let s = cmd_train(&cfg, None).unwrap();
    let mut other = cfg.clone();
    other.model.kind = ModelKind::Linear;
    assert!(is_validation(&cmd_train(&other, Some(&s.checkpoint)).unwrap_err()));
}

#[test]
fn oracle_checkpoint_hits_every_target() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(GeneratorId::MultiSprites, tmp.path());
    cfg.eval.purity_size = 1000;
    let path = oracle_checkpoint(&cfg);
    cfg.model.kind = ModelKind::Oracle;
    let scores = cmd_eval(&cfg, Some(&path)).unwrap();
    assert_eq!(scores.hit_rate.rows.len(), 2);
    for row in &scores.hit_rate.rows {
        assert_eq!(row.mean, 1.0, "T={}", row.steps);
        assert_eq!(row.runs.len(), 2);
    }
    assert_eq!(scores.orbit_purity, Some(1.0));
    assert_eq!(scores.leakage_diagonally_dominant, Some(true));

    cfg.eval.steps = vec![1];
    cmd_eval(&cfg, Some(&path)).unwrap();
    let csv = fs::read_to_string(RunDir::new(tmp.path()).hit_rate_csv()).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], HIT_RATE_CSV_HEADER);
    assert_eq!(lines.len(), 2);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&fields[..5], ["multi_sprites", "oracle", "1", "32", "40"]);
    assert!(RunDir::new(tmp.path()).scores_json().exists());
}

#[test]
fn baselines_train_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    for (id, kind) in [(GeneratorId::Sprites, ModelKind::Mdph), (GeneratorId::Chairs, ModelKind::Linear)] {
        let mut cfg = small(id, &tmp.path().join(kind.as_str()));
        cfg.model.kind = kind;
        cmd_train(&cfg, None).unwrap();
        let scores = cmd_eval(&cfg, None).unwrap();
        assert_eq!(scores.model, kind.as_str());
        assert!(scores.orbit_purity.is_none());
        assert!(scores.hit_rate.rows.iter().all(|r| (0.0..=1.0).contains(&r.mean)));
    }
}

#[test]
fn oracle_maps_recover_the_floor_plans() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(GeneratorId::Apartments, tmp.path());
    let path = oracle_checkpoint(&cfg);
    cfg.model.kind = ModelKind::Oracle;
    let s = cmd_map(&cfg, Some(&path)).unwrap();
    assert_eq!(s.maps.len(), 2);
    assert_eq!(s.localization.len(), 50);
    assert_eq!(s.localization_accuracy(), 1.0);
    let dir = RunDir::new(tmp.path());
    for orbit in 0..2 {
        let pgm = fs::read(dir.map_pgm(orbit)).unwrap();
        assert!(pgm.starts_with(b"P5\n32 32\n255\n"));
        assert_eq!(pgm.len(), b"P5\n32 32\n255\n".len() + 32 * 32);
        assert!(dir.map_json(orbit).exists());
    }
    assert_eq!(s.maps.iter().map(|m| m.total_count).sum::<u64>(), 400);
    assert!(s.maps.iter().all(|m| m.reachable_iou.is_some_and(|v| v > 0.0 && v <= 1.0)));
}

#[test]
fn empty_map_split_writes_zero_maps() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(GeneratorId::Apartments, tmp.path());
    cfg.map.samples = 0;
    let path = oracle_checkpoint(&cfg);
    cfg.model.kind = ModelKind::Oracle;
    let s = cmd_map(&cfg, Some(&path)).unwrap();
    assert_eq!(s.maps.len(), 2);
    assert!(s.maps.iter().all(|m| m.total_count == 0 && m.max_count == 0));
    assert!(s.localization.is_empty());
}

#[test]
fn mapping_needs_a_planar_translation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(GeneratorId::Chairs, tmp.path());
    let path = oracle_checkpoint(&cfg);
    assert!(is_validation(&cmd_map(&cfg, Some(&path)).unwrap_err()));
}

#[test]
fn oracle_reports_non_free_fixtures_without_failing() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("quotient.txt"), FiniteAction::cyclic_quotient(4, 2).unwrap().to_fixture()).unwrap();
    let reports = cmd_oracle(Some(tmp.path())).unwrap();
    let q = reports.iter().find(|r| r.name == "quotient").unwrap();
    assert!(!q.free);
    oracle_verdict(&reports).unwrap();

    fs::write(tmp.path().join("broken.txt"), "group 2\n0 1\n").unwrap();
    assert!(is_validation(&cmd_oracle(Some(tmp.path())).unwrap_err()));
}

fn classpose(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_classpose")).args(args).env("RUST_LOG", "warn").output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn binary_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert_eq!(classpose(&["--help"]).0, 0);
    assert_eq!(classpose(&["frobnicate"]).0, 1);
    assert_eq!(classpose(&["--preset", "teapots", "generate"]).0, 1);

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[dataset]\nsize = 0\n").unwrap();
    let (code, _, err) = classpose(&["--config", bad.to_str().unwrap(), "generate"]);
    assert_eq!(code, 1, "{err}");
    fs::write(&bad, "[eval]\ntest_size = 32\n").unwrap();
    assert_eq!(classpose(&["--config", bad.to_str().unwrap(), "eval"]).0, 1);
    fs::write(&bad, "[dataset]\nsizes = 3\n").unwrap();
    assert_eq!(classpose(&["--config", bad.to_str().unwrap(), "show-config"]).0, 1);

    let missing = tmp.path().join("nope.ckpt");
    let (code, _, err) = classpose(&["--preset", "sprites", "--out", dir, "--checkpoint", missing.to_str().unwrap(), "eval"]);
    assert_eq!(code, 2, "{err}");

    let (code, out, _) = classpose(&["oracle"]);
    assert_eq!(code, 0);
    assert!(out.lines().all(|l| l.contains("decomposition=ok")), "{out}");
}

#[test]
fn show_config_round_trips_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, out, _) = classpose(&["--preset", "apartments", "--seed-override", "7", "show-config"]);
    assert_eq!(code, 0);
    let cfg = ExperimentConfig::from_toml(&out).unwrap();
    assert_eq!(cfg.dataset.generator, GeneratorId::Apartments);
    assert_eq!((cfg.dataset.seed, cfg.train.shuffle_seed), (7, 7));
    let path = tmp.path().join("c.toml");
    fs::write(&path, &out).unwrap();
    assert_eq!(classpose(&["--config", path.to_str().unwrap(), "show-config"]).1, out);
}

#[test]
fn binary_generates_into_the_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "[dataset]\ngenerator = \"sprites\"\nsize = 10\n").unwrap();
    let out = tmp.path().join("run");
    let (code, stdout, err) = classpose(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "generate"]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("(10 records)"));
    let hash = dataset_io::file_hash(&RunDir::new(&out).dataset()).unwrap();
    assert!(stdout.starts_with(&hash));
}

#[test]
fn shipped_configs_match_the_presets() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut expected: Vec<(String, ExperimentConfig)> =
        GeneratorId::ALL.iter().map(|id| (format!("{id}.toml"), classpose::config::preset(*id))).collect();
    expected.push(("apartments_map.toml".into(), classpose::config::mapping_preset()));
    for (name, cfg) in expected {
        let text = fs::read_to_string(dir.join(&name)).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg, "{name}");
    }
}
