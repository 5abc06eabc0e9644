use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use classpose::config::{self, ExperimentConfig};
use classpose::experiment::{self, THREADS_ENV};
use classpose::{exit_code, exit_code_for};
use classpose_core::datasets::GeneratorId;

#[derive(Parser, Debug)]
#[command(name = "classpose", version, about = "Class-pose equivariant representation learning experiments")]
#[command(after_help = format!("Environment:\n  {THREADS_ENV}  worker threads for generation and evaluation\n  RUST_LOG           log filter (default: info)"))]
struct Cli {
    /// TOML experiment configuration. Missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Start from the reference configuration of a generator instead of a file.
    #[arg(long, global = true, conflicts_with = "config")]
    preset: Option<GeneratorId>,

    /// Checkpoint to evaluate or map, or to resume training from.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,

    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Replaces every seed of the configuration.
    #[arg(long, global = true)]
    seed_override: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the binary dataset, its JSON-lines export and its SHA-256.
    Generate,
    /// Train the configured model; generates the dataset if it is missing.
    Train,
    /// Hit-rates, orbit purity and leakage of a checkpoint.
    Eval,
    /// Density maps and localization for a floor-plan dataset.
    Map,
    /// Check the class-pose decomposition on finite group actions.
    Oracle {
        /// Directory of extra `*.txt` action fixtures.
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, cli.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(p)) => config::preset(p),
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed_override {
        cfg.override_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Command::Oracle { fixtures } = &cli.command {
        let reports = experiment::cmd_oracle(fixtures.as_deref())?;
        for r in &reports {
            println!("{r}");
        }
        return experiment::oracle_verdict(&reports);
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Generate => {
            let s = experiment::cmd_generate(&cfg)?;
            println!("{}  {} ({} records)", s.hash, s.path.display(), s.size);
        }
        Command::Train => {
            let s = experiment::cmd_train(&cfg, cli.checkpoint.as_deref())?;
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
            println!(
                "trained {} epochs, {} steps; loss {} -> {}; checkpoint {}",
                s.epochs,
                s.steps,
                fmt(s.first_total),
                fmt(s.last_total),
                s.checkpoint.display()
            );
        }
        Command::Eval => {
            let s = experiment::cmd_eval(&cfg, cli.checkpoint.as_deref())?;
            for row in &s.hit_rate.rows {
                println!("T={:<3} hit-rate {:.4} ± {:.4}  (|B|={})", row.steps, row.mean, row.std, s.hit_rate.distractors);
            }
            if let Some(p) = s.orbit_purity {
                println!("orbit purity {p:.4}");
            }
            if let Some(m) = &s.leakage {
                println!("leakage matrix (diagonally dominant: {}):", s.leakage_diagonally_dominant.unwrap_or(false));
                for row in m {
                    println!("  {}", row.iter().map(|v| format!("{v:8.4}")).collect::<Vec<_>>().join(" "));
                }
            }
        }
        Command::Map => {
            let s = experiment::cmd_map(&cfg, cli.checkpoint.as_deref())?;
            for m in &s.maps {
                let iou = m.reachable_iou.map_or("-".to_string(), |v| format!("{v:.4}"));
                println!("orbit {}: {} samples, reachable-cell IoU {iou}", m.orbit, m.total_count);
            }
            println!("localization accuracy {:.4} over {} observations", s.localization_accuracy(), s.localization.len());
        }
        Command::ShowConfig => print!("{}", cfg.to_toml()),
        Command::Oracle { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit_code::VALIDATION as u8 } else { exit_code::OK as u8 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::from(exit_code::OK as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
