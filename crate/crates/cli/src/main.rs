//! Command-line front end: world spawning, log generation, training,
//! evaluation, paired comparison, and parameter sweeps. Configuration comes
//! from a JSON file; a few flags override its fields. The only environment
//! variable honored is the output directory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use satrec_core::checkpoint::{load_model, save_model};
use satrec_core::error::{Error, Result};
use satrec_core::harness::{
    compare_arms, comparison_csv, metrics_csv, run_arm, seed_pipeline, sweep,
    sweep_csv, train_rows_csv, ExperimentConfig, SweepParameter, OUTPUT_DIR_ENV,
};
use satrec_core::logio::{read_evaluation, write_log};
use satrec_core::metrics::compute_metrics;
use satrec_core::simulator::{derive_seed, generate_logs, spawn_world};

#[derive(Parser)]
#[command(name = "satrec", about = "Reward-shaped recommender experiments")]
struct Cli {
    /// Experiment configuration (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the SATREC_OUT_DIR environment variable.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Override the seed list, comma-separated.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Override log_episodes.
    #[arg(long, global = true)]
    log_episodes: Option<usize>,
    /// Override eval_episodes.
    #[arg(long, global = true)]
    eval_episodes: Option<usize>,
    /// Override total optimizer steps for both arms.
    #[arg(long, global = true)]
    total_steps: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SeedArg {
    /// Seed for this run; defaults to the first configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the simulated world and write it as JSON.
    Spawn {
        /// Output file name.
        #[arg(long, default_value = "world.json")]
        out: PathBuf,
    },
    /// Generate behavior-policy episode logs (JSON lines).
    Log {
        #[command(flatten)]
        seed: SeedArg,
        /// Logging-policy checkpoint; a freshly pretrained engagement-only
        /// policy is used when omitted.
        #[arg(long)]
        behavior: Option<PathBuf>,
        #[arg(long, default_value = "episodes.jsonl")]
        out: PathBuf,
    },
    /// Train one arm on an episode log and write a checkpoint.
    Train {
        #[command(flatten)]
        seed: SeedArg,
        /// Episode log produced by `log`.
        #[arg(long)]
        logs: PathBuf,
        /// Which configured arm to train: "control" or "experiment".
        #[arg(long, default_value = "experiment")]
        arm: String,
        #[arg(long, default_value = "model.ckpt")]
        checkpoint_out: PathBuf,
        #[arg(long, default_value = "train.csv")]
        metrics_out: PathBuf,
    },
    /// Roll out a trained policy in the simulator and report metrics.
    Eval {
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "eval.csv")]
        out: PathBuf,
    },
    /// Paired control-vs-experiment comparison over all configured seeds.
    Compare {
        #[arg(long, default_value = "compare.csv")]
        out: PathBuf,
    },
    /// Sweep one parameter over a list of values.
    Sweep {
        /// One of negative_class_weight, transform, gamma, hinge_threshold,
        /// feature_set.
        #[arg(long)]
        parameter: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seeds) = &cli.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(n) = cli.log_episodes {
        cfg.log_episodes = n;
    }
    if let Some(n) = cli.eval_episodes {
        cfg.eval_episodes = n;
    }
    if let Some(n) = cli.total_steps {
        cfg.control.train.total_steps = n;
        cfg.experiment.train.total_steps = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_path(cli: &Cli, name: &Path) -> PathBuf {
    if name.is_absolute() {
        return name.to_path_buf();
    }
    let dir = cli
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    dir.join(name)
}

fn pick_seed(cfg: &ExperimentConfig, arg: &SeedArg) -> u64 {
    arg.seed.unwrap_or(cfg.seeds[0])
}

fn arm_by_name<'a>(cfg: &'a ExperimentConfig, name: &str) -> Result<&'a satrec_core::harness::ArmConfig> {
    match name {
        "control" => Ok(&cfg.control),
        "experiment" => Ok(&cfg.experiment),
        other => Err(Error::Config(format!(
            "unknown arm {other} (expected control or experiment)"
        ))),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Spawn { out } => {
            let world = spawn_world(&cfg.sim)?;
            let path = out_path(cli, out);
            std::fs::write(&path, serde_json::to_string_pretty(&world)?)?;
            println!("wrote {}", path.display());
        }
        Command::Log { seed, behavior, out } => {
            let seed = pick_seed(&cfg, seed);
            let episodes = match behavior {
                Some(ckpt) => {
                    let mut sim = cfg.sim.clone();
                    sim.seed = derive_seed(cfg.sim.seed, seed);
                    let world = spawn_world(&sim)?;
                    let model = load_model(ckpt)?;
                    generate_logs(&world, &model, cfg.log_episodes, 0, derive_seed(seed, 7))?
                }
                None => seed_pipeline(&cfg, seed)?.1,
            };
            let path = out_path(cli, out);
            write_log(&path, &episodes)?;
            println!("wrote {} ({} episodes)", path.display(), episodes.len());
        }
        Command::Train {
            seed,
            logs,
            arm,
            checkpoint_out,
            metrics_out,
        } => {
            let seed = pick_seed(&cfg, seed);
            let arm_cfg = arm_by_name(&cfg, arm)?;
            let mut sim = cfg.sim.clone();
            sim.seed = derive_seed(cfg.sim.seed, seed);
            let world = spawn_world(&sim)?;
            // The trainer itself only ever sees the training view; the full
            // log is needed here for the post-training evaluation rollouts.
            let full = read_evaluation(logs)?;
            let run = run_arm(
                &world,
                &full,
                &cfg.resolved_model_cfg(),
                arm_cfg,
                seed,
                cfg.eval_episodes,
                None,
            )?;
            let ckpt = out_path(cli, checkpoint_out);
            save_model(&run.model, &ckpt)?;
            let csv = out_path(cli, metrics_out);
            std::fs::write(&csv, train_rows_csv(&run.rows))?;
            println!(
                "wrote {} and {} (final satisfied engagement {:.4})",
                ckpt.display(),
                csv.display(),
                run.metrics.satisfied_engagement
            );
        }
        Command::Eval { seed, checkpoint, out } => {
            let seed = pick_seed(&cfg, seed);
            let mut sim = cfg.sim.clone();
            sim.seed = derive_seed(cfg.sim.seed, seed);
            let world = spawn_world(&sim)?;
            let model = load_model(checkpoint)?;
            let rollouts =
                generate_logs(&world, &model, cfg.eval_episodes, 0, derive_seed(seed, 102))?;
            let report = compute_metrics(&rollouts, "eval", seed);
            let path = out_path(cli, out);
            std::fs::write(&path, metrics_csv(&[report]))?;
            println!("wrote {}", path.display());
        }
        Command::Compare { out } => {
            let cmp = compare_arms(&cfg)?;
            let path = out_path(cli, out);
            std::fs::write(&path, comparison_csv(&cmp))?;
            println!(
                "wrote {} (mean satisfied-engagement change {:+.2}%, p = {:.4})",
                path.display(),
                100.0 * cmp.mean_rel_satisfied,
                cmp.sign_test_p
            );
        }
        Command::Sweep {
            parameter,
            values,
            out,
        } => {
            let param: SweepParameter = parameter.parse()?;
            let rows = sweep(&cfg, param, values)?;
            let path = out_path(cli, out);
            std::fs::write(&path, sweep_csv(&rows))?;
            println!("wrote {} ({} rows)", path.display(), rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Machine-readable error line on stderr.
            eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
