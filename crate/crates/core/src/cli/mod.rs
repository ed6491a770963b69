//! Command-line front end, checkpoint persistence and end-to-end pipelines.

pub mod checkpoint;
pub mod pipelines;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

pub use checkpoint::{Checkpoint, CheckpointError};
pub use pipelines::{
    condition_source, evaluate, fit_condition_models, generate, output_root, parse_controls, report, solve,
    summarize_log, train, ConditionSource, Evaluation, GenerateRequest, LogSummary, Manifest, Protocol,
    OUTPUT_ROOT_VAR,
};

use crate::games::{Game, Size};
use crate::training::TrainConfig;

#[derive(Parser, Debug)]
#[command(name = "gfn-levels", version, about = "Multi-size GFlowNet level generators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a generator.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Game defaults when no config file is given.
        #[arg(long)]
        game: Option<Game>,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate levels from a trained checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        size: Size,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// Fixed controls, `name=value[,name=value…]`.
        #[arg(long)]
        controls: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure quality, controllability, expressive range and timing.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Sizes to evaluate; defaults to the trained sizes.
        #[arg(long, value_delimiter = ',')]
        size: Vec<Size>,
        #[arg(long, default_value = "smoke")]
        protocol: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check and solve a level file.
    Solve {
        level: PathBuf,
        #[arg(long)]
        game: Game,
    },
    /// Summarize a checkpoint and its training log.
    Report {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Training log; defaults to `train_log.csv` next to the checkpoint.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(config: Option<PathBuf>, game: Option<Game>) -> Result<TrainConfig> {
    match (config, game) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
            let c = TrainConfig::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))?;
            if let Some(g) = game {
                if g != c.game {
                    bail!("--game {g} conflicts with the config's game {}", c.game);
                }
            }
            Ok(c)
        }
        (None, Some(g)) => Ok(TrainConfig::defaults(g)),
        (None, None) => bail!("either --config or --game is required"),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            game,
            checkpoint,
            iterations,
            seed,
            threads,
            out,
        } => {
            let resume = checkpoint.as_deref().map(Checkpoint::load).transpose()?;
            let mut config = match (&resume, config, game) {
                (Some(ck), None, None) => ck.config.clone(),
                (_, config, game) => load_config(config, game)?,
            };
            if let Some(v) = iterations {
                config.iterations = v;
            }
            if let Some(v) = seed {
                config.seed = v;
            }
            if let Some(v) = threads {
                config.threads = v.max(1);
            }
            let dir = match out.or_else(|| config.output.clone().map(PathBuf::from)) {
                Some(p) => pipelines::resolve_output(&p),
                None => output_root().join(format!("{}-seed{}", config.game, config.seed)),
            };
            let total = config.iterations;
            let ck = train(config, &dir, resume, |s| {
                if (s.iteration + 1) % 100 == 0 || s.iteration + 1 == total {
                    let parts: Vec<String> = s
                        .sizes
                        .iter()
                        .map(|z| format!("{} {}/{}", z.size, z.playable, z.rollouts))
                        .collect();
                    log::info!("iteration {} loss {:.3} playable {}", s.iteration + 1, s.loss, parts.join(", "));
                }
            })?;
            println!(
                "trained {} iterations; final checkpoint {}",
                ck.iteration,
                pipelines::final_checkpoint_path(&dir).display()
            );
        }
        Command::Generate {
            checkpoint,
            size,
            count,
            trials,
            controls,
            seed,
            out,
        } => {
            if trials == 0 {
                bail!("--trials must be at least 1");
            }
            let ck = Checkpoint::load(&checkpoint)?;
            let fixed = parse_controls(ck.game(), controls.as_deref().unwrap_or(""))?;
            let out = out.map(|p| pipelines::resolve_output(&p));
            let req = GenerateRequest {
                size,
                count,
                fixed: &fixed,
                trials,
                seed,
            };
            let manifest = generate(&ck, &req, out.as_deref())?;
            for g in &manifest.levels {
                println!("{}", g.level);
                let props: Vec<String> = g
                    .properties
                    .iter()
                    .map(|(k, v)| format!("{k}={}", v.map_or("-".into(), |x| x.to_string())))
                    .collect();
                println!(
                    "# playable={} trials={} {}\n",
                    g.playable,
                    g.trials,
                    props.join(" ")
                );
            }
        }
        Command::Evaluate {
            checkpoint,
            size,
            protocol,
            seed,
            threads,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let sizes = if size.is_empty() { ck.config.sizes.all() } else { size };
            let out = out.map_or_else(
                || output_root().join(format!("eval-{}", ck.game())),
                |p| pipelines::resolve_output(&p),
            );
            let ev = evaluate(&ck, &sizes, Protocol::parse(&protocol)?, seed, threads, Some(&out))?;
            println!("{}", crate::eval::QualityReport::CSV_HEADER);
            for q in &ev.quality {
                println!("{}", q.csv_row());
            }
            println!("reports written to {}", out.display());
        }
        Command::Solve { level, game } => {
            let text = std::fs::read_to_string(&level).with_context(|| format!("cannot read {}", level.display()))?;
            print!("{}", solve(&text, game)?);
        }
        Command::Report { checkpoint, log, out } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let log_path = log.or_else(|| checkpoint.parent().map(|d| d.join(pipelines::LOG_FILE)));
            let text = match log_path {
                Some(p) if p.exists() => Some(std::fs::read_to_string(&p)?),
                _ => None,
            };
            let md = report(&ck, text.as_deref())?;
            match out {
                Some(p) => std::fs::write(pipelines::resolve_output(&p), &md)?,
                None => print!("{md}"),
            }
        }
    }
    Ok(())
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
