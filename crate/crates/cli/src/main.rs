//! `tcfg` binary: resolves configuration, prepares the output directory, and
//! dispatches to the subcommand implementations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use tcfg_cli::commands;
use tcfg_cli::config::{self, RunConfig};
use tcfg_cli::CliError;

#[derive(Parser)]
#[command(
    name = "tcfg",
    version,
    about = "Toy diffusion pipeline comparing plain and tangential-damping guidance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the two-moons dataset.
    GenData(CommonArgs),
    /// Train the noise-prediction model and write a checkpoint.
    Train(CommonArgs),
    /// Draw samples under the configured guidance mode.
    Sample(CommonArgs),
    /// Singular-value spectrum of unconditional scores around one anchor.
    AnalyzeSpectrum(CommonArgs),
    /// Alignment between conditional and unconditional singular vectors.
    AnalyzeAlignment(CommonArgs),
    /// Record trajectories and their tangential/normal score ratios.
    AnalyzeTrajectory(CommonArgs),
    /// Compare guidance modes on manifold distance and Frechet distance.
    Evaluate(CommonArgs),
    /// Time the guidance combine step for plain versus filtered guidance.
    Bench(CommonArgs),
    /// Run the full pipeline end to end into one directory.
    Repro(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Sample(_) => "sample",
            Command::AnalyzeSpectrum(_) => "analyze-spectrum",
            Command::AnalyzeAlignment(_) => "analyze-alignment",
            Command::AnalyzeTrajectory(_) => "analyze-trajectory",
            Command::Evaluate(_) => "evaluate",
            Command::Bench(_) => "bench",
            Command::Repro(_) => "repro",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::GenData(a)
            | Command::Train(a)
            | Command::Sample(a)
            | Command::AnalyzeSpectrum(a)
            | Command::AnalyzeAlignment(a)
            | Command::AnalyzeTrajectory(a)
            | Command::Evaluate(a)
            | Command::Bench(a)
            | Command::Repro(a) => a,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Config file of `section.key = value` lines; flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Global seed for data, initialization, training, and sampling.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory; defaults to a fresh timestamped dir under runs/.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Guidance mode.
    #[arg(long, value_name = "MODE", value_parser = ["cond", "cfg", "tcfg", "tcfg-pooled"])]
    mode: Option<String>,
    /// Guidance scale w.
    #[arg(long, value_name = "W")]
    scale: Option<f64>,
    /// Schedule length T.
    #[arg(long, value_name = "T")]
    steps: Option<usize>,
    /// Sample count for the invoked subcommand (sampling, evaluation, bench).
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    /// Disable the stochastic part of the reverse step.
    #[arg(long)]
    no_noise: bool,
    /// Use the analytic score of the generated dataset instead of a model.
    #[arg(long)]
    oracle: bool,
    /// Record full sampling trajectories.
    #[arg(long)]
    record_trajectories: bool,
    /// Trained checkpoint to sample from.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
}

fn resolve_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = &args.mode {
        cfg.guidance.mode = config::parse_mode(mode)?;
    }
    if let Some(scale) = args.scale {
        cfg.guidance.scale = scale;
    }
    if let Some(steps) = args.steps {
        cfg.schedule.steps = steps;
    }
    if let Some(samples) = args.samples {
        cfg.sample.count = samples;
        cfg.eval.count = samples;
        cfg.bench.count = samples;
    }
    if args.no_noise {
        cfg.sample.noise = false;
    }
    if args.oracle {
        cfg.sample.oracle = true;
    }
    if args.record_trajectories {
        cfg.sample.record = true;
    }
    if let Some(path) = &args.checkpoint {
        cfg.sample.checkpoint = path.display().to_string();
    }
    Ok(cfg)
}

fn resolve_out_dir(args: &CommonArgs, subcommand: &str) -> Result<PathBuf, CliError> {
    let dir = match &args.out {
        Some(dir) => dir.clone(),
        None => {
            let nanos = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_err(|e| CliError::Runtime(format!("clock error: {e}")))?
                .as_nanos();
            Path::new("runs").join(format!("{subcommand}-{nanos}"))
        }
    };
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let args = cli.command.args();
    let cfg = resolve_config(args)?;
    let out = resolve_out_dir(args, cli.command.name())?;
    commands::echo_config(&cfg, &out)?;
    match &cli.command {
        Command::GenData(_) => commands::gen_data(&cfg, &out),
        Command::Train(_) => commands::train_cmd(&cfg, &out),
        Command::Sample(_) => commands::sample_cmd(&cfg, &out),
        Command::AnalyzeSpectrum(_) => commands::analyze_spectrum(&cfg, &out),
        Command::AnalyzeAlignment(_) => commands::analyze_alignment(&cfg, &out),
        Command::AnalyzeTrajectory(_) => commands::analyze_trajectory(&cfg, &out),
        Command::Evaluate(_) => commands::evaluate(&cfg, &out),
        Command::Bench(_) => commands::bench(&cfg, &out),
        Command::Repro(_) => commands::repro(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
