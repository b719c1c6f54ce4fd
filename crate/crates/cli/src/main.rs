use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ikp_cli::ablate::{ablate, Axis};
use ikp_cli::commands::{self, ExtractOptions, Flags};
use ikp_cli::layout::RunDir;
use ikp_cli::{exit_code, RunConfig};

#[derive(Parser)]
#[command(
    name = "ikp",
    version,
    about = "Implicit keypoint fitting, extraction and evaluation"
)]
struct Cli {
    /// TOML run configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true, default_value = "ikp-run")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Use the exact sphere field instead of fitted networks.
    #[arg(long, global = true)]
    analytic: bool,
    /// Also fit and evaluate stacked-UDF labels.
    #[arg(long, global = true)]
    semantic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Radius,
    Architecture,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize ground-truth keypoint sets and training samples.
    Gen,
    /// Import a KeypointNet-style annotation file as ground truth.
    Import {
        file: PathBuf,
        /// Center each shape and scale it into the grid.
        #[arg(long)]
        normalize: bool,
    },
    /// Fit a field per shape.
    Fit,
    /// Extract keypoints from the fitted fields.
    Extract {
        /// Also write the sampled grids.
        #[arg(long)]
        save_grids: bool,
    },
    /// Score predictions against ground truth.
    Eval,
    /// Run an ablation study.
    Ablate {
        #[arg(long, value_enum)]
        axis: AxisArg,
    },
    /// gen, fit, extract and eval in sequence.
    Pipeline,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ikp_cli::invalid("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = load_config(&cli)?;
    let dir = RunDir::new(&cli.out);
    let flags = Flags {
        analytic: cli.analytic,
        semantic: cli.semantic,
    };
    match cli.command {
        Command::Gen => commands::gen(&dir, &cfg, flags),
        Command::Import { file, normalize } => commands::import(&dir, &cfg, &file, normalize),
        Command::Fit => commands::fit(&dir, &cfg, flags),
        Command::Extract { save_grids } => commands::extract(&dir, &cfg, flags, ExtractOptions { save_grids }),
        Command::Eval => commands::eval(&dir, &cfg, flags).map(|r| print!("{}", r.to_text())),
        Command::Ablate { axis } => {
            let axis = match axis {
                AxisArg::Radius => Axis::Radius,
                AxisArg::Architecture => Axis::Architecture,
            };
            ablate(&dir, &cfg, axis, cli.analytic).map(|a| print!("{}", a.to_text()))
        }
        Command::Pipeline => commands::pipeline(&dir, &cfg, flags).map(|r| print!("{}", r.to_text())),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
