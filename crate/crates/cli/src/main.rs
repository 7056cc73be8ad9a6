use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use soel_cli::{exit, run_experiment, CliError, Command, DatasetSource, ExperimentConfig};
use soel_meta::Settings;

/// Meta-training and deployment of error-triggered on-chip learning.
///
/// Configuration comes from defaults, `--config FILE`, `SOELSIM_*`
/// environment variables (e.g. `SOELSIM_SOEL__THETA=2` for `soel.theta`) and
/// flags, in increasing precedence.
#[derive(Parser)]
#[command(name = "soelsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// `synthetic` or `manifest:PATH`.
    #[arg(long, global = true)]
    dataset: Option<String>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    way: Option<usize>,
    #[arg(long, global = true)]
    shot: Option<usize>,
    #[arg(long, global = true)]
    queries: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Sub {
    /// Meta-train the initial weights.
    MetaTrain,
    /// Adapt on-chip and evaluate a checkpoint on meta-test episodes.
    MetaTest,
    /// Check tape gradients against finite differences.
    GradCheck,
    /// 1-NN on spike counts over the meta-test episodes.
    KnnBaseline,
    /// Write the checkpoint given by `--checkpoint` as JSON.
    Export { output: PathBuf },
    /// Read the JSON model given by `--checkpoint` into a binary checkpoint.
    Import { output: PathBuf },
    /// Single plastic neuron regulated to a target rate.
    Demo,
}

impl Common {
    fn flags(&self) -> Result<Settings, CliError> {
        let mut s = Settings::new();
        if let Some(v) = self.seed {
            s.set("seed", v);
        }
        if let Some(v) = &self.out {
            s.set("out", v.display());
        }
        if let Some(v) = self.workers {
            s.set("workers", v);
        }
        if let Some(v) = &self.dataset {
            v.parse::<DatasetSource>().map_err(|e| CliError::Usage(format!("--dataset: {e}")))?;
            s.set("data.source", v);
        }
        for (key, v) in [
            ("eval.trials", self.trials),
            ("eval.way", self.way),
            ("eval.shot", self.shot),
            ("eval.queries", self.queries),
        ] {
            if let Some(v) = v {
                s.set(key, v);
            }
        }
        Ok(s)
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    let cfg = ExperimentConfig::resolve(cli.common.config.as_deref(), std::env::vars(), &cli.common.flags()?)?;
    if cli.common.print_config {
        return Ok(cfg.to_text());
    }
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let cmd = match cli.command {
        Sub::MetaTrain => Command::MetaTrain,
        Sub::MetaTest => Command::MetaTest,
        Sub::GradCheck => Command::GradCheck,
        Sub::KnnBaseline => Command::KnnBaseline,
        Sub::Export { output } => Command::Export { output },
        Sub::Import { output } => Command::Import { output },
        Sub::Demo => Command::Demo,
    };
    run_experiment(&cmd, &cfg, cli.common.checkpoint.as_deref())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { exit::OK as u8 });
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("soelsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
