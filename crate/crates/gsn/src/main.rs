use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gsn::commands::{run, Command, Overrides};
use gsn::config::RunConfig;

#[derive(Parser)]
#[command(name = "gsn", version, about = "Train and sample generative stochastic networks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// none, geom:P or fixed:K.
    #[arg(long, global = true)]
    walkback: Option<String>,
    /// right-half or a comma-separated pixel index list.
    #[arg(long, global = true)]
    clamp: Option<String>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    burnin: Option<usize>,
    /// Model to sample from; defaults to OUT/model.ckpt.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Train a model and write model.ckpt and metrics.csv.
    Train,
    /// Run the model's chain and write samples.
    Sample,
    /// Complete test images with a clamped chain.
    Inpaint,
    /// Parzen log-likelihood of generated samples on the test split.
    Eval,
    /// Exact checks on small finite-state systems.
    Verify,
    /// Write a synthetic dataset.
    Synth,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = match cli.command {
        Cmd::Train => Command::Train,
        Cmd::Sample => Command::Sample,
        Cmd::Inpaint => Command::Inpaint,
        Cmd::Eval => Command::Eval,
        Cmd::Verify => Command::Verify,
        Cmd::Synth => Command::Synth,
    };
    let mut cfg = match &cli.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        },
        None => RunConfig::default(),
    };
    Overrides {
        seed: cli.seed,
        out: cli.out,
        epochs: cli.epochs,
        walkback: cli.walkback,
        clamp: cli.clamp,
        samples: cli.samples,
        burn_in: cli.burnin,
    }
    .apply(&mut cfg);
    match run(cmd, &cfg, cli.checkpoint.as_deref(), &mut std::io::stderr()) {
        Ok(m) => {
            for a in &m.artifacts {
                println!("{}", cfg.output_dir.join(a).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
