use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tnp_core::cli::{run, Command, RunConfig};

#[derive(Parser)]
#[command(
    name = "tnp",
    version,
    about = "Quantized tensor-train reconstruction and purification of images"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Coarse-to-fine reconstruction of each input.
    Fit(Common),
    /// Purify each input; `--pair` gives clean references for CLN/ADV/REC metrics.
    Purify(Common),
    /// Distribution of synthetic noise under repeated downsampling.
    Analyze(Common),
    /// Compare all reconstruction methods on clean/perturbed pairs; `--pair`
    /// gives perturbed images, otherwise a seeded perturbation is added.
    Bench(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Paired image for each input, in order.
    #[arg(long = "pair")]
    pairs: Vec<PathBuf>,
    /// Input PNG files (appended to those in the configuration).
    inputs: Vec<PathBuf>,
}

fn build(args: Common) -> tnp_core::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    if let Some(o) = args.out {
        cfg.out = o;
    }
    cfg.inputs.extend(args.inputs);
    cfg.pairs.extend(args.pairs);
    cfg.resolve()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Fit(a) => (Command::Fit, a),
        Sub::Purify(a) => (Command::Purify, a),
        Sub::Analyze(a) => (Command::Analyze, a),
        Sub::Bench(a) => (Command::Bench, a),
    };
    let outcome = build(args).and_then(|cfg| run(command, &cfg));
    match outcome {
        Ok(o) => {
            for f in &o.manifest.files {
                match &f.error {
                    None => println!("ok    {}", f.input),
                    Some(e) => eprintln!("error {}: {e}", f.input),
                }
            }
            if o.success() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("tnp: {e}");
            ExitCode::from(2)
        }
    }
}
