mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pngan::config::RunConfig;
use pngan::Error;

const AFTER_HELP: &str = "\
Every config key can be set on the command line as --section.key=value, e.g.
--train.total_steps=500 or --noise='{\"kind\":\"awgn\",\"sigma_n\":25}'.
Overrides apply after --config, left to right. Outputs go to $PNGAN_RUN_DIR,
else run_dir from the config, else runs/<command>.

Exit codes: 0 ok, 1 other failure, 2 missing checkpoint, 3 invalid config or
arguments, 4 non-finite loss.";

#[derive(Debug, Parser)]
#[command(name = "pngan", version, about = "Noise-aware adversarial training of a noisy-image generator", after_help = AFTER_HELP)]
struct Cli {
    /// JSON config file; missing keys keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Write a toy real-noise dataset (train/ and test/).
    ToyData,
    /// Train the residual denoiser on data.train.
    TrainDenoiser,
    /// Adversarially train the generator; resumes from the run directory.
    TrainGan,
    /// Noise the clean images of data.source with the trained generator.
    Generate,
    /// Domain report and/or denoiser PSNR/SSIM against data.test.
    Eval,
    /// Continue training a denoiser on real pairs mixed with generated ones.
    Finetune,
    /// Write data.train plus ceil(q*n) pairs of data.generated.
    Mix,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ToyData => "toy-data",
            Command::TrainDenoiser => "train-denoiser",
            Command::TrainGan => "train-gan",
            Command::Generate => "generate",
            Command::Eval => "eval",
            Command::Finetune => "finetune",
            Command::Mix => "mix",
        }
    }
}

/// Splits `--section.key=value` overrides from the arguments clap sees.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for arg in args {
        let kv = arg
            .strip_prefix("--")
            .and_then(|s| s.split_once('='))
            .filter(|(k, _)| RunConfig::is_key(k));
        match kv {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => rest.push(arg),
        }
    }
    (rest, overrides)
}

fn fail(kind: &str, code: u8, message: &str) -> ExitCode {
    let line = serde_json::json!({ "error": kind, "exit_code": code, "message": message });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn exit_for(err: &Error) -> (&'static str, u8) {
    match err {
        Error::MissingCheckpoint(_) => ("missing_checkpoint", 2),
        Error::Config(_) => ("invalid_config", 3),
        Error::NonFinite { .. } => ("non_finite", 4),
        _ => ("failed", 1),
    }
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            return fail("usage", 3, first);
        }
    };
    let cfg = match RunConfig::resolve(cli.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => return fail("invalid_config", 3, &e.to_string()),
    };
    match commands::run(cli.command, cfg) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (kind, code) = exit_for(&e);
            fail(kind, code, &e.to_string())
        }
    }
}
