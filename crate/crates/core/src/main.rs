//! Command line front end. Values given as flags override the config file,
//! which overrides built-in defaults.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use a2s::pipeline::{
    cmd_build, cmd_evaluate, cmd_train, cmd_transcribe, PipelineError, RunConfig, Split, Transcription,
    EXIT_UNDECODABLE,
};

#[derive(Parser)]
#[command(name = "a2s", version, about = "Audio-to-score transcription with a CRNN trained by CTC")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset from a directory of **kern scores.
    Build {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train on the manifest's train split.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Transcribe a WAV file to **kern.
    Transcribe {
        #[arg(long)]
        checkpoint: PathBuf,
        wav: PathBuf,
    },
    /// Report WER and CER on one split.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Machine-readable report.
        #[arg(long)]
        json: bool,
        /// Score the references against themselves.
        #[arg(long)]
        oracle: bool,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn manifest_or_default(flag: &Option<PathBuf>, config: &RunConfig) -> PathBuf {
    flag.clone().unwrap_or_else(|| config.manifest_path())
}

fn run(cli: Cli) -> Result<ExitCode, PipelineError> {
    let mut config = load_config(&cli)?;
    match &cli.command {
        Command::Build { manifest } => {
            if manifest.is_some() {
                config.manifest = manifest.clone();
            }
            let report = cmd_build(&config)?;
            for d in &report.diagnostics {
                eprintln!("warning: {d}");
            }
            println!(
                "{} samples, manifest at {}",
                report.manifest.records.len(),
                report.manifest_path.display()
            );
        }
        Command::Train { manifest, checkpoint } => {
            let manifest = manifest_or_default(manifest, &config);
            let report = cmd_train(&config, &manifest, checkpoint.as_deref())?;
            if let Some(last) = report.epochs.last() {
                println!("{}", serde_json::to_string(last).expect("log entry serializes"));
            }
            println!("checkpoints in {}", report.checkpoint_dir.display());
        }
        Command::Transcribe { checkpoint, wav } => match cmd_transcribe(checkpoint, wav)? {
            Transcription::Score(text) => print!("{text}"),
            Transcription::Symbols { text, error } => {
                print!("{text}");
                eprintln!("error: output is not a valid score: {error}");
                return Ok(ExitCode::from(EXIT_UNDECODABLE as u8));
            }
        },
        Command::Evaluate {
            checkpoint,
            manifest,
            split,
            json,
            oracle,
        } => {
            let split: Split = split.parse()?;
            let manifest = manifest_or_default(manifest, &config);
            let outcome = cmd_evaluate(checkpoint.as_deref().map(Path::new), &manifest, split, *oracle)?;
            for (id, reason) in &outcome.failures {
                eprintln!("warning: {id}: {reason}");
            }
            if *json {
                let mut value = outcome.report.to_json();
                value["failures"] = serde_json::json!(outcome
                    .failures
                    .iter()
                    .map(|(id, reason)| serde_json::json!({"id": id, "reason": reason}))
                    .collect::<Vec<_>>());
                println!("{}", serde_json::to_string_pretty(&value).expect("report serializes"));
            } else {
                print!("{}", outcome.report.to_text());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
