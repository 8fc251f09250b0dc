use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spkid_core::experiment::{cmd_evaluate, cmd_export_stats, cmd_synth_corpus, cmd_train, ExperimentConfig, RunArtifacts};
use spkid_core::recognition::{Alpha, Scheme};
use spkid_core::Result;

/// Closed-set speaker identification with LPCC and neural predictive codebooks.
#[derive(Parser)]
#[command(name = "spkid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model file per speaker and codebook size.
    Train(Overrides),
    /// Evaluate trained models and write error-rate tables.
    Evaluate(Overrides),
    /// Export correlation, histogram and scatter data from retained scores.
    ExportStats(Overrides),
    /// Write a synthetic corpus (WAV files and manifest.json).
    SynthCorpus {
        #[arg(long, default_value_t = 10)]
        speakers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Overrides {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Codebook sizes in bits, e.g. 4,5,6,7.
    #[arg(long, value_delimiter = ',')]
    bits: Option<Vec<u32>>,
    /// Schemes to evaluate: L, LC, S1, S2, S3.
    #[arg(long, value_delimiter = ',')]
    scheme: Option<Vec<Scheme>>,
    /// Shortlist size for S2/S3.
    #[arg(long)]
    k: Option<usize>,
    /// Fusion weight, or "auto".
    #[arg(long)]
    alpha: Option<Alpha>,
    #[arg(long)]
    seed: Option<u64>,
    /// Corpus manifest.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn resolve(self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_path(p)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply_env();
        if let Some(b) = self.bits {
            cfg.bits = b;
        }
        if let Some(s) = self.scheme {
            cfg.schemes = s;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(c) = self.corpus {
            cfg.corpus = c;
        }
        if let Some(o) = self.out {
            cfg.output_dir = o;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<RunArtifacts> {
    match cli.command {
        Command::Train(o) => cmd_train(&o.resolve()?),
        Command::Evaluate(o) => cmd_evaluate(&o.resolve()?),
        Command::ExportStats(o) => cmd_export_stats(&o.resolve()?),
        Command::SynthCorpus { speakers, seed, out } => cmd_synth_corpus(speakers, seed, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(arts) => {
            for p in arts.all() {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
