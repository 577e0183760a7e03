//! `freqdedup`: synthetic backup corpora, frequency-analysis attacks against
//! deduplicated encryption, the MinHash-plus-scrambling defense, and a
//! metadata-accounting dedup store.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use freqdedup_core::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "freqdedup", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Options shared by every subcommand. Flags override the config file.
#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; every stage seed is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any config key, e.g. `--set attack.v=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic snapshot corpus.
    Gen(commands::GenArgs),
    /// Chunk raw files into fingerprint traces.
    Chunk(commands::ChunkArgs),
    /// Encrypt a corpus under MLE, MinHash or MinHash with scrambling.
    Defend(commands::DefendArgs),
    /// Run an inference attack of one encrypted backup against a plaintext one.
    Attack(commands::AttackArgs),
    /// Replay an encrypted corpus through the dedup store.
    Store(commands::StoreArgs),
    /// Merge result rows into one comparison table.
    Compare(commands::CompareArgs),
    /// gen, defend, attack, store and compare in one go.
    RunAll,
    /// Print the effective configuration.
    Config,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    for kv in &c.overrides {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    match cli.cmd {
        Cmd::Gen(a) => commands::gen(&mut cfg, &a),
        Cmd::Chunk(a) => commands::chunk(&cfg, &a),
        Cmd::Defend(a) => commands::defend(&mut cfg, &a),
        Cmd::Attack(a) => commands::attack(&mut cfg, &a),
        Cmd::Store(a) => commands::store(&mut cfg, &a),
        Cmd::Compare(a) => commands::compare(&cfg, &a),
        Cmd::RunAll => commands::run_all(&cfg),
        Cmd::Config => {
            cfg.validate()?;
            print!("{}", cfg.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
