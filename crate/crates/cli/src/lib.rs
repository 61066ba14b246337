//! Command-line front end for the vandalism detection pipeline.
//!
//! `wdvd sample` → `wdvd select` (or `wdvd train`) → `wdvd evaluate`, then
//! `wdvd score` for new revisions. Every file written starts with a
//! provenance line carrying the seed and config digest.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::error;

use crate::config::{PipelineConfig, RawConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "wdvd", version, about = "Wikidata vandalism detection pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Skip malformed rows instead of aborting.
    #[arg(long, global = true)]
    pub skip_bad_rows: bool,
    /// Decision threshold for accuracy, precision, recall and F1.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan the batches, subsample negatives and assign splits.
    Sample,
    /// Fit each learner with its configured hyperparameters.
    Train {
        /// Restrict to these learners (lr, ert, gbt).
        #[arg(long = "learner", value_delimiter = ',')]
        learners: Vec<String>,
    },
    /// Cross-validate each learner's grid and refit the best configuration.
    Select {
        #[arg(long = "learner", value_delimiter = ',')]
        learners: Vec<String>,
    },
    /// Score the validation split with one or more artifacts.
    Evaluate {
        /// Defaults to `model_<kind>.artifact` in the output directory.
        artifacts: Vec<PathBuf>,
    },
    /// Score raw batch files with a trained artifact.
    Score {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Labels for the inputs; adds a metrics report next to the scores.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Print the effective configuration and its digest.
    Config,
    /// Write a synthetic corpus and a matching config file.
    Synth {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 1000)]
        positives: usize,
        #[arg(long, default_value_t = 8000)]
        negatives: usize,
        #[arg(long, default_value_t = 3)]
        batches: usize,
    },
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir()
            .map(|d| d.join(p))
            .unwrap_or_else(|_| p.to_path_buf())
    }
}

/// Config file first, then flags.
pub fn resolve_config(global: &GlobalArgs, command: &Command) -> CliResult<PipelineConfig> {
    let mut raw = match &global.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    for o in &global.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{o}` is not KEY=VALUE")))?;
        raw.set(k.trim(), v.trim());
    }
    if let Some(seed) = global.seed {
        raw.set("seed", seed.to_string());
    }
    if let Some(dir) = &global.output_dir {
        raw.set("output_dir", absolute(dir).display().to_string());
    }
    if let Some(t) = global.threads {
        raw.set("threads", t.to_string());
    }
    if global.skip_bad_rows {
        raw.set("ingest.skip_bad_rows", "true");
    }
    if let Some(t) = global.threshold {
        raw.set("eval.threshold", t.to_string());
    }
    if let Command::Train { learners } | Command::Select { learners } = command {
        if !learners.is_empty() {
            raw.set("learner.kinds", learners.join(","));
        }
    }
    PipelineConfig::from_raw(&raw)
}

fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(&cli.global, &cli.command)?;
    configure_threads(cfg.threads)?;
    match &cli.command {
        Command::Sample => {
            let s = commands::cmd_sample(&cfg)?;
            println!(
                "sampled\t{}\t{}\ttrain\t{}\tvalidation\t{}",
                s.positives, s.negatives, s.train_rows, s.validation_rows
            );
        }
        Command::Train { .. } => {
            for p in commands::cmd_train(&cfg)? {
                println!("wrote\t{}", p.display());
            }
        }
        Command::Select { .. } => {
            for p in commands::cmd_select(&cfg)? {
                println!("wrote\t{}", p.display());
            }
        }
        Command::Evaluate { artifacts } => {
            let selected = commands::cmd_evaluate(&cfg, artifacts)?;
            println!("selected\t{selected}");
        }
        Command::Score {
            artifact,
            out,
            truth,
            inputs,
        } => {
            let out = out.clone().unwrap_or_else(|| cfg.output_dir.join("scores.tsv"));
            let n = commands::cmd_score(&cfg, artifact, inputs, &out, truth.as_deref())?;
            println!("scored\t{n}\t{}", out.display());
        }
        Command::Synth {
            dir,
            positives,
            negatives,
            batches,
        } => {
            let spec = wdvd_core::synthetic::SyntheticSpec {
                positives: *positives,
                negatives: *negatives,
                batches: *batches,
                seed: cfg.seed,
            };
            let path = commands::cmd_synth(&spec, dir)?;
            println!("wrote\t{}", path.display());
        }
        Command::Config => {
            print!("{}", cfg.canonical());
            println!("# digest {}", cfg.digest());
        }
    }
    Ok(())
}

/// Parses arguments, runs, and maps failures to the documented exit codes.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
