//! Command-line runner for the token-drop simulator.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "tokendrop", version, about = "Oblivious token-drop benchmarks and cost reports")]
pub struct Cli {
    /// Run configuration, `key = value` per line.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    /// Base seed for every random stream.
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// lan, wan, mobile, custom or all.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    /// Comma-separated sizes: vector lengths, or initial token counts for `pipeline`.
    #[arg(long, global = true)]
    pub n: Option<String>,
    /// Trials per size, or seeded runs per depth for `toytask`.
    #[arg(long, global = true)]
    pub trials: Option<u32>,
    /// baseline, post, pre or all.
    #[arg(long, global = true)]
    pub scheme: Option<String>,
    /// Record and verify access traces during `omsel-bench`.
    #[arg(long, global = true)]
    pub trace: bool,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Extra `key=value` settings, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Median selection versus the sorting-network median.
    OmselBench,
    /// Modeled per-stage cost of baseline, post-Softmax and pre-Softmax drop.
    Pipeline,
    /// Dump and verify the access trace of one selection run.
    Trace,
    /// Signal retention of MCN and Softmax scoring on the planted-signal task.
    Toytask,
}

impl Cli {
    /// Builds and validates the run configuration.
    pub fn run_config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) =
                kv.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(p) = &self.profile {
            cfg.set("profile", p)?;
        }
        if let Some(n) = &self.n {
            let key = if self.command == Command::Pipeline { "plan.m0" } else { "n" };
            cfg.set(key, n)?;
        }
        if let Some(t) = self.trials {
            if self.command == Command::Toytask {
                cfg.toy.trials = t as usize;
            } else {
                cfg.trials = t;
            }
        }
        if let Some(s) = &self.scheme {
            cfg.set("scheme", s)?;
        }
        if self.trace {
            cfg.trace = true;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs `command` and returns a one-line summary.
pub fn run(command: Command, cfg: &RunConfig) -> CliResult<String> {
    Ok(match command {
        Command::OmselBench => {
            let s = commands::omsel_bench::execute(cfg)?;
            format!("{} rows written to {}", s.rows.len(), cfg.out.display())
        }
        Command::Pipeline => {
            let p = commands::pipeline::execute(cfg)?;
            format!("{} scheme reports written to {}", p.reports.len(), cfg.out.display())
        }
        Command::Trace => {
            let c = commands::trace::execute(cfg)?;
            format!("n={} rounds={} events={} verified", c.n, c.rounds, c.events)
        }
        Command::Toytask => {
            let t = commands::toytask::execute(cfg)?;
            format!("{} toy reports written to {}", t.reports.len(), cfg.out.display())
        }
    })
}
