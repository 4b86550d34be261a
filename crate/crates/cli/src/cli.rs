use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, parse_dectiger_variant, EnvKind, RunConfig, SolveMethod};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "aerial", version, about = "Exact Dec-POMDP solving and value-factorization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal finite-horizon value of an enumerable model.
    Solve(Flags),
    /// One training run per seed: metrics CSVs, checkpoints, aggregate.
    Train(Flags),
    /// Greedy evaluation of saved checkpoints.
    Eval(Flags),
    /// Train every (algo, φ, K, seed) cell and normalize win rates.
    Sweep(Flags),
    /// PCA of random-policy joint observations.
    DiagPca(Flags),
}

/// Flags override the config file, which overrides the defaults.
#[derive(Debug, Args, Default)]
pub struct Flags {
    /// TOML config, or a run manifest (`.json`) to replay.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// dectiger | messybattle
    #[arg(long)]
    pub env: Option<String>,
    /// Dec-Tiger dynamics: reset | terminate
    #[arg(long)]
    pub variant: Option<String>,
    /// aerial | no_attention | raw_history | state_based
    #[arg(long)]
    pub algo: Option<String>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long = "k-init")]
    pub k_init: Option<usize>,
    /// Comma list (`0,1,5`) or half-open range (`0..10`).
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// maa-star | brute-force
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long = "total-steps")]
    pub total_steps: Option<usize>,
    /// Evaluation episodes (`eval`) or PCA episodes (`diag-pca`).
    #[arg(long)]
    pub episodes: Option<usize>,
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("invalid seed list `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..b).collect());
    }
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect()
}

impl Flags {
    /// Loads the config file (if any), applies the flags and resolves.
    pub fn into_config(self, pca: bool) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => RunConfig::default(),
        };
        if let Some(e) = &self.env {
            cfg.env = Some(EnvKind::parse(e)?);
        }
        if let Some(v) = &self.variant {
            cfg.dectiger_variant = parse_dectiger_variant(v)?;
        }
        if let Some(a) = &self.algo {
            cfg.algo = a.parse().map_err(CliError::Usage)?;
        }
        if self.horizon.is_some() {
            cfg.horizon = self.horizon;
        }
        if self.phi.is_some() {
            cfg.phi = self.phi;
        }
        if self.k_init.is_some() {
            cfg.k_init = self.k_init;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_seeds(s)?;
        }
        if let Some(o) = self.out {
            cfg.out = o;
        }
        if let Some(m) = &self.method {
            cfg.method = SolveMethod::parse(m)?;
        }
        if let Some(t) = self.total_steps {
            cfg.train.total_steps = t;
        }
        if let Some(e) = self.episodes {
            if pca {
                cfg.pca.episodes = e;
            } else {
                cfg.eval_episodes = e;
            }
        }
        if cfg.env.is_none() {
            return Err(CliError::Usage("no environment: pass --env or set `env` in --config".into()));
        }
        cfg.check_ranges()?;
        cfg.resolve()
    }
}
