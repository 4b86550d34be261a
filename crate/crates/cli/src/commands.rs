//! The `solve`, `train`, `eval`, `sweep` and `diag-pca` commands.
//!
//! Each command takes a resolved [`RunConfig`], writes its artifacts into
//! `config.out` and returns the text report printed on stdout.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use aerial_core::env::{battle_model, dectiger_model, messy_wrap, MessyConfig};
use aerial_core::solver::{brute_force_optimal, maa_star_with, MaaOptions, PolicyTree};
use aerial_core::{DecPomdp, RngStream};
use aerial_marl::{evaluate, train_with, EnvDims, Learner, VariantKind};
use aerial_nn::{load_checkpoint, write_checkpoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EnvKind, RunConfig, SolveMethod};
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::metrics::*;
use crate::pca::pca;
use crate::sweep::{best_counts, normalize_cells, CellSummary, SWEEP_COLUMNS, TALLY_COLUMNS};

/// Work that runs against whichever environment the config names.
pub trait EnvTask {
    type Output;
    fn run<M: DecPomdp + Sync>(self, model: &M) -> Result<Self::Output, CliError>;
}

/// Builds the configured environment, wrapped with `messy` (the identity
/// wrapper at φ = 0, K = 0 replays the base model exactly), and runs `task`.
pub fn with_env<T: EnvTask>(cfg: &RunConfig, messy: MessyConfig, task: T) -> Result<T::Output, CliError> {
    let discount = cfg.discount.unwrap_or(1.0);
    match cfg.env()? {
        EnvKind::DecTiger => {
            let m = dectiger_model(cfg.dectiger_variant, cfg.horizon.unwrap_or(4), discount)?;
            task.run(&messy_wrap(m, messy)?)
        }
        EnvKind::MessyBattle => {
            let m = battle_model(cfg.battle.clone().unwrap_or_default(), discount)?;
            task.run(&messy_wrap(m, messy)?)
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn fmt_phi(phi: f64) -> String {
    format!("{phi}")
}

/// `env-algo-phiX-kY`, the prefix of every file a run writes.
pub fn run_id(cfg: &RunConfig, algo: VariantKind, messy: &MessyConfig) -> String {
    format!(
        "{}-{}-phi{}-k{}",
        cfg.env.map_or("none", EnvKind::name),
        algo.name(),
        fmt_phi(messy.phi),
        messy.k_init
    )
}

pub fn metrics_file(run: &str, seed: u64) -> String {
    format!("{run}-seed{seed}.csv")
}

pub fn checkpoint_file(run: &str, seed: u64) -> String {
    format!("{run}-seed{seed}.ckpt")
}

pub fn aggregate_file(run: &str) -> String {
    format!("{run}-aggregate.csv")
}

pub const MANIFEST_FILE: &str = "manifest.json";

// ---------------------------------------------------------------- solve

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOutput {
    pub env: String,
    pub horizon: usize,
    pub discount: f64,
    pub method: SolveMethod,
    pub value: f64,
    pub expanded: Option<usize>,
    pub policy: PolicyTree,
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<String, CliError> {
    let env = cfg.env()?;
    if env != EnvKind::DecTiger {
        return Err(CliError::ExactUnsupported(env.name().into()));
    }
    let messy = cfg.messy();
    if messy.phi != 0.0 || messy.k_init != 0 {
        return Err(CliError::ExactUnsupported(format!(
            "dectiger with phi = {} and k_init = {}",
            messy.phi, messy.k_init
        )));
    }
    let horizon = cfg.horizon.unwrap_or(4);
    let m = dectiger_model(cfg.dectiger_variant, horizon, cfg.discount.unwrap_or(1.0))?;
    let (policy, value, expanded) = match cfg.method {
        SolveMethod::MaaStar => {
            let opts = MaaOptions {
                node_budget: cfg.node_budget,
                ..MaaOptions::default()
            };
            let (p, v, stats) = maa_star_with(&m, horizon, &opts)?;
            (p, v, Some(stats.expanded))
        }
        SolveMethod::BruteForce => {
            let (p, v) = brute_force_optimal(&m, horizon)?;
            (p, v, None)
        }
    };
    create_dir(&cfg.out)?;
    let out = SolveOutput {
        env: env.name().into(),
        horizon,
        discount: m.discount(),
        method: cfg.method,
        value,
        expanded,
        policy,
    };
    let json = cfg.out.join("solve.json");
    let mut text = serde_json::to_string_pretty(&out)?;
    text.push('\n');
    fs::write(&json, text).map_err(|e| CliError::io(&json, e))?;
    let rendered = out.policy.render(&["li", "oL", "oR"], &["zL", "zR"]);
    let txt = cfg.out.join("policy.txt");
    fs::write(&txt, &rendered).map_err(|e| CliError::io(&txt, e))?;
    RunManifest::new("solve", cfg, vec!["solve.json".into(), "policy.txt".into()]).write(&cfg.out.join(MANIFEST_FILE))?;
    let mut report = format!("optimal value: {value:.2}\nexact: {value}\n");
    report.push_str(&rendered);
    Ok(report)
}

// ---------------------------------------------------------------- train

/// Result of one seeded training run.
pub struct SeedRun {
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub learner: Learner,
}

struct TrainSeeds<'a> {
    cfg: &'a RunConfig,
    algo: VariantKind,
    run: &'a str,
    seeds: &'a [u64],
}

impl EnvTask for TrainSeeds<'_> {
    type Output = Vec<SeedRun>;

    fn run<M: DecPomdp + Sync>(self, model: &M) -> Result<Vec<SeedRun>, CliError> {
        self.seeds
            .par_iter()
            .map(|&seed| {
                let mut tc = self.cfg.train.clone();
                tc.seed = seed;
                let out = train_with(model, self.algo, &tc, |p| {
                    eprintln!(
                        "[{} seed {seed}] steps {} return {:.3} win {:.3} ({:.1}s)",
                        self.run, p.env_steps, p.eval.mean_return, p.eval.win_rate, p.wall_seconds
                    );
                })?;
                let rows = out
                    .metrics
                    .iter()
                    .map(|p| MetricsRow::from_point(self.run, seed, p, self.cfg.record_wall_clock))
                    .collect();
                Ok(SeedRun {
                    seed,
                    rows,
                    learner: out.learner,
                })
            })
            .collect()
    }
}

/// Trains `algo` under `messy` for every seed and writes the per-seed CSVs,
/// checkpoints and the aggregate. Returns the runs and the output files.
pub fn train_runs(
    cfg: &RunConfig,
    algo: VariantKind,
    messy: MessyConfig,
) -> Result<(String, Vec<SeedRun>, Vec<AggregateRow>, Vec<String>), CliError> {
    let seeds = cfg.require_seeds()?;
    create_dir(&cfg.out)?;
    let run = run_id(cfg, algo, &messy);
    let runs = with_env(
        cfg,
        messy,
        TrainSeeds {
            cfg,
            algo,
            run: &run,
            seeds,
        },
    )?;
    let mut files = Vec::new();
    for r in &runs {
        let csv = metrics_file(&run, r.seed);
        write_metrics(&cfg.out.join(&csv), &r.rows)?;
        let ckpt = checkpoint_file(&run, r.seed);
        let path = cfg.out.join(&ckpt);
        let f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        write_checkpoint(&r.learner.params, BufWriter::new(f))?;
        files.push(csv);
        files.push(ckpt);
    }
    let all: Vec<Vec<MetricsRow>> = runs.iter().map(|r| r.rows.clone()).collect();
    let agg = aggregate(&run, &all);
    let agg_file = aggregate_file(&run);
    write_aggregate(&cfg.out.join(&agg_file), &agg)?;
    files.push(agg_file);
    Ok((run, runs, agg, files))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String, CliError> {
    let (run, _, agg, files) = train_runs(cfg, cfg.algo, cfg.messy())?;
    RunManifest::new("train", cfg, files).write(&cfg.out.join(MANIFEST_FILE))?;
    let mut report = format!("run {run}: {} seeds\n", cfg.seeds.len());
    match agg.iter().find(|r| r.point == "final") {
        Some(f) => {
            let _ = writeln!(
                report,
                "final return {:.3} ± {:.3}, win rate {:.3} ± {:.3} (env steps {})",
                f.mean_return, f.return_ci, f.mean_win_rate, f.win_rate_ci, f.env_steps
            );
        }
        None => report.push_str("no evaluation points (total_steps = 0)\n"),
    }
    Ok(report)
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub run_id: String,
    pub checkpoint: String,
    pub seed: u64,
    pub episodes: usize,
    pub mean_return: f64,
    pub win_rate: f64,
    pub ci_half_width: f64,
}

pub const EVAL_COLUMNS: [&str; 7] = [
    "run_id",
    "checkpoint",
    "seed",
    "episodes",
    "mean_return",
    "win_rate",
    "ci_half_width",
];

struct EvalSeeds<'a> {
    cfg: &'a RunConfig,
    run: &'a str,
    source: &'a str,
}

impl EnvTask for EvalSeeds<'_> {
    type Output = Vec<EvalRow>;

    fn run<M: DecPomdp + Sync>(self, model: &M) -> Result<Vec<EvalRow>, CliError> {
        let dims = EnvDims::of(model);
        self.cfg
            .require_seeds()?
            .iter()
            .map(|&seed| {
                let file = checkpoint_file(self.source, seed);
                let learner = load_learner(&self.cfg.out.join(&file), dims, self.cfg)?;
                let mut rng = RngStream::new(seed).derive(&[6]);
                let r = evaluate(model, &learner, self.cfg.eval_episodes, &mut rng)?;
                Ok(EvalRow {
                    run_id: self.run.into(),
                    checkpoint: file,
                    seed,
                    episodes: r.episodes,
                    mean_return: r.mean_return,
                    win_rate: r.win_rate,
                    ci_half_width: r.ci_half_width,
                })
            })
            .collect()
    }
}

/// Rebuilds a learner of the configured architecture from a checkpoint.
pub fn load_learner(path: &Path, dims: EnvDims, cfg: &RunConfig) -> Result<Learner, CliError> {
    let mut learner = Learner::new(dims, cfg.algo, &cfg.train.net, &mut RngStream::new(0))?;
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    load_checkpoint(&mut learner.params, BufReader::new(f))?;
    learner.update_target()?;
    Ok(learner)
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<String, CliError> {
    let messy = cfg.messy();
    let run = run_id(cfg, cfg.algo, &messy);
    let source = cfg.checkpoint_run.clone().unwrap_or_else(|| run.clone());
    let rows = with_env(
        cfg,
        messy,
        EvalSeeds {
            cfg,
            run: &run,
            source: &source,
        },
    )?;
    let file = format!("{run}-eval.csv");
    write_rows(&cfg.out.join(&file), EVAL_HEADER, &rows, &EVAL_COLUMNS)?;
    let mut report = String::new();
    for r in &rows {
        let _ = writeln!(
            report,
            "{} seed {}: return {:.3} ± {:.3}, win rate {:.3} over {} episodes",
            r.checkpoint, r.seed, r.mean_return, r.ci_half_width, r.win_rate, r.episodes
        );
    }
    Ok(report)
}

// ---------------------------------------------------------------- sweep

pub fn cmd_sweep(cfg: &RunConfig) -> Result<String, CliError> {
    let env = cfg.env()?;
    if env != EnvKind::MessyBattle {
        return Err(CliError::Usage("sweep normalizes win rates and needs --env messybattle".into()));
    }
    let s = &cfg.sweep;
    if s.algos.is_empty() || s.phis.is_empty() || s.k_inits.is_empty() {
        return Err(CliError::Config("sweep needs at least one algo, phi and k_init".into()));
    }
    let mut points = Vec::new();
    for &algo in &s.algos {
        for &phi in &s.phis {
            for &k_init in &s.k_inits {
                points.push((algo, MessyConfig { phi, k_init, negation: cfg.messy().negation }));
            }
        }
    }
    let mut cells = Vec::with_capacity(points.len());
    let mut files = Vec::new();
    for (algo, messy) in points {
        let (_, runs, agg, f) = train_runs(cfg, algo, messy)?;
        files.extend(f);
        let fin = agg.iter().find(|r| r.point == "final");
        cells.push(CellSummary {
            env: env.name().into(),
            algo,
            phi: messy.phi,
            k_init: messy.k_init,
            seeds: runs.len(),
            mean_return: fin.map_or(0.0, |r| r.mean_return),
            return_ci: fin.map_or(0.0, |r| r.return_ci),
            mean_win_rate: fin.map_or(0.0, |r| r.mean_win_rate),
            win_rate_ci: fin.map_or(0.0, |r| r.win_rate_ci),
            normalized: 0.0,
        });
    }
    normalize_cells(&mut cells);
    let tally = best_counts(&cells, &s.algos);
    write_rows(&cfg.out.join("sweep.csv"), SWEEP_HEADER, &cells, &SWEEP_COLUMNS)?;
    write_rows(&cfg.out.join("best_count.csv"), TALLY_HEADER, &tally, &TALLY_COLUMNS)?;
    files.push("sweep.csv".into());
    files.push("best_count.csv".into());
    RunManifest::new("sweep", cfg, files).write(&cfg.out.join(MANIFEST_FILE))?;
    let mut report = String::new();
    for c in &cells {
        let _ = writeln!(
            report,
            "{} phi {} k {}: win rate {:.3} ± {:.3} (normalized {:.3})",
            c.algo, c.phi, c.k_init, c.mean_win_rate, c.win_rate_ci, c.normalized
        );
    }
    for t in &tally {
        let _ = writeln!(report, "best count {}: {}", t.algo, t.best_count);
    }
    Ok(report)
}

// ---------------------------------------------------------------- diag-pca

/// Joint observations (agents' encodings concatenated) of the first
/// `steps` decision points of random-policy episodes, with `(episode, t)`.
pub struct ObservationSample {
    pub rows: Vec<Vec<f64>>,
    pub tags: Vec<(usize, usize)>,
}

struct CollectObs {
    episodes: usize,
    steps: usize,
    seed: u64,
}

impl EnvTask for CollectObs {
    type Output = ObservationSample;

    fn run<M: DecPomdp + Sync>(self, model: &M) -> Result<ObservationSample, CliError> {
        let mut rng = RngStream::new(self.seed).derive(&[7]);
        let n = model.num_agents();
        let joint = |obs: &[M::Obs]| obs.iter().flat_map(|o| model.encode_obs(o)).collect::<Vec<f64>>();
        let mut rows = Vec::new();
        let mut tags = Vec::new();
        for ep in 0..self.episodes {
            let (mut state, mut obs) = model.reset(&mut rng)?;
            for t in 0..self.steps {
                rows.push(joint(&obs));
                tags.push((ep, t));
                if t + 1 == self.steps || model.is_terminal(&state) {
                    break;
                }
                let action: Vec<usize> = (0..n)
                    .map(|i| {
                        let avail = model.available_actions(&state, i);
                        let ok: Vec<usize> = (0..avail.len()).filter(|&a| avail[a]).collect();
                        if ok.is_empty() {
                            0
                        } else {
                            ok[rng.below(ok.len())]
                        }
                    })
                    .collect();
                let tr = model.step(&state, &action, &mut rng)?;
                state = tr.next_state;
                obs = tr.observations;
                if model.is_terminal(&state) {
                    break;
                }
            }
        }
        Ok(ObservationSample { rows, tags })
    }
}

/// Random-policy observation sample under the config's φ (only when
/// `pca.negate` is set) and K.
pub fn collect_observations(cfg: &RunConfig) -> Result<ObservationSample, CliError> {
    let mut messy = cfg.messy();
    if !cfg.pca.negate {
        messy.phi = 0.0;
    }
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    with_env(
        cfg,
        messy,
        CollectObs {
            episodes: cfg.pca.episodes,
            steps: cfg.pca.steps,
            seed,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaPoint {
    pub episode: usize,
    pub t: usize,
    pub pc1: f64,
    pub pc2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub episodes: usize,
    pub steps: usize,
    pub points: usize,
    pub explained_variance: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub covariance_trace: f64,
    /// Covariance trace of the joint observations at each decision point.
    pub trace_by_step: Vec<f64>,
    pub converged: bool,
}

pub fn pca_summary(sample: &ObservationSample, episodes: usize, steps: usize) -> (PcaSummary, Vec<PcaPoint>) {
    let p = pca(&sample.rows, 2);
    let points = sample
        .rows
        .iter()
        .zip(&sample.tags)
        .map(|(r, &(episode, t))| {
            let mut x = p.project(r);
            x.resize(2, 0.0);
            PcaPoint {
                episode,
                t,
                pc1: x[0],
                pc2: x[1],
            }
        })
        .collect();
    let trace_by_step = (0..steps)
        .map(|t| {
            let rows: Vec<Vec<f64>> = sample
                .rows
                .iter()
                .zip(&sample.tags)
                .filter(|(_, tag)| tag.1 == t)
                .map(|(r, _)| r.clone())
                .collect();
            if rows.len() < 2 {
                0.0
            } else {
                crate::pca::trace(&crate::pca::covariance(&rows).1)
            }
        })
        .collect();
    let mut explained_variance = p.explained_variance.clone();
    explained_variance.resize(2, 0.0);
    let mut eigenvalues = p.eigenvalues.clone();
    eigenvalues.resize(2, 0.0);
    (
        PcaSummary {
            episodes,
            steps,
            points: sample.rows.len(),
            explained_variance,
            eigenvalues,
            covariance_trace: p.covariance_trace,
            trace_by_step,
            converged: p.converged,
        },
        points,
    )
}

pub fn cmd_diag_pca(cfg: &RunConfig) -> Result<String, CliError> {
    let sample = collect_observations(cfg)?;
    let (summary, points) = pca_summary(&sample, cfg.pca.episodes, cfg.pca.steps);
    create_dir(&cfg.out)?;
    let messy = cfg.messy();
    let stem = format!("{}-pca-phi{}-k{}", cfg.env()?.name(), fmt_phi(if cfg.pca.negate { messy.phi } else { 0.0 }), messy.k_init);
    let csv: PathBuf = cfg.out.join(format!("{stem}.csv"));
    write_rows(&csv, PCA_HEADER, &points, &["episode", "t", "pc1", "pc2"])?;
    let json = cfg.out.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(&json, text).map_err(|e| CliError::io(&json, e))?;
    RunManifest::new("diag-pca", cfg, vec![format!("{stem}.csv"), format!("{stem}.json")])
        .write(&cfg.out.join(MANIFEST_FILE))?;
    Ok(format!(
        "covariance trace {:.6}; explained variance {:.4}, {:.4}; trace at t=0 {:.6}\n",
        summary.covariance_trace,
        summary.explained_variance[0],
        summary.explained_variance[1],
        summary.trace_by_step.first().copied().unwrap_or(0.0)
    ))
}
