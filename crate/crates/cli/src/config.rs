//! Run configuration: a TOML document, optionally overridden by flags.
//!
//! Every key is optional except `env`. Resolution fills the remaining
//! environment-dependent values (horizon, discount, φ, K) so that a resolved
//! config written into a run manifest replays the run on its own.

use std::fs;
use std::path::{Path, PathBuf};

use aerial_core::env::{DecTigerVariant, MessyBattleConfig, MessyConfig, NegationMode, Scenario};
use aerial_marl::{TrainConfig, VariantKind};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::manifest::RunManifest;

/// Largest accepted number of random warm-up steps.
pub const MAX_K_INIT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    DecTiger,
    MessyBattle,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::DecTiger => "dectiger",
            Self::MessyBattle => "messybattle",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "dectiger" => Ok(Self::DecTiger),
            "messybattle" | "battle" => Ok(Self::MessyBattle),
            _ => Err(CliError::Usage(format!("unknown environment `{s}` (expected dectiger or messybattle)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    #[default]
    MaaStar,
    BruteForce,
}

impl SolveMethod {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s.replace('-', "_").as_str() {
            "maa_star" | "maa" => Ok(Self::MaaStar),
            "brute_force" | "brute" => Ok(Self::BruteForce),
            _ => Err(CliError::Usage(format!("unknown method `{s}` (expected maa-star or brute-force)"))),
        }
    }
}

pub fn parse_dectiger_variant(s: &str) -> Result<DecTigerVariant, CliError> {
    match s.replace('-', "_").as_str() {
        "reset" | "reset_on_open" => Ok(DecTigerVariant::ResetOnOpen),
        "terminate" | "terminate_on_open" => Ok(DecTigerVariant::TerminateOnOpen),
        _ => Err(CliError::Usage(format!("unknown Dec-Tiger variant `{s}` (expected reset or terminate)"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub phis: Vec<f64>,
    pub k_inits: Vec<usize>,
    pub algos: Vec<VariantKind>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            phis: vec![0.0, 0.15, 0.3],
            k_inits: vec![0, 10],
            algos: vec![VariantKind::Aerial],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcaConfig {
    pub episodes: usize,
    /// Leading decision points collected per episode.
    pub steps: usize,
    /// Keep observation negation during collection; off by default so only
    /// the warm-up disperses the data.
    pub negate: bool,
}

impl Default for PcaConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            steps: 5,
            negate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: Option<EnvKind>,
    pub dectiger_variant: DecTigerVariant,
    /// Battle scenario file (a `[battle]` and `[messy]` document).
    pub scenario: Option<PathBuf>,
    pub battle: Option<MessyBattleConfig>,
    pub algo: VariantKind,
    pub phi: Option<f64>,
    pub k_init: Option<usize>,
    pub negation: Option<NegationMode>,
    pub horizon: Option<usize>,
    pub discount: Option<f64>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub method: SolveMethod,
    pub node_budget: usize,
    /// Fill the `wall_seconds` metrics column. Off by default: timings make
    /// the outputs of a re-run differ.
    pub record_wall_clock: bool,
    /// Evaluation episodes of the `eval` command.
    pub eval_episodes: usize,
    /// Run id whose checkpoints `eval` loads; defaults to the id of this
    /// config, so a different φ or K evaluates a policy trained elsewhere.
    pub checkpoint_run: Option<String>,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub pca: PcaConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: None,
            dectiger_variant: DecTigerVariant::ResetOnOpen,
            scenario: None,
            battle: None,
            algo: VariantKind::Aerial,
            phi: None,
            k_init: None,
            negation: None,
            horizon: None,
            discount: None,
            seeds: vec![0],
            out: PathBuf::from("runs"),
            method: SolveMethod::MaaStar,
            node_budget: 2_000_000,
            record_wall_clock: false,
            eval_episodes: 100,
            checkpoint_run: None,
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
            pca: PcaConfig::default(),
        }
    }
}

fn range_error(key: &str, value: impl std::fmt::Display, range: &str) -> CliError {
    CliError::Config(format!("{key} = {value} outside {range}"))
}

fn check_phi(key: &str, phi: f64) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(range_error(key, phi, "[0, 1]"));
    }
    Ok(())
}

fn check_k(key: &str, k: usize) -> Result<(), CliError> {
    if k > MAX_K_INIT {
        return Err(range_error(key, k, &format!("[0, {MAX_K_INIT}]")));
    }
    Ok(())
}

impl RunConfig {
    /// Parses a TOML document. Unknown keys, duplicate keys and malformed
    /// values are rejected with the position reported by the parser.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if table.get("train").and_then(|t| t.get("gamma")).is_some() {
            return Err(CliError::Config(
                "train.gamma is derived from the top-level `discount` key".into(),
            ));
        }
        cfg.check_ranges()?;
        Ok(cfg)
    }

    pub fn env(&self) -> Result<EnvKind, CliError> {
        self.env
            .ok_or_else(|| CliError::Config("missing required key `env`".into()))
    }

    /// Range checks on explicitly given values.
    pub fn check_ranges(&self) -> Result<(), CliError> {
        if let Some(phi) = self.phi {
            check_phi("phi", phi)?;
        }
        if let Some(k) = self.k_init {
            check_k("k_init", k)?;
        }
        if let Some(d) = self.discount {
            if !(0.0..=1.0).contains(&d) {
                return Err(range_error("discount", d, "[0, 1]"));
            }
        }
        if self.horizon == Some(0) {
            return Err(range_error("horizon", 0, "[1, ∞)"));
        }
        for &phi in &self.sweep.phis {
            check_phi("sweep.phis", phi)?;
        }
        for &k in &self.sweep.k_inits {
            check_k("sweep.k_inits", k)?;
        }
        if self.pca.episodes < 2 {
            return Err(range_error("pca.episodes", self.pca.episodes, "[2, ∞)"));
        }
        if self.pca.steps == 0 {
            return Err(range_error("pca.steps", 0, "[1, ∞)"));
        }
        if self.eval_episodes == 0 {
            return Err(range_error("eval_episodes", 0, "[1, ∞)"));
        }
        Ok(())
    }

    /// Fills every environment-dependent default and inlines the scenario
    /// file, so the result no longer depends on other files.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        let env = self.env()?;
        let scenario = match self.scenario.take() {
            Some(path) => Some(load_scenario(&path)?),
            None => None,
        };
        let messy_default = match env {
            EnvKind::DecTiger => MessyConfig::identity(),
            EnvKind::MessyBattle => MessyConfig::default(),
        };
        let messy = scenario.as_ref().map_or(messy_default, |s| s.messy);
        self.phi.get_or_insert(messy.phi);
        self.k_init.get_or_insert(messy.k_init);
        self.negation.get_or_insert(messy.negation);
        match env {
            EnvKind::DecTiger => {
                if scenario.is_some() || self.battle.is_some() {
                    return Err(CliError::Config("scenario and battle keys apply to messybattle only".into()));
                }
                self.horizon.get_or_insert(4);
                self.discount.get_or_insert(1.0);
            }
            EnvKind::MessyBattle => {
                let mut battle = match (scenario, self.battle.take()) {
                    (Some(_), Some(_)) => {
                        return Err(CliError::Config("give either `scenario` or a [battle] table, not both".into()))
                    }
                    (Some(s), None) => s.battle,
                    (None, Some(b)) => b,
                    (None, None) => MessyBattleConfig::default(),
                };
                if let Some(h) = self.horizon {
                    battle.max_steps = h;
                }
                self.horizon = Some(battle.max_steps);
                battle.validate()?;
                self.battle = Some(battle);
                self.discount.get_or_insert(0.99);
            }
        }
        self.train.gamma = self.discount.expect("filled above");
        self.check_ranges()?;
        self.train.validate()?;
        Ok(self)
    }

    /// `(φ, K, negation)` after resolution.
    pub fn messy(&self) -> MessyConfig {
        MessyConfig {
            phi: self.phi.unwrap_or(0.0),
            k_init: self.k_init.unwrap_or(0),
            negation: self.negation.unwrap_or_default(),
        }
    }

    pub fn require_seeds(&self) -> Result<&[u64], CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        Ok(&self.seeds)
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let s: Scenario =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    s.messy.validate()?;
    s.battle.validate()?;
    Ok(s)
}

/// Loads a TOML config, or the resolved config of a run manifest when the
/// file has a `.json` extension.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        return Ok(manifest.config);
    }
    let mut cfg = RunConfig::from_toml(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    // Relative scenario paths are taken from the config file's directory.
    if let (Some(s), Some(dir)) = (&cfg.scenario, path.parent()) {
        if s.is_relative() {
            cfg.scenario = Some(dir.join(s));
        }
    }
    Ok(cfg)
}
