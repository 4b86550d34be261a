//! Benchmark environments.

pub mod battle;
pub mod dectiger;
pub mod messy;

use serde::{Deserialize, Serialize};

pub use battle::{battle_model, MessyBattle, MessyBattleConfig};
pub use dectiger::{dectiger_model, DecTiger, DecTigerVariant};
pub use messy::{messy_init, messy_observe, messy_wrap, Messy, MessyConfig, NegationMode};

/// Contents of a scenario file: a battle layout plus the stochasticity knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub battle: MessyBattleConfig,
    pub messy: MessyConfig,
}
