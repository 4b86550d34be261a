use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which signal conditions the mixer. Everything else is shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    /// Pooled attention embedding of the detached agent hidden states.
    Aerial,
    /// Detached agent hidden states, concatenated.
    NoAttention,
    /// Zero-padded flattened joint observation-action history plus the true state.
    RawHistory,
    /// True state features.
    StateBased,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] = [
        VariantKind::Aerial,
        VariantKind::NoAttention,
        VariantKind::RawHistory,
        VariantKind::StateBased,
    ];

    /// Whether training reads true state features.
    pub fn uses_state(self) -> bool {
        matches!(self, VariantKind::RawHistory | VariantKind::StateBased)
    }

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Aerial => "aerial",
            VariantKind::NoAttention => "no_attention",
            VariantKind::RawHistory => "raw_history",
            VariantKind::StateBased => "state_based",
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| format!("unknown variant {s:?} (expected aerial, no_attention, raw_history or state_based)"))
    }
}
