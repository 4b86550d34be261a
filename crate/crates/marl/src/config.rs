use aerial_nn::{AttentionConfig, MixerConfig, RmsPropConfig};
use serde::{Deserialize, Serialize};

use crate::error::MarlError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Width of the observation encoder and of the GRU state.
    pub hidden: usize,
    pub attention: AttentionConfig,
    pub mixer: MixerConfig,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            attention: AttentionConfig::default(),
            mixer: MixerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Environment steps to collect (warm-up steps not counted).
    pub total_steps: usize,
    /// Replay capacity in episodes.
    pub buffer_capacity: usize,
    /// Episodes per training batch.
    pub batch_size: usize,
    /// Train steps between target-network copies.
    pub target_update_interval: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Environment steps over which ε decays linearly.
    pub epsilon_anneal_steps: usize,
    pub gamma: f64,
    pub lr: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    /// Global gradient-norm bound.
    pub grad_clip: f64,
    /// Pick bootstrap actions with the online network instead of the target.
    pub double_q: bool,
    /// Environment steps between greedy evaluations.
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 100_000,
            buffer_capacity: 5000,
            batch_size: 32,
            target_update_interval: 200,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_anneal_steps: 50_000,
            gamma: 0.99,
            lr: 5e-4,
            rms_decay: 0.99,
            rms_eps: 1e-5,
            grad_clip: 10.0,
            double_q: false,
            eval_interval: 10_000,
            eval_episodes: 32,
            seed: 0,
            net: NetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MarlError> {
        let bad = |m: String| Err(MarlError::InvalidConfig(m));
        for (name, v) in [
            ("buffer_capacity", self.buffer_capacity),
            ("batch_size", self.batch_size),
            ("target_update_interval", self.target_update_interval),
            ("eval_interval", self.eval_interval),
            ("eval_episodes", self.eval_episodes),
            ("net.hidden", self.net.hidden),
            ("net.attention.heads", self.net.attention.heads),
            ("net.attention.width", self.net.attention.width),
            ("net.attention.embed_width", self.net.attention.embed_width),
            ("net.attention.embed_layers", self.net.attention.embed_layers),
            ("net.mixer.embed", self.net.mixer.embed),
            ("net.mixer.hyper_hidden", self.net.mixer.hyper_hidden),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.batch_size > self.buffer_capacity {
            return bad(format!(
                "batch_size {} exceeds buffer_capacity {}",
                self.batch_size, self.buffer_capacity
            ));
        }
        if !(self.epsilon_end >= 0.0 && self.epsilon_start >= self.epsilon_end && self.epsilon_start <= 1.0) {
            return bad(format!(
                "need 1 >= epsilon_start ({}) >= epsilon_end ({}) >= 0",
                self.epsilon_start, self.epsilon_end
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.lr > 0.0 && self.grad_clip > 0.0 && self.rms_eps > 0.0) {
            return bad("lr, grad_clip and rms_eps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.rms_decay) {
            return bad(format!("rms_decay {} outside [0, 1)", self.rms_decay));
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end`.
    pub fn epsilon(&self, env_steps: usize) -> f64 {
        if env_steps >= self.epsilon_anneal_steps {
            return self.epsilon_end;
        }
        let frac = env_steps as f64 / self.epsilon_anneal_steps as f64;
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }

    pub fn rmsprop(&self) -> RmsPropConfig {
        RmsPropConfig {
            lr: self.lr,
            decay: self.rms_decay,
            eps: self.rms_eps,
        }
    }
}
