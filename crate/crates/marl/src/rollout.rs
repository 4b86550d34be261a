//! Episode generation, evaluation and the training loop.

use std::time::Instant;

use aerial_core::{discounted_return, DecPomdp, EpisodeTrace, JointHistory, RngStream, StepRecord};
use serde::{Deserialize, Serialize};

use crate::batch::{agent_inputs, Batch, EncodedEpisode, EnvDims};
use crate::buffer::ReplayBuffer;
use crate::config::TrainConfig;
use crate::error::MarlError;
use crate::learner::{epsilon_greedy, Learner};
use crate::variant::VariantKind;

/// Rolls out one episode with decentralized ε-greedy agents. The aerial
/// variant records the embedding of the joint memory at every executed
/// step; state-conditioned variants record state features at every
/// decision point. Nothing else reads the state.
pub fn run_episode<M: DecPomdp>(
    model: &M,
    learner: &Learner,
    epsilon: f64,
    rng: &mut RngStream,
) -> Result<EpisodeTrace<M::Obs>, MarlError> {
    let dims = learner.dims;
    let n = dims.agents;
    let record_state = learner.variant.uses_state();
    let (mut state, obs0) = model.reset(rng)?;
    let available = |state: &M::State| (0..n).map(|i| model.available_actions(state, i)).collect::<Vec<_>>();
    let mut steps = vec![StepRecord {
        observations: obs0,
        available: available(&state),
    }];
    let mut states = record_state.then(|| vec![model.state_features(&state)]);
    let mut embeddings = (learner.variant == VariantKind::Aerial).then(Vec::new);
    let mut history = JointHistory::new(n);
    let mut rewards = Vec::new();
    let mut hidden = learner.initial_hidden();
    let mut last_action: Option<Vec<usize>> = None;
    let mut terminated = model.is_terminal(&state);

    while !terminated && rewards.len() < model.horizon() {
        let current = steps.last().expect("at least one decision point");
        let obs: Vec<f64> = current.observations.iter().flat_map(|o| model.encode_obs(o)).collect();
        let input = agent_inputs(&dims, &obs, last_action.as_deref());
        let (q, h) = learner.act_forward(&input, &hidden)?;
        hidden = h;
        if let Some(e) = embeddings.as_mut() {
            e.push(learner.embed_memory(&hidden)?.expect("aerial embedding"));
        }
        let avail: Vec<bool> = current.available.iter().flatten().copied().collect();
        let action = epsilon_greedy(q.data(), &avail, n, epsilon, rng);
        let tr = model.step(&state, &action, rng)?;
        history.push(&action, &tr.observations)?;
        rewards.push(tr.reward);
        state = tr.next_state;
        terminated = model.is_terminal(&state);
        if let Some(s) = states.as_mut() {
            s.push(model.state_features(&state));
        }
        steps.push(StepRecord {
            observations: tr.observations,
            available: available(&state),
        });
        last_action = Some(action);
    }
    let returns = discounted_return(&rewards, model.discount());
    Ok(EpisodeTrace {
        history,
        steps,
        rewards,
        returns,
        embeddings,
        state_features: states,
        terminated,
        win: terminated && model.is_win(&state),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub episodes: usize,
    pub mean_return: f64,
    pub win_rate: f64,
    /// 1.96 standard errors of the mean return.
    pub ci_half_width: f64,
}

/// Mean and normal-approximation 95% half-width (`1.96 · s / √n`).
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// Greedy (ε = 0) rollouts.
pub fn evaluate<M: DecPomdp>(
    model: &M,
    learner: &Learner,
    episodes: usize,
    rng: &mut RngStream,
) -> Result<EvalResult, MarlError> {
    if episodes == 0 {
        return Err(MarlError::InvalidConfig("evaluation needs at least one episode".into()));
    }
    let mut returns = Vec::with_capacity(episodes);
    let mut wins = 0usize;
    for _ in 0..episodes {
        let trace = run_episode(model, learner, 0.0, rng)?;
        returns.push(trace.total_return());
        wins += trace.win as usize;
    }
    let (mean_return, ci_half_width) = mean_ci(&returns);
    Ok(EvalResult {
        episodes,
        mean_return,
        win_rate: wins as f64 / episodes as f64,
        ci_half_width,
    })
}

/// One evaluation point of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub env_steps: usize,
    pub episodes: usize,
    pub train_steps: usize,
    /// Mean TD loss since the previous evaluation (`None` before training starts).
    pub train_loss: Option<f64>,
    pub epsilon: f64,
    pub eval: EvalResult,
    /// Seconds since the run started. Not part of any deterministic output.
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub learner: Learner,
    pub metrics: Vec<EvalPoint>,
    /// Loss of every train step, in order.
    pub losses: Vec<f64>,
}

/// Independent random streams of one run.
pub struct RunStreams {
    pub init: RngStream,
    pub collect: RngStream,
    pub sample: RngStream,
    root: RngStream,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        let root = RngStream::new(seed);
        Self {
            init: root.derive(&[1]),
            collect: root.derive(&[2]),
            sample: root.derive(&[3]),
            root,
        }
    }

    pub fn eval(&self, index: usize) -> RngStream {
        self.root.derive(&[4, index as u64])
    }
}

pub fn train<M: DecPomdp>(model: &M, variant: VariantKind, cfg: &TrainConfig) -> Result<TrainOutcome, MarlError> {
    train_with(model, variant, cfg, |_| {})
}

/// Alternates episode collection and one TD step per collected episode,
/// evaluating greedily at step 0, every `eval_interval` environment steps
/// and at the end. `on_eval` sees every evaluation point as it is produced.
pub fn train_with<M: DecPomdp>(
    model: &M,
    variant: VariantKind,
    cfg: &TrainConfig,
    mut on_eval: impl FnMut(&EvalPoint),
) -> Result<TrainOutcome, MarlError> {
    cfg.validate()?;
    let started = Instant::now();
    let dims = EnvDims::of(model);
    let mut streams = RunStreams::new(cfg.seed);
    let mut learner = Learner::new(dims, variant, &cfg.net, &mut streams.init)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut metrics = Vec::new();
    let mut losses = Vec::new();
    if cfg.total_steps == 0 {
        return Ok(TrainOutcome { learner, metrics, losses });
    }

    let mut env_steps = 0usize;
    let mut episodes = 0usize;
    let mut since_eval: Vec<f64> = Vec::new();
    let mut next_eval = 0usize;
    let mut last_eval_at: Option<usize> = None;
    let eval_streams = RunStreams::new(cfg.seed);
    let mut record = |learner: &Learner, env_steps: usize, episodes: usize, since: &mut Vec<f64>, metrics: &mut Vec<EvalPoint>| -> Result<(), MarlError> {
        let mut rng = eval_streams.eval(metrics.len());
        let eval = evaluate(model, learner, cfg.eval_episodes, &mut rng)?;
        let train_loss = (!since.is_empty()).then(|| since.iter().sum::<f64>() / since.len() as f64);
        since.clear();
        let point = EvalPoint {
            env_steps,
            episodes,
            train_steps: learner.train_steps,
            train_loss,
            epsilon: cfg.epsilon(env_steps),
            eval,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        on_eval(&point);
        metrics.push(point);
        Ok(())
    };

    while env_steps < cfg.total_steps {
        if env_steps >= next_eval {
            record(&learner, env_steps, episodes, &mut since_eval, &mut metrics)?;
            last_eval_at = Some(env_steps);
            next_eval = env_steps + cfg.eval_interval;
        }
        let eps = cfg.epsilon(env_steps);
        let trace = run_episode(model, &learner, eps, &mut streams.collect)?;
        env_steps += trace.len().max(1);
        episodes += 1;
        buffer.push(EncodedEpisode::from_trace(model, &trace));
        if buffer.can_sample(cfg.batch_size) {
            let sample = buffer.sample(cfg.batch_size, &mut streams.sample);
            let batch = Batch::new(dims, &sample, variant == VariantKind::RawHistory);
            let loss = learner.td_train_step(&batch, cfg)?;
            losses.push(loss);
            since_eval.push(loss);
        }
    }
    if last_eval_at != Some(env_steps) {
        record(&learner, env_steps, episodes, &mut since_eval, &mut metrics)?;
    }
    Ok(TrainOutcome { learner, metrics, losses })
}
