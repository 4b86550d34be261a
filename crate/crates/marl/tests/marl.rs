use aerial_core::env::battle::NOOP;
use aerial_core::env::dectiger::{LISTEN, OPEN_LEFT};
use aerial_core::env::{battle_model, dectiger_model, messy_wrap, DecTigerVariant, MessyBattleConfig, MessyConfig};
use aerial_core::solver::{policy_value, PolicyTree};
use aerial_core::{encode_joint, DecPomdp, RngStream};
use aerial_marl::*;
use aerial_nn::{check_parameter_gradients, AttentionConfig, MixerConfig, Tape, Tensor};

fn tiger(t: usize) -> aerial_core::env::DecTiger {
    dectiger_model(DecTigerVariant::ResetOnOpen, t, 1.0).unwrap()
}

fn small_net() -> NetConfig {
    NetConfig {
        hidden: 6,
        attention: AttentionConfig {
            heads: 2,
            width: 5,
            embed_width: 4,
            embed_layers: 3,
        },
        mixer: MixerConfig {
            embed: 4,
            hyper_hidden: 5,
        },
    }
}

fn learner<M: DecPomdp>(m: &M, v: VariantKind, seed: u64) -> Learner {
    Learner::new(EnvDims::of(m), v, &small_net(), &mut RngStream::new(seed)).unwrap()
}

fn zero_params(l: &mut Learner) {
    let ids: Vec<_> = l.params.ids().collect();
    for id in ids {
        l.params.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Utilities fixed to `bias` for every agent and input.
fn constant_utilities(l: &mut Learner, bias: &[f64]) {
    l.params.get_mut(l.agent.head.weight).data_mut().iter_mut().for_each(|v| *v = 0.0);
    l.params.get_mut(l.agent.head.bias).data_mut().copy_from_slice(bias);
}

/// Mixer reduced to `Q_tot = elu(Σ_i Q_i)`.
fn additive_mixer(l: &mut Learner) {
    let m = l.mixer.clone();
    for mlp in [&m.hyper_w1, &m.hyper_b1, &m.hyper_w2, &m.value] {
        for layer in &mlp.layers {
            l.params.get_mut(layer.weight).data_mut().iter_mut().for_each(|v| *v = 0.0);
            l.params.get_mut(layer.bias).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let w1 = l.params.get_mut(m.hyper_w1.layers[1].bias);
    for i in 0..m.agents {
        w1.data_mut()[i * m.embed] = 1.0;
    }
    l.params.get_mut(m.hyper_w2.layers[1].bias).data_mut()[0] = 1.0;
}

#[test]
fn ties_break_to_lowest_action() {
    let mut rng = RngStream::new(0);
    let a = epsilon_greedy(&[1.0, 1.0, 0.5], &[true; 3], 1, 0.0, &mut rng);
    assert_eq!(a, vec![0]);
    let a = epsilon_greedy(&[0.5, 1.0, 0.7, 0.0, 3.0, 3.0], &[true, false, true, true, true, true], 2, 0.0, &mut rng);
    assert_eq!(a, vec![2, 1]);
}

#[test]
fn full_exploration_is_uniform_over_available_actions() {
    let mut rng = RngStream::new(1);
    let draws = 100_000;
    let mut counts = [0usize; 4];
    let mut masked = [0usize; 4];
    for _ in 0..draws {
        let a = epsilon_greedy(&[5.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0], &[true, true, true, true, true, false, true, true], 2, 1.0, &mut rng);
        counts[a[0]] += 1;
        masked[a[1]] += 1;
    }
    let check = |c: usize, k: f64| {
        let p = 1.0 / k;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((c as f64 - mean).abs() <= 3.0 * sd, "{c} vs {mean} ± 3·{sd}");
    };
    counts.iter().for_each(|&c| check(c, 4.0));
    assert_eq!(masked[1], 0);
    for j in [0, 2, 3] {
        check(masked[j], 3.0);
    }
}

#[test]
fn greedy_joint_action_maximizes_mixed_value() {
    // IGM: per-agent argmaxes give the joint argmax of Q_tot, checked by
    // enumerating all 9 joint actions on 100 sampled Dec-Tiger histories.
    let m = tiger(4);
    let cfg = TrainConfig {
        total_steps: 1_500,
        batch_size: 8,
        gamma: 1.0,
        eval_interval: 100_000,
        eval_episodes: 1,
        epsilon_anneal_steps: 1_000,
        seed: 3,
        net: small_net(),
        ..TrainConfig::default()
    };
    for variant in [VariantKind::Aerial, VariantKind::StateBased] {
        let out = train(&m, variant, &cfg).unwrap();
        let l = &out.learner;
        let mut rng = RngStream::new(77);
        let mut checked = 0;
        while checked < 100 {
            let trace = run_episode(&m, l, 1.0, &mut rng).unwrap();
            let ep = EncodedEpisode::from_trace(&m, &trace);
            let batch = Batch::new(l.dims, &[&ep], false);
            let (q, c) = l.utilities_and_conditioner(&batch).unwrap();
            for t in 0..batch.steps {
                let qa = q.row_slice(2 * t).to_vec();
                let qb = q.row_slice(2 * t + 1).to_vec();
                let cond = Tensor::matrix(9, c.cols(), c.row_slice(t).repeat(9));
                let mut pairs = Vec::with_capacity(18);
                for a in 0..3 {
                    for b in 0..3 {
                        pairs.extend([qa[a], qb[b]]);
                    }
                }
                let totals = l.mix(&Tensor::matrix(9, 2, pairs), &cond).unwrap();
                let greedy = encode_joint(&[masked_argmax(&qa, &[true; 3]), masked_argmax(&qb, &[true; 3])], &[3, 3]);
                let best = totals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(totals[greedy] >= best - 1e-12, "{variant}: greedy {} vs max {best}", totals[greedy]);
                let runner_up = totals
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != greedy)
                    .map(|(_, &v)| v)
                    .fold(f64::NEG_INFINITY, f64::max);
                if best - runner_up > 1e-9 {
                    let joint = totals.iter().position(|&v| v == best).unwrap();
                    assert_eq!(joint, greedy);
                }
                checked += 1;
            }
        }
    }
}

#[test]
fn dectiger_episodes_respect_the_horizon_and_record_embeddings() {
    let m = tiger(4);
    let l = learner(&m, VariantKind::Aerial, 0);
    let mut rng = RngStream::new(5);
    for _ in 0..20 {
        let t = run_episode(&m, &l, 0.5, &mut rng).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.rewards.len(), 4);
        assert_eq!(t.steps.len(), 5);
        let e = t.embeddings.as_ref().unwrap();
        assert_eq!(e.len(), 4);
        assert!(e.iter().all(|r| r.len() == small_net().attention.embed_width));
        assert!(t.state_features.is_none());
    }
    let s = learner(&m, VariantKind::StateBased, 0);
    let t = run_episode(&m, &s, 0.5, &mut rng).unwrap();
    assert_eq!(t.state_features.as_ref().unwrap().len(), 5);
    assert!(t.embeddings.is_none());
}

#[test]
fn episodes_replay_exactly_under_a_seed() {
    let m = messy_wrap(battle_model(MessyBattleConfig::default(), 0.99).unwrap(), MessyConfig::default()).unwrap();
    let l = learner(&m, VariantKind::Aerial, 9);
    let run = || {
        let mut rng = RngStream::new(1234);
        let t = run_episode(&m, &l, 0.3, &mut rng).unwrap();
        (EncodedEpisode::from_trace(&m, &t), t.embeddings.clone(), t.returns.clone())
    };
    assert_eq!(run(), run());
}

#[test]
fn terminal_and_bootstrapped_targets_by_hand() {
    let m = tiger(2);
    let mut l = learner(&m, VariantKind::StateBased, 1);
    zero_params(&mut l);
    constant_utilities(&mut l, &[1.0, 2.0, 0.5]);
    additive_mixer(&mut l);
    l.update_target().unwrap();
    let ep = EncodedEpisode {
        len: 2,
        obs: vec![vec![0.0; 4]; 3],
        actions: vec![vec![LISTEN, OPEN_LEFT], vec![2, 2]],
        avail: vec![vec![true; 6]; 3],
        rewards: vec![-2.0, 20.0],
        states: Some(vec![vec![1.0, 0.0]; 3]),
    };
    let batch = Batch::new(l.dims, &[&ep], false);
    // Greedy target actions are both 1 (utility 2): Q_tot' = 4.
    let y = l.td_targets(&batch, 1.0, false).unwrap();
    assert_eq!(y, vec![-2.0 + 4.0, 20.0]);
    let y0 = l.td_targets(&batch, 0.0, false).unwrap();
    assert_eq!(y0, vec![-2.0, 20.0]);
    let mut tape = Tape::new();
    let out = l.td_loss(&mut tape, &l.params, &batch, &y, None).unwrap();
    // Q_tot = (1 + 2, 0.5 + 0.5); loss = ((3 − 2)² + (1 − 20)²) / 2.
    assert_eq!(tape.value(out.q_tot).data(), &[3.0, 1.0]);
    assert_eq!(tape.value(out.loss).item(), 181.0);
    let cfg = TrainConfig {
        gamma: 1.0,
        ..TrainConfig::default()
    };
    assert_eq!(l.td_train_step(&batch, &cfg).unwrap(), 181.0);
}

#[test]
fn no_discount_means_targets_equal_rewards() {
    let m = tiger(4);
    for v in VariantKind::ALL {
        let l = learner(&m, v, 2);
        let mut rng = RngStream::new(3);
        let eps: Vec<EncodedEpisode> = (0..5)
            .map(|_| EncodedEpisode::from_trace(&m, &run_episode(&m, &l, 1.0, &mut rng).unwrap()))
            .collect();
        let refs: Vec<&EncodedEpisode> = eps.iter().collect();
        let batch = Batch::new(l.dims, &refs, v == VariantKind::RawHistory);
        assert_eq!(l.td_targets(&batch, 0.0, false).unwrap(), batch.rewards);
    }
}

#[test]
fn batches_pad_and_mask_short_episodes() {
    let m = messy_wrap(battle_model(MessyBattleConfig::default(), 0.99).unwrap(), MessyConfig::identity()).unwrap();
    let l = learner(&m, VariantKind::RawHistory, 0);
    let mut rng = RngStream::new(8);
    let a = EncodedEpisode::from_trace(&m, &run_episode(&m, &l, 1.0, &mut rng).unwrap());
    let mut b = a.clone();
    b.len = 2;
    b.obs.truncate(3);
    b.actions.truncate(2);
    b.avail.truncate(3);
    b.rewards.truncate(2);
    b.states.as_mut().unwrap().truncate(3);
    let batch = Batch::new(l.dims, &[&a, &b], true);
    assert_eq!(batch.steps, a.len);
    assert_eq!(batch.transitions(), (a.len + 2) as f64);
    assert_eq!(&batch.bootstrap[..6], &[1.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
    let raw = batch.raw.as_ref().unwrap();
    assert_eq!(raw[0].cols(), l.dims.raw_history_width());
    // Decision point 1 holds two history slots, the rest of the history is zero.
    let slot = l.dims.history_slot();
    let row = raw[1].row_slice(0);
    assert!(row[2 * slot..l.dims.raw_history_width() - l.dims.state_dim].iter().all(|&v| v == 0.0));
    assert_eq!(&row[l.dims.raw_history_width() - l.dims.state_dim..], a.states.as_ref().unwrap()[1].as_slice());
    // Padded decision points of the short episode are all zero.
    assert!(batch.inputs[3].row_slice(l.dims.agents).iter().all(|&v| v == 0.0));
}

#[test]
fn null_run_returns_initial_parameters() {
    let m = tiger(4);
    let cfg = TrainConfig {
        total_steps: 0,
        net: small_net(),
        seed: 4,
        ..TrainConfig::default()
    };
    let out = train(&m, VariantKind::Aerial, &cfg).unwrap();
    assert!(out.metrics.is_empty() && out.losses.is_empty());
    let fresh = Learner::new(EnvDims::of(&m), VariantKind::Aerial, &small_net(), &mut RunStreams::new(4).init).unwrap();
    for id in fresh.params.ids() {
        assert_eq!(fresh.params.get(id), out.learner.params.get(id));
    }
}

#[test]
fn identical_seeds_give_identical_loss_sequences() {
    let m = messy_wrap(battle_model(MessyBattleConfig::default(), 0.99).unwrap(), MessyConfig::default()).unwrap();
    let cfg = TrainConfig {
        total_steps: 400,
        batch_size: 4,
        eval_interval: 200,
        eval_episodes: 2,
        seed: 11,
        net: small_net(),
        ..TrainConfig::default()
    };
    let a = train(&m, VariantKind::Aerial, &cfg).unwrap();
    let b = train(&m, VariantKind::Aerial, &cfg).unwrap();
    assert!(!a.losses.is_empty());
    assert_eq!(a.losses, b.losses);
    let strip = |v: &[EvalPoint]| v.iter().map(|p| (p.env_steps, p.eval)).collect::<Vec<_>>();
    assert_eq!(strip(&a.metrics), strip(&b.metrics));
    let c = train(&m, VariantKind::Aerial, &TrainConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(a.losses, c.losses);
}

#[test]
fn memory_conditioned_variants_never_read_the_state() {
    let cfg = TrainConfig {
        total_steps: 200,
        batch_size: 4,
        eval_interval: 100,
        eval_episodes: 2,
        net: small_net(),
        ..TrainConfig::default()
    };
    for v in VariantKind::ALL {
        let probe = StateProbe::new(messy_wrap(battle_model(MessyBattleConfig::default(), 0.99).unwrap(), MessyConfig::default()).unwrap());
        train(&probe, v, &cfg).unwrap();
        if v.uses_state() {
            assert!(probe.state_reads() > 0, "{v}");
        } else {
            assert_eq!(probe.state_reads(), 0, "{v}");
        }
    }
}

#[test]
fn deterministic_policy_on_deterministic_battle_has_zero_variance() {
    let m = messy_wrap(battle_model(MessyBattleConfig::default(), 0.99).unwrap(), MessyConfig::identity()).unwrap();
    let l = learner(&m, VariantKind::Aerial, 6);
    let r = evaluate(&m, &l, 10, &mut RngStream::new(1)).unwrap();
    assert_eq!(r.ci_half_width, 0.0);
}

#[test]
fn noop_allies_never_win() {
    let m = messy_wrap(battle_model(MessyBattleConfig::default(), 0.99).unwrap(), MessyConfig::default()).unwrap();
    let mut l = learner(&m, VariantKind::StateBased, 6);
    let mut bias = vec![0.0; l.dims.actions];
    bias[NOOP] = 1.0;
    constant_utilities(&mut l, &bias);
    let r = evaluate(&m, &l, 50, &mut RngStream::new(2)).unwrap();
    assert_eq!(r.win_rate, 0.0);
}

#[test]
fn always_open_left_matches_exact_policy_value() {
    let m = tiger(4);
    let mut l = learner(&m, VariantKind::Aerial, 7);
    constant_utilities(&mut l, &[0.0, 1.0, 0.0]);
    let episodes = 20_000;
    let r = evaluate(&m, &l, episodes, &mut RngStream::new(3)).unwrap();
    let exact = policy_value(&m, &PolicyTree::constant(&m, 4, &[OPEN_LEFT, OPEN_LEFT]));
    assert_eq!(exact, -60.0);
    // ci_half_width is 1.96 standard errors; allow 4.
    assert!((r.mean_return - exact).abs() <= 4.0 / 1.96 * r.ci_half_width, "{} vs {exact}", r.mean_return);
}

fn random_batch<M: DecPomdp>(m: &M, l: &Learner, seed: u64, episodes: usize) -> Batch {
    let mut rng = RngStream::new(seed);
    let eps: Vec<EncodedEpisode> = (0..episodes)
        .map(|_| EncodedEpisode::from_trace(m, &run_episode(m, l, 1.0, &mut rng).unwrap()))
        .collect();
    let refs: Vec<&EncodedEpisode> = eps.iter().collect();
    Batch::new(l.dims, &refs, l.variant == VariantKind::RawHistory)
}

#[test]
fn td_loss_gradients_match_finite_differences() {
    // The detached agent memory is held at its unperturbed value so finite
    // differences see the same partial derivative the tape computes.
    let m = tiger(3);
    let mut accepted = 0;
    let mut seed = 0;
    while accepted < 20 {
        assert!(seed < 60, "too many instances near kinks");
        let variant = VariantKind::ALL[seed as usize % 4];
        let l = learner(&m, variant, 100 + seed);
        let batch = random_batch(&m, &l, 200 + seed, 3);
        // Dec-Tiger returns reach ±100, which puts the loss near 1e4 and
        // the finite-difference roundoff above the tolerance for small
        // entries, so the regression targets are drawn on a unit scale.
        let mut rng = RngStream::new(300 + seed);
        let targets: Vec<f64> = (0..batch.rewards.len()).map(|_| 2.0 * rng.uniform() - 1.0).collect();
        let mut tape = Tape::new();
        let base = l.td_loss(&mut tape, &l.params, &batch, &targets, None).unwrap();
        let memory = base.memory.clone();
        let mut store = l.params.clone();
        let report = check_parameter_gradients(&mut store, 1e-5, 1e-6, |t, s| {
            l.td_loss(t, s, &batch, &targets, memory.as_ref())
                .map(|o| o.loss)
                .map_err(|e| match e {
                    MarlError::Nn(e) => e,
                    other => panic!("{other}"),
                })
        })
        .unwrap();
        seed += 1;
        if report.kink_margin < 1e-3 {
            continue;
        }
        assert!(
            report.max_relative_error < 1e-4,
            "{variant} seed {}: {} [{}] {:e}",
            seed - 1,
            report.worst_parameter,
            report.worst_index,
            report.max_relative_error
        );
        accepted += 1;
    }
}

#[test]
fn mixing_path_sends_no_gradient_into_agent_memory_parameters() {
    let m = tiger(3);
    for v in [VariantKind::Aerial, VariantKind::NoAttention] {
        let l = learner(&m, v, 5);
        let batch = random_batch(&m, &l, 6, 4);
        let targets = l.td_targets(&batch, 1.0, false).unwrap();
        let mut tape = Tape::new();
        let out = l.td_loss(&mut tape, &l.params, &batch, &targets, None).unwrap();
        let grads = tape.backward(out.loss).unwrap();
        let gru = [l.agent.gru.w_ih, l.agent.gru.w_hh, l.agent.gru.b_ih, l.agent.gru.b_hh];
        // Total GRU gradient equals the utility-path gradient alone: recompute
        // with the conditioner held constant and compare.
        let mut tape2 = Tape::new();
        let fixed = l.td_loss(&mut tape2, &l.params, &batch, &targets, out.memory.as_ref()).unwrap();
        let grads2 = tape2.backward(fixed.loss).unwrap();
        let mut norm = 0.0;
        for id in gru {
            let a = grads.param(id).unwrap();
            let b = grads2.param(id).unwrap();
            assert_eq!(a.data(), b.data());
            norm += a.data().iter().map(|v| v * v).sum::<f64>();
        }
        assert!(norm > 0.0, "{v}: utility path should reach the GRU");
        if let Some(rec) = &l.rec {
            assert!(grads.param(rec.post.layers[0].weight).is_some());
        }
    }
}
