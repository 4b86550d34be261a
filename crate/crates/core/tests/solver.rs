use aerial_core::belief::Belief;
use aerial_core::env::dectiger::*;
use aerial_core::model::{decode_joint, encode_joint, DecPomdp, DiscreteObs, Enumerable, Transition};
use aerial_core::solver::*;
use aerial_core::{JointHistory, LocalStep, RngStream};
use proptest::prelude::*;

fn tiger(variant: DecTigerVariant, h: usize) -> DecTiger {
    dectiger_model(variant, h, 1.0).unwrap()
}

const JOINT_NAMES: [(usize, usize); 9] = [
    (LISTEN, LISTEN),
    (LISTEN, OPEN_LEFT),
    (LISTEN, OPEN_RIGHT),
    (OPEN_LEFT, LISTEN),
    (OPEN_LEFT, OPEN_LEFT),
    (OPEN_LEFT, OPEN_RIGHT),
    (OPEN_RIGHT, LISTEN),
    (OPEN_RIGHT, OPEN_LEFT),
    (OPEN_RIGHT, OPEN_RIGHT),
];

// (Q_MDP(s_L, a), Q_MDP(s_R, a), Q(τ, a)) at the last step with belief (0.5, 0.5).
const FINAL_STEP_VALUES: [(f64, f64, f64); 9] = [
    (-2.0, -2.0, -2.0),
    (-101.0, 9.0, -46.0),
    (9.0, -101.0, -46.0),
    (-101.0, 9.0, -46.0),
    (-50.0, 20.0, -15.0),
    (-100.0, -100.0, -100.0),
    (9.0, -101.0, -46.0),
    (-100.0, -100.0, -100.0),
    (20.0, -50.0, -15.0),
];

#[test]
fn final_step_value_table() {
    let m = tiger(DecTigerVariant::ResetOnOpen, 3);
    let policy = PolicyTree::constant(&m, 3, &[LISTEN, LISTEN]);
    // Two rounds of conflicting reports keep the belief uniform.
    let h = JointHistory::from_steps(
        2,
        &[
            (vec![LISTEN, LISTEN], vec![Z_L, Z_R]),
            (vec![LISTEN, LISTEN], vec![Z_R, Z_L]),
        ],
    )
    .unwrap();
    let b = belief_from_history(&m, &h).unwrap();
    assert!((b.get(S_L) - 0.5).abs() < 1e-15);
    for (&(a0, a1), &(ql, qr, q)) in JOINT_NAMES.iter().zip(&FINAL_STEP_VALUES) {
        assert!((q_mdp(&m, S_L, &[a0, a1], 1) - ql).abs() < 1e-9);
        assert!((q_mdp(&m, S_R, &[a0, a1], 1) - qr).abs() < 1e-9);
        let got = q_under_policy(&m, &policy, &h, &[a0, a1]).unwrap();
        assert!((got - q).abs() < 1e-9, "{a0},{a1}: {got} vs {q}");
    }
}

#[test]
fn mdp_policy_ties_and_trivial_model() {
    let m = tiger(DecTigerVariant::ResetOnOpen, 2);
    let pi = mdp_policy(&m, 2);
    assert_eq!(pi[&(S_R, 1)], vec![OPEN_LEFT, OPEN_LEFT]);
    assert_eq!(pi[&(S_L, 1)], vec![OPEN_RIGHT, OPEN_RIGHT]);
    let c = Constant { horizon: 3 };
    let pi = mdp_policy(&c, 3);
    for k in 1..=3 {
        assert_eq!(pi[&(0, k)], vec![0, 0]);
    }
}

#[test]
fn recurrence_examples() {
    let m = tiger(DecTigerVariant::ResetOnOpen, 2);
    let p = PolicyTree::constant(&m, 2, &[LISTEN, LISTEN]);
    let h = JointHistory::from_steps(2, &[(vec![LISTEN, LISTEN], vec![Z_L, Z_R])]).unwrap();
    assert_eq!(joint_recurrence(&m, &p, &h), 0.15 * 0.85);
    let a = individual_recurrence(&m, &p, 0, h.local(0));
    let b = individual_recurrence(&m, &p, 1, h.local(1));
    assert!((a - 0.5).abs() < 1e-15 && (b - 0.5).abs() < 1e-15);
    assert_ne!(a * b, joint_recurrence(&m, &p, &h));
}

fn random_policy(m: &DecTiger, horizon: usize, seed: u64) -> PolicyTree {
    let mut rng = RngStream::new(seed);
    let size = tree_size(2, horizon);
    let trees = (0..2).map(|_| (0..size).map(|_| rng.below(3)).collect()).collect();
    PolicyTree::from_actions(horizon, m.action_radices(), m.observation_radices(), trees).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recurrence_sums_to_one(seed in any::<u64>(), terminate in any::<bool>(), t in 0usize..=3) {
        let variant = if terminate { DecTigerVariant::TerminateOnOpen } else { DecTigerVariant::ResetOnOpen };
        let m = tiger(variant, 4);
        let p = random_policy(&m, 4, seed);
        let total: f64 = policy_histories(&m, &p, t)
            .iter()
            .map(|h| joint_recurrence(&m, &p, h))
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "{}", total);
    }

    #[test]
    fn individual_recurrence_is_the_marginal(seed in any::<u64>(), agent in 0usize..2, t in 0usize..=2) {
        let m = tiger(DecTigerVariant::ResetOnOpen, 3);
        let p = random_policy(&m, 3, seed);
        let histories = policy_histories(&m, &p, t);
        for h in &histories {
            let local = h.local(agent);
            let marginal: f64 = histories
                .iter()
                .filter(|g| g.local(agent) == local)
                .map(|g| joint_recurrence(&m, &p, g))
                .sum();
            let got = individual_recurrence(&m, &p, agent, local);
            prop_assert!((got - marginal).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_value_decomposes_over_histories(seed in any::<u64>(), t in 0usize..3) {
        // value = Σ_{c<t} E[r_c] + Σ_τ P(τ) Q(τ, π(τ)) for histories of length t (γ = 1).
        let m = tiger(DecTigerVariant::ResetOnOpen, 3);
        let p = random_policy(&m, 3, seed);
        let tables = Tables::from_model(&m);
        let mut prefix = 0.0;
        for c in 0..t {
            for h in policy_histories(&m, &p, c) {
                let a = policy_action(&p, &h);
                prefix += tables.expected_reward(&forward_message(&m, &h), encode_joint(&a, &tables.actions));
            }
        }
        let mut rest = 0.0;
        for h in policy_histories(&m, &p, t) {
            let w = joint_recurrence(&m, &p, &h);
            if w > 0.0 {
                rest += w * q_under_policy(&m, &p, &h, &policy_action(&p, &h)).unwrap();
            }
        }
        prop_assert!((prefix + rest - policy_value(&m, &p)).abs() < 1e-9);
    }
}

fn policy_action(p: &PolicyTree, h: &JointHistory) -> Vec<usize> {
    (0..p.num_agents())
        .map(|j| p.action(j, &h.local_observations(j, h.len())))
        .collect()
}

#[test]
fn optimal_policy_decomposes_over_histories() {
    let m = tiger(DecTigerVariant::ResetOnOpen, 3);
    let (p, v) = brute_force_optimal(&m, 3).unwrap();
    let tables = Tables::from_model(&m);
    for t in 0..3 {
        let mut total = 0.0;
        for c in 0..t {
            for h in policy_histories(&m, &p, c) {
                let a = encode_joint(&policy_action(&p, &h), &tables.actions);
                total += tables.expected_reward(&forward_message(&m, &h), a);
            }
        }
        for h in policy_histories(&m, &p, t) {
            let w = joint_recurrence(&m, &p, &h);
            total += w * q_under_policy(&m, &p, &h, &policy_action(&p, &h)).unwrap();
        }
        assert!((total - v).abs() < 1e-9, "t={t}: {total} vs {v}");
    }
}

#[test]
fn policy_value_examples() {
    let m1 = tiger(DecTigerVariant::ResetOnOpen, 1);
    assert_eq!(policy_value(&m1, &PolicyTree::constant(&m1, 1, &[LISTEN, LISTEN])), -2.0);
    assert_eq!(policy_value(&m1, &PolicyTree::constant(&m1, 1, &[OPEN_LEFT, OPEN_LEFT])), -15.0);
    let m2 = tiger(DecTigerVariant::ResetOnOpen, 2);
    let (_, v) = brute_force_optimal(&m2, 2).unwrap();
    assert!((v + 4.0).abs() < 1e-12);
}

#[test]
fn brute_force_and_maa_agree() {
    for variant in [DecTigerVariant::ResetOnOpen, DecTigerVariant::TerminateOnOpen] {
        for h in 1..=3 {
            let m = tiger(variant, h);
            let (bp, bv) = brute_force_optimal(&m, h).unwrap();
            let (mp, mv) = maa_star(&m, h).unwrap();
            assert!((bv - mv).abs() < 1e-9, "{variant:?} T={h}: {bv} vs {mv}");
            assert!((policy_value(&m, &bp) - bv).abs() < 1e-9);
            assert!((policy_value(&m, &mp) - mv).abs() < 1e-9);
            let opts = MaaOptions {
                heuristic: Heuristic::QPomdp,
                ..MaaOptions::default()
            };
            let (_, qv, _) = maa_star_with(&m, h, &opts).unwrap();
            assert!((bv - qv).abs() < 1e-9);
        }
    }
}

#[test]
fn four_step_optimum() {
    let m = tiger(DecTigerVariant::ResetOnOpen, 4);
    let (p, v) = maa_star(&m, 4).unwrap();
    assert!((v - 4.80).abs() < 0.01, "{v}");
    assert!((policy_value(&m, &p) - v).abs() < 1e-9);
    let opts = MaaOptions {
        heuristic: Heuristic::QPomdp,
        ..MaaOptions::default()
    };
    let (_, qv, _) = maa_star_with(&m, 4, &opts).unwrap();
    assert!((qv - v).abs() < 1e-9);
}

#[test]
fn known_three_step_optimum() {
    let m = tiger(DecTigerVariant::ResetOnOpen, 3);
    let (_, v) = maa_star(&m, 3).unwrap();
    assert!((v - 5.1908125).abs() < 1e-9);
}

/// Best value over every decentralized continuation after `h` when `a` is
/// taken now, by enumerating each agent's continuation forest.
fn best_continuation(tables: &Tables, belief: &[f64], a: usize, steps: usize) -> f64 {
    if steps == 1 {
        return tables.expected_reward(belief, a);
    }
    // Continuation forest per agent: nodes of a depth-`steps` tree minus its root.
    let size = tree_size(2, steps) - 1;
    let per_agent = 3usize.pow(size as u32);
    let mut best = f64::NEG_INFINITY;
    for i0 in 0..per_agent {
        let f0 = decode_joint(i0, &vec![3; size]);
        for i1 in 0..per_agent {
            let f1 = decode_joint(i1, &vec![3; size]);
            let v = cont_value(tables, belief, a, &[&f0, &f1], [0, 0], steps);
            best = best.max(v);
        }
    }
    best
}

fn cont_value(tables: &Tables, belief: &[f64], a: usize, forests: &[&Vec<usize>; 2], nodes: [usize; 2], steps: usize) -> f64 {
    let r = tables.expected_reward(belief, a);
    if steps == 1 {
        return r;
    }
    let mut pred = vec![0.0; tables.num_states];
    let mut post = vec![0.0; tables.num_states];
    tables.predict(belief, a, &mut pred);
    let mut cont = 0.0;
    for jo in 0..tables.num_joint_obs {
        tables.weight(&pred, a, jo, &mut post);
        let p: f64 = post.iter().sum();
        if p == 0.0 {
            continue;
        }
        let b: Vec<f64> = post.iter().map(|x| x / p).collect();
        let z = decode_joint(jo, &tables.observations);
        let child = [2 * nodes[0] + 1 + z[0], 2 * nodes[1] + 1 + z[1]];
        let next = encode_joint(&[forests[0][child[0] - 1], forests[1][child[1] - 1]], &tables.actions);
        cont += p * cont_value(tables, &b, next, forests, child, steps - 1);
    }
    r + tables.discount * cont
}

#[test]
fn mdp_values_bound_optimal_continuations() {
    let horizon = 3;
    let m = tiger(DecTigerVariant::ResetOnOpen, horizon);
    let tables = Tables::from_model(&m);
    let qm = QMdpTable::new(&tables, horizon);
    let mut frontier = vec![JointHistory::new(2)];
    for t in 0..=2 {
        for h in &frontier {
            let b = belief_from_history(&m, h).unwrap();
            for a in 0..9 {
                let upper = b.expect(|s| qm.q(s, a, horizon - t));
                let exact = best_continuation(&tables, b.probs(), a, horizon - t);
                assert!(upper >= exact - 1e-9, "t={t} a={a}: {upper} < {exact}");
            }
        }
        let mut next = Vec::new();
        for h in &frontier {
            for a in 0..9 {
                for z in 0..4 {
                    let mut g = h.clone();
                    g.push(&decode_joint(a, &[3, 3]), &decode_joint(z, &[2, 2])).unwrap();
                    next.push(g);
                }
            }
        }
        frontier = next;
    }
}

#[test]
fn enumeration_budget_is_enforced() {
    let m = tiger(DecTigerVariant::ResetOnOpen, 4);
    assert!(enumeration_size(&m, 3) <= ENUMERATION_BUDGET);
    let err = brute_force_optimal(&m, 4).unwrap_err();
    assert!(err.to_string().contains("enumeration budget exceeded"));
}

#[test]
fn consistency_examples() {
    let m = tiger(DecTigerVariant::ResetOnOpen, 2);
    let p = PolicyTree::constant(&m, 2, &[LISTEN, LISTEN]);
    assert!(p.is_consistent(&JointHistory::new(2)));
    let bad = JointHistory::from_steps(2, &[(vec![OPEN_LEFT, LISTEN], vec![Z_L, Z_L])]).unwrap();
    assert!(!p.is_consistent(&bad));
    let ok = JointHistory::from_steps(2, &[(vec![LISTEN, LISTEN], vec![Z_L, Z_L])]).unwrap();
    assert!(p.is_consistent(&ok));
    assert_eq!(individual_recurrence(&m, &p, 0, &[LocalStep { action: OPEN_LEFT, observation: Z_L }]), 0.0);
}

/// One state, one action per agent, constant reward.
struct Constant {
    horizon: usize,
}

impl DecPomdp for Constant {
    type State = usize;
    type Obs = DiscreteObs;

    fn num_agents(&self) -> usize {
        2
    }
    fn num_actions(&self, _agent: usize) -> usize {
        1
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn discount(&self) -> f64 {
        0.5
    }
    fn sample_initial_state(&self, _rng: &mut RngStream) -> usize {
        0
    }
    fn initial_observations(&self, _state: &usize, _rng: &mut RngStream) -> Vec<DiscreteObs> {
        vec![DiscreteObs::Null; 2]
    }
    fn sample_transition(&self, _s: &usize, _a: &[usize], _rng: &mut RngStream) -> Transition<usize, DiscreteObs> {
        Transition {
            next_state: 0,
            observations: vec![DiscreteObs::Symbol(0); 2],
            reward: 3.0,
        }
    }
    fn is_terminal(&self, _state: &usize) -> bool {
        false
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn encode_obs(&self, _obs: &DiscreteObs) -> Vec<f64> {
        vec![0.0]
    }
    fn negate_obs(&self, obs: &DiscreteObs) -> DiscreteObs {
        *obs
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn state_features(&self, _state: &usize) -> Vec<f64> {
        vec![1.0]
    }
}

impl Enumerable for Constant {
    fn num_states(&self) -> usize {
        1
    }
    fn num_observations(&self, _agent: usize) -> usize {
        1
    }
    fn transition_probs(&self, _s: usize, _a: &[usize]) -> Vec<f64> {
        vec![1.0]
    }
    fn observation_prob(&self, _a: &[usize], _s: usize, _z: &[usize]) -> f64 {
        1.0
    }
    fn reward(&self, _s: usize, _a: &[usize]) -> f64 {
        3.0
    }
    fn initial_belief(&self) -> Belief {
        Belief::point(1, 0)
    }
}

#[test]
fn single_action_model_has_a_unique_policy() {
    let m = Constant { horizon: 4 };
    let expected = 3.0 * (1.0 + 0.5 + 0.25 + 0.125);
    let (p, v) = brute_force_optimal(&m, 4).unwrap();
    assert!((v - expected).abs() < 1e-12);
    assert_eq!(p.nodes(0), &[0, 0, 0, 0]);
    let (_, mv) = maa_star(&m, 4).unwrap();
    assert!((mv - expected).abs() < 1e-12);
}
