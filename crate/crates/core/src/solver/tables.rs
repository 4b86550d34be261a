use crate::model::{decode_joint, Enumerable};

/// Dense copy of an enumerable model's tables, indexed by joint-action and
/// joint-observation indices.
#[derive(Debug, Clone)]
pub struct Tables {
    pub num_states: usize,
    pub actions: Vec<usize>,
    pub observations: Vec<usize>,
    pub num_joint_actions: usize,
    pub num_joint_obs: usize,
    pub horizon: usize,
    pub discount: f64,
    pub initial: Vec<f64>,
    trans: Vec<f64>,
    obs: Vec<f64>,
    reward: Vec<f64>,
}

impl Tables {
    pub fn from_model<M: Enumerable + ?Sized>(model: &M) -> Self {
        let ns = model.num_states();
        let actions = model.action_radices();
        let observations = model.observation_radices();
        let nja: usize = actions.iter().product();
        let njo: usize = observations.iter().product();
        let mut trans = vec![0.0; ns * nja * ns];
        let mut obs = vec![0.0; nja * ns * njo];
        let mut reward = vec![0.0; ns * nja];
        for ja in 0..nja {
            let a = decode_joint(ja, &actions);
            for s in 0..ns {
                reward[s * nja + ja] = model.reward(s, &a);
                for (s2, p) in model.transition_probs(s, &a).into_iter().enumerate() {
                    trans[(s * nja + ja) * ns + s2] = p;
                }
                for jo in 0..njo {
                    let z = decode_joint(jo, &observations);
                    obs[(ja * ns + s) * njo + jo] = model.observation_prob(&a, s, &z);
                }
            }
        }
        Self {
            num_states: ns,
            actions,
            observations,
            num_joint_actions: nja,
            num_joint_obs: njo,
            horizon: model.horizon(),
            discount: model.discount(),
            initial: model.initial_belief().probs().to_vec(),
            trans,
            obs,
            reward,
        }
    }

    pub fn num_agents(&self) -> usize {
        self.actions.len()
    }

    #[inline]
    pub fn t(&self, s: usize, ja: usize, s2: usize) -> f64 {
        self.trans[(s * self.num_joint_actions + ja) * self.num_states + s2]
    }

    #[inline]
    pub fn o(&self, ja: usize, s2: usize, jo: usize) -> f64 {
        self.obs[(ja * self.num_states + s2) * self.num_joint_obs + jo]
    }

    #[inline]
    pub fn r(&self, s: usize, ja: usize) -> f64 {
        self.reward[s * self.num_joint_actions + ja]
    }

    /// `Σ_s α(s) R(s, a)`.
    pub fn expected_reward(&self, alpha: &[f64], ja: usize) -> f64 {
        alpha
            .iter()
            .enumerate()
            .map(|(s, &w)| if w == 0.0 { 0.0 } else { w * self.r(s, ja) })
            .sum()
    }

    /// `out(s') = Σ_s α(s) T(s' | s, a)`.
    pub fn predict(&self, alpha: &[f64], ja: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (s, &w) in alpha.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (s2, o) in out.iter_mut().enumerate() {
                *o += w * self.t(s, ja, s2);
            }
        }
    }

    /// `out(s') = Ω(z | a, s') pred(s')`.
    pub fn weight(&self, pred: &[f64], ja: usize, jo: usize, out: &mut [f64]) {
        for (s2, o) in out.iter_mut().enumerate() {
            *o = pred[s2] * self.o(ja, s2, jo);
        }
    }
}
