//! MessyBattle: a small grid micro-combat scenario.
//!
//! `N` learning allies fight `M` scripted enemies on a `width × height` grid.
//! Allies start in the left column and enemies in the right column, so the
//! base initial state is deterministic. Every step the allies act first
//! (attacks, then moves, in agent order) and the surviving enemies respond with
//! a focus-fire script: attack the weakest ally in range, otherwise walk
//! towards the nearest ally within sight, otherwise hold position. Distances
//! are Chebyshev distances.
//!
//! Actions per ally: `0` no-op, `1..=4` move north/south/east/west,
//! `5 + j` attack enemy `j`. Attacks on dead, out-of-range enemies act as a
//! no-op. Dead allies may only no-op.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{DecPomdp, Transition};
use crate::rng::RngStream;

pub const NOOP: usize = 0;
pub const MOVE_NORTH: usize = 1;
pub const MOVE_SOUTH: usize = 2;
pub const MOVE_EAST: usize = 3;
pub const MOVE_WEST: usize = 4;
pub const ATTACK_BASE: usize = 5;

const OWN_FEATURES: usize = 3;
const OTHER_FEATURES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnemyPolicy {
    #[default]
    FocusFire,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MessyBattleConfig {
    pub width: usize,
    pub height: usize,
    pub num_allies: usize,
    pub num_enemies: usize,
    pub unit_health: f64,
    pub attack_damage: f64,
    pub attack_range: usize,
    pub sight_range: usize,
    pub enemy_policy: EnemyPolicy,
    pub max_steps: usize,
}

impl Default for MessyBattleConfig {
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
            num_allies: 3,
            num_enemies: 3,
            unit_health: 10.0,
            attack_damage: 2.0,
            attack_range: 1,
            sight_range: 2,
            enemy_policy: EnemyPolicy::FocusFire,
            max_steps: 30,
        }
    }
}

impl MessyBattleConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.num_allies == 0 || self.num_enemies == 0 {
            return bad("num_allies and num_enemies must be >= 1".into());
        }
        if self.sight_range < self.attack_range {
            return bad(format!(
                "sight_range {} < attack_range {}",
                self.sight_range, self.attack_range
            ));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be >= 1".into());
        }
        if self.width < 2 || self.height == 0 {
            return bad("grid must be at least 2 wide and 1 high".into());
        }
        if self.num_allies > self.height || self.num_enemies > self.height {
            return bad(format!(
                "{} rows cannot hold {} allies / {} enemies",
                self.height, self.num_allies, self.num_enemies
            ));
        }
        if !(self.unit_health > 0.0) || !(self.attack_damage > 0.0) {
            return bad("unit_health and attack_damage must be positive".into());
        }
        if self.attack_damage > self.unit_health {
            return bad("attack_damage must not exceed unit_health".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unit {
    pub x: i64,
    pub y: i64,
    pub health: f64,
}

impl Unit {
    pub fn alive(&self) -> bool {
        self.health > 0.0
    }

    fn distance(&self, other: &Unit) -> usize {
        (self.x - other.x).abs().max((self.y - other.y).abs()) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BattleState {
    pub allies: Vec<Unit>,
    pub enemies: Vec<Unit>,
}

impl BattleState {
    pub fn enemy_health(&self) -> f64 {
        self.enemies.iter().map(|u| u.health.max(0.0)).sum()
    }

    pub fn ally_health(&self) -> f64 {
        self.allies.iter().map(|u| u.health.max(0.0)).sum()
    }

    fn occupied(&self, x: i64, y: i64) -> bool {
        self.allies
            .iter()
            .chain(self.enemies.iter())
            .any(|u| u.alive() && u.x == x && u.y == y)
    }
}

#[derive(Debug, Clone)]
pub struct MessyBattle {
    config: MessyBattleConfig,
    discount: f64,
}

pub fn battle_model(config: MessyBattleConfig, discount: f64) -> Result<MessyBattle, ModelError> {
    config.validate()?;
    if !(0.0..=1.0).contains(&discount) {
        return Err(ModelError::InvalidConfig(format!(
            "discount {discount} outside [0, 1]"
        )));
    }
    Ok(MessyBattle { config, discount })
}

impl MessyBattle {
    pub fn config(&self) -> &MessyBattleConfig {
        &self.config
    }

    fn total_enemy_health(&self) -> f64 {
        self.config.num_enemies as f64 * self.config.unit_health
    }

    fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.config.width && (y as usize) < self.config.height
    }

    fn move_target(unit: &Unit, action: usize) -> (i64, i64) {
        match action {
            MOVE_NORTH => (unit.x, unit.y + 1),
            MOVE_SOUTH => (unit.x, unit.y - 1),
            MOVE_EAST => (unit.x + 1, unit.y),
            MOVE_WEST => (unit.x - 1, unit.y),
            _ => (unit.x, unit.y),
        }
    }

    /// Damage actually removed from `target` (capped at its remaining health).
    fn hit(&self, target: &mut Unit) -> f64 {
        let dealt = self.config.attack_damage.min(target.health.max(0.0));
        target.health -= dealt;
        if target.health <= 0.0 {
            target.health = 0.0;
        }
        dealt
    }

    fn enemy_turn(&self, state: &mut BattleState) -> f64 {
        let mut taken = 0.0;
        for e in 0..state.enemies.len() {
            let enemy = state.enemies[e];
            if !enemy.alive() {
                continue;
            }
            let target = state
                .allies
                .iter()
                .enumerate()
                .filter(|(_, a)| a.alive() && enemy.distance(a) <= self.config.attack_range)
                .min_by(|(i, a), (j, b)| a.health.total_cmp(&b.health).then(i.cmp(j)))
                .map(|(i, _)| i);
            if let Some(i) = target {
                taken += self.hit(&mut state.allies[i]);
                continue;
            }
            let nearest = state
                .allies
                .iter()
                .enumerate()
                .filter(|(_, a)| a.alive() && enemy.distance(a) <= self.config.sight_range)
                .min_by_key(|(i, a)| (enemy.distance(a), *i))
                .map(|(_, a)| *a);
            let Some(goal) = nearest else { continue };
            let dx = (goal.x - enemy.x).signum();
            let dy = (goal.y - enemy.y).signum();
            for (nx, ny) in [(enemy.x + dx, enemy.y), (enemy.x, enemy.y + dy)] {
                if (nx, ny) != (enemy.x, enemy.y) && self.in_bounds(nx, ny) && !state.occupied(nx, ny) {
                    state.enemies[e].x = nx;
                    state.enemies[e].y = ny;
                    break;
                }
            }
        }
        taken
    }

    fn observe(&self, state: &BattleState, agent: usize) -> Vec<f64> {
        let cfg = &self.config;
        let mut obs = vec![0.0; self.obs_dim()];
        let me = state.allies[agent];
        if !me.alive() {
            return obs;
        }
        obs[0] = me.health / cfg.unit_health;
        obs[1] = me.x as f64 / (cfg.width - 1).max(1) as f64;
        obs[2] = me.y as f64 / (cfg.height - 1).max(1) as f64;
        let others = state
            .allies
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != agent)
            .map(|(_, u)| u)
            .chain(state.enemies.iter());
        let sight = cfg.sight_range.max(1) as f64;
        for (k, u) in others.enumerate() {
            if u.alive() && me.distance(u) <= cfg.sight_range {
                let base = OWN_FEATURES + k * OTHER_FEATURES;
                obs[base] = (u.x - me.x) as f64 / sight;
                obs[base + 1] = (u.y - me.y) as f64 / sight;
                obs[base + 2] = u.health / cfg.unit_health;
                obs[base + 3] = 1.0;
            }
        }
        obs
    }

    pub fn observe_all(&self, state: &BattleState) -> Vec<Vec<f64>> {
        (0..self.config.num_allies)
            .map(|i| self.observe(state, i))
            .collect()
    }
}

impl DecPomdp for MessyBattle {
    type State = BattleState;
    type Obs = Vec<f64>;

    fn num_agents(&self) -> usize {
        self.config.num_allies
    }

    fn num_actions(&self, _agent: usize) -> usize {
        ATTACK_BASE + self.config.num_enemies
    }

    fn horizon(&self) -> usize {
        self.config.max_steps
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn sample_initial_state(&self, _rng: &mut RngStream) -> BattleState {
        let cfg = &self.config;
        let column = |n: usize, x: i64| -> Vec<Unit> {
            let y0 = ((cfg.height - n) / 2) as i64;
            (0..n)
                .map(|i| Unit {
                    x,
                    y: y0 + i as i64,
                    health: cfg.unit_health,
                })
                .collect()
        };
        BattleState {
            allies: column(cfg.num_allies, 0),
            enemies: column(cfg.num_enemies, cfg.width as i64 - 1),
        }
    }

    fn initial_observations(&self, state: &BattleState, _rng: &mut RngStream) -> Vec<Vec<f64>> {
        self.observe_all(state)
    }

    fn sample_transition(
        &self,
        state: &BattleState,
        action: &[usize],
        _rng: &mut RngStream,
    ) -> Transition<BattleState, Vec<f64>> {
        let cfg = &self.config;
        let mut next = state.clone();
        let mut dealt = 0.0;
        for (i, &a) in action.iter().enumerate() {
            let me = next.allies[i];
            if !me.alive() || a < ATTACK_BASE {
                continue;
            }
            let j = a - ATTACK_BASE;
            let target = next.enemies[j];
            if target.alive() && me.distance(&target) <= cfg.attack_range {
                dealt += self.hit(&mut next.enemies[j]);
            }
        }
        for (i, &a) in action.iter().enumerate() {
            let me = next.allies[i];
            if !me.alive() || a == NOOP || a >= ATTACK_BASE {
                continue;
            }
            let (nx, ny) = Self::move_target(&me, a);
            if self.in_bounds(nx, ny) && !next.occupied(nx, ny) {
                next.allies[i].x = nx;
                next.allies[i].y = ny;
            }
        }
        let wiped = next.enemies.iter().all(|u| !u.alive());
        let taken = if wiped { 0.0 } else { self.enemy_turn(&mut next) };
        let mut reward = (dealt - taken) / self.total_enemy_health();
        if wiped {
            reward += 1.0;
        }
        let observations = self.observe_all(&next);
        Transition {
            next_state: next,
            observations,
            reward,
        }
    }

    fn is_terminal(&self, state: &BattleState) -> bool {
        state.allies.iter().all(|u| !u.alive()) || state.enemies.iter().all(|u| !u.alive())
    }

    fn obs_dim(&self) -> usize {
        OWN_FEATURES + OTHER_FEATURES * (self.config.num_allies - 1 + self.config.num_enemies)
    }

    fn encode_obs(&self, obs: &Vec<f64>) -> Vec<f64> {
        obs.clone()
    }

    fn negate_obs(&self, obs: &Vec<f64>) -> Vec<f64> {
        crate::env::messy::negate(obs)
    }

    fn negate_obs_elementwise(&self, obs: &Vec<f64>, phi: f64, rng: &mut RngStream) -> Vec<f64> {
        obs.iter()
            .map(|&v| if rng.bernoulli(phi) { 0.0 - v } else { v })
            .collect()
    }

    fn state_dim(&self) -> usize {
        OWN_FEATURES * (self.config.num_allies + self.config.num_enemies)
    }

    fn state_features(&self, state: &BattleState) -> Vec<f64> {
        let cfg = &self.config;
        state
            .allies
            .iter()
            .chain(state.enemies.iter())
            .flat_map(|u| {
                [
                    u.health / cfg.unit_health,
                    u.x as f64 / (cfg.width - 1).max(1) as f64,
                    u.y as f64 / (cfg.height - 1).max(1) as f64,
                ]
            })
            .collect()
    }

    fn available_actions(&self, state: &BattleState, agent: usize) -> Vec<bool> {
        let mut avail = vec![false; self.num_actions(agent)];
        let me = state.allies[agent];
        if !me.alive() {
            avail[NOOP] = true;
            return avail;
        }
        avail[NOOP] = true;
        for a in MOVE_NORTH..=MOVE_WEST {
            let (x, y) = Self::move_target(&me, a);
            avail[a] = self.in_bounds(x, y);
        }
        for (j, e) in state.enemies.iter().enumerate() {
            avail[ATTACK_BASE + j] = e.alive() && me.distance(e) <= self.config.attack_range;
        }
        avail
    }

    fn is_win(&self, state: &BattleState) -> bool {
        state.enemies.iter().all(|u| !u.alive())
    }
}
