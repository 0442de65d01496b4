//! Tabular Q-learning over a coarse discretization of the observation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, linear_epsilon, CurvePoint, Policy, TrainingEnv};
use crate::env::{Action, Observation};
use crate::error::{Error, Result};
use crate::pricing::tariff_period;

/// How the hour enters the discrete state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeKey {
    /// The tariff period (4 values).
    #[default]
    Period,
    /// The hour of day (24 values).
    Hour,
}

/// Load and generation fall into log-spaced buckets, SoC into deciles, and
/// the hour into its tariff period or itself, per `time_key`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    /// Below this many kWh a quantity is bucket 0.
    pub energy_floor: f64,
    /// Top of the last bucket; larger values are clamped into it.
    pub energy_ceiling: f64,
    pub energy_buckets: u32,
    #[serde(default)]
    pub time_key: TimeKey,
}

impl Discretizer {
    pub fn for_energy_scale(scale: f64) -> Self {
        Self {
            energy_floor: scale / 40.0,
            energy_ceiling: scale,
            energy_buckets: 8,
            time_key: TimeKey::Period,
        }
    }

    pub fn with_time_key(mut self, time_key: TimeKey) -> Self {
        self.time_key = time_key;
        self
    }

    pub fn energy_bucket(&self, kwh: f64) -> u32 {
        if kwh < self.energy_floor {
            return 0;
        }
        let span = (self.energy_ceiling / self.energy_floor).ln();
        let per = span / (self.energy_buckets - 1) as f64;
        let b = 1 + ((kwh / self.energy_floor).ln() / per).floor() as i64;
        b.clamp(1, self.energy_buckets as i64 - 1) as u32
    }

    pub fn soc_decile(soc: f64) -> u32 {
        ((soc / 10.0).floor() as i64).clamp(0, 9) as u32
    }

    pub fn state(&self, obs: &Observation) -> u32 {
        let time = match self.time_key {
            TimeKey::Period => tariff_period(obs.hour % 24).expect("hour reduced mod 24").index() as u32,
            TimeKey::Hour => obs.hour % 24,
        };
        let nb = self.energy_buckets;
        let l = self.energy_bucket(obs.load);
        let g = self.energy_bucket(obs.generation);
        ((time * nb + l) * nb + g) * 10 + Self::soc_decile(obs.soc_pct)
    }
}

/// Action values keyed by discretized state; unseen states read as zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    #[serde(with = "state_rows")]
    values: BTreeMap<u32, Vec<f64>>,
}

/// Stored as `[state, values]` pairs: integer map keys do not survive a
/// JSON round trip inside the tagged policy enum.
mod state_rows {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<u32, Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<(&u32, &Vec<f64>)> = map.iter().collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u32, Vec<f64>>, D::Error> {
        let rows = Vec::<(u32, Vec<f64>)>::deserialize(d)?;
        Ok(rows.into_iter().collect())
    }
}

impl QTable {
    pub fn row(&self, state: u32) -> [f64; Action::COUNT] {
        let mut out = [0.0; Action::COUNT];
        if let Some(v) = self.values.get(&state) {
            out.copy_from_slice(v);
        }
        out
    }

    pub fn get(&self, state: u32, action: Action) -> f64 {
        self.values.get(&state).map_or(0.0, |v| v[action.code()])
    }

    pub fn set(&mut self, state: u32, action: Action, value: f64) {
        self.values
            .entry(state)
            .or_insert_with(|| vec![0.0; Action::COUNT])[action.code()] = value;
    }

    pub fn max(&self, state: u32) -> f64 {
        self.row(state).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy(&self, state: u32) -> Action {
        Action::from_code(argmax(&self.row(state))).expect("valid code")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Q(s,a) ← Q(s,a) + α·(r + γ·max Q(s',·)·(1 − done) − Q(s,a)).
    #[allow(clippy::too_many_arguments)]
    pub fn update(&mut self, s: u32, a: Action, r: f64, s_next: u32, done: bool, alpha: f64, gamma: f64) {
        let bootstrap = if done { 0.0 } else { gamma * self.max(s_next) };
        let q = self.get(s, a);
        self.set(s, a, q + alpha * (r + bootstrap - q));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QConfig {
    pub episodes: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub exploration_fraction: f64,
    pub exploration_initial_eps: f64,
    pub exploration_final_eps: f64,
    pub seed: u64,
}

impl Default for QConfig {
    fn default() -> Self {
        Self {
            episodes: 5000,
            learning_rate: 0.1,
            gamma: 0.7,
            exploration_fraction: 0.3,
            exploration_initial_eps: 1.0,
            exploration_final_eps: 0.05,
            seed: 0,
        }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::TrainConfig("episodes must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::TrainConfig("learning_rate must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::TrainConfig("gamma must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QPolicy {
    pub discretizer: Discretizer,
    pub table: QTable,
}

impl QPolicy {
    pub fn new(discretizer: Discretizer) -> Self {
        Self {
            discretizer,
            table: QTable::default(),
        }
    }
}

impl Policy for QPolicy {
    fn act(&self, obs: &Observation) -> Action {
        self.table.greedy(self.discretizer.state(obs))
    }
}

pub fn train_q(
    env: &mut dyn TrainingEnv,
    discretizer: Discretizer,
    cfg: &QConfig,
) -> Result<(QPolicy, Vec<CurvePoint>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = QPolicy::new(discretizer);
    let mut curve = Vec::with_capacity(cfg.episodes);
    let n = env.num_agents();
    // Episode length is learned on the first episode; ε decays per env step.
    let mut steps_per_episode = None;
    let mut step = 0usize;
    for episode in 0..cfg.episodes {
        let mut obs = env.reset(&mut rng)?;
        let mut total = 0.0;
        let mut len = 0;
        loop {
            let total_steps = steps_per_episode.unwrap_or(24) * cfg.episodes;
            let eps = linear_epsilon(
                step,
                total_steps,
                cfg.exploration_fraction,
                cfg.exploration_initial_eps,
                cfg.exploration_final_eps,
            );
            let states: Vec<u32> = obs.iter().map(|o| discretizer.state(o)).collect();
            let actions: Vec<Action> = states
                .iter()
                .map(|s| {
                    if rng.gen::<f64>() < eps {
                        Action::from_code(rng.gen_range(0..Action::COUNT)).expect("valid code")
                    } else {
                        policy.table.greedy(*s)
                    }
                })
                .collect();
            let out = env.step(&actions)?;
            for i in 0..n {
                let next = discretizer.state(&out.next_observations[i]);
                policy
                    .table
                    .update(states[i], actions[i], out.rewards[i], next, out.done, cfg.learning_rate, cfg.gamma);
            }
            total += out.rewards.iter().sum::<f64>();
            obs = out.next_observations;
            step += 1;
            len += 1;
            if out.done {
                break;
            }
        }
        steps_per_episode.get_or_insert(len);
        curve.push(CurvePoint {
            episode,
            mean_reward: total / n as f64,
        });
    }
    Ok((policy, curve))
}
