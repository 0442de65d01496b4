//! Learners for the discrete battery-and-trade action space: tabular
//! Q-learning, DQN and PPO. One policy is shared by every farm.

pub mod dqn;
pub mod mlp;
pub mod ppo;
pub mod qlearn;
pub mod replay;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{transition, Action, CommunityEnv, EnvConfig, MarketConfig, Observation};
use crate::error::{Error, Result};
use crate::profiles::{FarmConfig, Scenario, TimeSeries, HOURS_PER_DAY};

pub use dqn::{train_dqn, DqnConfig, DqnPolicy};
pub use ppo::{train_ppo, PpoConfig, PpoPolicy};
pub use qlearn::{train_q, Discretizer, QConfig, QPolicy, QTable, TimeKey};

/// Chooses one action per observation. Implementations are deterministic.
pub trait Policy {
    fn act(&self, obs: &Observation) -> Action;
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Scales observations into network inputs of roughly unit size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Features {
    /// kWh mapped to 1.0 for load and generation.
    pub energy_scale: f64,
}

impl Features {
    pub const SIZE: usize = 6;

    pub fn for_scenario(scenario: &Scenario) -> Self {
        let peak = scenario
            .loads
            .values()
            .chain(scenario.generation.values())
            .flat_map(|s| s.values().iter().copied())
            .fold(0.0_f64, f64::max);
        Self {
            energy_scale: if peak > 0.0 { peak } else { 1.0 },
        }
    }

    pub fn encode(&self, obs: &Observation) -> Vec<f64> {
        vec![
            obs.load / self.energy_scale,
            obs.generation / self.energy_scale,
            obs.soc_pct / 100.0,
            obs.hour as f64 / 23.0,
            obs.isp,
            obs.ibp,
        ]
    }
}

/// Per-agent rewards and next observations after one joint step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub next_observations: Vec<Observation>,
    pub rewards: Vec<f64>,
    pub done: bool,
}

/// Episodic interface the learners train against.
pub trait TrainingEnv {
    fn num_agents(&self) -> usize;
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<Observation>>;
    fn step(&mut self, actions: &[Action]) -> Result<EnvStep>;
}

/// Community environment cut into fixed-length episodes.
///
/// Each reset starts at midnight of a uniformly drawn day, with full batteries.
#[derive(Debug, Clone)]
pub struct EpisodeEnv {
    env: CommunityEnv,
    episode_hours: usize,
}

impl EpisodeEnv {
    pub fn new(scenario: Scenario, cfg: EnvConfig, market: MarketConfig, episode_hours: usize) -> Result<Self> {
        if episode_hours == 0 || episode_hours > scenario.horizon_hours {
            return Err(Error::TrainConfig(format!(
                "episode_hours {episode_hours} must be in 1..={}",
                scenario.horizon_hours
            )));
        }
        Ok(Self {
            env: CommunityEnv::new(scenario, cfg, market)?,
            episode_hours,
        })
    }

    pub fn inner(&self) -> &CommunityEnv {
        &self.env
    }
}

impl TrainingEnv for EpisodeEnv {
    fn num_agents(&self) -> usize {
        self.env.num_agents()
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<Observation>> {
        let horizon = self.env.scenario().horizon_hours;
        let starts = (horizon - self.episode_hours) / HOURS_PER_DAY + 1;
        let start = rng.gen_range(0..starts) * HOURS_PER_DAY;
        self.env.reset_window(start, self.episode_hours)
    }

    fn step(&mut self, actions: &[Action]) -> Result<EnvStep> {
        let s = self.env.step(actions)?;
        Ok(EnvStep {
            rewards: s.agents.iter().map(|a| a.outcome.reward).collect(),
            next_observations: s.next_observations,
            done: s.done,
        })
    }
}

/// One point of a learning curve: mean per-agent return of a training episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub mean_reward: f64,
}

/// Learning curve as CSV `episode,mean_reward`. When `config` is given it is
/// written first as `#` comment lines.
pub fn write_learning_curve(path: &Path, curve: &[CurvePoint], config: Option<&TrainConfig>) -> Result<()> {
    let mut buf = Vec::new();
    if let Some(c) = config {
        buf.extend(format!("# seed: {}\n# config: {}\n", c.seed(), serde_json::to_string(c)?).bytes());
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["episode", "mean_reward"])?;
        for p in curve {
            w.write_record([p.episode.to_string(), format!("{:.6}", p.mean_reward)])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Mean of the last `n` points (or all of them if fewer).
pub fn tail_mean(curve: &[CurvePoint], n: usize) -> f64 {
    let tail = &curve[curve.len().saturating_sub(n)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().map(|p| p.mean_reward).sum::<f64>() / tail.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Q,
    Dqn,
    Ppo,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Q => "q",
            Algorithm::Dqn => "dqn",
            Algorithm::Ppo => "ppo",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q" | "q-learning" => Ok(Algorithm::Q),
            "dqn" => Ok(Algorithm::Dqn),
            "ppo" => Ok(Algorithm::Ppo),
            other => Err(Error::TrainConfig(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// A trained shared policy of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "snake_case")]
pub enum TrainedPolicy {
    Q(QPolicy),
    Dqn(DqnPolicy),
    Ppo(PpoPolicy),
}

impl TrainedPolicy {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            TrainedPolicy::Q(_) => Algorithm::Q,
            TrainedPolicy::Dqn(_) => Algorithm::Dqn,
            TrainedPolicy::Ppo(_) => Algorithm::Ppo,
        }
    }
}

impl Policy for TrainedPolicy {
    fn act(&self, obs: &Observation) -> Action {
        match self {
            TrainedPolicy::Q(p) => p.act(obs),
            TrainedPolicy::Dqn(p) => p.act(obs),
            TrainedPolicy::Ppo(p) => p.act(obs),
        }
    }
}

pub const CHECKPOINT_FORMAT: &str = "dairy-p2p-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    #[serde(default)]
    training: Option<TrainConfig>,
    policy: TrainedPolicy,
}

/// JSON checkpoint with a format tag, a version and, optionally, the
/// training config that produced the policy.
pub fn save_checkpoint(path: &Path, policy: &TrainedPolicy, training: Option<&TrainConfig>) -> Result<()> {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        training: training.cloned(),
        policy: policy.clone(),
    };
    let text = serde_json::to_string(&ck)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedPolicy> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let format = value.get("format").and_then(|v| v.as_str());
    if format != Some(CHECKPOINT_FORMAT) {
        return Err(Error::Checkpoint(format!("{}: not a policy checkpoint", path.display())));
    }
    let version = value.get("version").and_then(|v| v.as_u64());
    if version != Some(CHECKPOINT_VERSION as u64) {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported version {version:?}, expected {CHECKPOINT_VERSION}",
            path.display()
        )));
    }
    let ck: Checkpoint = serde_json::from_value(value)?;
    Ok(ck.policy)
}

/// Result of any training run.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub policy: TrainedPolicy,
    pub curve: Vec<CurvePoint>,
}

/// Learner-specific settings, one variant per algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "snake_case")]
pub enum TrainConfig {
    Q(QConfig),
    Dqn(DqnConfig),
    Ppo(PpoConfig),
}

impl TrainConfig {
    pub fn default_for(algo: Algorithm) -> Self {
        match algo {
            Algorithm::Q => TrainConfig::Q(QConfig::default()),
            Algorithm::Dqn => TrainConfig::Dqn(DqnConfig::default()),
            Algorithm::Ppo => TrainConfig::Ppo(PpoConfig::default()),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            TrainConfig::Q(c) => c.seed,
            TrainConfig::Dqn(c) => c.seed,
            TrainConfig::Ppo(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            TrainConfig::Q(c) => c.seed = seed,
            TrainConfig::Dqn(c) => c.seed = seed,
            TrainConfig::Ppo(c) => c.seed = seed,
        }
    }

    pub fn set_episodes(&mut self, episodes: usize) {
        match self {
            TrainConfig::Q(c) => c.episodes = episodes,
            TrainConfig::Dqn(c) => c.episodes = episodes,
            TrainConfig::Ppo(c) => c.episodes = episodes,
        }
    }
}

/// Train the configured learner on `env`.
pub fn train(env: &mut dyn TrainingEnv, features: Features, cfg: &TrainConfig) -> Result<TrainingOutcome> {
    match cfg {
        TrainConfig::Q(c) => {
            let d = Discretizer::for_energy_scale(features.energy_scale);
            let (p, curve) = train_q(env, d, c)?;
            Ok(TrainingOutcome {
                policy: TrainedPolicy::Q(p),
                curve,
            })
        }
        TrainConfig::Dqn(c) => {
            let (p, curve) = train_dqn(env, features, c)?;
            Ok(TrainingOutcome {
                policy: TrainedPolicy::Dqn(p),
                curve,
            })
        }
        TrainConfig::Ppo(c) => {
            let (p, curve) = train_ppo(env, features, c)?;
            Ok(TrainingOutcome {
                policy: TrainedPolicy::Ppo(p),
                curve,
            })
        }
    }
}

/// Hourly load and generation of the single-farm training fixture.
pub const FIXTURE_PROFILE: [(f64, f64); 24] = [
    (3.0, 0.0),
    (3.0, 0.0),
    (3.0, 0.0),
    (3.0, 0.0),
    (3.0, 0.0),
    (4.0, 0.0),
    (8.0, 0.0),
    (9.0, 0.5),
    (7.0, 2.0),
    (5.0, 4.0),
    (4.0, 7.0),
    (4.0, 9.0),
    (4.0, 10.0),
    (4.0, 9.0),
    (4.0, 7.0),
    (4.0, 5.0),
    (5.0, 3.0),
    (9.0, 1.5),
    (8.0, 0.5),
    (5.0, 0.0),
    (4.0, 0.0),
    (4.0, 0.0),
    (3.0, 0.0),
    (3.0, 0.0),
];

/// One farm, one day, fixed profile: the standard learning benchmark.
pub fn fixture_scenario() -> Scenario {
    let farm = FarmConfig {
        agent_id: 1,
        herd_size: 50,
        pv_capacity_kw: 20.0,
        has_battery: true,
        has_re: true,
        battery: None,
    };
    let series = |f: fn(&(f64, f64)) -> f64| {
        TimeSeries::new(FIXTURE_PROFILE.iter().map(f).collect()).expect("fixture is valid")
    };
    Scenario {
        fleet: vec![farm],
        loads: BTreeMap::from([(1, series(|p| p.0))]),
        generation: BTreeMap::from([(1, series(|p| p.1))]),
        wind: BTreeMap::new(),
        horizon_hours: HOURS_PER_DAY,
        rng_seed: 0,
        tariff: Default::default(),
        battery: Default::default(),
    }
}

/// Environment over the fixture with 24-hour episodes.
pub fn fixture_env() -> EpisodeEnv {
    EpisodeEnv::new(
        fixture_scenario(),
        EnvConfig::default(),
        MarketConfig::default(),
        HOURS_PER_DAY,
    )
    .expect("fixture is valid")
}

/// Highest total reward one battery farm can collect over `profile`,
/// starting from `initial_soc`, by exhaustive search over reachable SoC.
///
/// Rewards and SoC changes do not depend on prices, so load, generation,
/// hour and SoC fully determine each step.
pub fn optimal_return(profile: &[(f64, f64)], first_hour: usize, initial_soc: f64, cfg: &EnvConfig) -> f64 {
    // (soc, best return so far); SoCs within 1e-9 are merged.
    let mut frontier: Vec<(f64, f64)> = vec![(initial_soc, 0.0)];
    for (t, (load, generation)) in profile.iter().enumerate() {
        let mut next: Vec<(f64, f64)> = Vec::new();
        for (soc, value) in &frontier {
            let obs = Observation {
                load: *load,
                generation: *generation,
                soc_pct: *soc,
                hour: ((first_hour + t) % HOURS_PER_DAY) as u32,
                isp: 0.0,
                ibp: 0.0,
            };
            for a in Action::ALL {
                let out = transition(&obs, a, cfg);
                let v = value + out.reward;
                match next.iter_mut().find(|(s, _)| (s - out.new_soc).abs() <= 1e-9) {
                    Some(entry) => entry.1 = entry.1.max(v),
                    None => next.push((out.new_soc, v)),
                }
            }
        }
        frontier = next;
    }
    frontier.iter().map(|(_, v)| *v).fold(0.0, f64::max)
}

/// Optimal return of the fixture episode.
pub fn fixture_optimum() -> f64 {
    optimal_return(&FIXTURE_PROFILE, 0, 100.0, &EnvConfig::default())
}

/// Roll the greedy `policy` through one episode of `env` and return the mean
/// per-agent reward.
pub fn evaluate(env: &mut dyn TrainingEnv, policy: &dyn Policy, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut obs = env.reset(rng)?;
    let n = env.num_agents();
    let mut total = 0.0;
    loop {
        let actions: Vec<Action> = obs.iter().map(|o| policy.act(o)).collect();
        let s = env.step(&actions)?;
        total += s.rewards.iter().sum::<f64>();
        obs = s.next_observations;
        if s.done {
            break;
        }
    }
    Ok(total / n as f64)
}

/// ε for a linear decay from `start` to `end` over the first `fraction` of `total` steps.
pub fn linear_epsilon(step: usize, total: usize, fraction: f64, start: f64, end: f64) -> f64 {
    let span = (fraction * total as f64).max(1.0);
    let progress = (step as f64 / span).min(1.0);
    start + progress * (end - start)
}
