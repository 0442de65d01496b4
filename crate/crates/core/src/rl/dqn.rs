//! Deep Q-network with experience replay and a periodically synced target network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{clip_global_norm, Activation, Adam, Mlp};
use super::replay::{Experience, ReplayBuffer};
use super::{argmax, linear_epsilon, CurvePoint, Features, Policy, TrainingEnv};
use crate::env::{Action, Observation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub episodes: usize,
    pub learning_rate: f64,
    pub buffer_size: usize,
    /// Env steps collected before the first gradient step.
    pub learning_starts: usize,
    pub batch_size: usize,
    pub gamma: f64,
    /// Env steps between gradient phases.
    pub train_freq: usize,
    pub gradient_steps: usize,
    /// Gradient steps between target-network syncs.
    pub target_update_interval: usize,
    pub exploration_fraction: f64,
    pub exploration_initial_eps: f64,
    pub exploration_final_eps: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            episodes: 5000,
            learning_rate: 1e-3,
            buffer_size: 50_000,
            learning_starts: 1000,
            batch_size: 32,
            gamma: 0.99,
            train_freq: 4,
            gradient_steps: 1,
            target_update_interval: 250,
            exploration_fraction: 0.1,
            exploration_initial_eps: 1.0,
            exploration_final_eps: 0.05,
            max_grad_norm: 10.0,
            hidden: vec![64, 64],
            seed: 0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("episodes", self.episodes),
            ("buffer_size", self.buffer_size),
            ("batch_size", self.batch_size),
            ("train_freq", self.train_freq),
            ("target_update_interval", self.target_update_interval),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::TrainConfig(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::TrainConfig("learning_rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::TrainConfig("gamma must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![Features::SIZE];
        s.extend(&self.hidden);
        s.push(Action::COUNT);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnPolicy {
    pub features: Features,
    pub q_net: Mlp,
}

impl DqnPolicy {
    pub fn q_values(&self, obs: &Observation) -> Vec<f64> {
        self.q_net.forward(&self.features.encode(obs))
    }
}

impl Policy for DqnPolicy {
    fn act(&self, obs: &Observation) -> Action {
        Action::from_code(argmax(&self.q_values(obs))).expect("valid code")
    }
}

/// Huber loss with δ = 1 and its derivative.
fn huber(x: f64) -> (f64, f64) {
    if x.abs() <= 1.0 {
        (0.5 * x * x, x)
    } else {
        (x.abs() - 0.5, x.signum())
    }
}

/// Online network, target network and optimizer.
pub struct DqnLearner {
    pub online: Mlp,
    pub target: Mlp,
    optimizer: Adam,
    gradient_steps: usize,
    gamma: f64,
    max_grad_norm: f64,
    target_update_interval: usize,
}

impl DqnLearner {
    pub fn new(cfg: &DqnConfig, rng: &mut ChaCha8Rng) -> Self {
        let online = Mlp::new(&cfg.layer_sizes(), Activation::Relu, 1.0, rng);
        Self {
            target: online.clone(),
            optimizer: Adam::new(&online, cfg.learning_rate),
            online,
            gradient_steps: 0,
            gamma: cfg.gamma,
            max_grad_norm: cfg.max_grad_norm,
            target_update_interval: cfg.target_update_interval,
        }
    }

    pub fn gradient_steps(&self) -> usize {
        self.gradient_steps
    }

    /// One gradient step on `batch`; returns the mean Huber loss.
    pub fn train_batch(&mut self, batch: &[&Experience]) -> Result<f64> {
        let mut grads = self.online.zero_gradients();
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for e in batch {
            let next_max = if e.done {
                0.0
            } else {
                self.target
                    .forward(&e.next_state)
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            let y = e.reward + self.gamma * next_max;
            let trace = self.online.forward_trace(&e.state);
            let a = e.action.code();
            let (l, dl) = huber(trace.output()[a] - y);
            loss += l * scale;
            let mut g = vec![0.0; Action::COUNT];
            g[a] = dl * scale;
            self.online.backward(&trace, &g, &mut grads);
        }
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::Diverged {
                step: self.gradient_steps,
                message: format!("loss {loss}"),
            });
        }
        clip_global_norm(&mut [&mut grads], self.max_grad_norm);
        self.optimizer.step(&mut self.online, &grads);
        if !self.online.is_finite() {
            return Err(Error::Diverged {
                step: self.gradient_steps,
                message: "non-finite parameters".into(),
            });
        }
        self.gradient_steps += 1;
        if self.gradient_steps % self.target_update_interval == 0 {
            self.target = self.online.clone();
        }
        Ok(loss)
    }
}

pub fn train_dqn(
    env: &mut dyn TrainingEnv,
    features: Features,
    cfg: &DqnConfig,
) -> Result<(DqnPolicy, Vec<CurvePoint>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut learner = DqnLearner::new(cfg, &mut rng);
    let mut buffer = ReplayBuffer::new(cfg.buffer_size);
    let mut curve = Vec::with_capacity(cfg.episodes);
    let n = env.num_agents();
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
            let states: Vec<Vec<f64>> = obs.iter().map(|o| features.encode(o)).collect();
            let actions: Vec<Action> = states
                .iter()
                .map(|s| {
                    let code = if rng.gen::<f64>() < eps {
                        rng.gen_range(0..Action::COUNT)
                    } else {
                        argmax(&learner.online.forward(s))
                    };
                    Action::from_code(code).expect("valid code")
                })
                .collect();
            let out = env.step(&actions)?;
            for (i, state) in states.into_iter().enumerate() {
                buffer.push(Experience {
                    state,
                    action: actions[i],
                    reward: out.rewards[i],
                    next_state: features.encode(&out.next_observations[i]),
                    done: out.done,
                });
            }
            total += out.rewards.iter().sum::<f64>();
            obs = out.next_observations;
            step += 1;
            len += 1;

            if step >= cfg.learning_starts && step % cfg.train_freq == 0 {
                for _ in 0..cfg.gradient_steps {
                    let batch = buffer.sample(cfg.batch_size, &mut rng);
                    learner.train_batch(&batch)?;
                }
            }
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
    Ok((
        DqnPolicy {
            features,
            q_net: learner.online,
        },
        curve,
    ))
}
