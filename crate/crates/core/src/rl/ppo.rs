//! Proximal policy optimization with separate actor and critic networks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{clip_global_norm, Activation, Adam, Mlp};
use super::{argmax, CurvePoint, Features, Policy, TrainingEnv};
use crate::env::{Action, Observation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub episodes: usize,
    pub learning_rate: f64,
    /// Env steps per rollout.
    pub n_steps: usize,
    pub batch_size: usize,
    pub n_epochs: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantage: bool,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            episodes: 5000,
            learning_rate: 3e-4,
            n_steps: 2048,
            batch_size: 64,
            n_epochs: 10,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            ent_coef: 0.0,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            normalize_advantage: true,
            hidden: vec![64, 64],
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("episodes", self.episodes),
            ("n_steps", self.n_steps),
            ("batch_size", self.batch_size),
            ("n_epochs", self.n_epochs),
        ] {
            if v == 0 {
                return Err(Error::TrainConfig(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::TrainConfig("learning_rate must be positive".into()));
        }
        if !(self.clip_range > 0.0) {
            return Err(Error::TrainConfig("clip_range must be positive".into()));
        }
        for (name, v) in [("gamma", self.gamma), ("gae_lambda", self.gae_lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::TrainConfig(format!("{name} must be in [0, 1]")));
            }
        }
        Ok(())
    }

    fn sizes(&self, outputs: usize) -> Vec<usize> {
        let mut s = vec![Features::SIZE];
        s.extend(&self.hidden);
        s.push(outputs);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoPolicy {
    pub features: Features,
    pub actor: Mlp,
    pub critic: Mlp,
}

impl PpoPolicy {
    pub fn probabilities(&self, obs: &Observation) -> Vec<f64> {
        softmax(&self.actor.forward(&self.features.encode(obs)))
    }

    pub fn value(&self, obs: &Observation) -> f64 {
        self.critic.forward(&self.features.encode(obs))[0]
    }
}

impl Policy for PpoPolicy {
    fn act(&self, obs: &Observation) -> Action {
        Action::from_code(argmax(&self.actor.forward(&self.features.encode(obs)))).expect("valid code")
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Generalized advantage estimates and value targets for one agent's
/// trajectory. `dones[t]` marks that the episode ended after step `t`;
/// `last_value` bootstraps the step after the final one.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Clipped surrogate loss for one sample and its gradient w.r.t. the logits.
///
/// Returns `(loss, d loss / d logits, ratio)`. The entropy bonus enters the
/// loss as `-ent_coef * H`.
pub fn surrogate_loss(
    logits: &[f64],
    action: usize,
    old_log_prob: f64,
    advantage: f64,
    clip_range: f64,
    ent_coef: f64,
) -> (f64, Vec<f64>, f64) {
    let p = softmax(logits);
    let log_p = p[action].max(1e-300).ln();
    let ratio = (log_p - old_log_prob).exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip_range, 1.0 + clip_range) * advantage;
    let mut loss = -unclipped.min(clipped);
    // The gradient flows only while the unclipped term is the minimum.
    let d_log_p = if unclipped <= clipped { -ratio * advantage } else { 0.0 };
    let mut grad: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(k, pk)| d_log_p * (if k == action { 1.0 } else { 0.0 } - pk))
        .collect();
    if ent_coef != 0.0 {
        let entropy: f64 = -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>();
        loss -= ent_coef * entropy;
        for (k, pk) in p.iter().enumerate() {
            if *pk > 0.0 {
                // dH/dz_k = -p_k (ln p_k + H)
                grad[k] += ent_coef * pk * (pk.ln() + entropy);
            }
        }
    }
    (loss, grad, ratio)
}

fn sample_action(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

struct Sample {
    state: Vec<f64>,
    action: usize,
    log_prob: f64,
    advantage: f64,
    ret: f64,
}

#[derive(Default)]
struct AgentTrajectory {
    states: Vec<Vec<f64>>,
    actions: Vec<usize>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
}

pub fn train_ppo(
    env: &mut dyn TrainingEnv,
    features: Features,
    cfg: &PpoConfig,
) -> Result<(PpoPolicy, Vec<CurvePoint>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = PpoPolicy {
        features,
        actor: Mlp::new(&cfg.sizes(Action::COUNT), Activation::Relu, 0.01, &mut rng),
        critic: Mlp::new(&cfg.sizes(1), Activation::Relu, 1.0, &mut rng),
    };
    let mut actor_opt = Adam::new(&policy.actor, cfg.learning_rate).with_eps(1e-5);
    let mut critic_opt = Adam::new(&policy.critic, cfg.learning_rate).with_eps(1e-5);
    let n = env.num_agents();
    let mut curve = Vec::with_capacity(cfg.episodes);
    let mut obs = env.reset(&mut rng)?;
    let mut episode_total = 0.0;
    let mut updates = 0usize;

    while curve.len() < cfg.episodes {
        let mut traj: Vec<AgentTrajectory> = (0..n).map(|_| AgentTrajectory::default()).collect();
        for _ in 0..cfg.n_steps {
            let mut actions = Vec::with_capacity(n);
            for (i, o) in obs.iter().enumerate() {
                let x = features.encode(o);
                let probs = softmax(&policy.actor.forward(&x));
                let a = sample_action(&probs, &mut rng);
                let tr = &mut traj[i];
                tr.values.push(policy.critic.forward(&x)[0]);
                tr.log_probs.push(probs[a].max(1e-300).ln());
                tr.actions.push(a);
                tr.states.push(x);
                actions.push(Action::from_code(a).expect("valid code"));
            }
            let out = env.step(&actions)?;
            for (i, tr) in traj.iter_mut().enumerate() {
                tr.rewards.push(out.rewards[i]);
                tr.dones.push(out.done);
            }
            episode_total += out.rewards.iter().sum::<f64>();
            if out.done {
                curve.push(CurvePoint {
                    episode: curve.len(),
                    mean_reward: episode_total / n as f64,
                });
                episode_total = 0.0;
                obs = env.reset(&mut rng)?;
                if curve.len() >= cfg.episodes {
                    break;
                }
            } else {
                obs = out.next_observations;
            }
        }

        let mut samples = Vec::new();
        for (i, tr) in traj.into_iter().enumerate() {
            let last_value = policy.critic.forward(&features.encode(&obs[i]))[0];
            let (adv, ret) = gae(&tr.rewards, &tr.values, &tr.dones, last_value, cfg.gamma, cfg.gae_lambda);
            for (t, state) in tr.states.into_iter().enumerate() {
                samples.push(Sample {
                    state,
                    action: tr.actions[t],
                    log_prob: tr.log_probs[t],
                    advantage: adv[t],
                    ret: ret[t],
                });
            }
        }
        update(&mut policy, &mut actor_opt, &mut critic_opt, &mut samples, cfg, &mut rng, updates)?;
        updates += 1;
    }
    Ok((policy, curve))
}

fn update(
    policy: &mut PpoPolicy,
    actor_opt: &mut Adam,
    critic_opt: &mut Adam,
    samples: &mut [Sample],
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
    update_index: usize,
) -> Result<()> {
    if samples.len() < 2 {
        return Ok(());
    }
    if cfg.normalize_advantage {
        let m = samples.iter().map(|s| s.advantage).sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|s| (s.advantage - m).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
        let sd = var.sqrt() + 1e-8;
        samples.iter_mut().for_each(|s| s.advantage = (s.advantage - m) / sd);
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut actor_grads = policy.actor.zero_gradients();
    let mut critic_grads = policy.critic.zero_gradients();
    for _ in 0..cfg.n_epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            actor_grads.zero();
            critic_grads.zero();
            let scale = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &k in batch {
                let s = &samples[k];
                let at = policy.actor.forward_trace(&s.state);
                let (pl, mut g, _) = surrogate_loss(
                    at.output(),
                    s.action,
                    s.log_prob,
                    s.advantage,
                    cfg.clip_range,
                    cfg.ent_coef,
                );
                g.iter_mut().for_each(|v| *v *= scale);
                policy.actor.backward(&at, &g, &mut actor_grads);

                let ct = policy.critic.forward_trace(&s.state);
                let err = ct.output()[0] - s.ret;
                policy
                    .critic
                    .backward(&ct, &[2.0 * cfg.vf_coef * err * scale], &mut critic_grads);
                loss += (pl + cfg.vf_coef * err * err) * scale;
            }
            if !loss.is_finite() || !actor_grads.is_finite() || !critic_grads.is_finite() {
                return Err(Error::Diverged {
                    step: update_index,
                    message: format!("loss {loss}"),
                });
            }
            clip_global_norm(&mut [&mut actor_grads, &mut critic_grads], cfg.max_grad_norm);
            actor_opt.step(&mut policy.actor, &actor_grads);
            critic_opt.step(&mut policy.critic, &critic_grads);
        }
    }
    if !policy.actor.is_finite() || !policy.critic.is_finite() {
        return Err(Error::Diverged {
            step: update_index,
            message: "non-finite parameters".into(),
        });
    }
    Ok(())
}
