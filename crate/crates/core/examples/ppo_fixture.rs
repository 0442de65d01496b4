//! PPO on the single-farm 24-hour fixture, with the learned action probabilities at a few hours.
//!
//! cargo run --release --example ppo_fixture [-- EPISODES SEED]

use dairy_p2p::env::Action;
use dairy_p2p::rl::{evaluate, fixture_env, fixture_optimum, tail_mean, train_ppo, Features, PpoConfig, TrainingEnv};
use rand::SeedableRng;

fn main() -> dairy_p2p::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let cfg = PpoConfig {
        episodes: args.first().copied().unwrap_or(5000) as usize,
        seed: args.get(1).copied().unwrap_or(1),
        ..PpoConfig::default()
    };
    let mut env = fixture_env();
    let features = Features::for_scenario(env.inner().scenario());
    let (policy, curve) = train_ppo(&mut env, features, &cfg)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    println!("optimum             {:.1}", fixture_optimum());
    println!("last 500 episodes   {:.2}", tail_mean(&curve, 500));
    println!("greedy episode      {:.1}", evaluate(&mut env, &policy, &mut rng)?);

    let mut obs = env.reset(&mut rng)?;
    for hour in 0..24 {
        let o = obs[0];
        let p = policy.probabilities(&o);
        if hour % 6 == 0 || hour == 17 {
            let best = dairy_p2p::rl::argmax(&p);
            println!(
                "hour {hour:>2}: SoC {:>5.1}, most likely {} ({:.2})",
                o.soc_pct,
                Action::ALL[best].name(),
                p[best]
            );
        }
        let a = dairy_p2p::rl::Policy::act(&policy, &o);
        obs = env.step(&[a])?.next_observations;
    }
    Ok(())
}
