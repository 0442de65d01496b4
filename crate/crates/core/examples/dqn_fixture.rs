//! DQN on the single-farm 24-hour fixture; optionally writes the learning curve.
//!
//! cargo run --release --example dqn_fixture [-- EPISODES SEED [CURVE_CSV]]

use std::path::Path;

use dairy_p2p::rl::{evaluate, fixture_env, fixture_optimum, tail_mean, train_dqn, write_learning_curve, DqnConfig, Features};
use rand::SeedableRng;

fn main() -> dairy_p2p::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cfg = DqnConfig {
        episodes: args.first().and_then(|a| a.parse().ok()).unwrap_or(3000),
        seed: args.get(1).and_then(|a| a.parse().ok()).unwrap_or(1),
        ..DqnConfig::default()
    };
    let mut env = fixture_env();
    let features = Features::for_scenario(env.inner().scenario());
    let (policy, curve) = train_dqn(&mut env, features, &cfg)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    println!("optimum             {:.1}", fixture_optimum());
    for (i, chunk) in curve.chunks((curve.len() / 10).max(1)).enumerate() {
        let m = chunk.iter().map(|p| p.mean_reward).sum::<f64>() / chunk.len() as f64;
        println!("decile {i}            {m:.2}");
    }
    println!("last 500 episodes   {:.2}", tail_mean(&curve, 500));
    println!("greedy episode      {:.1}", evaluate(&mut env, &policy, &mut rng)?);
    if let Some(path) = args.get(2) {
        write_learning_curve(Path::new(path), &curve, None)?;
        println!("wrote {path}");
    }
    Ok(())
}
