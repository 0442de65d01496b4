//! Tabular Q-learning on the single-farm 24-hour fixture.
//!
//! cargo run --release --example q_learning_fixture [-- EPISODES SEED]

use dairy_p2p::rl::{evaluate, fixture_env, fixture_optimum, tail_mean, train_q, Discretizer, Features, QConfig};
use rand::SeedableRng;

fn main() -> dairy_p2p::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let cfg = QConfig {
        episodes: args.first().copied().unwrap_or(5000) as usize,
        seed: args.get(1).copied().unwrap_or(1),
        ..QConfig::default()
    };
    let mut env = fixture_env();
    let features = Features::for_scenario(env.inner().scenario());
    let (policy, curve) = train_q(&mut env, Discretizer::for_energy_scale(features.energy_scale), &cfg)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    println!("optimum             {:.1}", fixture_optimum());
    println!("last 500 episodes   {:.2}", tail_mean(&curve, 500));
    println!("greedy episode      {:.1}", evaluate(&mut env, &policy, &mut rng)?);
    println!("table rows visited  {}", policy.table.len());
    Ok(())
}
