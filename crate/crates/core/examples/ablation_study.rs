//! Switch off the price advisor, pre-peak priming and dairy load shapes one at
//! a time. With `dqn` the policy is a DQN trained on the first month.
//!
//! cargo run --release --example ablation_study [-- dqn [retrain]]

use dairy_p2p::env::{EnvConfig, MarketConfig, MarketMode};
use dairy_p2p::profiles::{synthesize_scenario, ProfileShape};
use dairy_p2p::rl::{train, DqnConfig, EpisodeEnv, Features, TrainConfig};
use dairy_p2p::sim::{compare, Ablations, Controller, PolicyKind, RunConfig, Variant};

fn main() -> dairy_p2p::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let use_dqn = args.iter().any(|a| a == "dqn");
    let retrain = args.iter().any(|a| a == "retrain");
    let scenario = synthesize_scenario(10, 365, 1, &ProfileShape::default())?;

    let (controller, kind) = if use_dqn {
        let month = scenario.truncated(30 * 24)?;
        let tc = TrainConfig::Dqn(DqnConfig { episodes: 600, seed: 1, ..DqnConfig::default() });
        let mut env = EpisodeEnv::new(month.clone(), EnvConfig::default(), MarketConfig::default(), 24)?;
        let policy = train(&mut env, Features::for_scenario(&month), &tc)?.policy;
        (Controller::Learned { policy, train: Some(tc) }, PolicyKind::Dqn)
    } else {
        (Controller::RuleBased, PolicyKind::RuleBased)
    };

    let mut base = RunConfig::new(MarketMode::P2p, kind);
    base.seed = 1;
    base.retrain = retrain;
    let variants: Vec<Variant> = [
        Ablations::default(),
        Ablations { advisor_on: false, ..Ablations::default() },
        Ablations { priming_on: false, ..Ablations::default() },
        Ablations { dairy_constraints_on: false, ..Ablations::default() },
    ]
    .into_iter()
    .map(|ablations| Variant {
        label: ablations.label(),
        config: RunConfig { ablations, ..base },
    })
    .collect();
    let report = compare(&scenario, &controller, &variants, &[MarketMode::GridOnly, MarketMode::P2p], 4)?;
    print!("{}", report.to_markdown());
    Ok(())
}
