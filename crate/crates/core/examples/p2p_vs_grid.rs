//! Rule-based community year with and without the internal market.
//!
//! cargo run --release --example p2p_vs_grid [-- AGENTS SEED]

use dairy_p2p::env::MarketMode;
use dairy_p2p::profiles::{synthesize_scenario, ProfileShape};
use dairy_p2p::sim::{compare, Controller, PolicyKind, RunConfig, Variant};

fn main() -> dairy_p2p::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let agents = args.first().copied().unwrap_or(10) as usize;
    let seed = args.get(1).copied().unwrap_or(1);
    let scenario = synthesize_scenario(agents, 365, seed, &ProfileShape::default())?;
    let mut cfg = RunConfig::new(MarketMode::P2p, PolicyKind::RuleBased);
    cfg.seed = seed;
    let report = compare(
        &scenario,
        &Controller::RuleBased,
        &[Variant { label: "rule-based".into(), config: cfg }],
        &[MarketMode::GridOnly, MarketMode::P2p],
        2,
    )?;
    print!("{}", report.to_markdown());
    Ok(())
}
