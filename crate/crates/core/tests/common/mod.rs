//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dairy_p2p::env::{Action, CommunityEnv, EnvConfig, MarketConfig};
use dairy_p2p::market::{GridPrices, Order, Side};
use dairy_p2p::profiles::{FarmConfig, Scenario, TimeSeries};
use serde::Deserialize;

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

pub fn farm(agent_id: u32, has_battery: bool) -> FarmConfig {
    FarmConfig {
        agent_id,
        herd_size: 100,
        pv_capacity_kw: 20.0,
        has_battery,
        has_re: true,
        battery: None,
    }
}

/// One battery farm with the same load and generation every hour.
pub fn constant_scenario(load: f64, generation: f64, hours: usize) -> Scenario {
    Scenario {
        fleet: vec![farm(1, true)],
        loads: BTreeMap::from([(1, TimeSeries::new(vec![load; hours]).unwrap())]),
        generation: BTreeMap::from([(1, TimeSeries::new(vec![generation; hours]).unwrap())]),
        wind: BTreeMap::new(),
        horizon_hours: hours,
        rng_seed: 0,
        tariff: Default::default(),
        battery: Default::default(),
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct GoldenRow {
    pub trace: String,
    pub hour: u32,
    pub load: f64,
    pub generation: f64,
    pub action: usize,
    pub soc_before: f64,
    pub guard: u8,
    pub buy: f64,
    pub sell: f64,
    pub soc_after: f64,
    pub reward: f64,
}

pub fn golden_rows() -> Vec<GoldenRow> {
    let path = golden_dir().join("trajectories.csv");
    let mut reader = csv::Reader::from_path(&path).expect("golden file present");
    reader.deserialize().map(|r| r.expect("well-formed golden row")).collect()
}

/// Replay every golden trace through the community environment.
/// Returns the largest absolute deviation and a description of where it occurred.
pub fn replay_golden(rows: &[GoldenRow]) -> (f64, String) {
    let mut worst = (0.0, "no deviation".to_string());
    let mut traces: BTreeMap<&str, Vec<&GoldenRow>> = BTreeMap::new();
    for r in rows {
        traces.entry(r.trace.as_str()).or_default().push(r);
    }
    for (name, steps) in traces {
        let scenario = constant_scenario(steps[0].load, steps[0].generation, steps.len());
        let mut env = CommunityEnv::new(scenario, EnvConfig::default(), MarketConfig::default()).unwrap();
        env.reset();
        for r in steps {
            let step = env.step(&[Action::from_code(r.action).unwrap()]).unwrap();
            let a = &step.agents[0];
            let checks = [
                ("soc_before", a.observation.soc_pct, r.soc_before),
                ("buy", a.outcome.buy_kwh, r.buy),
                ("sell", a.outcome.sell_kwh, r.sell),
                ("soc_after", a.outcome.new_soc, r.soc_after),
                ("reward", a.outcome.reward, r.reward),
            ];
            for (what, got, want) in checks {
                let err = (got - want).abs();
                if err > worst.0 {
                    worst = (err, format!("{name} hour {} {what}: got {got}, want {want}", r.hour));
                }
            }
        }
    }
    worst
}

/// Trade as (buyer, seller, price, quantity).
pub type Trade = (u32, u32, f64, f64);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cleared {
    pub trades: Vec<Trade>,
    pub grid_buys: BTreeMap<u32, f64>,
    pub grid_sells: BTreeMap<u32, f64>,
}

/// Book-keeping clearing written directly from the auction steps:
/// sort both books, walk two cursors, trade the smaller remainder at the
/// midpoint, and send whatever is left to the grid.
pub fn reference_clear(orders: &[Order], check_crossing: bool) -> Cleared {
    let mut bids: Vec<Order> = orders.iter().filter(|o| o.side == Side::Bid).copied().collect();
    let mut asks: Vec<Order> = orders.iter().filter(|o| o.side == Side::Ask).copied().collect();
    bids.sort_by(|a, b| b.price.partial_cmp(&a.price).unwrap().then(a.seq.cmp(&b.seq)));
    asks.sort_by(|a, b| a.price.partial_cmp(&b.price).unwrap().then(a.seq.cmp(&b.seq)));
    let mut out = Cleared::default();
    let (mut i, mut j) = (0, 0);
    loop {
        if i == bids.len() || j == asks.len() {
            break;
        }
        if check_crossing && bids[i].price < asks[j].price {
            break;
        }
        let q = bids[i].quantity.min(asks[j].quantity);
        out.trades.push((bids[i].agent_id, asks[j].agent_id, (bids[i].price + asks[j].price) / 2.0, q));
        bids[i].quantity -= q;
        asks[j].quantity -= q;
        if bids[i].quantity == 0.0 {
            i += 1;
        }
        if asks[j].quantity == 0.0 {
            j += 1;
        }
    }
    for b in &bids[i..] {
        if b.quantity > 0.0 {
            *out.grid_buys.entry(b.agent_id).or_default() += b.quantity;
        }
    }
    for a in &asks[j..] {
        if a.quantity > 0.0 {
            *out.grid_sells.entry(a.agent_id).or_default() += a.quantity;
        }
    }
    out
}

pub fn engine_clear(orders: &[Order], strict: bool) -> dairy_p2p::Result<Cleared> {
    let (bids, asks): (Vec<Order>, Vec<Order>) = orders.iter().partition(|o| o.side == Side::Bid);
    let s = dairy_p2p::market::clear(
        &bids,
        &asks,
        GRID,
        0,
        dairy_p2p::market::ClearingOptions {
            strict_paper_mode: strict,
        },
    )?;
    Ok(Cleared {
        trades: s
            .trades
            .iter()
            .map(|t| (t.buyer_id, t.seller_id, t.price, t.quantity))
            .collect(),
        grid_buys: s.grid_buys,
        grid_sells: s.grid_sells,
    })
}

pub const GRID: GridPrices = GridPrices { buy: 0.66, sell: 0.135 };

/// Every book with up to `max_per_side` orders per side drawn from the
/// given prices and quantities. Calls `visit` once per configuration.
pub fn for_each_book(max_per_side: usize, prices: &[f64], quantities: &[f64], mut visit: impl FnMut(&[Order])) {
    let choices: Vec<(f64, f64)> = prices
        .iter()
        .flat_map(|p| quantities.iter().map(move |q| (*p, *q)))
        .collect();
    let sides = all_sequences(max_per_side, choices.len());
    let mut orders = Vec::with_capacity(2 * max_per_side);
    for bid_seq in &sides {
        for ask_seq in &sides {
            orders.clear();
            // Interleave submissions so seq order mixes sides.
            for (k, c) in bid_seq.iter().enumerate() {
                let (p, q) = choices[*c];
                orders.push(Order::bid(1 + k as u32, p, q, (2 * k) as u64));
            }
            for (k, c) in ask_seq.iter().enumerate() {
                let (p, q) = choices[*c];
                orders.push(Order::ask(101 + k as u32, p, q, (2 * k + 1) as u64));
            }
            visit(&orders);
        }
    }
}

fn all_sequences(max_len: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for c in 0..n {
                let mut t: Vec<usize> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Conservation, price sanity and zero-sum checks on an engine settlement.
pub fn settlement_violations(orders: &[Order], c: &Cleared) -> Vec<String> {
    let mut bad = Vec::new();
    let mut submitted: BTreeMap<(u32, bool), f64> = BTreeMap::new();
    for o in orders {
        *submitted.entry((o.agent_id, o.side == Side::Bid)).or_default() += o.quantity;
    }
    for ((agent, is_bid), qty) in &submitted {
        let matched: f64 = c
            .trades
            .iter()
            .filter(|t| if *is_bid { t.0 == *agent } else { t.1 == *agent })
            .map(|t| t.3)
            .sum();
        let grid = if *is_bid { &c.grid_buys } else { &c.grid_sells };
        let residual = grid.get(agent).copied().unwrap_or(0.0);
        if (matched + residual - qty).abs() > 1e-9 {
            bad.push(format!("agent {agent}: matched {matched} + grid {residual} != {qty}"));
        }
    }
    let total_bid: f64 = orders.iter().filter(|o| o.side == Side::Bid).map(|o| o.quantity).sum();
    let total_ask: f64 = orders.iter().filter(|o| o.side == Side::Ask).map(|o| o.quantity).sum();
    let matched: f64 = c.trades.iter().map(|t| t.3).sum();
    if matched > total_bid.min(total_ask) + 1e-9 {
        bad.push(format!("matched {matched} exceeds the smaller side"));
    }
    // Zero-sum: per-buyer spend and per-seller income summed separately.
    let mut spend: BTreeMap<u32, f64> = BTreeMap::new();
    let mut income: BTreeMap<u32, f64> = BTreeMap::new();
    for t in &c.trades {
        *spend.entry(t.0).or_default() += t.2 * t.3;
        *income.entry(t.1).or_default() += t.2 * t.3;
    }
    if (spend.values().sum::<f64>() - income.values().sum::<f64>()).abs() > 1e-9 {
        bad.push("internal payments do not net to zero".into());
    }
    let price_of = |agent: u32, side: Side| {
        orders
            .iter()
            .filter(|o| o.agent_id == agent && o.side == side)
            .map(|o| o.price)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p), hi.max(p)))
    };
    for t in &c.trades {
        let ask_lo = price_of(t.1, Side::Ask).0;
        let bid_hi = price_of(t.0, Side::Bid).1;
        if t.2 < ask_lo - 1e-12 || t.2 > bid_hi + 1e-12 {
            bad.push(format!("trade price {} outside [{ask_lo}, {bid_hi}]", t.2));
        }
    }
    for t in &c.trades {
        if !(t.3 > 0.0) {
            bad.push(format!("non-positive trade {t:?}"));
        }
        if t.2 < GRID.sell - 1e-12 || t.2 > GRID.buy + 1e-12 {
            bad.push(format!("trade price {} outside the tariff band", t.2));
        }
    }
    bad
}
