//! Generate a synthetic community and write it as a scenario directory.
//!
//! cargo run --example synthetic_scenario -- OUT_DIR [AGENTS] [DAYS] [SEED]

use dairy_p2p::profiles::{load_scenario, synthesize_scenario, write_scenario, ProfileShape};

fn main() -> dairy_p2p::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args.first().cloned().unwrap_or_else(|| "scenario".into());
    let num = |i: usize, d: u64| args.get(i).and_then(|a| a.parse().ok()).unwrap_or(d);
    let s = synthesize_scenario(num(1, 10) as usize, num(2, 365) as usize, num(3, 1), &ProfileShape::default())?;
    write_scenario(&s, &out)?;
    let back = load_scenario(&out)?;
    assert_eq!(back.horizon_hours, s.horizon_hours);
    for farm in &back.fleet {
        let load = back.loads[&farm.agent_id].total();
        let pv = back.generation[&farm.agent_id].total();
        println!(
            "farm {:>2}: {:>3} cows, {:>4.0} kW PV, load {:>8.0} kWh, PV {:>7.0} kWh ({:.0}%)",
            farm.agent_id,
            farm.herd_size,
            farm.pv_capacity_kw,
            load,
            pv,
            100.0 * pv / load
        );
    }
    println!("wrote {out}/");
    Ok(())
}
