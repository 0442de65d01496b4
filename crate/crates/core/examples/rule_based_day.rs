//! Hour-by-hour decisions of the rule-based policy for one synthetic farm-day.
//!
//! cargo run --example rule_based_day [-- DAY_OF_YEAR]

use dairy_p2p::battery::BatteryState;
use dairy_p2p::profiles::{synthesize_scenario, ProfileShape};
use dairy_p2p::rulebased::{step, RuleConfig};

fn main() -> dairy_p2p::Result<()> {
    let day: u32 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(172);
    let shape = ProfileShape {
        start_day_of_year: day,
        ..ProfileShape::default()
    };
    let s = synthesize_scenario(1, 1, 7, &shape)?;
    let farm = &s.fleet[0];
    let spec = s.battery_for(farm);
    let mut battery = BatteryState::full();
    println!("{:>4} {:>6} {:>6} {:>8} {:>7} {:>7} {:>7} {:>7}", "hour", "load", "pv", "period", "charge", "dischg", "buy", "sell");
    for h in 0..24 {
        let period = s.tariff.period(h as u32)?;
        let (d, next) = step(
            farm,
            s.pv(farm.agent_id, h),
            s.wind_at(farm.agent_id, h),
            s.load(farm.agent_id, h),
            battery,
            period,
            &spec,
            &RuleConfig::default(),
        )?;
        battery = next;
        println!(
            "{h:>4} {:>6.2} {:>6.2} {:>8} {:>7.2} {:>7.2} {:>7.2} {:>7.2}  SoC {:.1}",
            s.load(farm.agent_id, h),
            s.pv(farm.agent_id, h),
            period.label(),
            d.charge_kwh,
            d.discharge_kwh,
            d.buy_kwh,
            d.sell_kwh,
            battery.soc_pct
        );
    }
    Ok(())
}
