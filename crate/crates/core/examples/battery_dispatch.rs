//! Charge and discharge a 13.5 kWh battery through a day of surpluses and deficits.
//!
//! cargo run --example battery_dispatch

use dairy_p2p::battery::{apply_charge, apply_discharge, BatterySpec, BatteryState};

fn main() -> dairy_p2p::Result<()> {
    let spec = BatterySpec::default();
    let mut state = BatteryState::new(40.0);
    // Positive: surplus offered to the battery; negative: deficit asked of it.
    let net = [6.0, 4.0, 3.0, -2.0, -7.0, -5.0, -4.0, 1.5];
    println!("{:>6} {:>9} {:>8} {:>10}", "net", "moved", "SoC %", "stored kWh");
    for e in net {
        let moved = if e >= 0.0 {
            let (s, acc) = apply_charge(state, e, &spec)?;
            state = s;
            acc
        } else {
            let (s, del) = apply_discharge(state, -e, &spec)?;
            state = s;
            -del
        };
        println!("{e:>6.1} {moved:>9.3} {:>8.3} {:>10.3}", state.soc_pct, state.stored_kwh(&spec));
    }
    Ok(())
}
