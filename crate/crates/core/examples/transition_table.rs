//! Every action applied to a few representative observations: flows, next SoC and reward.
//!
//! cargo run --example transition_table

use dairy_p2p::env::{transition, Action, EnvConfig, Observation};

fn main() {
    let cfg = EnvConfig::default();
    let cases = [
        ("night deficit, half battery", 5.0, 2.0, 40.0, 3),
        ("midday surplus, full battery", 4.0, 10.0, 95.0, 12),
        ("peak deficit", 6.0, 1.0, 50.0, 18),
        ("near-peak balance", 4.0, 4.05, 30.0, 16),
    ];
    for (name, load, generation, soc, hour) in cases {
        let obs = Observation { load, generation, soc_pct: soc, hour, isp: 0.135, ibp: 0.44 };
        println!("{name}: load {load}, generation {generation}, SoC {soc}, hour {hour}");
        for a in Action::ALL {
            let o = transition(&obs, a, &cfg);
            println!(
                "  {:<20} buy {:>6.2} sell {:>6.2} SoC {:>7.3} reward {}",
                a.name(),
                o.buy_kwh,
                o.sell_kwh,
                o.new_soc,
                o.reward
            );
        }
    }
}
