//! Internal sell/buy prices across supply-demand ratios for each tariff period.
//!
//! cargo run --example pricing_advisor

use dairy_p2p::pricing::{compute_sdr, internal_prices, Period, TariffSchedule};

fn main() -> dairy_p2p::Result<()> {
    let tariff = TariffSchedule::default();
    let fit = tariff.sell_price();
    println!("feed-in tariff {fit:.3} EUR/kWh\n");
    for period in Period::ALL {
        let buy = tariff.buy_price(period);
        println!("{:<9} grid buy {buy:.3}", period.label());
        println!("  {:>6} {:>8} {:>8}", "SDR", "ISP", "IBP");
        for (tsp, tbp) in [(0.0, 10.0), (2.5, 10.0), (5.0, 10.0), (7.5, 10.0), (10.0, 10.0), (15.0, 10.0)] {
            let q = internal_prices(compute_sdr(tsp, tbp)?, buy, fit)?;
            println!("  {:>6.2} {:>8.4} {:>8.4}", tsp / tbp, q.isp, q.ibp);
        }
    }
    let idle = internal_prices(compute_sdr(0.0, 0.0)?, 0.44, fit)?;
    println!("\nno trading intent: internal market open = {}", idle.internal_market);
    Ok(())
}
