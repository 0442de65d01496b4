//! Clear a small order book and show trades and grid residuals.
//!
//! cargo run --example double_auction [-- --strict]

use dairy_p2p::market::{clear, ClearingOptions, GridPrices, Order};

fn main() -> dairy_p2p::Result<()> {
    let strict = std::env::args().any(|a| a == "--strict");
    let grid = GridPrices { buy: 0.66, sell: 0.135 };
    let bids = [Order::bid(1, 0.60, 5.0, 0), Order::bid(2, 0.40, 5.0, 1)];
    let asks = [Order::ask(3, 0.20, 4.0, 2), Order::ask(4, 0.50, 8.0, 3)];
    let s = clear(&bids, &asks, grid, 18, ClearingOptions { strict_paper_mode: strict })?;
    for t in &s.trades {
        println!(
            "agent {} buys {:.1} kWh from agent {} at {:.3}",
            t.buyer_id, t.quantity, t.seller_id, t.price
        );
    }
    for (a, q) in &s.grid_buys {
        println!("agent {a} buys {q:.1} kWh from the grid at {:.3}", grid.buy);
    }
    for (a, q) in &s.grid_sells {
        println!("agent {a} sells {q:.1} kWh to the grid at {:.3}", grid.sell);
    }
    Ok(())
}
