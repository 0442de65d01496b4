//! Hourly double auction.
//!
//! Bids are matched best-first against asks; each match trades the smaller
//! remaining quantity at the bid/ask midpoint. Whatever is left unmatched
//! settles with the grid: buyers at the time-of-use price, sellers at the
//! feed-in tariff.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pricing::PriceQuote;

/// Prices within this distance outside the tariff band are accepted.
const PRICE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Bid,
    Ask,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub agent_id: u32,
    pub side: Side,
    pub price: f64,
    pub quantity: f64,
    /// Submission index; breaks price ties first-come first-served.
    pub seq: u64,
}

impl Order {
    pub fn bid(agent_id: u32, price: f64, quantity: f64, seq: u64) -> Self {
        Self {
            agent_id,
            side: Side::Bid,
            price,
            quantity,
            seq,
        }
    }

    pub fn ask(agent_id: u32, price: f64, quantity: f64, seq: u64) -> Self {
        Self {
            agent_id,
            side: Side::Ask,
            price,
            quantity,
            seq,
        }
    }
}

/// Grid tariff in force for the auction hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPrices {
    pub buy: f64,
    pub sell: f64,
}

#[derive(Debug, Clone, Default)]
pub struct OrderBook {
    bids: Vec<Order>,
    asks: Vec<Order>,
}

fn bid_priority(a: &Order, b: &Order) -> Ordering {
    b.price.total_cmp(&a.price).then(a.seq.cmp(&b.seq))
}

fn ask_priority(a: &Order, b: &Order) -> Ordering {
    a.price.total_cmp(&b.price).then(a.seq.cmp(&b.seq))
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, order: Order) {
        let (book, cmp): (&mut Vec<Order>, fn(&Order, &Order) -> Ordering) = match order.side {
            Side::Bid => (&mut self.bids, bid_priority),
            Side::Ask => (&mut self.asks, ask_priority),
        };
        let at = book.partition_point(|o| cmp(o, &order) != Ordering::Greater);
        book.insert(at, order);
    }

    pub fn bids(&self) -> &[Order] {
        &self.bids
    }

    pub fn asks(&self) -> &[Order] {
        &self.asks
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty() && self.asks.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub buyer_id: u32,
    pub seller_id: u32,
    pub price: f64,
    pub quantity: f64,
    pub hour: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub trades: Vec<TradeRecord>,
    pub grid_buys: BTreeMap<u32, f64>,
    pub grid_sells: BTreeMap<u32, f64>,
}

impl Settlement {
    pub fn matched_kwh(&self) -> f64 {
        self.trades.iter().map(|t| t.quantity).sum()
    }

    pub fn p2p_bought(&self, agent: u32) -> f64 {
        self.trades.iter().filter(|t| t.buyer_id == agent).map(|t| t.quantity).sum()
    }

    pub fn p2p_sold(&self, agent: u32) -> f64 {
        self.trades.iter().filter(|t| t.seller_id == agent).map(|t| t.quantity).sum()
    }

    pub fn p2p_spend(&self, agent: u32) -> f64 {
        self.trades
            .iter()
            .filter(|t| t.buyer_id == agent)
            .map(|t| t.price * t.quantity)
            .sum()
    }

    pub fn p2p_income(&self, agent: u32) -> f64 {
        self.trades
            .iter()
            .filter(|t| t.seller_id == agent)
            .map(|t| t.price * t.quantity)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClearingOptions {
    /// Match pairs even when the best bid is below the best ask.
    pub strict_paper_mode: bool,
}

fn validate(order: &Order, grid: GridPrices) -> Result<()> {
    let err = |message: String| Error::Order {
        agent: order.agent_id,
        message,
    };
    if !(order.quantity > 0.0 && order.quantity.is_finite()) {
        return Err(err(format!("quantity {} must be positive", order.quantity)));
    }
    if !(order.price >= grid.sell - PRICE_TOLERANCE && order.price <= grid.buy + PRICE_TOLERANCE) {
        return Err(err(format!(
            "price {} outside tariff band [{}, {}]",
            order.price, grid.sell, grid.buy
        )));
    }
    Ok(())
}

/// Clear one auction period.
pub fn clear(
    bids: &[Order],
    asks: &[Order],
    grid: GridPrices,
    hour: usize,
    options: ClearingOptions,
) -> Result<Settlement> {
    let mut book = OrderBook::new();
    for o in bids {
        if o.side != Side::Bid {
            return Err(Error::Order {
                agent: o.agent_id,
                message: "ask submitted as bid".into(),
            });
        }
        validate(o, grid)?;
        book.insert(*o);
    }
    for o in asks {
        if o.side != Side::Ask {
            return Err(Error::Order {
                agent: o.agent_id,
                message: "bid submitted as ask".into(),
            });
        }
        validate(o, grid)?;
        book.insert(*o);
    }
    Ok(clear_book(&book, hour, options))
}

/// Clear a pre-validated book.
pub fn clear_book(book: &OrderBook, hour: usize, options: ClearingOptions) -> Settlement {
    let bids = book.bids();
    let asks = book.asks();
    let mut bid_left: Vec<f64> = bids.iter().map(|o| o.quantity).collect();
    let mut ask_left: Vec<f64> = asks.iter().map(|o| o.quantity).collect();
    let mut trades = Vec::new();
    let (mut i, mut j) = (0, 0);

    while i < bids.len() && j < asks.len() {
        let (bid, ask) = (&bids[i], &asks[j]);
        if !options.strict_paper_mode && bid.price < ask.price {
            break;
        }
        let qty = bid_left[i].min(ask_left[j]);
        trades.push(TradeRecord {
            buyer_id: bid.agent_id,
            seller_id: ask.agent_id,
            price: (bid.price + ask.price) / 2.0,
            quantity: qty,
            hour,
        });
        if bid_left[i] <= ask_left[j] {
            ask_left[j] -= bid_left[i];
            bid_left[i] = 0.0;
        } else {
            bid_left[i] -= ask_left[j];
            ask_left[j] = 0.0;
        }
        if bid_left[i] == 0.0 {
            i += 1;
        }
        if ask_left[j] == 0.0 {
            j += 1;
        }
    }

    let mut settlement = Settlement {
        trades,
        ..Settlement::default()
    };
    for (o, left) in bids.iter().zip(&bid_left) {
        if *left > 0.0 {
            *settlement.grid_buys.entry(o.agent_id).or_default() += left;
        }
    }
    for (o, left) in asks.iter().zip(&ask_left) {
        if *left > 0.0 {
            *settlement.grid_sells.entry(o.agent_id).or_default() += left;
        }
    }
    settlement
}

/// Net position of one agent for the hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentFlow {
    pub agent_id: u32,
    pub buy_kwh: f64,
    pub sell_kwh: f64,
}

/// Orders at the advisor's prices: buyers bid the IBP, sellers ask the ISP.
pub fn default_orders(flows: &[AgentFlow], quote: &PriceQuote) -> Vec<Order> {
    priced_orders(flows, quote.ibp, quote.isp)
}

/// Orders when no price advice is available. Each side quotes the grid
/// price it would otherwise face from the other side of the meter: sellers
/// ask the purchase tariff and buyers bid the feed-in tariff, so nothing
/// crosses and all energy settles at grid prices.
pub fn unadvised_orders(flows: &[AgentFlow], grid: GridPrices) -> Vec<Order> {
    priced_orders(flows, grid.sell, grid.buy)
}

fn priced_orders(flows: &[AgentFlow], bid_price: f64, ask_price: f64) -> Vec<Order> {
    let mut orders = Vec::new();
    for f in flows {
        let seq = orders.len() as u64;
        if f.buy_kwh > 0.0 {
            orders.push(Order::bid(f.agent_id, bid_price, f.buy_kwh, seq));
        } else if f.sell_kwh > 0.0 {
            orders.push(Order::ask(f.agent_id, ask_price, f.sell_kwh, seq));
        }
    }
    orders
}

pub fn split_sides(orders: &[Order]) -> (Vec<Order>, Vec<Order>) {
    orders.iter().partition(|o| o.side == Side::Bid)
}
