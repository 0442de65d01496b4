//! Seeded simulator of a community of dairy farms that trade solar energy
//! with each other through a double auction, with internal prices set from
//! the community's supply/demand ratio.
//!
//! The crate is organised by stage of one simulated hour:
//!
//! * [`profiles`]: scenarios, farm configs, load and generation series
//! * [`pricing`]: time-of-use tariff and the internal price advisor
//! * [`battery`]: state-of-charge bookkeeping
//! * [`rulebased`]: the heuristic battery and trading policy
//! * [`env`]: observations, actions, rewards and the community step
//! * [`market`]: order book and double-auction clearing
//! * [`rl`]: tabular Q-learning, DQN and PPO
//! * [`sim`]: full runs, KPIs and scenario comparison
//! * [`cli`]: the command-line front end

pub mod battery;
pub mod cli;
pub mod env;
pub mod error;
pub mod market;
pub mod pricing;
pub mod profiles;
pub mod rl;
pub mod rulebased;
pub mod sim;

pub use error::{Error, Result};
