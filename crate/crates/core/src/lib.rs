//! Multi-agent stock market simulator with reinforcement-learning traders.
//!
//! Agents forecast prices with a tabular policy over technical tools blended
//! with a noisy fundamental valuation, then trade through a per-stock limit
//! order book that clears at bid/ask midpoints. Both policies learn from
//! off-policy hindsight updates.

pub mod agents;
pub mod analytics;
pub mod config;
pub mod error;
pub mod forecast;
pub mod fundamentals;
pub mod orderbook;
pub mod policy;
pub mod simulator;
pub mod stats;
pub mod trade;

pub use agents::{AgentParams, AgentRole, AgentState, Portfolio};
pub use config::{rng_stream, Scenario, ScenarioKind, SimConfig, SimRng, StreamDomain};
pub use error::{ConfigError, OrderError, ShapeMismatch};
pub use orderbook::{AgentId, ClearingResult, Order, OrderBook, Side, StockId, Trade};
pub use policy::{policy_distance, PolicyTable};
pub use simulator::{
    run, run_all, run_world, AgentSummary, Diagnostics, MarketRecord, PolicySnapshot, RunOptions, RunOutput, World,
};
