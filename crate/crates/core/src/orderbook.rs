//! Per-stock limit order book with single-shot mid-price clearing.
//!
//! Bids are kept in descending price order and asks in ascending price order,
//! with ties broken by submission sequence. [`OrderBook::clear`] walks both
//! queues from the top while the best bid is at least the best ask, executing
//! each matched pair at the mid-price of the two limits. Nothing rests across
//! steps: the book is emptied by every clear.

use serde::{Deserialize, Serialize};

use crate::error::OrderError;

pub type AgentId = usize;
pub type StockId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub agent_id: AgentId,
    pub stock_id: StockId,
    pub side: Side,
    pub price: f64,
    pub quantity: u64,
}

impl Order {
    pub fn bid(agent_id: AgentId, stock_id: StockId, price: f64, quantity: u64) -> Self {
        Order {
            agent_id,
            stock_id,
            side: Side::Bid,
            price,
            quantity,
        }
    }

    pub fn ask(agent_id: AgentId, stock_id: StockId, price: f64, quantity: u64) -> Self {
        Order {
            agent_id,
            stock_id,
            side: Side::Ask,
            price,
            quantity,
        }
    }

    pub fn check(&self) -> Result<(), OrderError> {
        if self.quantity == 0 {
            return Err(OrderError::ZeroQuantity);
        }
        if !(self.price > 0.0 && self.price.is_finite()) {
            return Err(OrderError::BadPrice(self.price));
        }
        Ok(())
    }
}

/// Submission sequence number; unique within one book between two clears.
pub type OrderSeq = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub buyer_id: AgentId,
    pub seller_id: AgentId,
    pub price: f64,
    pub quantity: u64,
    pub step: usize,
    pub bid_price: f64,
    pub ask_price: f64,
    pub bid_seq: OrderSeq,
    pub ask_seq: OrderSeq,
}

impl Trade {
    pub fn value(&self) -> f64 {
        self.price * self.quantity as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClearingResult {
    pub trades: Vec<Trade>,
    pub new_price: f64,
    pub volume: u64,
    /// Best ask minus best bid among the orders left after clearing.
    pub residual_spread: Option<f64>,
    /// Filled quantity of every submitted order, indexed by sequence number.
    pub filled: Vec<u64>,
}

#[derive(Debug, Clone, Copy)]
struct Resting {
    seq: OrderSeq,
    order: Order,
}

#[derive(Debug, Clone, Default)]
pub struct OrderBook {
    bids: Vec<Resting>,
    asks: Vec<Resting>,
    next_seq: OrderSeq,
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty() && self.asks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bids.len() + self.asks.len()
    }

    /// Inserts `order` and returns its sequence number.
    pub fn submit(&mut self, order: Order) -> Result<OrderSeq, OrderError> {
        order.check()?;
        let seq = self.next_seq;
        self.next_seq += 1;
        let entry = Resting { seq, order };
        // Insert after every order with equal or better price, keeping FIFO among ties.
        match order.side {
            Side::Bid => {
                let at = self.bids.partition_point(|r| r.order.price >= order.price);
                self.bids.insert(at, entry);
            }
            Side::Ask => {
                let at = self.asks.partition_point(|r| r.order.price <= order.price);
                self.asks.insert(at, entry);
            }
        }
        Ok(seq)
    }

    pub fn best_bid(&self) -> Option<f64> {
        self.bids.first().map(|r| r.order.price)
    }

    pub fn best_ask(&self) -> Option<f64> {
        self.asks.first().map(|r| r.order.price)
    }

    /// Bid prices in queue order.
    pub fn bid_prices(&self) -> Vec<f64> {
        self.bids.iter().map(|r| r.order.price).collect()
    }

    pub fn ask_prices(&self) -> Vec<f64> {
        self.asks.iter().map(|r| r.order.price).collect()
    }

    /// Agent ids of the bid queue, in priority order.
    pub fn bid_agents(&self) -> Vec<AgentId> {
        self.bids.iter().map(|r| r.order.agent_id).collect()
    }

    /// Best ask minus best bid; negative when the book is crossed.
    pub fn spread(&self) -> Option<f64> {
        Some(self.best_ask()? - self.best_bid()?)
    }

    /// Matches crossing orders and empties the book.
    pub fn clear(&mut self, prev_price: f64, step: usize) -> ClearingResult {
        let mut filled = vec![0u64; self.next_seq];
        let mut trades = Vec::new();
        let mut bi = 0;
        let mut ai = 0;
        let mut bid_left = self.bids.first().map_or(0, |r| r.order.quantity);
        let mut ask_left = self.asks.first().map_or(0, |r| r.order.quantity);

        while bi < self.bids.len() && ai < self.asks.len() {
            let bid = self.bids[bi];
            let ask = self.asks[ai];
            if bid.order.price < ask.order.price {
                break;
            }
            if bid.order.agent_id == ask.order.agent_id {
                // Self-match: both orders leave the book without trading.
                bi += 1;
                ai += 1;
                bid_left = self.bids.get(bi).map_or(0, |r| r.order.quantity);
                ask_left = self.asks.get(ai).map_or(0, |r| r.order.quantity);
                continue;
            }
            let qty = bid_left.min(ask_left);
            trades.push(Trade {
                buyer_id: bid.order.agent_id,
                seller_id: ask.order.agent_id,
                price: 0.5 * (bid.order.price + ask.order.price),
                quantity: qty,
                step,
                bid_price: bid.order.price,
                ask_price: ask.order.price,
                bid_seq: bid.seq,
                ask_seq: ask.seq,
            });
            filled[bid.seq] += qty;
            filled[ask.seq] += qty;
            bid_left -= qty;
            ask_left -= qty;
            if bid_left == 0 {
                bi += 1;
                bid_left = self.bids.get(bi).map_or(0, |r| r.order.quantity);
            }
            if ask_left == 0 {
                ai += 1;
                ask_left = self.asks.get(ai).map_or(0, |r| r.order.quantity);
            }
        }

        let residual_spread = match (self.bids.get(bi), self.asks.get(ai)) {
            (Some(b), Some(a)) => Some(a.order.price - b.order.price),
            _ => None,
        };
        let volume = trades.iter().map(|t| t.quantity).sum();
        let new_price = trades.last().map_or(prev_price, |t| t.price);

        self.bids.clear();
        self.asks.clear();
        self.next_seq = 0;

        ClearingResult {
            trades,
            new_price,
            volume,
            residual_spread,
            filled,
        }
    }
}
