//! Brute-force matcher: every order is expanded into unit lots which are
//! paired one by one. Shared by the core property tests and the acceptance suite.

use stockmarl_core::{Order, Side};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTrade {
    pub buyer: usize,
    pub seller: usize,
    pub price: f64,
    pub quantity: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub trades: Vec<OracleTrade>,
    pub price: f64,
    pub volume: u64,
}

/// Orders are given in submission order.
pub fn brute_force_clear(orders: &[Order], prev_price: f64) -> OracleResult {
    let mut bids: Vec<usize> = (0..orders.len()).filter(|&i| orders[i].side == Side::Bid).collect();
    let mut asks: Vec<usize> = (0..orders.len()).filter(|&i| orders[i].side == Side::Ask).collect();
    // Stable sorts keep submission order among equal prices.
    bids.sort_by(|&a, &b| orders[b].price.partial_cmp(&orders[a].price).unwrap());
    asks.sort_by(|&a, &b| orders[a].price.partial_cmp(&orders[b].price).unwrap());
    let units = |idx: &[usize]| -> Vec<usize> {
        idx.iter().flat_map(|&i| std::iter::repeat_n(i, orders[i].quantity as usize)).collect()
    };
    let (bu, au) = (units(&bids), units(&asks));

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < bu.len() && j < au.len() {
        let (b, a) = (&orders[bu[i]], &orders[au[j]]);
        if b.price < a.price {
            break;
        }
        if b.agent_id == a.agent_id {
            let (bo, ao) = (bu[i], au[j]);
            while i < bu.len() && bu[i] == bo {
                i += 1;
            }
            while j < au.len() && au[j] == ao {
                j += 1;
            }
            continue;
        }
        pairs.push((bu[i], au[j]));
        i += 1;
        j += 1;
    }

    let mut trades: Vec<OracleTrade> = Vec::new();
    let mut last: Option<(usize, usize)> = None;
    for &(b, a) in &pairs {
        if last == Some((b, a)) {
            trades.last_mut().unwrap().quantity += 1;
        } else {
            trades.push(OracleTrade {
                buyer: orders[b].agent_id,
                seller: orders[a].agent_id,
                price: (orders[b].price + orders[a].price) / 2.0,
                quantity: 1,
            });
            last = Some((b, a));
        }
    }
    OracleResult {
        price: trades.last().map_or(prev_price, |t| t.price),
        volume: pairs.len() as u64,
        trades,
    }
}
