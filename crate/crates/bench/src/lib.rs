//! Fixtures shared by the criterion benches.

use rand::Rng;
use stockmarl_core::{rng_stream, Order, Side, SimConfig, StreamDomain};

/// A book of `n` orders around 100 with coarse ticks and a handful of agents.
pub fn random_orders(seed: u64, n: usize) -> Vec<Order> {
    let mut rng = rng_stream(seed, StreamDomain::Analytics, 0);
    (0..n)
        .map(|_| Order {
            agent_id: rng.random_range(0..n.max(1)),
            stock_id: 0,
            side: if rng.random::<bool>() { Side::Bid } else { Side::Ask },
            price: 95.0 + rng.random_range(0..40) as f64 * 0.25,
            quantity: rng.random_range(1..50),
        })
        .collect()
}

/// Desk configuration shortened for per-iteration timing.
pub fn short_desk(n_agents: usize, n_steps: usize) -> SimConfig {
    SimConfig {
        n_agents,
        n_steps,
        n_runs: 1,
        learning_phase: 50,
        ..SimConfig::desk()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_usable() {
        let o = random_orders(1, 64);
        assert_eq!(o.len(), 64);
        assert_eq!(o, random_orders(1, 64));
        assert!(short_desk(50, 200).validate().is_ok());
    }
}
