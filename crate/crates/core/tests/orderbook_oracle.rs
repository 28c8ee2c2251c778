mod support {
    pub mod book_oracle;
}

use proptest::prelude::*;
use stockmarl_core::{Order, OrderBook, Side};
use support::book_oracle::brute_force_clear;

fn order_strategy() -> impl Strategy<Value = Order> {
    (0usize..5, any::<bool>(), 95u32..106, 1u64..12).prop_map(|(agent, bid, tick, qty)| Order {
        agent_id: agent,
        stock_id: 0,
        side: if bid { Side::Bid } else { Side::Ask },
        price: tick as f64,
        quantity: qty,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn clear_matches_unit_expansion(orders in prop::collection::vec(order_strategy(), 0..=8)) {
        let mut book = OrderBook::new();
        for o in &orders {
            book.submit(*o).unwrap();
        }
        let got = book.clear(100.0, 0);
        let want = brute_force_clear(&orders, 100.0);
        let trades: Vec<(usize, usize, f64, u64)> =
            got.trades.iter().map(|t| (t.buyer_id, t.seller_id, t.price, t.quantity)).collect();
        let expected: Vec<(usize, usize, f64, u64)> =
            want.trades.iter().map(|t| (t.buyer, t.seller, t.price, t.quantity)).collect();
        prop_assert_eq!(trades, expected);
        prop_assert_eq!(got.new_price, want.price);
        prop_assert_eq!(got.volume, want.volume);
    }

    #[test]
    fn clearing_invariants(orders in prop::collection::vec(order_strategy(), 0..=8)) {
        let mut book = OrderBook::new();
        for o in &orders {
            book.submit(*o).unwrap();
        }
        let r = book.clear(100.0, 3);
        for t in &r.trades {
            prop_assert!(t.ask_price <= t.price && t.price <= t.bid_price);
            prop_assert!(t.buyer_id != t.seller_id);
        }
        for w in r.trades.windows(2) {
            prop_assert!(w[0].bid_price >= w[1].bid_price);
            prop_assert!(w[0].ask_price <= w[1].ask_price);
        }
        if let Some(s) = r.residual_spread {
            prop_assert!(s > 0.0);
        }
        // Fills never exceed the submitted quantity, and both sides sum to the volume.
        let mut bought = 0;
        let mut sold = 0;
        for (seq, o) in orders.iter().enumerate() {
            prop_assert!(r.filled[seq] <= o.quantity);
            match o.side {
                Side::Bid => bought += r.filled[seq],
                Side::Ask => sold += r.filled[seq],
            }
        }
        prop_assert_eq!(bought, r.volume);
        prop_assert_eq!(sold, r.volume);
        prop_assert!(book.is_empty());
    }
}
