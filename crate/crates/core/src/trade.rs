//! Order-placement learner: a 108 x 9 tabular policy turning a forecast and
//! the agent's portfolio into a limit order, scored `tau` steps later by the
//! cashflow difference against not having acted.

use crate::forecast::sextile_reward;
use crate::orderbook::{AgentId, Order, Side, StockId};
use crate::policy::PolicyTable;
use crate::stats::tercile;

pub const TRADE_STATES: usize = 108;
pub const TRADE_ACTIONS: usize = 9;

/// Relative spread assumed when no spread has been observed yet.
pub const DEFAULT_REL_SPREAD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Down,
    Flat,
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TradeState {
    pub direction: Direction,
    pub volatility: u8,
    pub bonds_high: bool,
    pub holdings_high: bool,
    pub volume: u8,
}

impl TradeState {
    pub fn index(self) -> usize {
        self.direction as usize * 36
            + self.volatility as usize * 12
            + self.bonds_high as usize * 6
            + self.holdings_high as usize * 3
            + self.volume as usize
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < TRADE_STATES);
        TradeState {
            direction: [Direction::Down, Direction::Flat, Direction::Up][i / 36],
            volatility: (i / 12 % 3) as u8,
            bonds_high: i / 6 % 2 == 1,
            holdings_high: i / 3 % 2 == 1,
            volume: (i % 3) as u8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TradeSide {
    Hold,
    Buy,
    Sell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggressiveness {
    Passive,
    Neutral,
    Aggressive,
}

impl Aggressiveness {
    /// Sign applied to the gesture-scaled spread.
    pub fn sign(self) -> f64 {
        match self {
            Aggressiveness::Passive => -1.0,
            Aggressiveness::Neutral => 0.0,
            Aggressiveness::Aggressive => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TradeAction {
    pub side: TradeSide,
    pub aggr: Aggressiveness,
}

impl TradeAction {
    pub fn index(self) -> usize {
        self.side as usize * 3 + self.aggr as usize
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < TRADE_ACTIONS);
        TradeAction {
            side: [TradeSide::Hold, TradeSide::Buy, TradeSide::Sell][i / 3],
            aggr: [
                Aggressiveness::Passive,
                Aggressiveness::Neutral,
                Aggressiveness::Aggressive,
            ][i % 3],
        }
    }
}

/// Forecast direction with a relative dead zone `band` around the price.
pub fn direction(forecast: f64, price: f64, band: f64) -> Direction {
    if forecast < price * (1.0 - band) {
        Direction::Down
    } else if forecast > price * (1.0 + band) {
        Direction::Up
    } else {
        Direction::Flat
    }
}

/// True iff `x` reaches the lower median of `reference`; false when empty.
pub fn at_least_median(x: f64, reference: &[f64]) -> bool {
    let n = reference.len();
    if n == 0 {
        return false;
    }
    let le = reference.iter().filter(|&&v| v <= x).count();
    // x >= v[ceil(n/2) - 1] iff at least ceil(n/2) values are <= x.
    le >= n.div_ceil(2)
}

/// Everything the trade state is built from, with trailing histories.
#[derive(Debug, Clone, Copy)]
pub struct TradeObservation<'a> {
    pub forecast: f64,
    pub price: f64,
    pub flat_band: f64,
    /// Short-window volatility tercile, shared with the forecaster.
    pub volatility: u8,
    pub bonds: (f64, &'a [f64]),
    pub holdings_value: (f64, &'a [f64]),
    pub last_volume: (f64, &'a [f64]),
}

pub fn observe_state_t(obs: &TradeObservation<'_>) -> TradeState {
    TradeState {
        direction: direction(obs.forecast, obs.price, obs.flat_band),
        volatility: obs.volatility,
        bonds_high: at_least_median(obs.bonds.0, obs.bonds.1),
        holdings_high: at_least_median(obs.holdings_value.0, obs.holdings_value.1),
        volume: tercile(obs.last_volume.0, obs.last_volume.1),
    }
}

/// Per-agent inputs to order construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderContext {
    pub agent_id: AgentId,
    pub stock_id: StockId,
    pub forecast: f64,
    pub price: f64,
    /// Last observed bid-ask spread in currency, if any.
    pub spread: Option<f64>,
    pub gesture: f64,
    /// Cash budget available to buy this stock.
    pub bonds: f64,
    pub holdings: u64,
    pub trade_fraction: f64,
}

impl OrderContext {
    pub fn rel_spread(&self) -> f64 {
        self.spread
            .map(|s| s.abs() / self.price)
            .unwrap_or(DEFAULT_REL_SPREAD)
    }

    pub fn limit_price(&self, side: TradeSide, aggr: Aggressiveness) -> f64 {
        let shift = self.gesture * aggr.sign() * self.rel_spread();
        match side {
            TradeSide::Buy => self.forecast * (1.0 + shift),
            TradeSide::Sell => self.forecast * (1.0 - shift),
            TradeSide::Hold => self.forecast,
        }
    }

    pub fn buy_quantity(&self, limit: f64) -> u64 {
        if limit <= 0.0 || self.bonds <= 0.0 {
            return 0;
        }
        (self.trade_fraction * self.bonds / limit).floor() as u64
    }

    pub fn sell_quantity(&self) -> u64 {
        (self.trade_fraction * self.holdings as f64).floor() as u64
    }
}

/// Turns an action into a limit order; `None` for holds and empty quantities.
pub fn make_order(ctx: &OrderContext, action: TradeAction) -> Option<Order> {
    let limit = ctx.limit_price(action.side, action.aggr);
    let (side, qty) = match action.side {
        TradeSide::Hold => return None,
        TradeSide::Buy => (Side::Bid, ctx.buy_quantity(limit)),
        TradeSide::Sell => (Side::Ask, ctx.sell_quantity()),
    };
    (qty > 0 && limit > 0.0 && limit.is_finite()).then_some(Order {
        agent_id: ctx.agent_id,
        stock_id: ctx.stock_id,
        side,
        price: limit,
        quantity: qty,
    })
}

/// A trade decision waiting for its horizon to elapse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingTrade {
    pub issued: usize,
    pub state: usize,
    pub action: usize,
    /// Order context at issue, used to replay the alternatives.
    pub ctx: OrderContext,
    /// Signed executed quantity: positive bought, negative sold.
    pub filled: i64,
    /// Sum of price x quantity over the fills.
    pub exec_value: f64,
    pub fees: f64,
    /// Clearing price of the issue step, `P(issued + 1)`.
    pub clearing_price: f64,
}

/// Value of holding `qty` more (Buy) or fewer (Sell) shares bought or sold at
/// `exec_price`, marked at `realized`, net of fees.
pub fn option_value(side: TradeSide, qty: u64, exec_price: f64, realized: f64, fee_rate: f64) -> f64 {
    let q = qty as f64;
    let fee = fee_rate * q * exec_price;
    match side {
        TradeSide::Hold => 0.0,
        TradeSide::Buy => q * (realized - exec_price) - fee,
        TradeSide::Sell => q * (exec_price - realized) - fee,
    }
}

/// Replayed value of each side `[Hold, Buy, Sell]` at neutral pricing.
///
/// A replayed order executes at its own limit when the issue step's clearing
/// price reached it (at or below a bid, at or above an ask); otherwise it
/// executes nothing and is worth 0.
pub fn replay_sides(pending: &PendingTrade, realized: f64, fee_rate: f64) -> [f64; 3] {
    let ctx = &pending.ctx;
    let mut values = [0.0; 3];
    let buy_limit = ctx.limit_price(TradeSide::Buy, Aggressiveness::Neutral);
    if pending.clearing_price <= buy_limit {
        values[1] = option_value(TradeSide::Buy, ctx.buy_quantity(buy_limit), buy_limit, realized, fee_rate);
    }
    let sell_limit = ctx.limit_price(TradeSide::Sell, Aggressiveness::Neutral);
    if pending.clearing_price >= sell_limit {
        values[2] = option_value(TradeSide::Sell, ctx.sell_quantity(), sell_limit, realized, fee_rate);
    }
    values
}

/// Cashflow difference between what the agent did and not acting.
///
/// Executed orders are marked to `realized` at their fill prices net of the
/// fees actually paid. Holds and unfilled orders are compared against the
/// best replayed Buy or Sell alternative, so their score is minus that
/// alternative's value.
pub fn resolve_counterfactual(pending: &PendingTrade, realized: f64, fee_rate: f64) -> f64 {
    if pending.filled != 0 {
        let q = pending.filled.unsigned_abs() as f64;
        let held = if pending.filled > 0 {
            realized * q - pending.exec_value
        } else {
            pending.exec_value - realized * q
        };
        return held - pending.fees;
    }
    let alt = replay_sides(pending, realized, fee_rate);
    -alt[1].max(alt[2])
}

/// Sextile reward with larger-is-better orientation: `q` is the fraction of
/// past differences strictly below `diff`; the top sextile earns +4.
pub fn reward_t(diff: f64, history: &[f64]) -> i8 {
    debug_assert!(!history.is_empty());
    let below = history.iter().filter(|&&d| d < diff).count();
    sextile_reward(below, history.len(), false)
}

/// Hindsight-optimal side among `[Hold, Buy, Sell]`; ties go to Hold, then Buy.
pub fn hindsight_best_side(values: &[f64; 3]) -> TradeSide {
    let mut best = 0;
    for i in 1..3 {
        if values[i] > values[best] {
            best = i;
        }
    }
    [TradeSide::Hold, TradeSide::Buy, TradeSide::Sell][best]
}

/// Best action: the optimal side, keeping the taken aggressiveness when the
/// side matches and neutral otherwise.
pub fn hindsight_action(pending: &PendingTrade, realized: f64, fee_rate: f64) -> usize {
    let taken = TradeAction::from_index(pending.action);
    let side = hindsight_best_side(&replay_sides(pending, realized, fee_rate));
    let aggr = if side == taken.side {
        taken.aggr
    } else {
        Aggressiveness::Neutral
    };
    TradeAction { side, aggr }.index()
}

/// Reinforces the hindsight-optimal action at `rate`. Returns that action.
pub fn hindsight_update_t(
    policy: &mut PolicyTable,
    pending: &PendingTrade,
    realized: f64,
    fee_rate: f64,
    rate: f64,
) -> usize {
    let best = hindsight_action(pending, realized, fee_rate);
    policy.reinforce(pending.state, best, rate);
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    const FEE: f64 = 0.001;

    fn ctx() -> OrderContext {
        OrderContext {
            agent_id: 3,
            stock_id: 0,
            forecast: 100.0,
            price: 100.0,
            spread: Some(2.0),
            gesture: 0.5,
            bonds: 15_000.0,
            holdings: 100,
            trade_fraction: 0.5,
        }
    }

    fn pending(action: TradeAction, clearing: f64) -> PendingTrade {
        PendingTrade {
            issued: 0,
            state: 0,
            action: action.index(),
            ctx: ctx(),
            filled: 0,
            exec_value: 0.0,
            fees: 0.0,
            clearing_price: clearing,
        }
    }

    const HOLD: TradeAction = TradeAction {
        side: TradeSide::Hold,
        aggr: Aggressiveness::Neutral,
    };

    #[test]
    fn index_encoding() {
        for i in 0..TRADE_STATES {
            assert_eq!(TradeState::from_index(i).index(), i);
        }
        for i in 0..TRADE_ACTIONS {
            assert_eq!(TradeAction::from_index(i).index(), i);
        }
    }

    #[test]
    fn direction_dead_zone() {
        assert_eq!(direction(100.0, 100.0, 0.005), Direction::Flat);
        assert_eq!(direction(102.0, 100.0, 0.005), Direction::Up);
        assert_eq!(direction(99.0, 100.0, 0.005), Direction::Down);
        assert_eq!(direction(100.4, 100.0, 0.005), Direction::Flat);
    }

    #[test]
    fn zero_volume_is_low_tercile() {
        let vols = [10.0, 20.0, 30.0, 40.0, 50.0];
        let obs = TradeObservation {
            forecast: 100.0,
            price: 100.0,
            flat_band: 0.005,
            volatility: 1,
            bonds: (1.0, &[]),
            holdings_value: (1.0, &[]),
            last_volume: (0.0, &vols),
        };
        let s = observe_state_t(&obs);
        assert_eq!(s.volume, 0);
        assert!(!s.bonds_high);
    }

    #[test]
    fn median_flags() {
        assert!(at_least_median(3.0, &[1.0, 2.0, 3.0, 4.0]));
        assert!(at_least_median(2.0, &[1.0, 2.0, 3.0, 4.0]));
        assert!(!at_least_median(1.5, &[1.0, 2.0, 3.0, 4.0]));
        assert!(at_least_median(5.0, &[5.0; 7]));
    }

    #[test]
    fn hold_sends_nothing() {
        assert_eq!(make_order(&ctx(), HOLD), None);
    }

    #[test]
    fn aggressive_buy_example() {
        let c = OrderContext {
            price: 100.0,
            spread: Some(2.0),
            ..ctx()
        };
        let o = make_order(
            &c,
            TradeAction {
                side: TradeSide::Buy,
                aggr: Aggressiveness::Aggressive,
            },
        )
        .unwrap();
        assert_eq!(o.side, Side::Bid);
        assert!((o.price - 101.0).abs() < 1e-12);
        assert_eq!(o.quantity, 74);
    }

    #[test]
    fn passive_sell_and_empty_inventory() {
        let sell = TradeAction {
            side: TradeSide::Sell,
            aggr: Aggressiveness::Passive,
        };
        let o = make_order(&ctx(), sell).unwrap();
        assert!((o.price - 101.0).abs() < 1e-12);
        assert_eq!(o.quantity, 50);
        assert_eq!(make_order(&OrderContext { holdings: 0, ..ctx() }, sell), None);
        assert_eq!(make_order(&OrderContext { holdings: 1, ..ctx() }, sell), None);
    }

    #[test]
    fn missing_spread_uses_default() {
        let c = OrderContext { spread: None, ..ctx() };
        assert!((c.limit_price(TradeSide::Buy, Aggressiveness::Aggressive) - 100.5).abs() < 1e-12);
    }

    #[test]
    fn orders_never_overdraw() {
        for bonds in [0.0, 1.0, 99.0, 1234.5, 1e6] {
            for holdings in [0, 1, 7, 100] {
                let c = OrderContext { bonds, holdings, ..ctx() };
                for a in 0..TRADE_ACTIONS {
                    if let Some(o) = make_order(&c, TradeAction::from_index(a)) {
                        match o.side {
                            Side::Bid => assert!(o.price * o.quantity as f64 * (1.0 + FEE) <= bonds),
                            Side::Ask => assert!(o.quantity <= holdings),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn executed_buy_gains() {
        let mut p = pending(
            TradeAction {
                side: TradeSide::Buy,
                aggr: Aggressiveness::Neutral,
            },
            100.0,
        );
        let q = 20u64;
        p.filled = q as i64;
        p.exec_value = 100.0 * q as f64;
        p.fees = FEE * p.exec_value;
        let up = resolve_counterfactual(&p, 110.0, FEE);
        assert!((up - (q as f64 * 10.0 - p.fees)).abs() < 1e-9);
        let flat = resolve_counterfactual(&p, 100.0, FEE);
        assert!((flat + p.fees).abs() < 1e-12);
    }

    #[test]
    fn hold_on_flat_price_scores_positive() {
        // Clearing at 100 fills both neutral alternatives at 100; price stays flat.
        let p = pending(HOLD, 100.0);
        let diff = resolve_counterfactual(&p, 100.0, FEE);
        assert!(diff > 0.0);
        // Both alternatives lose their fee; the 50-share sell loses less than the 75-share buy.
        let sell_fee = FEE * 50.0 * 100.0;
        assert!((diff - sell_fee).abs() < 1e-9);
    }

    #[test]
    fn hindsight_side_choice() {
        let p = pending(HOLD, 100.0);
        assert_eq!(hindsight_best_side(&replay_sides(&p, 100.0, FEE)), TradeSide::Hold);
        assert_eq!(hindsight_best_side(&replay_sides(&p, 105.0, FEE)), TradeSide::Buy);
        assert_eq!(hindsight_best_side(&replay_sides(&p, 95.0, FEE)), TradeSide::Sell);
        // Up by less than the round-trip fee: still hold.
        assert_eq!(hindsight_best_side(&replay_sides(&p, 100.05, FEE)), TradeSide::Hold);
        // Clearing above the neutral bid: the buy would not have filled.
        let missed = pending(HOLD, 100.5);
        assert_eq!(replay_sides(&missed, 120.0, FEE)[1], 0.0);
    }

    #[test]
    fn hindsight_keeps_aggressiveness_on_matching_side() {
        let aggressive_buy = TradeAction {
            side: TradeSide::Buy,
            aggr: Aggressiveness::Aggressive,
        };
        let p = pending(aggressive_buy, 100.0);
        assert_eq!(hindsight_action(&p, 110.0, FEE), aggressive_buy.index());
        let sell = TradeAction {
            side: TradeSide::Sell,
            aggr: Aggressiveness::Neutral,
        };
        assert_eq!(hindsight_action(&p, 90.0, FEE), sell.index());
    }

    #[test]
    fn reward_orientation() {
        let hist = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(reward_t(10.0, &hist), 4);
        assert_eq!(reward_t(-10.0, &hist), -4);
        assert_eq!(reward_t(3.5, &hist), 1);
    }

    #[test]
    fn zero_rate_update_is_noop() {
        let mut t = PolicyTable::uniform(TRADE_STATES, TRADE_ACTIONS);
        hindsight_update_t(&mut t, &pending(HOLD, 100.0), 120.0, FEE, 0.0);
        assert_eq!(t, PolicyTable::uniform(TRADE_STATES, TRADE_ACTIONS));
    }
}
