//! Step loop, scenario overrides, learning-phase reset and run records.
//!
//! Each step runs eight phases:
//!
//! 1. interest and dividends are paid;
//! 2. every solvent agent observes the market at `t`, forecasts and picks an
//!    order (herding and noise agents replace the trade decision);
//! 3. orders go to the books in agent-index order and each book clears;
//! 4. cash, shares and fees are settled;
//! 5. `P(t+1)`, volume and spread are recorded;
//! 6. forecasts and trades whose horizon elapsed are scored and policies updated;
//! 7. bankruptcy is checked at the new prices;
//! 8. the herd memory is refreshed with this step's best and worst agents.
//!
//! Phase 2 only reads shared state and every agent draws from its own RNG
//! stream, so it runs in parallel without changing results. Phase 6 touches
//! only the agent being updated and is parallel for the same reason.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand_distr::Uniform;
use rayon::prelude::*;

use crate::agents::{init_agents_with_streams, AgentRole, AgentState};
use crate::config::SimConfig;
use crate::forecast::{
    hindsight_best_f, lag_menu, observe_state_f, relative_volatility, reward_f, valuation_gap,
    ForecastAction, ForecastContext, PendingForecast,
};
use crate::fundamentals::{generate_fundamental, FundamentalSeries};
use crate::orderbook::{Order, OrderBook, Side, Trade};
use crate::policy::PolicyTable;
use crate::trade::{
    hindsight_action, make_order, observe_state_t, resolve_counterfactual, reward_t,
    OrderContext, PendingTrade, TradeAction, TradeObservation,
};

/// Market history of one stock over the whole simulation, learning phase included.
#[derive(Debug, Clone)]
pub struct StockHistory {
    /// `P(0..=t)`.
    pub prices: Vec<f64>,
    /// `V(0..=t)`; `V(s)` is the volume that produced `P(s)`, `V(0) = 0`.
    pub volumes: Vec<f64>,
    /// Best ask minus best bid left after the last clearing.
    pub residual_spread: Option<f64>,
    long_window: usize,
    long_vol: Vec<f64>,
    short_vol: BTreeMap<usize, Vec<f64>>,
}

impl StockHistory {
    fn new(init_price: f64, long_window: usize, short_windows: impl IntoIterator<Item = usize>) -> Self {
        let mut h = StockHistory {
            prices: Vec::new(),
            volumes: Vec::new(),
            residual_spread: None,
            long_window,
            long_vol: Vec::new(),
            short_vol: short_windows.into_iter().map(|w| (w, Vec::new())).collect(),
        };
        h.push(init_price, 0);
        h
    }

    fn push(&mut self, price: f64, volume: u64) {
        self.prices.push(price);
        self.volumes.push(volume as f64);
        self.long_vol.push(relative_volatility(&self.prices, self.long_window));
        for (&w, series) in self.short_vol.iter_mut() {
            series.push(relative_volatility(&self.prices, w));
        }
    }

    pub fn last_price(&self) -> f64 {
        *self.prices.last().unwrap()
    }

    /// Normalized volatility over `window` at every step so far.
    pub fn volatility_series(&self, window: usize) -> &[f64] {
        if window == self.long_window {
            &self.long_vol
        } else {
            &self.short_vol[&window]
        }
    }
}

/// `xs[t]` paired with the `memory` values before it.
fn with_trailing(xs: &[f64], t: usize, memory: usize) -> (f64, &[f64]) {
    (xs[t], &xs[t.saturating_sub(memory)..t])
}

/// Orders last sent by the best and the worst solvent agent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HerdMemory {
    pub best: Vec<Option<Order>>,
    pub worst: Vec<Option<Order>>,
}

/// Copies a remembered order, capped by what the copier can afford or holds.
pub fn override_herd(
    remembered: Option<&Order>,
    agent_id: usize,
    budget: f64,
    holdings: u64,
    fee_rate: f64,
) -> Option<Order> {
    let src = remembered?;
    let qty = match src.side {
        Side::Bid => {
            let afford = (budget / (src.price * (1.0 + fee_rate))).floor().max(0.0) as u64;
            src.quantity.min(afford)
        }
        Side::Ask => src.quantity.min(holdings),
    };
    (qty > 0).then_some(Order {
        agent_id,
        quantity: qty,
        ..*src
    })
}

/// Random order: side uniform over hold/buy/sell, price `P (1 + u)` with
/// `u ~ U(-band, band)`, quantity by the usual proportional rule.
#[allow(clippy::too_many_arguments)]
pub fn override_noise<R: Rng + ?Sized>(
    agent_id: usize,
    stock_id: usize,
    price: f64,
    band: f64,
    budget: f64,
    holdings: u64,
    trade_fraction: f64,
    rng: &mut R,
) -> Option<Order> {
    let side = rng.random_range(0..3u8);
    let u = if band > 0.0 {
        rng.sample(Uniform::new(-band, band).unwrap())
    } else {
        0.0
    };
    let limit = price * (1.0 + u);
    let (side, qty) = match side {
        0 => return None,
        1 => (Side::Bid, (trade_fraction * budget.max(0.0) / limit).floor() as u64),
        _ => (Side::Ask, (trade_fraction * holdings as f64).floor() as u64),
    };
    (qty > 0).then_some(Order {
        agent_id,
        stock_id,
        side,
        price: limit,
        quantity: qty,
    })
}

/// Cash accounting of one recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLedger {
    pub bonds_before: f64,
    pub bonds_after: f64,
    pub accrued: f64,
    pub fees: f64,
    pub shares: Vec<u64>,
}

/// Everything recorded during the post-learning phase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarketRecord {
    pub n_agents: usize,
    /// Price at the start of the recorded phase, per stock.
    pub start_prices: Vec<f64>,
    /// `prices[j][s]`: price after the clearing of recorded step `s`.
    pub prices: Vec<Vec<f64>>,
    pub volumes: Vec<Vec<u64>>,
    /// Post-submission, pre-clearing spread of each step.
    pub spreads: Vec<Vec<Option<f64>>>,
    /// Spread left in the book after clearing; positive when both sides remain.
    pub residual_spreads: Vec<Vec<Option<f64>>>,
    pub bankrupt_count: Vec<usize>,
    /// `nav[i][s]`: NAV of agent `i` after step `s`.
    pub nav: Vec<Vec<f64>>,
    pub ledger: Vec<StepLedger>,
}

impl MarketRecord {
    pub fn n_steps(&self) -> usize {
        self.bankrupt_count.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot {
    /// Recorded step after which the snapshot was taken (1-based count of steps).
    pub step: usize,
    pub forecast: Vec<PolicyTable>,
    pub trade: Vec<PolicyTable>,
    pub nav: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSummary {
    pub agent_id: usize,
    pub role: AgentRole,
    pub drawdown_limit: f64,
    pub reflexivity: f64,
    pub horizon: usize,
    pub window: usize,
    pub memory: usize,
    pub gesture: f64,
    pub learn_rate: f64,
    pub final_nav: f64,
    pub bankrupt: bool,
    pub bankruptcy_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderLogRow {
    pub step: usize,
    pub order: Order,
    pub filled: u64,
}

/// One sampled hindsight update with the inputs needed to re-check it.
#[derive(Debug, Clone, PartialEq)]
pub enum HindsightSample {
    Forecast {
        /// Prices up to the issue step (at most the longest lag plus one).
        prices: Vec<f64>,
        valuation: f64,
        rho: f64,
        horizon: usize,
        lags: [usize; 3],
        realized: f64,
        chosen: usize,
    },
    Trade {
        pending: PendingTrade,
        realized: f64,
        fee_rate: f64,
        chosen: usize,
    },
}

/// Run-level checks gathered while simulating.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub updates: usize,
    /// Largest row-sum error seen right after any policy update.
    pub max_row_error: f64,
    /// Smallest policy entry seen right after any policy update.
    pub min_entry: f64,
    pub samples: Vec<HindsightSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Run the per-agent phases on the rayon pool.
    pub parallel: bool,
    pub record_orders: bool,
    /// Keep every n-th hindsight update for re-checking; 0 keeps none.
    pub sample_every: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            parallel: true,
            record_orders: false,
            sample_every: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: SimConfig,
    pub record: MarketRecord,
    pub snapshots: Vec<PolicySnapshot>,
    pub agents: Vec<AgentSummary>,
    pub fundamentals: Vec<Vec<f64>>,
    pub orders: Vec<OrderLogRow>,
    pub diagnostics: Diagnostics,
    pub wall_time_secs: f64,
}

/// Per-agent learning outcome of phase 6, merged serially afterwards.
#[derive(Debug, Default)]
struct LearnStats {
    updates: usize,
    max_row_error: f64,
    min_entry: f64,
    samples: Vec<HindsightSample>,
}

impl LearnStats {
    fn new() -> Self {
        LearnStats {
            min_entry: f64::INFINITY,
            ..Default::default()
        }
    }

    fn observe_row(&mut self, row: &[f64]) {
        self.updates += 1;
        let err = (row.iter().sum::<f64>() - 1.0).abs();
        self.max_row_error = self.max_row_error.max(err);
        self.min_entry = row.iter().copied().fold(self.min_entry, f64::min);
    }
}

/// Reward-modulated update: positive rewards pull the row toward the
/// hindsight-optimal action, negative rewards push it away from the taken one.
fn apply_reward(policy: &mut PolicyTable, state: usize, taken: usize, best: usize, reward: i8, learn_rate: f64) {
    let rate = learn_rate * f64::from(reward.unsigned_abs()) / 4.0;
    if reward > 0 {
        policy.reinforce(state, best, rate);
    } else if reward < 0 {
        policy.penalize(state, taken, rate);
    }
}

pub struct World {
    cfg: SimConfig,
    fundamentals: Vec<FundamentalSeries>,
    agents: Vec<AgentState>,
    market: Vec<StockHistory>,
    herd: HerdMemory,
    /// Global step index: the current price is `market[j].prices[t]`.
    t: usize,
    /// Steps completed in the current phase.
    phase_step: usize,
    recording: bool,
    record: MarketRecord,
    snapshots: Vec<PolicySnapshot>,
    orders_log: Vec<OrderLogRow>,
    diagnostics: Diagnostics,
    update_counter: usize,
    opts: RunOptions,
    lags: [usize; 3],
    rate_step: f64,
    dividend_step: f64,
}

impl World {
    pub fn new(cfg: SimConfig, opts: RunOptions) -> Self {
        let streams: Vec<u64> = (0..cfg.n_agents as u64).collect();
        Self::with_streams(cfg, opts, &streams)
    }

    /// World whose agent at position `i` is drawn from RNG stream `streams[i]`.
    pub fn with_streams(cfg: SimConfig, opts: RunOptions, streams: &[u64]) -> Self {
        let fundamentals: Vec<_> = (0..cfg.n_stocks).map(|j| generate_fundamental(&cfg, j)).collect();
        let agents = init_agents_with_streams(&cfg, &fundamentals, streams);
        let mut windows: Vec<usize> = agents.iter().map(|a| a.params.window).collect();
        windows.sort_unstable();
        windows.dedup();
        windows.retain(|&w| w != cfg.max_horizon());
        let market = (0..cfg.n_stocks)
            .map(|_| StockHistory::new(cfg.init_price, cfg.max_horizon(), windows.iter().copied()))
            .collect();
        World {
            lags: lag_menu(cfg.week_len, cfg.month_len),
            rate_step: cfg.riskfree_step(),
            dividend_step: cfg.dividend_step(),
            herd: HerdMemory {
                best: vec![None; cfg.n_stocks],
                worst: vec![None; cfg.n_stocks],
            },
            record: MarketRecord {
                n_agents: cfg.n_agents,
                ..Default::default()
            },
            cfg,
            fundamentals,
            agents,
            market,
            t: 0,
            phase_step: 0,
            recording: false,
            snapshots: Vec::new(),
            orders_log: Vec::new(),
            diagnostics: Diagnostics {
                min_entry: f64::INFINITY,
                ..Default::default()
            },
            update_counter: 0,
            opts,
        }
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn market(&self) -> &[StockHistory] {
        &self.market
    }

    pub fn current_prices(&self) -> Vec<f64> {
        self.market.iter().map(|m| m.last_price()).collect()
    }

    pub fn step_index(&self) -> usize {
        self.t
    }

    /// Restores every portfolio and starts recording.
    pub fn start_recording(&mut self) {
        let prices = self.current_prices();
        for a in &mut self.agents {
            a.reset_portfolio(&self.cfg, &prices);
        }
        self.phase_step = 0;
        self.recording = true;
        let j = self.cfg.n_stocks;
        self.record = MarketRecord {
            n_agents: self.cfg.n_agents,
            start_prices: prices,
            prices: vec![Vec::new(); j],
            volumes: vec![Vec::new(); j],
            spreads: vec![Vec::new(); j],
            residual_spreads: vec![Vec::new(); j],
            bankrupt_count: Vec::new(),
            nav: vec![Vec::new(); self.cfg.n_agents],
            ledger: Vec::new(),
        };
        self.snapshots.clear();
        self.orders_log.clear();
    }

    /// Advances the world by one step.
    #[allow(clippy::needless_range_loop)]
    pub fn step(&mut self) {
        let t = self.t;
        let prices_now = self.current_prices();
        let bonds_before: f64 = self.agents.iter().map(|a| a.portfolio.bonds).sum();

        // 1. Interest and dividends.
        let mut accrued = 0.0;
        for a in &mut self.agents {
            accrued += a.portfolio.accrue(&prices_now, self.rate_step, self.dividend_step);
        }

        // 2. Decisions against the snapshot at t.
        {
            let ctx = DecisionContext {
                cfg: &self.cfg,
                market: &self.market,
                herd: &self.herd,
                t,
                lags: self.lags,
            };
            if self.opts.parallel {
                self.agents.par_iter_mut().for_each(|a| decide(a, &ctx));
            } else {
                self.agents.iter_mut().for_each(|a| decide(a, &ctx));
            }
        }

        // 3. Submission in agent-index order, then clearing.
        let n_stocks = self.cfg.n_stocks;
        let mut fees = 0.0;
        let mut clearings = Vec::with_capacity(n_stocks);
        for j in 0..n_stocks {
            let mut book = OrderBook::new();
            let mut submitted = Vec::new();
            for a in &self.agents {
                if let Some(o) = a.orders[j] {
                    book.submit(o).expect("agents only emit valid orders");
                    submitted.push(o);
                }
            }
            let spread = book.spread();
            let result = book.clear(prices_now[j], t);
            // 4. Settlement.
            for tr in &result.trades {
                fees += self.settle(j, tr);
            }
            if self.opts.record_orders && self.recording {
                for (seq, o) in submitted.iter().enumerate() {
                    self.orders_log.push(OrderLogRow {
                        step: self.phase_step,
                        order: *o,
                        filled: result.filled[seq],
                    });
                }
            }
            clearings.push((result, spread));
        }

        // 5. Market record.
        for (j, (result, spread)) in clearings.iter().enumerate() {
            let m = &mut self.market[j];
            m.residual_spread = result.residual_spread;
            m.push(result.new_price, result.volume);
            for a in &mut self.agents {
                if let Some(p) = a.stocks[j].pending_trades.back_mut() {
                    if p.issued == t {
                        p.clearing_price = result.new_price;
                    }
                }
            }
            if self.recording {
                self.record.prices[j].push(result.new_price);
                self.record.volumes[j].push(result.volume);
                self.record.spreads[j].push(*spread);
                self.record.residual_spreads[j].push(result.residual_spread);
            }
        }
        self.t += 1;
        self.phase_step += 1;

        // 6. Hindsight learning.
        self.learn();

        // 7. Bankruptcy.
        let prices_next = self.current_prices();
        let phase_step = self.phase_step;
        let year_len = self.cfg.year_len;
        let mut navs = Vec::with_capacity(self.agents.len());
        for a in &mut self.agents {
            let nav = a.portfolio.nav(&prices_next);
            if a.portfolio
                .check_bankruptcy(nav, a.params.drawdown_limit, phase_step, year_len)
            {
                a.bankrupt_step = Some(phase_step);
            }
            navs.push(nav);
        }

        // 8. Herd memory.
        self.refresh_herd(&navs);

        if self.recording {
            let bonds_after: f64 = self.agents.iter().map(|a| a.portfolio.bonds).sum();
            let shares = (0..n_stocks)
                .map(|j| self.agents.iter().map(|a| a.portfolio.holdings[j]).sum())
                .collect();
            self.record.ledger.push(StepLedger {
                bonds_before,
                bonds_after,
                accrued,
                fees,
                shares,
            });
            self.record
                .bankrupt_count
                .push(self.agents.iter().filter(|a| a.portfolio.bankrupt).count());
            for (i, nav) in navs.iter().enumerate() {
                self.record.nav[i].push(*nav);
            }
            if phase_step.is_multiple_of(self.cfg.snapshot_every) || phase_step == self.cfg.n_steps {
                self.snapshot(navs);
            }
        }
    }

    fn settle(&mut self, stock: usize, tr: &Trade) -> f64 {
        let value = tr.value();
        let fee_rate = self.cfg.broker_fee;
        let t = self.t;
        let mut paid = 0.0;
        for (id, sign) in [(tr.buyer_id, 1i64), (tr.seller_id, -1i64)] {
            let a = &mut self.agents[id];
            if sign > 0 {
                a.portfolio.bonds -= value;
                a.portfolio.holdings[stock] += tr.quantity;
            } else {
                a.portfolio.bonds += value;
                a.portfolio.holdings[stock] -= tr.quantity;
            }
            let fee = a.portfolio.apply_fee(value, fee_rate);
            paid += fee;
            if let Some(p) = a.stocks[stock].pending_trades.back_mut() {
                if p.issued == t {
                    p.filled += sign * tr.quantity as i64;
                    p.exec_value += value;
                    p.fees += fee;
                }
            }
        }
        paid
    }

    fn learn(&mut self) {
        let now = self.t;
        let market = &self.market;
        let cfg = &self.cfg;
        let lags = self.lags;
        let sampling = self.opts.sample_every;
        let base_counter = self.update_counter;
        let run = |a: &mut AgentState| learn_agent(a, market, cfg, lags, now, sampling, base_counter);
        let stats: Vec<LearnStats> = if self.opts.parallel {
            self.agents.par_iter_mut().map(run).collect()
        } else {
            self.agents.iter_mut().map(run).collect()
        };
        for s in stats {
            self.update_counter += s.updates;
            self.diagnostics.updates += s.updates;
            self.diagnostics.max_row_error = self.diagnostics.max_row_error.max(s.max_row_error);
            self.diagnostics.min_entry = self.diagnostics.min_entry.min(s.min_entry);
            self.diagnostics.samples.extend(s.samples);
        }
    }

    fn refresh_herd(&mut self, navs: &[f64]) {
        let mut best: Option<usize> = None;
        let mut worst: Option<usize> = None;
        for (i, a) in self.agents.iter().enumerate() {
            if a.portfolio.bankrupt {
                continue;
            }
            if best.is_none_or(|b| navs[i] > navs[b]) {
                best = Some(i);
            }
            if worst.is_none_or(|w| navs[i] < navs[w]) {
                worst = Some(i);
            }
        }
        let orders_of = |i: Option<usize>| match i {
            Some(i) => self.agents[i].orders.clone(),
            None => vec![None; self.cfg.n_stocks],
        };
        self.herd = HerdMemory {
            best: orders_of(best),
            worst: orders_of(worst),
        };
    }

    fn snapshot(&mut self, nav: Vec<f64>) {
        self.snapshots.push(PolicySnapshot {
            step: self.phase_step,
            forecast: self.agents.iter().map(|a| a.forecast_policy.clone()).collect(),
            trade: self.agents.iter().map(|a| a.trade_policy.clone()).collect(),
            nav,
        });
    }

    /// Consumes the world and packages the recorded phase.
    pub fn finish(self) -> RunOutput {
        let prices = self.current_prices();
        let agents = self
            .agents
            .iter()
            .map(|a| AgentSummary {
                agent_id: a.id,
                role: a.role,
                drawdown_limit: a.params.drawdown_limit,
                reflexivity: a.params.reflexivity,
                horizon: a.params.horizon,
                window: a.params.window,
                memory: a.params.memory,
                gesture: a.params.gesture,
                learn_rate: a.params.learn_rate,
                final_nav: a.portfolio.nav(&prices),
                bankrupt: a.portfolio.bankrupt,
                bankruptcy_step: a.bankrupt_step,
            })
            .collect();
        let mut diagnostics = self.diagnostics;
        if diagnostics.updates == 0 {
            diagnostics.min_entry = 0.0;
        }
        RunOutput {
            record: self.record,
            snapshots: self.snapshots,
            agents,
            fundamentals: self.fundamentals.iter().map(|f| f.values().to_vec()).collect(),
            orders: self.orders_log,
            diagnostics,
            config: self.cfg,
            wall_time_secs: 0.0,
        }
    }
}

struct DecisionContext<'a> {
    cfg: &'a SimConfig,
    market: &'a [StockHistory],
    herd: &'a HerdMemory,
    t: usize,
    lags: [usize; 3],
}

fn decide(agent: &mut AgentState, ctx: &DecisionContext<'_>) {
    let n_stocks = ctx.cfg.n_stocks;
    for slot in agent.orders.iter_mut() {
        *slot = None;
    }
    if !agent.is_active() {
        return;
    }
    let t = ctx.t;
    let h = agent.params.memory;
    let budget = agent.portfolio.bonds / n_stocks as f64;
    for j in 0..n_stocks {
        let m = &ctx.market[j];
        let price = m.prices[t];
        let valuation = agent.valuation(j, t);

        // Forecast.
        let gap = valuation_gap(valuation, price);
        let long = with_trailing(m.volatility_series(ctx.cfg.max_horizon()), t, h);
        let short = with_trailing(m.volatility_series(agent.params.window), t, h);
        let mem = &mut agent.stocks[j];
        let f_state = observe_state_f(long, short, (gap, mem.gaps.as_slice()));
        mem.gaps.push(gap);
        let f_action = agent.forecast_policy.sample(f_state.index(), &mut agent.rng);
        let fctx = ForecastContext {
            prices: &m.prices[..=t],
            valuation,
            rho: agent.params.reflexivity,
            horizon: agent.params.horizon,
            lags: ctx.lags,
        };
        let forecast = fctx.forecast(ForecastAction::from_index(f_action));
        mem.pending_forecasts.push_back(PendingForecast {
            issued: t,
            state: f_state.index(),
            action: f_action,
            forecast,
            valuation,
        });

        // Trade.
        let holdings = agent.portfolio.holdings[j];
        let holdings_value = holdings as f64 * price;
        let obs = TradeObservation {
            forecast,
            price,
            flat_band: ctx.cfg.flat_band,
            volatility: f_state.short_vol,
            bonds: (agent.portfolio.bonds, agent.bonds_hist.as_slice()),
            holdings_value: (holdings_value, mem.holdings_value.as_slice()),
            last_volume: with_trailing(&m.volumes, t, h),
        };
        let t_state = observe_state_t(&obs);
        mem.holdings_value.push(holdings_value);
        let order_ctx = OrderContext {
            agent_id: agent.id,
            stock_id: j,
            forecast,
            price,
            spread: m.residual_spread,
            gesture: agent.params.gesture,
            bonds: budget,
            holdings,
            trade_fraction: ctx.cfg.trade_fraction,
        };
        let order = match agent.role {
            AgentRole::Proprietary => {
                let action = agent.trade_policy.sample(t_state.index(), &mut agent.rng);
                mem.pending_trades.push_back(PendingTrade {
                    issued: t,
                    state: t_state.index(),
                    action,
                    ctx: order_ctx,
                    filled: 0,
                    exec_value: 0.0,
                    fees: 0.0,
                    clearing_price: price,
                });
                make_order(&order_ctx, TradeAction::from_index(action))
            }
            AgentRole::HerdBest => {
                override_herd(ctx.herd.best[j].as_ref(), agent.id, budget, holdings, ctx.cfg.broker_fee)
                    .map(|o| Order { stock_id: j, ..o })
            }
            AgentRole::HerdWorst => {
                override_herd(ctx.herd.worst[j].as_ref(), agent.id, budget, holdings, ctx.cfg.broker_fee)
                    .map(|o| Order { stock_id: j, ..o })
            }
            AgentRole::Noise => override_noise(
                agent.id,
                j,
                price,
                ctx.cfg.noise_band,
                budget,
                holdings,
                ctx.cfg.trade_fraction,
                &mut agent.rng,
            ),
        };
        agent.orders[j] = order;
    }
    agent.bonds_hist.push(agent.portfolio.bonds);
}

fn learn_agent(
    agent: &mut AgentState,
    market: &[StockHistory],
    cfg: &SimConfig,
    lags: [usize; 3],
    now: usize,
    sample_every: usize,
    base_counter: usize,
) -> LearnStats {
    let mut stats = LearnStats::new();
    let active = agent.is_active();
    let tau = agent.params.horizon;
    let lr = agent.params.learn_rate;
    // Sampling keyed on (agent, update count) keeps the sample independent of thread scheduling.
    let mut local = 0usize;
    let sample_now = |local: &mut usize| {
        *local += 1;
        sample_every > 0 && (base_counter + agent.id * 7919 + *local).is_multiple_of(sample_every)
    };
    for (j, m) in market.iter().enumerate() {
        let mem = &mut agent.stocks[j];
        while let Some(p) = mem.pending_forecasts.front().copied() {
            if p.issued + tau > now {
                break;
            }
            mem.pending_forecasts.pop_front();
            if !active {
                continue;
            }
            let realized = m.prices[p.issued + tau];
            let err = (p.forecast - realized).abs();
            let fctx = ForecastContext {
                prices: &m.prices[..=p.issued],
                valuation: p.valuation,
                rho: agent.params.reflexivity,
                horizon: tau,
                lags,
            };
            let errors = fctx.replay_errors(realized);
            let best = hindsight_best_f(&errors);
            if !mem.errors.is_empty() {
                let reward = reward_f(err, mem.errors.as_slice());
                apply_reward(&mut agent.forecast_policy, p.state, p.action, best, reward, lr);
                stats.observe_row(agent.forecast_policy.row(p.state));
                if sample_now(&mut local) {
                    let from = (p.issued + 1).saturating_sub(lags[2] + 1);
                    stats.samples.push(HindsightSample::Forecast {
                        prices: m.prices[from..=p.issued].to_vec(),
                        valuation: p.valuation,
                        rho: agent.params.reflexivity,
                        horizon: tau,
                        lags,
                        realized,
                        chosen: best,
                    });
                }
            }
            mem.errors.push(err);
        }
        while let Some(p) = mem.pending_trades.front().copied() {
            if p.issued + tau > now {
                break;
            }
            mem.pending_trades.pop_front();
            if !active {
                continue;
            }
            let realized = m.prices[p.issued + tau];
            let diff = resolve_counterfactual(&p, realized, cfg.broker_fee);
            let best = hindsight_action(&p, realized, cfg.broker_fee);
            if !mem.diffs.is_empty() {
                let reward = reward_t(diff, mem.diffs.as_slice());
                apply_reward(&mut agent.trade_policy, p.state, p.action, best, reward, lr);
                stats.observe_row(agent.trade_policy.row(p.state));
                if sample_now(&mut local) {
                    stats.samples.push(HindsightSample::Trade {
                        pending: p,
                        realized,
                        fee_rate: cfg.broker_fee,
                        chosen: best,
                    });
                }
            }
            mem.diffs.push(diff);
        }
    }
    stats
}

/// Runs the learning phase, resets portfolios and runs the recorded phase.
pub fn run(cfg: &SimConfig, opts: RunOptions) -> RunOutput {
    run_world(World::new(cfg.clone(), opts))
}

/// Drives an already built world through both phases.
pub fn run_world(mut world: World) -> RunOutput {
    let started = Instant::now();
    let (learning, steps) = (world.cfg.learning_phase, world.cfg.n_steps);
    for _ in 0..learning {
        world.step();
    }
    world.start_recording();
    for _ in 0..steps {
        world.step();
    }
    let mut out = world.finish();
    out.wall_time_secs = started.elapsed().as_secs_f64();
    out
}

/// Runs `cfg.n_runs` replications with master seeds `seed, seed + 1, ...`.
pub fn run_all(cfg: &SimConfig, opts: RunOptions) -> Vec<RunOutput> {
    (0..cfg.n_runs).map(|r| run(&cfg.for_run(r), opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Scenario, ScenarioKind};

    fn tiny() -> SimConfig {
        SimConfig {
            n_agents: 12,
            n_steps: 150,
            learning_phase: 40,
            n_runs: 1,
            snapshot_every: 50,
            master_seed: 5,
            ..SimConfig::default()
        }
    }

    #[test]
    fn herd_copy_is_capped() {
        let remembered = Order::bid(9, 0, 100.0, 50);
        let o = override_herd(Some(&remembered), 2, 3030.0, 0, 0.001).unwrap();
        assert_eq!((o.agent_id, o.price, o.quantity, o.side), (2, 100.0, 30, Side::Bid));
        assert_eq!(override_herd(None, 2, 1e9, 100, 0.001), None);
        let sell = Order::ask(9, 0, 100.0, 50);
        assert_eq!(override_herd(Some(&sell), 2, 1e9, 0, 0.001), None);
        assert_eq!(override_herd(Some(&sell), 2, 0.0, 20, 0.001).unwrap().quantity, 20);
    }

    #[test]
    fn noise_orders() {
        let mut rng = crate::config::rng_stream(1, crate::config::StreamDomain::AgentDecision, 0);
        let mut counts = [0usize; 3];
        let n = 30_000;
        for _ in 0..n {
            match override_noise(0, 0, 100.0, 0.05, 1e6, 1000, 0.5, &mut rng) {
                None => counts[0] += 1,
                Some(o) => {
                    assert!(o.price >= 95.0 && o.price <= 105.0);
                    counts[if o.side == Side::Bid { 1 } else { 2 }] += 1;
                }
            }
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.015);
        }
        // No cash: buys turn into holds.
        for _ in 0..200 {
            if let Some(o) = override_noise(0, 0, 100.0, 0.05, 0.0, 10, 0.5, &mut rng) {
                assert_eq!(o.side, Side::Ask);
            }
        }
    }

    #[test]
    fn records_have_expected_lengths() {
        let cfg = tiny();
        let out = run(&cfg, RunOptions::default());
        assert_eq!(out.record.prices[0].len(), cfg.n_steps);
        assert_eq!(out.record.bankrupt_count.len(), cfg.n_steps);
        assert_eq!(out.record.nav[3].len(), cfg.n_steps);
        assert_eq!(out.snapshots.last().unwrap().step, cfg.n_steps);
        assert_eq!(out.snapshots.len(), 3);
        assert!(out.record.prices[0].iter().all(|&p| p > 0.0));
    }

    #[test]
    fn deterministic_and_parallel_invariant() {
        let cfg = tiny();
        let a = run(&cfg, RunOptions::default());
        let b = run(
            &cfg,
            RunOptions {
                parallel: false,
                ..Default::default()
            },
        );
        assert_eq!(a.record, b.record);
        assert_eq!(a.snapshots, b.snapshots);
        let c = run(&cfg.for_run(1), RunOptions::default());
        assert_ne!(a.record.prices, c.record.prices);
    }

    #[test]
    fn empty_order_flow_freezes_price() {
        // Everyone is bankrupt from the start: no orders, constant prices.
        let cfg = tiny();
        let mut world = World::new(cfg.clone(), RunOptions::default());
        for a in &mut world.agents {
            a.portfolio.bankrupt = true;
        }
        for _ in 0..20 {
            world.step();
        }
        assert!(world.market[0].prices.iter().all(|&p| p == cfg.init_price));
        assert!(world.market[0].volumes.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_complementary_orders_clear_at_mid() {
        let cfg = tiny();
        let mut world = World::new(cfg, RunOptions::default());
        for (i, a) in world.agents.iter_mut().enumerate() {
            if i > 1 {
                a.portfolio.bankrupt = true;
            }
        }
        // Force a buy on agent 0 and a sell on agent 1 by making the policies deterministic.
        let buy = TradeAction::from_index(4);
        let sell = TradeAction::from_index(7);
        for (i, act) in [(0, buy), (1, sell)] {
            let a = &mut world.agents[i];
            a.params.reflexivity = 0.0;
            for s in 0..crate::trade::TRADE_STATES {
                a.trade_policy.reinforce(s, act.index(), 1.0);
            }
            // Pin forecasts to the one-week average; with zero reflexivity both forecast 100.
            for s in 0..crate::forecast::FORECAST_STATES {
                a.forecast_policy.reinforce(s, 9, 1.0);
            }
        }
        world.step();
        let p = world.market[0].prices[1];
        let vol = world.market[0].volumes[1];
        
        assert_eq!(p, 100.0);
        assert!(vol > 0.0);
    }

    #[test]
    fn zero_fraction_scenarios_match_baseline() {
        let base = run(&tiny(), RunOptions::default());
        for kind in [ScenarioKind::HerdBest, ScenarioKind::HerdWorst, ScenarioKind::NoiseTraders, ScenarioKind::LearnRateFraction] {
            let cfg = SimConfig {
                scenario: Scenario::new(kind, 0.0, 2.0),
                ..tiny()
            };
            assert_eq!(run(&cfg, RunOptions::default()).record, base.record, "{kind}");
        }
    }
}
