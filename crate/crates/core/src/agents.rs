//! Agent parameters, portfolios and the accounting applied to them each step.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Uniform;

use crate::config::{rng_stream, ScenarioKind, SimConfig, SimRng, StreamDomain};
use crate::forecast::{PendingForecast, FORECAST_ACTIONS, FORECAST_STATES};
use crate::fundamentals::{CointegrationRule, FundamentalSeries, Valuation};
use crate::orderbook::{AgentId, Order};
use crate::policy::PolicyTable;
use crate::stats::Trailing;
use crate::trade::{PendingTrade, TRADE_ACTIONS, TRADE_STATES};

/// Stream index reserved for choosing which agents a scenario affects.
const SELECTION_STREAM: u64 = 1 << 40;

/// Parameters drawn once per agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentParams {
    /// Drawdown limit `l`.
    pub drawdown_limit: f64,
    /// Reflexivity `rho`: weight given to the fundamental valuation.
    pub reflexivity: f64,
    /// Investment horizon `tau` in days.
    pub horizon: usize,
    /// Trading window `w` in days, used as the short volatility window.
    pub window: usize,
    /// Memory `h` in days: length of every trailing distribution.
    pub memory: usize,
    /// Transaction gesture `g`.
    pub gesture: f64,
    pub learn_rate: f64,
}

impl AgentParams {
    pub fn draw<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Self {
        let (tw, tm) = (cfg.week_len, cfg.month_len);
        let drawdown_limit = rng.sample(Uniform::new(0.50, 0.60).unwrap());
        let reflexivity = rng.random::<f64>();
        let horizon = rng.random_range(tw..=6 * tm);
        let window = rng.random_range(tw..=horizon);
        let memory = rng.random_range(tw..=cfg.n_steps - horizon - 2 * tw);
        let gesture = rng.sample(Uniform::new(0.2, 0.8).unwrap());
        let learn_rate = rng.sample(Uniform::new(0.05, 0.20).unwrap());
        AgentParams {
            drawdown_limit,
            reflexivity,
            horizon,
            window,
            memory,
            gesture,
            learn_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentRole {
    Proprietary,
    HerdBest,
    HerdWorst,
    Noise,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Proprietary => "proprietary",
            AgentRole::HerdBest => "herd-best",
            AgentRole::HerdWorst => "herd-worst",
            AgentRole::Noise => "noise",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            AgentRole::Proprietary,
            AgentRole::HerdBest,
            AgentRole::HerdWorst,
            AgentRole::Noise,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    pub bonds: f64,
    pub holdings: Vec<u64>,
    pub ytd_peak_nav: f64,
    pub bankrupt: bool,
}

impl Portfolio {
    pub fn new(bonds: f64, holdings: Vec<u64>, prices: &[f64]) -> Self {
        let mut p = Portfolio {
            bonds,
            holdings,
            ytd_peak_nav: 0.0,
            bankrupt: false,
        };
        p.ytd_peak_nav = p.nav(prices);
        p
    }

    pub fn equity(&self, prices: &[f64]) -> f64 {
        self.holdings
            .iter()
            .zip(prices)
            .map(|(&q, &p)| q as f64 * p)
            .sum()
    }

    /// Net asset value: bonds plus marked-to-market holdings.
    pub fn nav(&self, prices: &[f64]) -> f64 {
        self.bonds + self.equity(prices)
    }

    /// Pays one step of interest on bonds and dividends on equity, in cash.
    /// Returns the cash added.
    pub fn accrue(&mut self, prices: &[f64], rate_step: f64, dividend_step: f64) -> f64 {
        let added = self.bonds * rate_step + dividend_step * self.equity(prices);
        self.bonds += added;
        added
    }

    /// Charges `fee_rate * trade_value`, flooring bonds at zero. Returns the fee actually paid.
    pub fn apply_fee(&mut self, trade_value: f64, fee_rate: f64) -> f64 {
        let fee = (fee_rate * trade_value).min(self.bonds.max(0.0));
        self.bonds -= fee;
        fee
    }

    /// Updates the year-to-date peak and flags bankruptcy when NAV falls
    /// below `(1 - limit)` of it. Returns true on the step the flag is set.
    pub fn check_bankruptcy(&mut self, nav: f64, limit: f64, step: usize, year_len: usize) -> bool {
        if step.is_multiple_of(year_len) || nav > self.ytd_peak_nav {
            self.ytd_peak_nav = nav;
        }
        if !self.bankrupt && nav < (1.0 - limit) * self.ytd_peak_nav {
            self.bankrupt = true;
            return true;
        }
        false
    }
}

/// Learner memory for one stock.
#[derive(Debug, Clone)]
pub struct StockMemory {
    pub valuation: Valuation,
    pub gaps: Trailing,
    pub errors: Trailing,
    pub diffs: Trailing,
    pub holdings_value: Trailing,
    pub pending_forecasts: VecDeque<PendingForecast>,
    pub pending_trades: VecDeque<PendingTrade>,
}

/// Full state of one agent.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub id: AgentId,
    pub params: AgentParams,
    pub role: AgentRole,
    pub portfolio: Portfolio,
    pub forecast_policy: PolicyTable,
    pub trade_policy: PolicyTable,
    pub stocks: Vec<StockMemory>,
    pub bonds_hist: Trailing,
    pub rng: SimRng,
    pub bankrupt_step: Option<usize>,
    /// Orders sent this step, one slot per stock.
    pub orders: Vec<Option<Order>>,
}

impl AgentState {
    pub fn is_active(&self) -> bool {
        !self.portfolio.bankrupt
    }

    pub fn valuation(&self, stock: usize, t: usize) -> f64 {
        self.stocks[stock].valuation.at(t)
    }

    /// Restores the initial endowment and clears performance statistics.
    /// Policies, valuations, pending decisions and learner histories are kept.
    pub fn reset_portfolio(&mut self, cfg: &SimConfig, prices: &[f64]) {
        self.portfolio = Portfolio::new(cfg.init_bonds, vec![cfg.init_shares; cfg.n_stocks], prices);
        self.bankrupt_step = None;
        self.bonds_hist.clear();
        for m in &mut self.stocks {
            m.holdings_value.clear();
        }
    }
}

/// Picks `count` distinct agent indices, reproducibly from the master seed.
pub fn select_agents(master_seed: u64, n_agents: usize, count: usize) -> Vec<bool> {
    let mut chosen = vec![false; n_agents];
    if count == 0 {
        return chosen;
    }
    let mut idx: Vec<usize> = (0..n_agents).collect();
    let mut rng = rng_stream(master_seed, StreamDomain::AgentInit, SELECTION_STREAM);
    idx.shuffle(&mut rng);
    for &i in &idx[..count.min(n_agents)] {
        chosen[i] = true;
    }
    chosen
}

/// Draws every agent from its own `AgentInit` stream and applies the scenario.
pub fn init_agents(cfg: &SimConfig, fundamentals: &[FundamentalSeries]) -> Vec<AgentState> {
    let streams: Vec<u64> = (0..cfg.n_agents as u64).collect();
    init_agents_with_streams(cfg, fundamentals, &streams)
}

/// Like [`init_agents`], but the agent at position `i` draws from stream
/// `streams[i]`. A permutation relabels the same population.
pub fn init_agents_with_streams(
    cfg: &SimConfig,
    fundamentals: &[FundamentalSeries],
    streams: &[u64],
) -> Vec<AgentState> {
    assert_eq!(streams.len(), cfg.n_agents);
    let scenario = cfg.scenario;
    let affected = select_agents(
        cfg.master_seed,
        cfg.n_agents,
        scenario.affected_count(cfg.n_agents),
    );
    let initial_prices = vec![cfg.init_price; cfg.n_stocks];
    (0..cfg.n_agents)
        .map(|i| {
            let stream = streams[i];
            let mut rng = rng_stream(cfg.master_seed, StreamDomain::AgentInit, stream);
            let mut params = AgentParams::draw(cfg, &mut rng);
            let mut role = AgentRole::Proprietary;
            if affected[stream as usize] {
                match scenario.kind {
                    ScenarioKind::LearnRateFraction | ScenarioKind::LearnRateGlobal => {
                        params.learn_rate *= scenario.zeta
                    }
                    ScenarioKind::HerdBest => role = AgentRole::HerdBest,
                    ScenarioKind::HerdWorst => role = AgentRole::HerdWorst,
                    ScenarioKind::NoiseTraders => role = AgentRole::Noise,
                    ScenarioKind::Baseline => {}
                }
            }
            let stocks = fundamentals
                .iter()
                .map(|series| {
                    let rule = CointegrationRule::draw(cfg, &mut rng);
                    StockMemory {
                        valuation: Valuation::build(series, &rule, &mut rng),
                        gaps: Trailing::new(params.memory),
                        errors: Trailing::new(params.memory),
                        diffs: Trailing::new(params.memory),
                        holdings_value: Trailing::new(params.memory),
                        pending_forecasts: VecDeque::new(),
                        pending_trades: VecDeque::new(),
                    }
                })
                .collect();
            AgentState {
                id: i,
                params,
                role,
                portfolio: Portfolio::new(
                    cfg.init_bonds,
                    vec![cfg.init_shares; cfg.n_stocks],
                    &initial_prices,
                ),
                forecast_policy: PolicyTable::uniform(FORECAST_STATES, FORECAST_ACTIONS),
                trade_policy: PolicyTable::uniform(TRADE_STATES, TRADE_ACTIONS),
                stocks,
                bonds_hist: Trailing::new(params.memory),
                rng: rng_stream(cfg.master_seed, StreamDomain::AgentDecision, stream),
                bankrupt_step: None,
                orders: vec![None; cfg.n_stocks],
            }
        })
        .collect()
}
