//! Global simulation constants, scenario descriptors and the RNG-stream contract.
//!
//! A [`SimConfig`] is built from defaults, optionally overlaid with a flat
//! `key = value` file and then individual overrides, and finally checked with
//! [`SimConfig::validate`]. A validated config is immutable and shared freely
//! between threads.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// The four independent randomness domains of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamDomain {
    Fundamental,
    AgentInit,
    AgentDecision,
    Analytics,
}

impl StreamDomain {
    fn code(self) -> u64 {
        match self {
            StreamDomain::Fundamental => 1,
            StreamDomain::AgentInit => 2,
            StreamDomain::AgentDecision => 3,
            StreamDomain::Analytics => 4,
        }
    }
}

/// Random number stream used everywhere in the simulator.
pub type SimRng = ChaCha8Rng;

/// Returns the stream identified by `(master_seed, domain, index)`.
///
/// The master seed keys the ChaCha generator and `(domain, index)` selects one
/// of its 2^64 non-overlapping streams, so distinct triples never share state.
/// `index` must stay below 2^56.
pub fn rng_stream(master_seed: u64, domain: StreamDomain, index: u64) -> SimRng {
    debug_assert!(index < 1 << 56);
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((domain.code() << 56) | index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Baseline,
    LearnRateFraction,
    LearnRateGlobal,
    HerdBest,
    HerdWorst,
    NoiseTraders,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::Baseline,
        ScenarioKind::LearnRateFraction,
        ScenarioKind::LearnRateGlobal,
        ScenarioKind::HerdBest,
        ScenarioKind::HerdWorst,
        ScenarioKind::NoiseTraders,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Baseline => "baseline",
            ScenarioKind::LearnRateFraction => "lr-frac",
            ScenarioKind::LearnRateGlobal => "lr-global",
            ScenarioKind::HerdBest => "herd-best",
            ScenarioKind::HerdWorst => "herd-worst",
            ScenarioKind::NoiseTraders => "noise",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .or(match norm.as_str() {
                "learn-rate-fraction" => Some(ScenarioKind::LearnRateFraction),
                "learn-rate-global" => Some(ScenarioKind::LearnRateGlobal),
                "noise-traders" => Some(ScenarioKind::NoiseTraders),
                _ => None,
            })
            .ok_or_else(|| ConfigError::BadValue {
                key: "scenario".into(),
                value: s.into(),
            })
    }
}

/// Which part of the population is altered, and how strongly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Fraction of agents affected. Ignored by `LearnRateGlobal`.
    pub p: f64,
    /// Learning-rate multiplier. Only read by the two learning-rate kinds.
    pub zeta: f64,
}

impl Scenario {
    pub const fn baseline() -> Self {
        Scenario {
            kind: ScenarioKind::Baseline,
            p: 0.0,
            zeta: 1.0,
        }
    }

    pub const fn new(kind: ScenarioKind, p: f64, zeta: f64) -> Self {
        Scenario { kind, p, zeta }
    }

    /// Number of agents that receive the scenario's role or multiplier.
    pub fn affected_count(&self, n_agents: usize) -> usize {
        match self.kind {
            ScenarioKind::Baseline => 0,
            ScenarioKind::LearnRateGlobal => n_agents,
            _ => ((self.p * n_agents as f64).round() as usize).min(n_agents),
        }
    }
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::baseline()
    }
}

/// Every tunable constant of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_agents: usize,
    pub n_stocks: usize,
    /// Recorded time steps per run (days), learning phase excluded.
    pub n_steps: usize,
    pub n_runs: usize,
    pub year_len: usize,
    pub month_len: usize,
    pub week_len: usize,
    pub init_price: f64,
    pub broker_fee: f64,
    pub riskfree_annual: f64,
    pub dividend_annual: f64,
    pub learning_phase: usize,
    pub crash_threshold: f64,
    pub master_seed: u64,
    pub scenario: Scenario,

    // Fundamental process.
    pub fundamental_vol: f64,
    pub jump_prob: f64,
    pub jump_scale: f64,

    // Per-agent cointegration rule.
    pub coint_bias: f64,
    pub coint_phi: f64,
    pub coint_noise: f64,

    // Endowment.
    pub init_bonds: f64,
    pub init_shares: u64,

    // Trading.
    pub trade_fraction: f64,
    pub flat_band: f64,
    pub noise_band: f64,

    /// Policy snapshot period in recorded steps; the final step is always captured.
    pub snapshot_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_agents: 500,
            n_stocks: 1,
            n_steps: 2875,
            n_runs: 20,
            year_len: 286,
            month_len: 21,
            week_len: 5,
            init_price: 100.0,
            broker_fee: 0.001,
            riskfree_annual: 0.01,
            dividend_annual: 0.02,
            learning_phase: 1000,
            crash_threshold: 0.20,
            master_seed: 0,
            scenario: Scenario::baseline(),
            fundamental_vol: 0.005,
            jump_prob: 0.01,
            jump_scale: 0.05,
            coint_bias: 0.05,
            coint_phi: 0.9,
            coint_noise: 0.01,
            init_bonds: 15_000.0,
            init_shares: 100,
            trade_fraction: 0.5,
            flat_band: 0.005,
            noise_band: 0.05,
            snapshot_every: 286,
        }
    }
}

/// Documented configuration keys, in file order.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("agents", "number of agents I"),
    ("stocks", "number of stocks J"),
    ("steps", "recorded time steps T (days)"),
    ("runs", "independent runs S"),
    ("year_len", "trading days per year"),
    ("month_len", "trading days per month"),
    ("week_len", "trading days per week"),
    ("init_price", "initial market price of every stock"),
    ("broker_fee", "fee per transaction, fraction of traded value"),
    ("riskfree_annual", "annual risk-free rate on bonds"),
    ("dividend_annual", "annual dividend yield on equity"),
    ("learning_phase", "unrecorded learning steps before the reset"),
    ("crash_threshold", "price drop counted as a crash"),
    ("seed", "master seed"),
    ("scenario", "baseline | lr-frac | lr-global | herd-best | herd-worst | noise"),
    ("p", "fraction of agents affected by the scenario"),
    ("zeta", "learning-rate multiplier"),
    ("fundamental_vol", "daily log-volatility of the fundamental value"),
    ("jump_prob", "daily probability of a fundamental jump"),
    ("jump_scale", "size of a fundamental log-jump"),
    ("coint_bias", "half-width of the agents' uniform valuation bias"),
    ("coint_phi", "persistence of the agents' valuation noise"),
    ("coint_noise", "innovation std of the agents' valuation noise"),
    ("init_bonds", "initial risk-free holdings per agent"),
    ("init_shares", "initial shares per agent and stock"),
    ("trade_fraction", "fraction of bonds or shares committed per order"),
    ("flat_band", "relative dead zone for a flat forecast"),
    ("noise_band", "half-width of the noise traders' price band"),
    ("snapshot_every", "policy snapshot period in recorded steps"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
    })
}

impl SimConfig {
    /// Desk-scale configuration: small enough for a full sweep in minutes.
    pub fn desk() -> Self {
        SimConfig {
            n_agents: 100,
            n_stocks: 1,
            n_steps: 500,
            n_runs: 5,
            learning_phase: 300,
            snapshot_every: 100,
            ..SimConfig::default()
        }
    }

    /// Paper-scale configuration (I=500, J=1, T=2875, S=20).
    pub fn paper() -> Self {
        SimConfig::default()
    }

    /// Sets one field from its textual key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim();
        match key {
            "agents" | "n_agents" => self.n_agents = parse(key, value)?,
            "stocks" | "n_stocks" => self.n_stocks = parse(key, value)?,
            "steps" | "n_steps" => self.n_steps = parse(key, value)?,
            "runs" | "n_runs" => self.n_runs = parse(key, value)?,
            "year_len" => self.year_len = parse(key, value)?,
            "month_len" => self.month_len = parse(key, value)?,
            "week_len" => self.week_len = parse(key, value)?,
            "init_price" => self.init_price = parse(key, value)?,
            "broker_fee" => self.broker_fee = parse(key, value)?,
            "riskfree_annual" => self.riskfree_annual = parse(key, value)?,
            "dividend_annual" => self.dividend_annual = parse(key, value)?,
            "learning_phase" => self.learning_phase = parse(key, value)?,
            "crash_threshold" => self.crash_threshold = parse(key, value)?,
            "seed" | "master_seed" => self.master_seed = parse(key, value)?,
            "scenario" => self.scenario.kind = value.parse()?,
            "p" => self.scenario.p = parse(key, value)?,
            "zeta" => self.scenario.zeta = parse(key, value)?,
            "fundamental_vol" => self.fundamental_vol = parse(key, value)?,
            "jump_prob" => self.jump_prob = parse(key, value)?,
            "jump_scale" => self.jump_scale = parse(key, value)?,
            "coint_bias" => self.coint_bias = parse(key, value)?,
            "coint_phi" => self.coint_phi = parse(key, value)?,
            "coint_noise" => self.coint_noise = parse(key, value)?,
            "init_bonds" => self.init_bonds = parse(key, value)?,
            "init_shares" => self.init_shares = parse(key, value)?,
            "trade_fraction" => self.trade_fraction = parse(key, value)?,
            "flat_band" => self.flat_band = parse(key, value)?,
            "noise_band" => self.noise_band = parse(key, value)?,
            "snapshot_every" => self.snapshot_every = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Overlays `key = value` lines onto `self`. `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), ConfigError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax {
                line: lineno + 1,
                text: raw.into(),
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Renders the config in the same flat format accepted by [`apply_kv`](Self::apply_kv).
    pub fn to_kv(&self) -> String {
        let values: Vec<String> = vec![
            self.n_agents.to_string(),
            self.n_stocks.to_string(),
            self.n_steps.to_string(),
            self.n_runs.to_string(),
            self.year_len.to_string(),
            self.month_len.to_string(),
            self.week_len.to_string(),
            self.init_price.to_string(),
            self.broker_fee.to_string(),
            self.riskfree_annual.to_string(),
            self.dividend_annual.to_string(),
            self.learning_phase.to_string(),
            self.crash_threshold.to_string(),
            self.master_seed.to_string(),
            self.scenario.kind.to_string(),
            self.scenario.p.to_string(),
            self.scenario.zeta.to_string(),
            self.fundamental_vol.to_string(),
            self.jump_prob.to_string(),
            self.jump_scale.to_string(),
            self.coint_bias.to_string(),
            self.coint_phi.to_string(),
            self.coint_noise.to_string(),
            self.init_bonds.to_string(),
            self.init_shares.to_string(),
            self.trade_fraction.to_string(),
            self.flat_band.to_string(),
            self.noise_band.to_string(),
            self.snapshot_every.to_string(),
        ];
        CONFIG_KEYS
            .iter()
            .zip(values)
            .map(|((key, doc), value)| format!("# {doc}\n{key} = {value}\n"))
            .collect()
    }

    /// Smallest admissible `n_steps`: the memory draw `U{T_w, T - tau - 2 T_w}`
    /// must be nonempty for the longest horizon `tau = 6 T_m`.
    pub fn min_steps(&self) -> usize {
        3 * self.week_len + 6 * self.month_len
    }

    /// Longest investment horizon an agent can draw.
    pub fn max_horizon(&self) -> usize {
        6 * self.month_len
    }

    pub fn validate(self) -> Result<SimConfig, ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n_agents < 2 {
            return fail(format!(
                "agents must be >= 2 so orders have counterparties (got {})",
                self.n_agents
            ));
        }
        if self.n_stocks < 1 {
            return fail("stocks must be >= 1".into());
        }
        if self.n_runs < 1 {
            return fail("runs must be >= 1".into());
        }
        if self.week_len < 1 || self.month_len < self.week_len || self.year_len < self.month_len {
            return fail(format!(
                "calendar must satisfy 1 <= week_len <= month_len <= year_len (got {}, {}, {})",
                self.week_len, self.month_len, self.year_len
            ));
        }
        if self.n_steps < self.min_steps() {
            return fail(format!(
                "steps must be >= 3*week_len + 6*month_len = {} so every memory draw is nonempty (got {})",
                self.min_steps(),
                self.n_steps
            ));
        }
        if !(self.init_price > 0.0 && self.init_price.is_finite()) {
            return fail(format!("init_price must be positive (got {})", self.init_price));
        }
        let rates = [
            ("broker_fee", self.broker_fee),
            ("riskfree_annual", self.riskfree_annual),
            ("dividend_annual", self.dividend_annual),
            ("crash_threshold", self.crash_threshold),
            ("jump_prob", self.jump_prob),
            ("coint_phi", self.coint_phi),
            ("flat_band", self.flat_band),
            ("noise_band", self.noise_band),
            ("coint_bias", self.coint_bias),
        ];
        for (name, v) in rates {
            if !(0.0..1.0).contains(&v) {
                return fail(format!("{name} must lie in [0, 1) (got {v})"));
            }
        }
        if !(self.trade_fraction > 0.0 && self.trade_fraction < 1.0) {
            return fail(format!(
                "trade_fraction must lie in (0, 1) (got {})",
                self.trade_fraction
            ));
        }
        for (name, v) in [
            ("fundamental_vol", self.fundamental_vol),
            ("jump_scale", self.jump_scale),
            ("coint_noise", self.coint_noise),
            ("init_bonds", self.init_bonds),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be finite and >= 0 (got {v})"));
            }
        }
        if !(0.0..=1.0).contains(&self.scenario.p) {
            return fail(format!("p must lie in [0, 1] (got {})", self.scenario.p));
        }
        if !(self.scenario.zeta > 0.0 && self.scenario.zeta.is_finite()) {
            return fail(format!("zeta must be > 0 (got {})", self.scenario.zeta));
        }
        if self.snapshot_every == 0 {
            return fail("snapshot_every must be >= 1".into());
        }
        Ok(self)
    }

    /// Per-step risk-free rate `(1 + annual)^(1/T_y) - 1`.
    pub fn riskfree_step(&self) -> f64 {
        (1.0 + self.riskfree_annual).powf(1.0 / self.year_len as f64) - 1.0
    }

    /// Per-step dividend yield `(1 + annual)^(1/T_y) - 1`.
    pub fn dividend_step(&self) -> f64 {
        (1.0 + self.dividend_annual).powf(1.0 / self.year_len as f64) - 1.0
    }

    /// Total number of simulated steps, learning phase included.
    pub fn total_steps(&self) -> usize {
        self.learning_phase + self.n_steps
    }

    /// Config for run `run_index`: identical except for the shifted master seed.
    pub fn for_run(&self, run_index: usize) -> SimConfig {
        SimConfig {
            master_seed: self.master_seed.wrapping_add(run_index as u64),
            ..self.clone()
        }
    }
}
