//! Hidden fundamental values and the agents' private, cointegrated estimates.
//!
//! The fundamental value of each stock follows a geometric random walk with
//! rare jumps. Agents never see it: each one receives a [`Valuation`], a
//! lagged, biased copy multiplied by a stationary AR(1) noise factor.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};

use crate::config::{rng_stream, SimConfig, StreamDomain};

/// Fundamental value path of one stock, one entry per simulated step.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalSeries {
    values: Vec<f64>,
    jump_steps: Vec<usize>,
}

impl FundamentalSeries {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, t: usize) -> f64 {
        self.values[t.min(self.values.len() - 1)]
    }

    /// Steps whose log-increment (from `t - 1` to `t`) includes a jump.
    pub fn jump_steps(&self) -> &[usize] {
        &self.jump_steps
    }
}

/// Parameters of the fundamental process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalProcess {
    pub start: f64,
    pub vol: f64,
    pub jump_prob: f64,
    pub jump_scale: f64,
}

impl FundamentalProcess {
    pub fn from_config(cfg: &SimConfig) -> Self {
        FundamentalProcess {
            start: cfg.init_price,
            vol: cfg.fundamental_vol,
            jump_prob: cfg.jump_prob,
            jump_scale: cfg.jump_scale,
        }
    }

    /// Draws a path of `len` values starting at `self.start`.
    pub fn generate<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> FundamentalSeries {
        let mut values = Vec::with_capacity(len);
        let mut jump_steps = Vec::new();
        let mut v = self.start;
        values.push(self.start);
        for t in 1..len {
            let z: f64 = StandardNormal.sample(rng);
            let mut inc = self.vol * z;
            if self.jump_prob > 0.0 && rng.random::<f64>() < self.jump_prob {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                inc += sign * self.jump_scale;
                jump_steps.push(t);
            }
            v *= inc.exp();
            values.push(v);
        }
        FundamentalSeries { values, jump_steps }
    }
}

/// Fundamental series for `stock_id`, covering learning phase and recorded steps.
pub fn generate_fundamental(cfg: &SimConfig, stock_id: usize) -> FundamentalSeries {
    let mut rng = rng_stream(cfg.master_seed, StreamDomain::Fundamental, stock_id as u64);
    FundamentalProcess::from_config(cfg).generate(cfg.total_steps() + 1, &mut rng)
}

/// One agent's rule for deriving its estimate from the true fundamental.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CointegrationRule {
    pub bias: f64,
    pub lag: usize,
    pub phi: f64,
    pub noise: f64,
}

impl CointegrationRule {
    /// Draws bias ~ U(-b, b) and lag ~ U{0, T_w}; persistence and noise come from config.
    pub fn draw<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Self {
        let bias = if cfg.coint_bias > 0.0 {
            rng.sample(Uniform::new(-cfg.coint_bias, cfg.coint_bias).unwrap())
        } else {
            0.0
        };
        CointegrationRule {
            bias,
            lag: rng.random_range(0..=cfg.week_len),
            phi: cfg.coint_phi,
            noise: cfg.coint_noise,
        }
    }

    /// Stationary variance of the log-spread noise, `noise^2 / (1 - phi^2)`.
    pub fn stationary_variance(&self) -> f64 {
        self.noise * self.noise / (1.0 - self.phi * self.phi)
    }

    /// AR(1) noise path started from its stationary distribution.
    pub fn noise_path<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<f64> {
        if self.noise == 0.0 {
            return vec![0.0; len];
        }
        let innov = Normal::new(0.0, self.noise).unwrap();
        let mut eta = Normal::new(0.0, self.stationary_variance().sqrt())
            .unwrap()
            .sample(rng);
        let mut out = Vec::with_capacity(len);
        for t in 0..len {
            if t > 0 {
                eta = self.phi * eta + innov.sample(rng);
            }
            out.push(eta);
        }
        out
    }
}

/// `B(t) = F(t - lag) * (1 + bias) * exp(eta)`; the lag is clamped at the series start.
pub fn cointegrate(series: &FundamentalSeries, rule: &CointegrationRule, t: usize, eta: f64) -> f64 {
    series.at(t.saturating_sub(rule.lag)) * (1.0 + rule.bias) * eta.exp()
}

/// The only view of the fundamental an agent gets: its own estimate path.
#[derive(Debug, Clone, PartialEq)]
pub struct Valuation {
    values: Vec<f64>,
}

impl Valuation {
    pub fn build<R: Rng + ?Sized>(
        series: &FundamentalSeries,
        rule: &CointegrationRule,
        rng: &mut R,
    ) -> Self {
        let eta = rule.noise_path(series.len(), rng);
        let values = (0..series.len())
            .map(|t| cointegrate(series, rule, t, eta[t]))
            .collect();
        Valuation { values }
    }

    pub fn at(&self, t: usize) -> f64 {
        self.values[t.min(self.values.len() - 1)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
