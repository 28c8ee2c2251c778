//! Price-forecasting learner: a 27 x 27 tabular policy choosing a technical
//! tool, a lag and a fundamental weight, updated in hindsight once the
//! forecast horizon has elapsed.

use crate::policy::PolicyTable;
use crate::stats::{ls_slope, mean, sample_std, tercile};

pub const FORECAST_STATES: usize = 27;
pub const FORECAST_ACTIONS: usize = 27;

/// Lowest forecast the technical tools may return.
pub const PRICE_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ForecastState {
    pub long_vol: u8,
    pub short_vol: u8,
    pub gap: u8,
}

impl ForecastState {
    pub fn index(self) -> usize {
        self.long_vol as usize * 9 + self.short_vol as usize * 3 + self.gap as usize
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < FORECAST_STATES);
        ForecastState {
            long_vol: (i / 9) as u8,
            short_vol: (i / 3 % 3) as u8,
            gap: (i % 3) as u8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tool {
    MeanRevert,
    Average,
    TrendFollow,
}

impl Tool {
    pub const ALL: [Tool; 3] = [Tool::MeanRevert, Tool::Average, Tool::TrendFollow];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ForecastAction {
    pub tool: Tool,
    /// Index into the lag menu.
    pub lag: u8,
    /// Fundamental-weight level.
    pub weight: u8,
}

impl ForecastAction {
    pub fn index(self) -> usize {
        self.tool as usize * 9 + self.lag as usize * 3 + self.weight as usize
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < FORECAST_ACTIONS);
        ForecastAction {
            tool: Tool::ALL[i / 9],
            lag: (i / 3 % 3) as u8,
            weight: (i % 3) as u8,
        }
    }
}

/// Lag menu `{T_w, T_m, 3 T_m}` selected by the lag component of an action.
pub fn lag_menu(week_len: usize, month_len: usize) -> [usize; 3] {
    [week_len, month_len, 3 * month_len]
}

/// Normalized volatility `std(P[t-window+1..=t]) / P(t)` with the window
/// capped at the available history. `prices` ends at `t`.
pub fn relative_volatility(prices: &[f64], window: usize) -> f64 {
    let n = prices.len();
    if n == 0 {
        return 0.0;
    }
    let w = window.min(n);
    sample_std(&prices[n - w..]) / prices[n - 1]
}

/// Relative gap between the agent's valuation and the market price.
pub fn valuation_gap(valuation: f64, price: f64) -> f64 {
    (valuation - price) / price
}

/// Bins the three current statistics against their own trailing histories.
pub fn observe_state_f(
    long_vol: (f64, &[f64]),
    short_vol: (f64, &[f64]),
    gap: (f64, &[f64]),
) -> ForecastState {
    ForecastState {
        long_vol: tercile(long_vol.0, long_vol.1),
        short_vol: tercile(short_vol.0, short_vol.1),
        gap: tercile(gap.0, gap.1),
    }
}

/// Builds the forecast state directly from raw price and valuation histories
/// (both ending at `t`). Trailing distributions cover the `memory` steps
/// before `t`. Quadratic in the window sizes; the simulator uses cached
/// statistics instead, and this is the reference it must agree with.
pub fn observe_state_from_history(
    prices: &[f64],
    valuations: &[f64],
    long_window: usize,
    short_window: usize,
    memory: usize,
) -> ForecastState {
    let t = prices.len() - 1;
    let start = t.saturating_sub(memory);
    let stat = |window: usize, upto: usize| relative_volatility(&prices[..=upto], window);
    let long_hist: Vec<f64> = (start..t).map(|s| stat(long_window, s)).collect();
    let short_hist: Vec<f64> = (start..t).map(|s| stat(short_window, s)).collect();
    let gap_hist: Vec<f64> = (start..t)
        .map(|s| valuation_gap(valuations[s], prices[s]))
        .collect();
    observe_state_f(
        (stat(long_window, t), &long_hist),
        (stat(short_window, t), &short_hist),
        (valuation_gap(valuations[t], prices[t]), &gap_hist),
    )
}

/// Technical forecast at horizon `horizon` from the last `lag` prices
/// (capped at the available history). `prices` ends at the current step.
pub fn technical_forecast(tool: Tool, lag: usize, prices: &[f64], horizon: usize) -> f64 {
    let n = prices.len();
    let w = lag.clamp(1, n);
    let window = &prices[n - w..];
    let now = prices[n - 1];
    let raw = match tool {
        Tool::Average => mean(window),
        Tool::MeanRevert => {
            let reach = (horizon as f64 / w as f64).min(1.0);
            now + (mean(window) - now) * reach
        }
        Tool::TrendFollow => now + horizon as f64 * ls_slope(window),
    };
    raw.max(PRICE_FLOOR)
}

/// Fundamental weight `c = rho * {0.5, 1.0, min(1/rho, 1.5)}[level]`, clipped to [0, 1].
pub fn fundamental_weight(rho: f64, level: u8) -> f64 {
    let k = match level {
        0 => 0.5,
        1 => 1.0,
        _ => {
            if rho > 0.0 {
                (1.0 / rho).min(1.5)
            } else {
                1.5
            }
        }
    };
    (rho * k).clamp(0.0, 1.0)
}

/// Weighted average of the technical forecast and the agent's valuation.
pub fn blend(technical: f64, valuation: f64, rho: f64, level: u8) -> f64 {
    let c = fundamental_weight(rho, level);
    c * valuation + (1.0 - c) * technical
}

/// Inputs needed to evaluate any forecast action at one issue step.
#[derive(Debug, Clone, Copy)]
pub struct ForecastContext<'a> {
    /// Price history ending at the issue step.
    pub prices: &'a [f64],
    pub valuation: f64,
    pub rho: f64,
    pub horizon: usize,
    pub lags: [usize; 3],
}

impl ForecastContext<'_> {
    pub fn forecast(&self, action: ForecastAction) -> f64 {
        let tech = technical_forecast(
            action.tool,
            self.lags[action.lag as usize],
            self.prices,
            self.horizon,
        );
        blend(tech, self.valuation, self.rho, action.weight)
    }

    /// Absolute error of every action against the realized price.
    pub fn replay_errors(&self, realized: f64) -> [f64; FORECAST_ACTIONS] {
        // Nine technical forecasts, each blended at three weights.
        let mut errors = [0.0; FORECAST_ACTIONS];
        for (ti, tool) in Tool::ALL.into_iter().enumerate() {
            for (li, &lag) in self.lags.iter().enumerate() {
                let tech = technical_forecast(tool, lag, self.prices, self.horizon);
                for level in 0..3u8 {
                    let f = blend(tech, self.valuation, self.rho, level);
                    errors[ti * 9 + li * 3 + level as usize] = (f - realized).abs();
                }
            }
        }
        errors
    }
}

/// A forecast waiting for its horizon to elapse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingForecast {
    pub issued: usize,
    pub state: usize,
    pub action: usize,
    pub forecast: f64,
    pub valuation: f64,
}

/// Sextile reward: `q` is the fraction of past errors strictly below
/// `abs_error`; smaller errors earn more.
pub fn reward_f(abs_error: f64, history: &[f64]) -> i8 {
    debug_assert!(!history.is_empty());
    let below = history.iter().filter(|&&e| e < abs_error).count();
    sextile_reward(below, history.len(), true)
}

/// Maps `count / n` onto the six reward bins `[0,1/6) ... [5/6,1]`.
/// With `descending` the lowest bin earns +4, otherwise -4.
pub(crate) fn sextile_reward(count: usize, n: usize, descending: bool) -> i8 {
    const REWARDS: [i8; 6] = [4, 2, 1, -1, -2, -4];
    // floor(6 q) computed on integers so bin edges are exact.
    let bin = ((6 * count) / n).min(5);
    if descending {
        REWARDS[bin]
    } else {
        REWARDS[5 - bin]
    }
}

/// Index of the smallest error; ties resolve to the smallest index.
pub fn hindsight_best_f(errors: &[f64]) -> usize {
    let mut best = 0;
    for (i, &e) in errors.iter().enumerate() {
        if e < errors[best] {
            best = i;
        }
    }
    best
}

/// Replays all actions for `pending` and reinforces the hindsight-optimal one
/// at `rate`. Returns that action.
pub fn hindsight_update_f(
    policy: &mut PolicyTable,
    pending: &PendingForecast,
    ctx: &ForecastContext<'_>,
    realized: f64,
    rate: f64,
) -> usize {
    let best = hindsight_best_f(&ctx.replay_errors(realized));
    policy.reinforce(pending.state, best, rate);
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAGS: [usize; 3] = [5, 21, 63];

    #[test]
    fn index_encoding() {
        for i in 0..27 {
            assert_eq!(ForecastState::from_index(i).index(), i);
            assert_eq!(ForecastAction::from_index(i).index(), i);
        }
        let s = ForecastState {
            long_vol: 2,
            short_vol: 1,
            gap: 0,
        };
        assert_eq!(s.index(), 21);
    }

    #[test]
    fn constant_history_is_middle_state() {
        let prices = vec![100.0; 400];
        let s = observe_state_from_history(&prices, &prices, 126, 10, 200);
        assert_eq!(s.index(), ForecastState { long_vol: 1, short_vol: 1, gap: 1 }.index());
    }

    #[test]
    fn high_long_volatility_is_top_tercile() {
        let hist: Vec<f64> = (0..100).map(|i| 0.01 + 0.0001 * i as f64).collect();
        let s = observe_state_f((0.02, &hist), (0.0, &[]), (0.0, &[]));
        assert_eq!(s.long_vol, 2);
    }

    #[test]
    fn valuation_above_price_is_top_gap_tercile() {
        // Trailing gaps centred on 0 with +-1% spread, then B 10% above P.
        let n = 60;
        let prices = vec![100.0; n + 1];
        let mut vals: Vec<f64> = (0..n).map(|i| 100.0 * (1.0 + 0.01 * ((i % 5) as f64 - 2.0) / 2.0)).collect();
        vals.push(110.0);
        let s = observe_state_from_history(&prices, &vals, 126, 10, n);
        assert_eq!(s.gap, 2);
    }

    #[test]
    fn tools_agree_on_constant_prices() {
        let prices = vec![100.0; 80];
        for tool in Tool::ALL {
            for lag in LAGS {
                assert_eq!(technical_forecast(tool, lag, &prices, 7), 100.0);
            }
        }
    }

    #[test]
    fn trend_follow_extrapolates_line() {
        let prices: Vec<f64> = (0..30).map(|i| 50.0 + i as f64).collect();
        let f = technical_forecast(Tool::TrendFollow, 21, &prices, 5);
        assert!((f - (79.0 + 5.0)).abs() < 1e-9);
    }

    #[test]
    fn average_of_window() {
        let prices = [1.0, 2.0, 90.0, 100.0, 110.0, 100.0, 100.0];
        assert_eq!(technical_forecast(Tool::Average, 5, &prices, 3), 100.0);
    }

    #[test]
    fn mean_revert_reach() {
        let prices = [90.0, 90.0, 90.0, 90.0, 110.0];
        // mean 94, now 110, reach min(1, 2/5)
        let f = technical_forecast(Tool::MeanRevert, 5, &prices, 2);
        assert!((f - (110.0 + (94.0 - 110.0) * 0.4)).abs() < 1e-12);
        let f = technical_forecast(Tool::MeanRevert, 5, &prices, 9);
        assert!((f - 94.0).abs() < 1e-12);
    }

    #[test]
    fn forecast_floor_and_short_history() {
        let crash: Vec<f64> = (0..10).map(|i| 100.0 - 10.0 * i as f64).collect();
        assert_eq!(technical_forecast(Tool::TrendFollow, 5, &crash, 50), PRICE_FLOOR);
        assert_eq!(technical_forecast(Tool::Average, 63, &[42.0], 5), 42.0);
    }

    #[test]
    fn blend_weights() {
        for level in 0..3 {
            assert_eq!(blend(100.0, 110.0, 0.0, level), 100.0);
        }
        assert_eq!(blend(100.0, 110.0, 1.0, 1), 110.0);
        assert!((blend(100.0, 110.0, 0.5, 0) - 102.5).abs() < 1e-12);
        assert_eq!(fundamental_weight(0.5, 2), 0.75);
        assert_eq!(fundamental_weight(0.9, 2), 1.0);
    }

    #[test]
    fn reward_sextiles() {
        let hist = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(reward_f(0.5, &hist), 4);
        assert_eq!(reward_f(7.0, &hist), -4);
        assert_eq!(reward_f(3.5, &hist), -1);
        let mut last = i8::MAX;
        for k in 0..80 {
            let r = reward_f(k as f64 * 0.1, &hist);
            assert!(r <= last);
            last = r;
        }
    }

    #[test]
    fn hindsight_update_picks_exhaustive_argmin() {
        let prices: Vec<f64> = (0..100).map(|i| 100.0 + (i as f64 * 0.3).sin() * 4.0).collect();
        let ctx = ForecastContext {
            prices: &prices,
            valuation: 103.0,
            rho: 0.4,
            horizon: 12,
            lags: LAGS,
        };
        let pending = PendingForecast {
            issued: 99,
            state: 13,
            action: 0,
            forecast: ctx.forecast(ForecastAction::from_index(0)),
            valuation: 103.0,
        };
        let mut policy = PolicyTable::uniform(27, 27);
        let best = hindsight_update_f(&mut policy, &pending, &ctx, 101.7, 0.1);
        let errs = ctx.replay_errors(101.7);
        for (a, e) in errs.iter().enumerate() {
            assert!(errs[best] <= *e);
            assert!((e - (ctx.forecast(ForecastAction::from_index(a)) - 101.7).abs()).abs() < 1e-12);
        }
        assert!((policy.get(13, best) - (1.0 / 27.0 + 0.1 * 26.0 / 27.0)).abs() < 1e-12);

        let mut frozen = PolicyTable::uniform(27, 27);
        hindsight_update_f(&mut frozen, &pending, &ctx, 101.7, 0.0);
        assert_eq!(frozen, PolicyTable::uniform(27, 27));
    }

    #[test]
    fn argmin_tie_goes_to_lowest() {
        assert_eq!(hindsight_best_f(&[3.0, 1.0, 1.0, 2.0]), 1);
    }
}
