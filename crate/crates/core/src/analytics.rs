//! Measurements over recorded runs. Everything here is a pure function of
//! recorded data.

use std::collections::BTreeMap;

use crate::policy::{policy_distance, PolicyTable};
use crate::simulator::{MarketRecord, PolicySnapshot, RunOutput};
use crate::stats::{mean, median, sample_std};

/// Factor applied to trade-policy distances so both algorithms share the
/// same upper bound: `(2/27) / (2/9)`.
pub const TRADE_DISTANCE_SCALE: f64 = 1.0 / 3.0;

/// Pairwise policy distances. Symmetric with a zero diagonal.
pub fn distance_matrix(tables: &[PolicyTable]) -> Vec<Vec<f64>> {
    let n = tables.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = policy_distance(&tables[i], &tables[j]).expect("population shares one shape");
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Number of agents in a decile: `max(1, n / 10)`.
pub fn decile_size(n: usize) -> usize {
    (n / 10).max(1)
}

/// Best and worst deciles by NAV. Agents are ranked by NAV descending with
/// ties broken by ascending index; the best decile is the head of that
/// ranking and the worst decile its tail, both in ranking order.
pub fn nav_deciles(nav: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..nav.len()).collect();
    order.sort_by(|&a, &b| nav[b].total_cmp(&nav[a]).then(a.cmp(&b)));
    let k = decile_size(nav.len()).min(nav.len());
    let best = order[..k].to_vec();
    let worst = order[nav.len() - k..].to_vec();
    (best, worst)
}

/// Mean distance over unordered pairs; within one group the diagonal is
/// excluded. `None` when there is no pair.
pub fn mean_pair_distance(d: &[Vec<f64>], a: &[usize], b: &[usize]) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    if a == b {
        for (x, &i) in a.iter().enumerate() {
            for &j in &a[x + 1..] {
                sum += d[i][j];
                count += 1;
            }
        }
    } else {
        for &i in a {
            for &j in b {
                sum += d[i][j];
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Five group-distance series, one value per snapshot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupCurves {
    pub steps: Vec<usize>,
    pub best_best: Vec<f64>,
    pub best_rest: Vec<f64>,
    pub best_worst: Vec<f64>,
    pub worst_rest: Vec<f64>,
    pub worst_worst: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Forecast,
    Trade,
}

/// Group distances at one snapshot: `[bb, br, bw, wr, ww]`. "Rest" is every
/// agent in neither decile. Trade distances are rescaled.
pub fn group_distances(snapshot: &PolicySnapshot, kind: PolicyKind) -> [f64; 5] {
    let (tables, scale) = match kind {
        PolicyKind::Forecast => (&snapshot.forecast, 1.0),
        PolicyKind::Trade => (&snapshot.trade, TRADE_DISTANCE_SCALE),
    };
    let d = distance_matrix(tables);
    let (best, worst) = nav_deciles(&snapshot.nav);
    let rest: Vec<usize> = (0..tables.len())
        .filter(|i| !best.contains(i) && !worst.contains(i))
        .collect();
    let f = |a: &[usize], b: &[usize]| scale * mean_pair_distance(&d, a, b).unwrap_or(0.0);
    [
        f(&best, &best),
        f(&best, &rest),
        f(&best, &worst),
        f(&worst, &rest),
        f(&worst, &worst),
    ]
}

pub fn group_distance_curves(snapshots: &[PolicySnapshot], kind: PolicyKind) -> GroupCurves {
    let mut c = GroupCurves::default();
    for s in snapshots {
        let [bb, br, bw, wr, ww] = group_distances(s, kind);
        c.steps.push(s.step);
        c.best_best.push(bb);
        c.best_rest.push(br);
        c.best_worst.push(bw);
        c.worst_rest.push(wr);
        c.worst_worst.push(ww);
    }
    c
}

/// `std(P[t-lag+1..=t]) / P(t)` for every `t` with a full window.
pub fn rolling_volatility(prices: &[f64], lag: usize) -> Vec<f64> {
    if lag == 0 || prices.len() < lag {
        return Vec::new();
    }
    prices
        .windows(lag)
        .map(|w| sample_std(w) / w[lag - 1])
        .collect()
}

pub fn mean_volatility(prices: &[f64], lag: usize) -> f64 {
    mean(&rolling_volatility(prices, lag))
}

/// Crash events: `P(t) < (1 - threshold) * max(P[t-window..t])`. Qualifying
/// steps within `window` of an event's start belong to that event.
pub fn count_crashes(prices: &[f64], window: usize, threshold: f64) -> usize {
    let mut events = 0;
    let mut last_start: Option<usize> = None;
    for t in 1..prices.len() {
        let peak = prices[t.saturating_sub(window)..t]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if prices[t] < (1.0 - threshold) * peak && last_start.is_none_or(|s| t - s >= window) {
            events += 1;
            last_start = Some(t);
        }
    }
    events
}

pub fn log_returns(prices: &[f64]) -> Vec<f64> {
    prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnStats {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Moments of `xs` using population central moments for the shape
/// statistics; skewness and kurtosis are 0 for a constant sample.
pub fn moments(xs: &[f64]) -> (f64, f64, f64, f64) {
    let m = mean(xs);
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - m;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 == 0.0 {
        return (m, 0.0, 0.0, 0.0);
    }
    (m, sample_std(xs), m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

/// Histogram over `[min, max]` of the pooled log returns of every series.
pub fn return_histogram(series: &[&[f64]], bins: usize) -> ReturnStats {
    let returns: Vec<f64> = series.iter().flat_map(|p| log_returns(p)).collect();
    let bins = bins.max(1);
    let lo = returns.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if returns.is_empty() {
        (0.0, 0.0)
    } else {
        (lo, hi)
    };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|k| lo + width * k as f64).collect();
    let mut counts = vec![0usize; bins];
    for r in &returns {
        let k = if width > 0.0 {
            (((r - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[k] += 1;
    }
    if returns.is_empty() {
        counts[0] = 0;
    }
    let (mean, std, skewness, excess_kurtosis) = moments(&returns);
    ReturnStats {
        edges,
        counts,
        mean,
        std,
        skewness,
        excess_kurtosis,
    }
}

/// Maximal runs of strictly rising (`+k`) and strictly falling (`-k`) steps.
/// Unchanged steps end a run and are not counted.
pub fn run_lengths(prices: &[f64]) -> Vec<i64> {
    let mut out = Vec::new();
    let mut cur: i64 = 0;
    for w in prices.windows(2) {
        let dir: i64 = if w[1] > w[0] {
            1
        } else if w[1] < w[0] {
            -1
        } else {
            0
        };
        if dir == 0 || (cur != 0 && dir != cur.signum()) {
            if cur != 0 {
                out.push(cur);
            }
            cur = dir;
        } else {
            cur += dir;
        }
    }
    if cur != 0 {
        out.push(cur);
    }
    out
}

pub fn run_length_distribution(series: &[&[f64]]) -> BTreeMap<i64, usize> {
    let mut dist = BTreeMap::new();
    for p in series {
        for r in run_lengths(p) {
            *dist.entry(r).or_insert(0) += 1;
        }
    }
    dist
}

/// Parameter values of the best and worst NAV deciles.
pub fn decile_values(values: &[f64], nav: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (best, worst) = nav_deciles(nav);
    (
        best.iter().map(|&i| values[i]).collect(),
        worst.iter().map(|&i| values[i]).collect(),
    )
}

/// Histogram of `xs` over `bins` equal bins of `[lo, hi]`; values outside are clamped.
pub fn histogram(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let bins = bins.max(1);
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for &x in xs {
        let k = if width > 0.0 {
            ((x - lo) / width).floor().clamp(0.0, (bins - 1) as f64) as usize
        } else {
            0
        };
        counts[k] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecileDistribution {
    pub best: Vec<usize>,
    pub worst: Vec<usize>,
    pub best_median: f64,
    pub worst_median: f64,
}

/// Best/worst-decile histograms of one agent parameter; bankrupt agents are
/// ranked by their final NAV like everyone else.
pub fn decile_param_distribution(values: &[f64], nav: &[f64], lo: f64, hi: f64, bins: usize) -> DecileDistribution {
    let (b, w) = decile_values(values, nav);
    DecileDistribution {
        best: histogram(&b, lo, hi, bins),
        worst: histogram(&w, lo, hi, bins),
        best_median: median(&b).unwrap_or(0.0),
        worst_median: median(&w).unwrap_or(0.0),
    }
}

/// Mean bankrupt percentage at each step across records of equal length.
pub fn bankruptcy_curve(records: &[&MarketRecord]) -> Vec<f64> {
    if records.is_empty() {
        return Vec::new();
    }
    let steps = records.iter().map(|r| r.n_steps()).min().unwrap_or(0);
    (0..steps)
        .map(|s| {
            100.0
                * mean(
                    &records
                        .iter()
                        .map(|r| r.bankrupt_count[s] as f64 / r.n_agents.max(1) as f64)
                        .collect::<Vec<_>>(),
                )
        })
        .collect()
}

/// Mean over steps and runs of the bankrupt percentage.
pub fn bankruptcy_rate(records: &[&MarketRecord]) -> f64 {
    mean(&bankruptcy_curve(records))
}

/// Price path of stock `j` including the price at the start of recording.
pub fn full_prices(record: &MarketRecord, j: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(record.prices[j].len() + 1);
    p.push(record.start_prices[j]);
    p.extend_from_slice(&record.prices[j]);
    p
}

/// Mean residual spread as a percentage of the step's clearing price.
pub fn mean_spread_pct(record: &MarketRecord, j: usize) -> f64 {
    let xs: Vec<f64> = record.residual_spreads[j]
        .iter()
        .zip(&record.prices[j])
        .filter_map(|(s, p)| s.map(|s| 100.0 * s / p))
        .collect();
    mean(&xs)
}

/// Sweep-point statistics averaged over runs and stocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub vol_week: f64,
    pub vol_month: f64,
    pub vol_6m: f64,
    pub crashes: f64,
    pub mean_volume: f64,
    pub mean_spread_pct: f64,
    pub bankruptcy_pct: f64,
}

/// Volatility lags `{T_w, T_m, 6 T_m}`.
pub fn volatility_lags(week_len: usize, month_len: usize) -> [usize; 3] {
    [week_len, month_len, 6 * month_len]
}

pub fn summarize_records(records: &[&MarketRecord], week_len: usize, month_len: usize, crash_threshold: f64) -> PointSummary {
    let lags = volatility_lags(week_len, month_len);
    let mut vols = [Vec::new(), Vec::new(), Vec::new()];
    let mut crashes = Vec::new();
    let mut volume = Vec::new();
    let mut spread = Vec::new();
    for r in records {
        for j in 0..r.prices.len() {
            let p = full_prices(r, j);
            for (k, &lag) in lags.iter().enumerate() {
                vols[k].push(mean_volatility(&p, lag));
            }
            crashes.push(count_crashes(&p, month_len, crash_threshold) as f64);
            volume.push(mean(&r.volumes[j].iter().map(|&v| v as f64).collect::<Vec<_>>()));
            spread.push(mean_spread_pct(r, j));
        }
    }
    PointSummary {
        vol_week: mean(&vols[0]),
        vol_month: mean(&vols[1]),
        vol_6m: mean(&vols[2]),
        crashes: mean(&crashes),
        mean_volume: mean(&volume),
        mean_spread_pct: mean(&spread),
        bankruptcy_pct: bankruptcy_rate(records),
    }
}

pub fn summarize(runs: &[RunOutput]) -> PointSummary {
    let records: Vec<&MarketRecord> = runs.iter().map(|r| &r.record).collect();
    let cfg = &runs[0].config;
    summarize_records(&records, cfg.week_len, cfg.month_len, cfg.crash_threshold)
}
