//! Plot-ready CSVs, one per figure, computed from the runs of one point.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Result};
use stockmarl_core::analytics::{
    bankruptcy_curve, count_crashes, decile_param_distribution, full_prices, group_distance_curves,
    mean_volatility, return_histogram, rolling_volatility, run_length_distribution, summarize_records,
    volatility_lags, GroupCurves, PointSummary, PolicyKind, ReturnStats,
};
use stockmarl_core::stats::mean;
use stockmarl_core::MarketRecord;

use crate::io::RunData;

pub const FIGURES: [&str; 13] = [
    "fig_K1",
    "fig_I1",
    "fig_I2",
    "fig_N1",
    "fig_N2",
    "fig_N3",
    "fig_L1",
    "fig_L1_moments",
    "fig_L2",
    "fig_L3",
    "fig_L4",
    "fig_K5",
    "fig_K10",
];

pub const RETURN_BINS: usize = 50;
pub const RHO_BINS: usize = 10;
pub const GESTURE_BINS: usize = 12;

/// Outcome of producing one figure.
#[derive(Debug)]
pub struct FigureReport {
    pub name: &'static str,
    pub result: Result<()>,
}

fn records(runs: &[RunData]) -> Result<Vec<&MarketRecord>> {
    let r: Vec<&MarketRecord> = runs.iter().filter_map(|r| r.record.as_ref()).collect();
    if r.is_empty() {
        bail!("no price records");
    }
    Ok(r)
}

fn week_month(runs: &[RunData]) -> (usize, usize, f64) {
    let c = &runs[0].meta.config;
    (c.week_len, c.month_len, c.crash_threshold)
}

/// Summary row of a sweep point.
pub fn point_summary(runs: &[RunData]) -> Result<PointSummary> {
    let (w, m, thr) = week_month(runs);
    Ok(summarize_records(&records(runs)?, w, m, thr))
}

fn push_curves(csv: &mut String, c: &GroupCurves, k: usize) {
    for v in [c.best_best[k], c.best_rest[k], c.best_worst[k], c.worst_rest[k], c.worst_worst[k]] {
        let _ = write!(csv, ",{v}");
    }
}

fn fig_k1(runs: &[RunData]) -> Result<String> {
    let snaps: Vec<_> = runs.iter().filter_map(|r| r.snapshots.as_ref()).collect();
    if snaps.is_empty() {
        bail!("policy snapshots absent");
    }
    let mut f_curves = Vec::new();
    let mut t_curves = Vec::new();
    for s in &snaps {
        f_curves.push(group_distance_curves(s, PolicyKind::Forecast));
        t_curves.push(group_distance_curves(s, PolicyKind::Trade));
    }
    let n = f_curves.iter().map(|c| c.steps.len()).min().unwrap_or(0);
    let avg = |curves: &[GroupCurves]| {
        let mut out = GroupCurves::default();
        for k in 0..n {
            out.steps.push(curves[0].steps[k]);
            let m = |f: fn(&GroupCurves) -> &Vec<f64>| mean(&curves.iter().map(|c| f(c)[k]).collect::<Vec<_>>());
            out.best_best.push(m(|c| &c.best_best));
            out.best_rest.push(m(|c| &c.best_rest));
            out.best_worst.push(m(|c| &c.best_worst));
            out.worst_rest.push(m(|c| &c.worst_rest));
            out.worst_worst.push(m(|c| &c.worst_worst));
        }
        out
    };
    let (f, t) = (avg(&f_curves), avg(&t_curves));
    let mut csv = String::from(
        "step,f_best_best,f_best_rest,f_best_worst,f_worst_rest,f_worst_worst,t_best_best,t_best_rest,t_best_worst,t_worst_rest,t_worst_worst\n",
    );
    for k in 0..n {
        let _ = write!(csv, "{}", f.steps[k]);
        push_curves(&mut csv, &f, k);
        push_curves(&mut csv, &t, k);
        csv.push('\n');
    }
    Ok(csv)
}

fn fig_deciles(runs: &[RunData], pick: fn(&stockmarl_core::AgentSummary) -> f64, lo: f64, hi: f64, bins: usize) -> Result<String> {
    let agents: Vec<_> = runs.iter().filter_map(|r| r.agents.as_ref()).collect();
    if agents.is_empty() {
        bail!("agent tables absent");
    }
    let mut best = vec![0usize; bins];
    let mut worst = vec![0usize; bins];
    for a in agents {
        let values: Vec<f64> = a.iter().map(pick).collect();
        let nav: Vec<f64> = a.iter().map(|x| x.final_nav).collect();
        let d = decile_param_distribution(&values, &nav, lo, hi, bins);
        for k in 0..bins {
            best[k] += d.best[k];
            worst[k] += d.worst[k];
        }
    }
    let width = (hi - lo) / bins as f64;
    let mut csv = String::from("bin_lo,bin_hi,best,worst\n");
    for k in 0..bins {
        let _ = writeln!(csv, "{},{},{},{}", lo + width * k as f64, lo + width * (k + 1) as f64, best[k], worst[k]);
    }
    Ok(csv)
}

fn fig_n1(runs: &[RunData]) -> Result<String> {
    let recs = records(runs)?;
    let (w, m, _) = week_month(runs);
    let mut csv = String::from("lag,mean_volatility\n");
    for lag in volatility_lags(w, m) {
        let v: Vec<f64> = recs
            .iter()
            .flat_map(|r| (0..r.prices.len()).map(move |j| mean_volatility(&full_prices(r, j), lag)))
            .collect();
        let _ = writeln!(csv, "{lag},{}", mean(&v));
    }
    Ok(csv)
}

fn fig_n2(runs: &[RunData]) -> Result<String> {
    let (_, m, thr) = week_month(runs);
    let mut csv = String::from("run,stock,crashes\n");
    for r in runs {
        if let Some(rec) = &r.record {
            for j in 0..rec.prices.len() {
                let _ = writeln!(csv, "{},{j},{}", r.meta.run_index, count_crashes(&full_prices(rec, j), m, thr));
            }
        }
    }
    records(runs)?;
    Ok(csv)
}

fn fig_n3(runs: &[RunData]) -> Result<String> {
    let curve = bankruptcy_curve(&records(runs)?);
    let mut csv = String::from("step,bankrupt_pct\n");
    for (s, v) in curve.iter().enumerate() {
        let _ = writeln!(csv, "{},{v}", s + 1);
    }
    Ok(csv)
}

fn all_paths(recs: &[&MarketRecord]) -> Vec<Vec<f64>> {
    recs.iter()
        .flat_map(|r| (0..r.prices.len()).map(move |j| full_prices(r, j)))
        .collect()
}

fn returns(runs: &[RunData]) -> Result<ReturnStats> {
    let paths = all_paths(&records(runs)?);
    let views: Vec<&[f64]> = paths.iter().map(Vec::as_slice).collect();
    Ok(return_histogram(&views, RETURN_BINS))
}

fn fig_l1(runs: &[RunData]) -> Result<String> {
    let h = returns(runs)?;
    let mut csv = String::from("bin_lo,bin_hi,count\n");
    for (k, c) in h.counts.iter().enumerate() {
        let _ = writeln!(csv, "{},{},{c}", h.edges[k], h.edges[k + 1]);
    }
    Ok(csv)
}

fn fig_l1_moments(runs: &[RunData]) -> Result<String> {
    let h = returns(runs)?;
    Ok(format!(
        "mean,std,skewness,excess_kurtosis\n{},{},{},{}\n",
        h.mean, h.std, h.skewness, h.excess_kurtosis
    ))
}

/// Mean across runs and stocks at each recorded step.
fn per_step_mean(recs: &[&MarketRecord], f: impl Fn(&MarketRecord, usize, usize) -> Option<f64>) -> Vec<f64> {
    let steps = recs.iter().map(|r| r.n_steps()).min().unwrap_or(0);
    (0..steps)
        .map(|s| {
            let xs: Vec<f64> = recs
                .iter()
                .flat_map(|r| (0..r.prices.len()).filter_map(|j| f(r, j, s)).collect::<Vec<_>>())
                .collect();
            mean(&xs)
        })
        .collect()
}

fn fig_l2(runs: &[RunData]) -> Result<String> {
    let v = per_step_mean(&records(runs)?, |r, j, s| Some(r.volumes[j][s] as f64));
    let mut csv = String::from("step,mean_volume\n");
    for (s, x) in v.iter().enumerate() {
        let _ = writeln!(csv, "{},{x}", s + 1);
    }
    Ok(csv)
}

fn fig_l3(runs: &[RunData]) -> Result<String> {
    let recs = records(runs)?;
    let (w, m, _) = week_month(runs);
    let lags = volatility_lags(w, m);
    let paths = all_paths(&recs);
    let steps = paths.iter().map(Vec::len).min().unwrap_or(0);
    let mut cols = Vec::new();
    for lag in lags {
        let series: Vec<Vec<f64>> = paths.iter().map(|p| rolling_volatility(&p[..steps], lag)).collect();
        cols.push((lag, series));
    }
    let mut csv = String::from("step,vol_week,vol_month,vol_6m\n");
    for t in 0..steps {
        let _ = write!(csv, "{t}");
        for (lag, series) in &cols {
            if t + 1 >= *lag {
                let i = t + 1 - lag;
                let _ = write!(csv, ",{}", mean(&series.iter().map(|s| s[i]).collect::<Vec<_>>()));
            } else {
                csv.push(',');
            }
        }
        csv.push('\n');
    }
    Ok(csv)
}

fn fig_l4(runs: &[RunData]) -> Result<String> {
    let v = per_step_mean(&records(runs)?, |r, j, s| {
        r.residual_spreads[j][s].map(|x| 100.0 * x / r.prices[j][s])
    });
    let mut csv = String::from("step,mean_spread_pct\n");
    for (s, x) in v.iter().enumerate() {
        let _ = writeln!(csv, "{},{x}", s + 1);
    }
    Ok(csv)
}

fn fig_k5(runs: &[RunData]) -> Result<String> {
    let recs = records(runs)?;
    let paths: Vec<Vec<f64>> = recs.iter().map(|r| full_prices(r, 0)).collect();
    let steps = paths.iter().map(Vec::len).min().unwrap_or(0);
    let mut csv = String::from("step");
    for r in runs.iter().filter(|r| r.record.is_some()) {
        let _ = write!(csv, ",run_{:03}", r.meta.run_index);
    }
    csv.push('\n');
    for t in 0..steps {
        let _ = write!(csv, "{t}");
        for p in &paths {
            let _ = write!(csv, ",{}", p[t]);
        }
        csv.push('\n');
    }
    Ok(csv)
}

fn fig_k10(runs: &[RunData]) -> Result<String> {
    let paths = all_paths(&records(runs)?);
    let views: Vec<&[f64]> = paths.iter().map(Vec::as_slice).collect();
    let mut csv = String::from("run_length,count\n");
    for (k, c) in run_length_distribution(&views) {
        let _ = writeln!(csv, "{k},{c}");
    }
    Ok(csv)
}

/// Renders one figure to CSV text.
pub fn render(name: &str, runs: &[RunData]) -> Result<String> {
    if runs.is_empty() {
        bail!("no runs");
    }
    match name {
        "fig_K1" => fig_k1(runs),
        "fig_I1" => fig_deciles(runs, |a| a.reflexivity, 0.0, 1.0, RHO_BINS),
        "fig_I2" => fig_deciles(runs, |a| a.gesture, 0.2, 0.8, GESTURE_BINS),
        "fig_N1" => fig_n1(runs),
        "fig_N2" => fig_n2(runs),
        "fig_N3" => fig_n3(runs),
        "fig_L1" => fig_l1(runs),
        "fig_L1_moments" => fig_l1_moments(runs),
        "fig_L2" => fig_l2(runs),
        "fig_L3" => fig_l3(runs),
        "fig_L4" => fig_l4(runs),
        "fig_K5" => fig_k5(runs),
        "fig_K10" => fig_k10(runs),
        _ => bail!("unknown figure {name}"),
    }
}

/// Writes every figure into `dir`; failures are reported per figure.
pub fn write_figures(dir: &Path, runs: &[RunData]) -> Vec<FigureReport> {
    FIGURES
        .iter()
        .map(|&name| FigureReport {
            name,
            result: render(name, runs).and_then(|csv| Ok(fs::write(dir.join(format!("{name}.csv")), csv)?)),
        })
        .collect()
}
