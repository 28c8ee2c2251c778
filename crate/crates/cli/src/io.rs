//! Run artifacts on disk: writers and the readers `analyze` relies on.
//!
//! Floats are written with `Display`, which round-trips `f64` exactly, so
//! statistics recomputed from files equal those computed in memory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stockmarl_core::analytics::TRADE_DISTANCE_SCALE;
use stockmarl_core::{
    AgentRole, AgentSummary, MarketRecord, PolicySnapshot, PolicyTable, RunOutput, SimConfig,
};

pub const PRICES: &str = "prices.csv";
pub const AGENTS: &str = "agents.csv";
pub const META: &str = "run_meta.json";
pub const FUNDAMENTALS: &str = "fundamentals.csv";
pub const ORDERS: &str = "orders.csv";
pub const POLICIES: &str = "policies";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_index: usize,
    pub master_seed: u64,
    pub n_agents: usize,
    pub n_stocks: usize,
    pub n_steps: usize,
    pub start_prices: Vec<f64>,
    pub trade_distance_scale: f64,
    pub wall_time_secs: f64,
    pub config: SimConfig,
}

pub fn run_dir(point_dir: &Path, run_index: usize) -> PathBuf {
    point_dir.join(format!("run_{run_index:03}"))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

pub fn write_prices(path: &Path, r: &MarketRecord) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "step,stock,price,volume,spread,residual_spread,bankrupt_count")?;
    for s in 0..r.n_steps() {
        for j in 0..r.prices.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s + 1,
                j,
                r.prices[j][s],
                r.volumes[j][s],
                opt(r.spreads[j][s]),
                opt(r.residual_spreads[j][s]),
                r.bankrupt_count[s]
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_agents(path: &Path, agents: &[AgentSummary]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(
        w,
        "agent_id,role,drawdown_limit,reflexivity,horizon,window,memory,gesture,learn_rate,final_nav,bankrupt,bankruptcy_step"
    )?;
    for a in agents {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            a.agent_id,
            a.role.as_str(),
            a.drawdown_limit,
            a.reflexivity,
            a.horizon,
            a.window,
            a.memory,
            a.gesture,
            a.learn_rate,
            a.final_nav,
            a.bankrupt,
            a.bankruptcy_step.map(|s| s.to_string()).unwrap_or_default()
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_tables(path: &Path, tables: &[PolicyTable]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "agent_id,s,a,p")?;
    for (i, t) in tables.iter().enumerate() {
        for s in 0..t.n_states() {
            for (a, p) in t.row(s).iter().enumerate() {
                writeln!(w, "{i},{s},{a},{p}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_snapshots(dir: &Path, snapshots: &[PolicySnapshot]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for s in snapshots {
        let stem = format!("step_{:06}", s.step);
        write_tables(&dir.join(format!("{stem}_forecast.csv")), &s.forecast)?;
        write_tables(&dir.join(format!("{stem}_trade.csv")), &s.trade)?;
        let mut w = create(&dir.join(format!("{stem}_nav.csv")))?;
        writeln!(w, "agent_id,nav")?;
        for (i, v) in s.nav.iter().enumerate() {
            writeln!(w, "{i},{v}")?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn write_fundamentals(path: &Path, series: &[Vec<f64>]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "step,stock,value")?;
    let len = series.first().map_or(0, Vec::len);
    for t in 0..len {
        for (j, s) in series.iter().enumerate() {
            writeln!(w, "{t},{j},{}", s[t])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_orders(path: &Path, out: &RunOutput) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "step,agent_id,stock_id,side,price,quantity,filled_quantity")?;
    for row in &out.orders {
        let o = &row.order;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            row.step + 1,
            o.agent_id,
            o.stock_id,
            o.side.as_str(),
            o.price,
            o.quantity,
            row.filled
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn meta_of(out: &RunOutput, run_index: usize) -> RunMeta {
    RunMeta {
        run_index,
        master_seed: out.config.master_seed,
        n_agents: out.config.n_agents,
        n_stocks: out.config.n_stocks,
        n_steps: out.config.n_steps,
        start_prices: out.record.start_prices.clone(),
        trade_distance_scale: TRADE_DISTANCE_SCALE,
        wall_time_secs: out.wall_time_secs,
        config: out.config.clone(),
    }
}

/// Writes every artifact of one run into `dir`.
pub fn write_run(dir: &Path, out: &RunOutput, run_index: usize) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_prices(&dir.join(PRICES), &out.record)?;
    write_agents(&dir.join(AGENTS), &out.agents)?;
    write_snapshots(&dir.join(POLICIES), &out.snapshots)?;
    write_fundamentals(&dir.join(FUNDAMENTALS), &out.fundamentals)?;
    if !out.orders.is_empty() {
        write_orders(&dir.join(ORDERS), out)?;
    }
    let meta = serde_json::to_string_pretty(&meta_of(out, run_index))?;
    fs::write(dir.join(META), meta)?;
    Ok(())
}

/// A run as reconstructed from disk. Missing optional parts are `None`.
#[derive(Debug, Clone)]
pub struct RunData {
    pub meta: RunMeta,
    pub record: Option<MarketRecord>,
    pub agents: Option<Vec<AgentSummary>>,
    pub snapshots: Option<Vec<PolicySnapshot>>,
}

impl RunData {
    pub fn from_output(out: RunOutput, run_index: usize) -> Self {
        let meta = meta_of(&out, run_index);
        RunData {
            meta,
            record: Some(out.record),
            agents: Some(out.agents),
            snapshots: Some(out.snapshots),
        }
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    Ok(if s.is_empty() { None } else { Some(s.parse()?) })
}

pub fn read_prices(path: &Path, meta: &RunMeta) -> Result<MarketRecord> {
    let j = meta.n_stocks;
    let mut r = MarketRecord {
        n_agents: meta.n_agents,
        start_prices: meta.start_prices.clone(),
        prices: vec![Vec::new(); j],
        volumes: vec![Vec::new(); j],
        spreads: vec![Vec::new(); j],
        residual_spreads: vec![Vec::new(); j],
        ..Default::default()
    };
    for row in reader(path)?.records() {
        let row = row?;
        let step: usize = row[0].parse()?;
        let stock: usize = row[1].parse()?;
        if stock >= j {
            bail!("{}: stock {stock} out of range", path.display());
        }
        r.prices[stock].push(row[2].parse()?);
        r.volumes[stock].push(row[3].parse()?);
        r.spreads[stock].push(parse_opt(&row[4])?);
        r.residual_spreads[stock].push(parse_opt(&row[5])?);
        if stock == 0 {
            if step != r.bankrupt_count.len() + 1 {
                bail!("{}: steps out of order at {step}", path.display());
            }
            r.bankrupt_count.push(row[6].parse()?);
        }
    }
    Ok(r)
}

pub fn read_agents(path: &Path) -> Result<Vec<AgentSummary>> {
    let mut out = Vec::new();
    for row in reader(path)?.records() {
        let row = row?;
        out.push(AgentSummary {
            agent_id: row[0].parse()?,
            role: AgentRole::parse(&row[1]).with_context(|| format!("unknown role `{}`", &row[1]))?,
            drawdown_limit: row[2].parse()?,
            reflexivity: row[3].parse()?,
            horizon: row[4].parse()?,
            window: row[5].parse()?,
            memory: row[6].parse()?,
            gesture: row[7].parse()?,
            learn_rate: row[8].parse()?,
            final_nav: row[9].parse()?,
            bankrupt: row[10].parse()?,
            bankruptcy_step: if row[11].is_empty() {
                None
            } else {
                Some(row[11].parse()?)
            },
        });
    }
    Ok(out)
}

fn read_tables(path: &Path, n_agents: usize) -> Result<Vec<PolicyTable>> {
    let mut probs: Vec<Vec<f64>> = vec![Vec::new(); n_agents];
    let mut dims = vec![(0usize, 0usize); n_agents];
    for row in reader(path)?.records() {
        let row = row?;
        let i: usize = row[0].parse()?;
        let s: usize = row[1].parse()?;
        let a: usize = row[2].parse()?;
        if i >= n_agents {
            bail!("{}: agent {i} out of range", path.display());
        }
        probs[i].push(row[3].parse()?);
        dims[i] = (dims[i].0.max(s + 1), dims[i].1.max(a + 1));
    }
    probs
        .into_iter()
        .zip(dims)
        .map(|(p, (ns, na))| {
            if p.len() != ns * na || p.is_empty() {
                bail!("{}: incomplete policy table", path.display());
            }
            Ok(PolicyTable::from_rows(ns, na, p))
        })
        .collect()
}

pub fn read_snapshots(dir: &Path, n_agents: usize) -> Result<Vec<PolicySnapshot>> {
    let mut steps: Vec<usize> = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(rest) = name.strip_prefix("step_").and_then(|r| r.strip_suffix("_nav.csv")) {
            steps.push(rest.parse()?);
        }
    }
    if steps.is_empty() {
        bail!("no policy snapshots in {}", dir.display());
    }
    steps.sort_unstable();
    steps
        .into_iter()
        .map(|step| {
            let stem = dir.join(format!("step_{step:06}"));
            let with = |suffix: &str| PathBuf::from(format!("{}_{suffix}.csv", stem.display()));
            let mut nav = Vec::with_capacity(n_agents);
            for row in reader(&with("nav"))?.records() {
                nav.push(row?[1].parse()?);
            }
            Ok(PolicySnapshot {
                step,
                forecast: read_tables(&with("forecast"), n_agents)?,
                trade: read_tables(&with("trade"), n_agents)?,
                nav,
            })
        })
        .collect()
}

fn keep<T>(notes: &mut Vec<String>, r: Result<T>) -> Option<T> {
    r.map_err(|e| notes.push(format!("{e:#}"))).ok()
}

/// Loads a run directory. Only `run_meta.json` is mandatory; problems with
/// other parts are returned as notes and leave the part empty.
pub fn read_run(dir: &Path) -> Result<(RunData, Vec<String>)> {
    let meta_path = dir.join(META);
    let meta: RunMeta = serde_json::from_str(
        &fs::read_to_string(&meta_path).with_context(|| format!("cannot read {}", meta_path.display()))?,
    )?;
    let mut notes = Vec::new();
    let record = keep(&mut notes, read_prices(&dir.join(PRICES), &meta));
    let agents = keep(&mut notes, read_agents(&dir.join(AGENTS)));
    let snapshots = keep(&mut notes, read_snapshots(&dir.join(POLICIES), meta.n_agents));
    Ok((
        RunData {
            meta,
            record,
            agents,
            snapshots,
        },
        notes,
    ))
}

/// Subdirectories of `dir` whose names start with `prefix`, sorted.
pub fn subdirs(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() && entry.file_name().to_string_lossy().starts_with(prefix) {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}
