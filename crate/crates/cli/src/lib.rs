//! Runner behind the `stockmarl` binary: single runs, scenario sweeps and
//! figure regeneration from stored artifacts.

pub mod figures;
pub mod io;
pub mod presets;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use stockmarl_core::analytics::PointSummary;
use stockmarl_core::{run, RunOptions, RunOutput, SimConfig};

use crate::figures::{point_summary, write_figures, FigureReport};
use crate::io::{read_run, run_dir, subdirs, write_run, RunData};
pub use crate::presets::{build_config, parse_points, preset_points, Scale, SweepPlan};

pub const SUMMARY: &str = "summary.csv";

/// Execution options shared by `run` and `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecOptions {
    /// Upper bound on worker threads; 1 runs everything on the calling thread.
    pub jobs: usize,
    pub dump_orders: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            jobs: 1,
            dump_orders: false,
        }
    }
}

impl ExecOptions {
    fn run_options(&self) -> RunOptions {
        RunOptions {
            parallel: self.jobs > 1,
            record_orders: self.dump_orders,
            sample_every: 0,
        }
    }

    fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        if self.jobs <= 1 {
            return Ok(f());
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(self.jobs).build()?;
        Ok(pool.install(f))
    }
}

/// Simulates every replication of `cfg` and returns the outputs in run order.
pub fn simulate_point(cfg: &SimConfig, exec: ExecOptions) -> Result<Vec<RunOutput>> {
    let opts = exec.run_options();
    let runs = 0..cfg.n_runs;
    exec.install(|| {
        if exec.jobs > 1 {
            runs.into_par_iter().map(|r| run(&cfg.for_run(r), opts)).collect()
        } else {
            runs.map(|r| run(&cfg.for_run(r), opts)).collect()
        }
    })
}

pub const SUMMARY_HEADER: &str = "p,zeta,vol_week,vol_month,vol_6m,crashes,mean_volume,mean_spread_pct,bankruptcy_pct";

pub fn summary_row(p: f64, zeta: f64, s: &PointSummary) -> String {
    format!(
        "{p},{zeta},{},{},{},{},{},{},{}",
        s.vol_week, s.vol_month, s.vol_6m, s.crashes, s.mean_volume, s.mean_spread_pct, s.bankruptcy_pct
    )
}

fn write_summary(path: &Path, rows: &[String]) -> Result<()> {
    let mut csv = String::from(SUMMARY_HEADER);
    csv.push('\n');
    for r in rows {
        let _ = writeln!(csv, "{r}");
    }
    fs::write(path, csv).with_context(|| format!("cannot write {}", path.display()))
}

/// Result of analyzing one point directory.
#[derive(Debug)]
pub struct PointReport {
    pub dir: PathBuf,
    pub figures: Vec<FigureReport>,
    pub notes: Vec<String>,
    pub summary: Option<String>,
}

impl PointReport {
    pub fn produced(&self) -> usize {
        self.figures.iter().filter(|f| f.result.is_ok()).count()
    }
}

/// Loads the runs of a point directory and writes its figures.
pub fn analyze_point(dir: &Path) -> Result<PointReport> {
    let mut notes = Vec::new();
    let mut runs = Vec::new();
    for rd in subdirs(dir, "run_")? {
        match read_run(&rd) {
            Ok((data, n)) => {
                notes.extend(n);
                runs.push(data);
            }
            Err(e) => notes.push(format!("{}: {e:#}", rd.display())),
        }
    }
    Ok(finish_point(dir, &runs, notes))
}

fn finish_point(dir: &Path, runs: &[RunData], notes: Vec<String>) -> PointReport {
    let figures = write_figures(dir, runs);
    let summary = (!runs.is_empty())
        .then(|| point_summary(runs).ok())
        .flatten()
        .map(|s| {
            let sc = runs[0].meta.config.scenario;
            summary_row(sc.p, sc.zeta, &s)
        });
    PointReport {
        dir: dir.to_path_buf(),
        figures,
        notes,
        summary,
    }
}

/// Simulates one configuration into `out`: one `run_XXX` directory per
/// replication, the figures and a one-row summary.
pub fn cmd_run(cfg: &SimConfig, out: &Path, exec: ExecOptions) -> Result<PointReport> {
    let cfg = cfg.clone().validate()?;
    let outputs = simulate_point(&cfg, exec)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut runs = Vec::with_capacity(outputs.len());
    for (r, o) in outputs.into_iter().enumerate() {
        write_run(&run_dir(out, r), &o, r)?;
        runs.push(RunData::from_output(o, r));
    }
    let report = finish_point(out, &runs, Vec::new());
    write_summary(&out.join(SUMMARY), report.summary.as_slice())?;
    Ok(report)
}

pub fn point_dir(out: &Path, k: usize) -> PathBuf {
    out.join(format!("point_{k:02}"))
}

/// Runs every point of a plan. Completed points are kept when another fails;
/// the failures are reported in the returned error.
pub fn cmd_sweep(plan: &SweepPlan, out: &Path, exec: ExecOptions) -> Result<Vec<PointReport>> {
    let configs = plan.configs()?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let tasks: Vec<(usize, usize)> = configs
        .iter()
        .enumerate()
        .flat_map(|(k, c)| (0..c.n_runs).map(move |r| (k, r)))
        .collect();
    let opts = exec.run_options();
    let job = |&(k, r): &(usize, usize)| -> Result<()> {
        let o = run(&configs[k].for_run(r), opts);
        write_run(&run_dir(&point_dir(out, k), r), &o, r)
    };
    let results: Vec<Result<()>> = exec.install(|| {
        if exec.jobs > 1 {
            tasks.par_iter().map(job).collect()
        } else {
            tasks.iter().map(job).collect()
        }
    })?;
    let mut failed = Vec::new();
    for (&(k, r), res) in tasks.iter().zip(&results) {
        if let Err(e) = res {
            failed.push(format!("point {k} run {r}: {e:#}"));
        }
    }
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for k in 0..configs.len() {
        let rep = analyze_point(&point_dir(out, k))?;
        rows.extend(rep.summary.clone());
        reports.push(rep);
    }
    write_summary(&out.join(SUMMARY), &rows)?;
    if !failed.is_empty() {
        bail!("{} run(s) failed:\n{}", failed.len(), failed.join("\n"));
    }
    Ok(reports)
}

/// Regenerates figures (and the sweep summary) from stored artifacts. `dir`
/// is either a point directory holding `run_XXX` or a sweep directory
/// holding `point_XX`.
pub fn cmd_analyze(dir: &Path) -> Result<Vec<PointReport>> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let points = subdirs(dir, "point_")?;
    if points.is_empty() {
        let rep = analyze_point(dir)?;
        if rep.produced() == 0 {
            bail!("no figures could be produced in {}", dir.display());
        }
        write_summary(&dir.join(SUMMARY), rep.summary.as_slice())?;
        return Ok(vec![rep]);
    }
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for p in points {
        let rep = analyze_point(&p)?;
        rows.extend(rep.summary.clone());
        reports.push(rep);
    }
    if reports.iter().all(|r| r.produced() == 0) {
        bail!("no figures could be produced in {}", dir.display());
    }
    write_summary(&dir.join(SUMMARY), &rows)?;
    Ok(reports)
}

/// Human-readable lines for a set of reports.
pub fn describe(reports: &[PointReport]) -> String {
    let mut s = String::new();
    for r in reports {
        let _ = writeln!(s, "{}: {} figure(s) written", r.dir.display(), r.produced());
        for f in &r.figures {
            if let Err(e) = &f.result {
                let _ = writeln!(s, "  {} skipped: {e:#}", f.name);
            }
        }
        for n in &r.notes {
            let _ = writeln!(s, "  note: {n}");
        }
    }
    s
}
