use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use stockmarl_cli::{build_config, cmd_analyze, cmd_run, cmd_sweep, describe, parse_points, ExecOptions, Scale, SweepPlan};
use stockmarl_core::ScenarioKind;

#[derive(Parser)]
#[command(name = "stockmarl", version, about = "Multi-agent reinforcement-learning stock market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` overrides applied on top of the scale and preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// baseline, lr-frac, lr-global, herd-best, herd-worst or noise.
    #[arg(long, default_value = "baseline")]
    preset: ScenarioKind,
    /// paper or desk.
    #[arg(long, default_value = "desk")]
    scale: Scale,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Also write every submitted order to orders.csv.
    #[arg(long)]
    dump_orders: bool,
}

impl Common {
    fn exec(&self) -> ExecOptions {
        ExecOptions {
            jobs: self.jobs.max(1),
            dump_orders: self.dump_orders,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration (all replications).
    Run(Common),
    /// Simulate every point of a preset grid or of `--points`.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Custom grid as `p:zeta,p:zeta,...`.
        #[arg(long)]
        points: Option<String>,
    },
    /// Rebuild figures and summaries from a run or sweep directory.
    Analyze {
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(c) => {
            let cfg = build_config(c.scale, c.preset, c.config.as_deref(), c.seed)?;
            let report = cmd_run(&cfg, &c.out, c.exec())?;
            print!("{}", describe(std::slice::from_ref(&report)));
        }
        Command::Sweep { common: c, points } => {
            let cfg = build_config(c.scale, c.preset, c.config.as_deref(), c.seed)?;
            let mut plan = SweepPlan::preset(cfg, c.preset);
            if let Some(p) = points {
                plan.points = parse_points(&p)?;
            }
            let reports = cmd_sweep(&plan, &c.out, c.exec())?;
            print!("{}", describe(&reports));
        }
        Command::Analyze { dir } => {
            let reports = cmd_analyze(&dir)?;
            print!("{}", describe(&reports));
        }
    }
    Ok(())
}
