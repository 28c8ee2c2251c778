//! Experiment presets, scales and sweep plans.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use stockmarl_core::{Scenario, ScenarioKind, SimConfig};

/// Population fractions swept by the scenario presets.
pub const P_GRID: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];
/// Learning-rate multipliers swept by the global learning-rate preset.
pub const ZETA_GRID: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 2.5];
/// Multiplier used when only a fraction of the population learns faster.
pub const FRACTION_ZETA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scale {
    Paper,
    #[default]
    Desk,
}

impl Scale {
    pub fn config(self) -> SimConfig {
        match self {
            Scale::Paper => SimConfig::paper(),
            Scale::Desk => SimConfig::desk(),
        }
    }
}

impl FromStr for Scale {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            _ => bail!("unknown scale `{s}` (expected paper or desk)"),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
        })
    }
}

/// Grid points `(p, zeta)` for a preset.
pub fn preset_points(kind: ScenarioKind) -> Vec<(f64, f64)> {
    match kind {
        ScenarioKind::Baseline => vec![(0.0, 1.0)],
        ScenarioKind::LearnRateFraction => P_GRID.iter().map(|&p| (p, FRACTION_ZETA)).collect(),
        ScenarioKind::LearnRateGlobal => ZETA_GRID.iter().map(|&z| (1.0, z)).collect(),
        ScenarioKind::HerdBest | ScenarioKind::HerdWorst | ScenarioKind::NoiseTraders => {
            P_GRID.iter().map(|&p| (p, 1.0)).collect()
        }
    }
}

/// A list of scenario points sharing one base configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub base: SimConfig,
    pub kind: ScenarioKind,
    pub points: Vec<(f64, f64)>,
}

impl SweepPlan {
    pub fn preset(base: SimConfig, kind: ScenarioKind) -> Self {
        SweepPlan {
            base,
            kind,
            points: preset_points(kind),
        }
    }

    /// Validated configuration of every point.
    pub fn configs(&self) -> Result<Vec<SimConfig>> {
        self.points
            .iter()
            .map(|&(p, zeta)| {
                let cfg = SimConfig {
                    scenario: Scenario::new(self.kind, p, zeta),
                    ..self.base.clone()
                };
                cfg.validate()
                    .with_context(|| format!("sweep point p={p} zeta={zeta}"))
            })
            .collect()
    }
}

/// Parses `p:zeta,p:zeta,...`.
pub fn parse_points(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|item| {
            let (p, z) = item
                .split_once(':')
                .with_context(|| format!("point `{item}` is not p:zeta"))?;
            Ok((p.trim().parse()?, z.trim().parse()?))
        })
        .collect()
}

/// Base configuration: scale defaults, then the preset scenario at its first
/// grid point, then `key = value` overrides from a file, then the seed.
pub fn build_config(
    scale: Scale,
    preset: ScenarioKind,
    config_file: Option<&Path>,
    seed: Option<u64>,
) -> Result<SimConfig> {
    let mut cfg = scale.config();
    let (p, zeta) = preset_points(preset)[0];
    cfg.scenario = Scenario::new(preset, p, zeta);
    if let Some(path) = config_file {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        cfg.apply_kv(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
    }
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    Ok(cfg.validate()?)
}
