//! Hyperparameter sweeps producing privacy/utility tradeoff points.

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::data::Dataset;
use super::train::{load_split, train_on, LeakSummary, RunRecord};
use crate::error::{Error, Result};
use crate::protection::MechanismConfig;
use crate::solver::SolverSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MechanismKind {
    None,
    Iso,
    MaxNorm,
    Marvell,
}

impl std::str::FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(MechanismKind::None),
            "iso" => Ok(MechanismKind::Iso),
            "max_norm" => Ok(MechanismKind::MaxNorm),
            "marvell" => Ok(MechanismKind::Marvell),
            other => Err(Error::Config(format!("unknown mechanism `{other}`"))),
        }
    }
}

impl MechanismKind {
    /// Mechanism configs for a grid; parameterless mechanisms yield a single point.
    pub fn grid(self, values: &[f64], solver: SolverSettings) -> Vec<MechanismConfig> {
        match self {
            MechanismKind::None => vec![MechanismConfig::None],
            MechanismKind::MaxNorm => vec![MechanismConfig::MaxNorm],
            MechanismKind::Iso => values.iter().map(|&t| MechanismConfig::Iso { t }).collect(),
            MechanismKind::Marvell => values.iter().map(|&s| MechanismConfig::Marvell { s, solver }).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMetrics {
    pub test_loss: f64,
    pub test_auc: Option<f64>,
    pub leak: LeakSummary,
}

/// One completed (or failed) run of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffPoint {
    pub mechanism: &'static str,
    pub hyperparameter: Option<f64>,
    pub outcome: std::result::Result<PointMetrics, String>,
}

impl TradeoffPoint {
    fn from_run(mech: MechanismConfig, run: Result<RunRecord>) -> Self {
        TradeoffPoint {
            mechanism: mech.name(),
            hyperparameter: mech.hyperparameter(),
            outcome: run.map(|r| PointMetrics {
                test_loss: r.test_loss,
                test_auc: r.test_auc,
                leak: r.summary,
            })
            .map_err(|e| e.to_string()),
        }
    }

    pub fn metrics(&self) -> Option<&PointMetrics> {
        self.outcome.as_ref().ok()
    }
}

/// Runs `base` once per mechanism, in parallel, on one shared train/test split.
/// Failed runs are kept as error points; results are sorted by hyperparameter.
pub fn sweep(base: &ExperimentConfig, grid: &[MechanismConfig]) -> Result<Vec<(TradeoffPoint, Option<RunRecord>)>> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    base.validate()?;
    let (train, test) = load_split(base)?;
    Ok(sweep_on(base, grid, &train, &test))
}

pub fn sweep_on(
    base: &ExperimentConfig,
    grid: &[MechanismConfig],
    train: &Dataset,
    test: &Dataset,
) -> Vec<(TradeoffPoint, Option<RunRecord>)> {
    let mut out: Vec<(TradeoffPoint, Option<RunRecord>)> = grid
        .par_iter()
        .map(|&mech| {
            let cfg = ExperimentConfig {
                mechanism: mech,
                ..base.clone()
            };
            let run = train_on(&cfg, train, test);
            let record = run.as_ref().ok().cloned();
            (TradeoffPoint::from_run(mech, run), record)
        })
        .collect();
    out.sort_by(|a, b| {
        let ka = a.0.hyperparameter.unwrap_or(f64::NEG_INFINITY);
        let kb = b.0.hyperparameter.unwrap_or(f64::NEG_INFINITY);
        ka.total_cmp(&kb)
    });
    out
}
