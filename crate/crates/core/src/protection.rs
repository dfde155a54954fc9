//! Perturbations the label party applies to the cut-gradient batch before
//! sending it back. Every mechanism adds zero-mean noise, so the perturbed
//! gradients stay unbiased.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{add_structured_gaussian, norm_sq, Matrix, RngStream};
use crate::solver::{
    build_covariances, estimate_stats, power_budget, solve, PrivacyCertificate, SolverSettings,
};

/// Mechanism and its hyperparameter, fixed for a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MechanismConfig {
    None,
    Iso {
        t: f64,
    },
    MaxNorm,
    Marvell {
        s: f64,
        #[serde(default)]
        solver: SolverSettings,
    },
}

impl MechanismConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MechanismConfig::None => "none",
            MechanismConfig::Iso { .. } => "iso",
            MechanismConfig::MaxNorm => "max_norm",
            MechanismConfig::Marvell { .. } => "marvell",
        }
    }

    /// `t` for iso, `s` for marvell.
    pub fn hyperparameter(&self) -> Option<f64> {
        match *self {
            MechanismConfig::Iso { t } => Some(t),
            MechanismConfig::Marvell { s, .. } => Some(s),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MechanismConfig::Iso { t } if !(t >= 0.0 && t.is_finite()) => {
                Err(Error::InvalidParameter(format!("iso t must be finite and >= 0, got {t}")))
            }
            MechanismConfig::Marvell { s, solver } => {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::InvalidParameter(format!("marvell s must be finite and > 0, got {s}")));
                }
                if !(solver.tol > 0.0 && solver.line_tol > 0.0 && solver.max_sweeps > 0) {
                    return Err(Error::InvalidParameter("solver tolerances and max_sweeps must be positive".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Applies the mechanism to one batch.
    pub fn perturb(&self, g: &Matrix, labels: &[f64], rng: &mut RngStream) -> Result<PerturbOutcome> {
        match *self {
            MechanismConfig::None => Ok(perturb_none(g)),
            MechanismConfig::Iso { t } => perturb_iso(g, t, rng),
            MechanismConfig::MaxNorm => Ok(perturb_max_norm(g, rng)),
            MechanismConfig::Marvell { s, solver } => perturb_marvell(g, labels, s, rng, &solver),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerturbOutcome {
    pub perturbed: Matrix,
    /// Present for marvell batches that were actually perturbed.
    pub certificate: Option<PrivacyCertificate>,
    /// Expected noise power, averaged over the batch's class mix.
    pub noise_power: f64,
    /// Set when marvell had to pass the batch through unperturbed.
    pub fallback: bool,
}

pub fn perturb_none(g: &Matrix) -> PerturbOutcome {
    PerturbOutcome {
        perturbed: g.clone(),
        certificate: None,
        noise_power: 0.0,
        fallback: false,
    }
}

fn max_row_norm_sq(g: &Matrix) -> f64 {
    g.iter_rows().map(norm_sq).fold(0.0, f64::max)
}

/// Isotropic noise with per-coordinate variance `(t / d) * max_j ||g_j||^2`.
pub fn perturb_iso(g: &Matrix, t: f64, rng: &mut RngStream) -> Result<PerturbOutcome> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("iso t must be >= 0, got {t}")));
    }
    let d = g.cols();
    let var = if d == 0 { 0.0 } else { t / d as f64 * max_row_norm_sq(g) };
    let std = var.sqrt();
    let mut out = g.clone();
    if std > 0.0 {
        for v in out.as_mut_slice() {
            *v += std * rng.normal();
        }
    }
    Ok(PerturbOutcome {
        perturbed: out,
        certificate: None,
        noise_power: var * d as f64,
        fallback: false,
    })
}

/// Rank-one noise along each row, `g_j (1 + sigma_j z_j)`, with
/// `sigma_j^2 = max ||g||^2 / ||g_j||^2 - 1` so every row's expected squared
/// norm equals the batch maximum.
pub fn perturb_max_norm(g: &Matrix, rng: &mut RngStream) -> PerturbOutcome {
    let max_sq = max_row_norm_sq(g);
    let mut out = g.clone();
    let mut power = 0.0;
    for j in 0..g.rows() {
        let n_sq = norm_sq(g.row(j));
        let z = rng.normal();
        if n_sq == 0.0 {
            // zero rows carry no direction for rank-one noise
            continue;
        }
        let sigma = (max_sq / n_sq - 1.0).max(0.0).sqrt();
        power += sigma * sigma * n_sq;
        let factor = 1.0 + sigma * z;
        out.row_mut(j).iter_mut().for_each(|v| *v *= factor);
    }
    PerturbOutcome {
        perturbed: out,
        certificate: None,
        noise_power: if g.rows() > 0 { power / g.rows() as f64 } else { 0.0 },
        fallback: false,
    }
}

/// Class-dependent Gaussian noise from the optimal-covariance solver, with
/// power budget `s * ||delta_g||^2`. Single-class batches and batches with a
/// zero mean difference pass through unchanged with `fallback` set.
pub fn perturb_marvell(
    g: &Matrix,
    labels: &[f64],
    s: f64,
    rng: &mut RngStream,
    settings: &SolverSettings,
) -> Result<PerturbOutcome> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("marvell s must be > 0, got {s}")));
    }
    let stats = match estimate_stats(g, labels) {
        Ok(st) => st,
        Err(Error::SingleClass { .. }) => {
            return Ok(PerturbOutcome {
                fallback: true,
                ..perturb_none(g)
            })
        }
        Err(e) => return Err(e),
    };
    if !(stats.delta_norm_sq > 0.0) {
        return Ok(PerturbOutcome {
            fallback: true,
            ..perturb_none(g)
        });
    }
    let power = power_budget(s, &stats);
    let sol = solve(&stats, power, settings)?;
    let (pos_cov, neg_cov) = build_covariances(&sol, &stats)?;
    let mut out = g.clone();
    for (j, &y) in labels.iter().enumerate() {
        let cov = if y == 1.0 { &pos_cov } else { &neg_cov };
        add_structured_gaussian(cov, rng, out.row_mut(j));
    }
    let noise_power = stats.p * pos_cov.trace() + (1.0 - stats.p) * neg_cov.trace();
    Ok(PerturbOutcome {
        perturbed: out,
        certificate: Some(PrivacyCertificate::for_solution(&sol, &stats)?),
        noise_power,
        fallback: false,
    })
}
