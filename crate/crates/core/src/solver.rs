//! Optimal Gaussian noise design for the two-class cut-gradient model.
//!
//! Each class's clean gradients are modelled as spherical Gaussians,
//! `N(mean_pos, v I)` and `N(mean_neg, u I)`. The noise covariances that
//! minimize the symmetrized KL between the perturbed class distributions under
//! an average power budget `P` share the eigenbasis `{delta_g, delta_g^perp}`,
//! so the search is over four eigenvalues:
//!
//! * `principal` — the eigenvalue along `delta_g` (one per class),
//! * `iso` — the eigenvalue on the `d - 1` orthogonal directions (one per class).
//!
//! The optimum lies on the power hyperplane and has one of the two `iso`
//! variables at zero (positive side when `u < v`, negative side otherwise),
//! leaving three free variables. We optimize them by sequential pairwise line
//! search: fix one variable, minimize exactly over the segment left for the
//! other two, and rotate.
//!
//! Internally the free variables are `(iso, principal - iso)` of the noisy
//! class and `principal` of the other class. In those coordinates every
//! constraint is plain nonnegativity, so pairwise moves can always follow the
//! `iso <= principal` edge instead of stalling on it, and every pairwise
//! segment is a convex 1-D problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{norm_sq, Matrix, StructuredCovariance};

/// Per-coordinate variances are floored here before entering any ratio.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// MLE statistics of one mixed-class gradient batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    /// Fraction of positive rows.
    pub p: f64,
    pub pos_mean: Vec<f64>,
    pub neg_mean: Vec<f64>,
    /// Per-coordinate variance of the positive rows (unfloored).
    pub v: f64,
    /// Per-coordinate variance of the negative rows (unfloored).
    pub u: f64,
    pub delta_g: Vec<f64>,
    pub delta_norm_sq: f64,
    pub d: usize,
    pub batch_size: usize,
}

impl BatchStats {
    /// Stats with `neg_mean = 0` and `pos_mean = delta_g`; handy for solver studies.
    pub fn from_parts(p: f64, u: f64, v: f64, delta_g: Vec<f64>, batch_size: usize) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!("positive fraction {p} outside (0, 1)")));
        }
        if !(u >= 0.0 && v >= 0.0) {
            return Err(Error::InvalidParameter("class variances must be >= 0".into()));
        }
        if delta_g.is_empty() {
            return Err(Error::Empty("delta_g"));
        }
        let d = delta_g.len();
        Ok(BatchStats {
            p,
            pos_mean: delta_g.clone(),
            neg_mean: vec![0.0; d],
            v,
            u,
            delta_norm_sq: norm_sq(&delta_g),
            delta_g,
            d,
            batch_size,
        })
    }

    pub fn u_floored(&self) -> f64 {
        self.u.max(VARIANCE_FLOOR)
    }

    pub fn v_floored(&self) -> f64 {
        self.v.max(VARIANCE_FLOOR)
    }
}

/// Spherical-Gaussian MLE of the per-class statistics of a gradient batch.
pub fn estimate_stats(g: &Matrix, labels: &[f64]) -> Result<BatchStats> {
    let b = g.rows();
    if b == 0 {
        return Err(Error::Empty("gradient batch"));
    }
    if labels.len() != b {
        return Err(Error::DimensionMismatch {
            expected: b,
            actual: labels.len(),
            context: "gradient rows vs labels",
        });
    }
    let d = g.cols();
    let mut pos_mean = vec![0.0; d];
    let mut neg_mean = vec![0.0; d];
    let (mut n_pos, mut n_neg) = (0usize, 0usize);
    for (row, &y) in g.iter_rows().zip(labels) {
        let target = if y == 1.0 {
            n_pos += 1;
            &mut pos_mean
        } else if y == 0.0 {
            n_neg += 1;
            &mut neg_mean
        } else {
            return Err(Error::InvalidLabel(y));
        };
        for (t, &x) in target.iter_mut().zip(row) {
            *t += x;
        }
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass {
            positives: n_pos,
            negatives: n_neg,
        });
    }
    pos_mean.iter_mut().for_each(|m| *m /= n_pos as f64);
    neg_mean.iter_mut().for_each(|m| *m /= n_neg as f64);

    let (mut ss_pos, mut ss_neg) = (0.0, 0.0);
    for (row, &y) in g.iter_rows().zip(labels) {
        let (mean, acc) = if y == 1.0 {
            (&pos_mean, &mut ss_pos)
        } else {
            (&neg_mean, &mut ss_neg)
        };
        *acc += row.iter().zip(mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>();
    }
    let delta_g: Vec<f64> = pos_mean.iter().zip(&neg_mean).map(|(a, b)| a - b).collect();
    Ok(BatchStats {
        p: n_pos as f64 / b as f64,
        v: ss_pos / (d as f64 * n_pos as f64),
        u: ss_neg / (d as f64 * n_neg as f64),
        delta_norm_sq: norm_sq(&delta_g),
        delta_g,
        pos_mean,
        neg_mean,
        d,
        batch_size: b,
    })
}

/// `P = s * ||delta_g||^2`
pub fn power_budget(s: f64, stats: &BatchStats) -> f64 {
    s * stats.delta_norm_sq
}

/// The four noise eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Lambdas {
    /// Positive-class eigenvalue along `delta_g`.
    pub pos_principal: f64,
    /// Positive-class eigenvalue on the orthogonal complement.
    pub pos_iso: f64,
    pub neg_principal: f64,
    pub neg_iso: f64,
}

impl Lambdas {
    /// `p * tr(Sigma_pos) + (1 - p) * tr(Sigma_neg)`
    pub fn power(&self, p: f64, d: usize) -> f64 {
        let k = (d - 1) as f64;
        p * (self.pos_principal + k * self.pos_iso) + (1.0 - p) * (self.neg_principal + k * self.neg_iso)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSolution {
    pub lambdas: Lambdas,
    pub objective_value: f64,
    pub converged: bool,
    pub sweeps_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    /// Relative objective decrease per sweep below which the solve stops.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Absolute tolerance of each golden-section search.
    #[serde(default = "default_line_tol")]
    pub line_tol: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
}

fn default_tol() -> f64 {
    1e-8
}
fn default_line_tol() -> f64 {
    1e-10
}
fn default_max_sweeps() -> usize {
    200
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: default_tol(),
            line_tol: default_line_tol(),
            max_sweeps: default_max_sweeps(),
        }
    }
}

/// Program objective: trace-ratio terms plus the mean-separation terms.
pub fn objective(l: &Lambdas, stats: &BatchStats) -> f64 {
    objective_raw(l, stats.u_floored(), stats.v_floored(), stats.delta_norm_sq, stats.d)
}

fn objective_raw(l: &Lambdas, u: f64, v: f64, dn: f64, d: usize) -> f64 {
    let k = (d - 1) as f64;
    let (pi, ni) = (l.pos_iso + v, l.neg_iso + u);
    let (pp, np) = (l.pos_principal + v, l.neg_principal + u);
    let iso_terms = if d > 1 { k * (ni / pi + pi / ni) } else { 0.0 };
    iso_terms + (np + dn) / pp + (pp + dn) / np
}

/// Which class carries the isotropic noise at the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IsoSide {
    Pos,
    Neg,
}

/// Free coordinates `[iso, principal - iso, other_principal]`.
struct Reduced {
    side: IsoSide,
    weights: [f64; 3],
    u: f64,
    v: f64,
    dn: f64,
    d: usize,
}

impl Reduced {
    fn new(stats: &BatchStats) -> Self {
        let (u, v) = (stats.u_floored(), stats.v_floored());
        // negative class noisier => add isotropic noise to positives, and vice versa
        let side = if stats.u < stats.v { IsoSide::Neg } else { IsoSide::Pos };
        let (q, r) = match side {
            IsoSide::Pos => (stats.p, 1.0 - stats.p),
            IsoSide::Neg => (1.0 - stats.p, stats.p),
        };
        Reduced {
            side,
            weights: [q * stats.d as f64, q, r],
            u,
            v,
            dn: stats.delta_norm_sq,
            d: stats.d,
        }
    }

    fn lambdas(&self, x: &[f64; 3]) -> Lambdas {
        let (iso, principal, other) = (x[0], x[0] + x[1], x[2]);
        match self.side {
            IsoSide::Pos => Lambdas {
                pos_principal: principal,
                pos_iso: iso,
                neg_principal: other,
                neg_iso: 0.0,
            },
            IsoSide::Neg => Lambdas {
                pos_principal: other,
                pos_iso: 0.0,
                neg_principal: principal,
                neg_iso: iso,
            },
        }
    }

    fn value(&self, x: &[f64; 3]) -> f64 {
        objective_raw(&self.lambdas(x), self.u, self.v, self.dn, self.d)
    }

    /// Minimize over `x[i], x[j]` with `w_i x_i + w_j x_j` held constant.
    fn pair_step(&self, x: &mut [f64; 3], i: usize, j: usize, line_tol: f64) {
        let (wi, wj) = (self.weights[i], self.weights[j]);
        let budget = wi * x[i] + wj * x[j];
        if budget <= 0.0 {
            x[i] = 0.0;
            x[j] = 0.0;
            return;
        }
        let hi = budget / wi;
        let at = |t: f64| {
            let mut y = *x;
            y[i] = t;
            y[j] = ((budget - wi * t) / wj).max(0.0);
            y
        };
        let f = |t: f64| self.value(&at(t));
        let tol = line_tol.max(4.0 * f64::EPSILON * hi);
        let t_star = golden_section(&f, 0.0, hi, tol);
        // keep the current point unless a candidate strictly improves on it
        let mut best_t = x[i].clamp(0.0, hi);
        let mut best_f = f(best_t);
        for t in [t_star, 0.0, hi] {
            let ft = f(t);
            if ft < best_f {
                best_f = ft;
                best_t = t;
            }
        }
        *x = at(best_t);
    }
}

/// Minimizer of a unimodal `f` on `[lo, hi]` to within `tol`.
pub fn golden_section<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Solves the four-eigenvalue program for budget `power`.
pub fn solve(stats: &BatchStats, power: f64, settings: &SolverSettings) -> Result<LambdaSolution> {
    if !(power >= 0.0) || !power.is_finite() {
        return Err(Error::InvalidParameter(format!("power budget {power} must be finite and >= 0")));
    }
    if stats.d == 0 {
        return Err(Error::Empty("gradient dimension"));
    }
    let red = Reduced::new(stats);
    if power == 0.0 {
        let lambdas = Lambdas::default();
        return Ok(LambdaSolution {
            objective_value: objective(&lambdas, stats),
            lambdas,
            converged: true,
            sweeps_used: 0,
        });
    }

    // start from an even split of the budget across the free variables
    let mut x = red.weights.map(|w| power / (3.0 * w));
    if stats.d == 1 {
        // no orthogonal complement: the iso coordinate is meaningless
        x[1] += x[0];
        x[0] = 0.0;
    }
    let mut current = red.value(&x);
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < settings.max_sweeps {
        sweeps += 1;
        if stats.d == 1 {
            red.pair_step(&mut x, 1, 2, settings.line_tol);
        } else {
            // fix x[2], then x[0], then x[1]
            red.pair_step(&mut x, 0, 1, settings.line_tol);
            red.pair_step(&mut x, 1, 2, settings.line_tol);
            red.pair_step(&mut x, 0, 2, settings.line_tol);
        }
        let next = red.value(&x);
        let decrease = (current - next) / current.abs().max(f64::MIN_POSITIVE);
        current = next;
        if decrease < settings.tol {
            converged = true;
            break;
        }
    }

    // re-project exactly onto the power hyperplane
    let used: f64 = x.iter().zip(&red.weights).map(|(a, w)| a * w).sum();
    if used > 0.0 {
        let scale = power / used;
        x.iter_mut().for_each(|a| *a *= scale);
    }
    let lambdas = red.lambdas(&x);
    Ok(LambdaSolution {
        objective_value: objective(&lambdas, stats),
        lambdas,
        converged,
        sweeps_used: sweeps,
    })
}

/// Positive- and negative-class noise covariances, `(along, iso)` around `delta_g`.
pub fn build_covariances(
    sol: &LambdaSolution,
    stats: &BatchStats,
) -> Result<(StructuredCovariance, StructuredCovariance)> {
    if !(stats.delta_norm_sq > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let l = &sol.lambdas;
    let pos = StructuredCovariance::new(&stats.delta_g, (l.pos_principal - l.pos_iso).max(0.0), l.pos_iso)?;
    let neg = StructuredCovariance::new(&stats.delta_g, (l.neg_principal - l.neg_iso).max(0.0), l.neg_iso)?;
    Ok((pos, neg))
}

/// Symmetrized KL between the two perturbed class Gaussians. The log-determinant
/// terms cancel, leaving `objective / 2 - d`.
pub fn sum_kl(lambdas: &Lambdas, stats: &BatchStats) -> f64 {
    (0.5 * objective(lambdas, stats) - stats.d as f64).max(0.0)
}

/// `1/2 + sqrt(eps)/2 - eps/8` for `eps < 4`, else 1.
pub fn auc_upper_bound(eps: f64) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("sumKL {eps} must be >= 0")));
    }
    if eps >= 4.0 {
        return Ok(1.0);
    }
    Ok((0.5 + eps.sqrt() / 2.0 - eps / 8.0).min(1.0))
}

/// `min(sqrt(eps) / 2, 1)`
pub fn tv_upper_bound(eps: f64) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("sumKL {eps} must be >= 0")));
    }
    Ok((0.5 * eps.sqrt()).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyCertificate {
    pub sum_kl: f64,
    pub auc_bound: f64,
    pub tv_bound: f64,
    /// The AUC bound is informative only when `sum_kl < 4`.
    pub bound_valid: bool,
}

impl PrivacyCertificate {
    pub fn from_sum_kl(sum_kl: f64) -> Result<Self> {
        Ok(PrivacyCertificate {
            sum_kl,
            auc_bound: auc_upper_bound(sum_kl)?,
            tv_bound: tv_upper_bound(sum_kl)?,
            bound_valid: sum_kl < 4.0,
        })
    }

    pub fn for_solution(sol: &LambdaSolution, stats: &BatchStats) -> Result<Self> {
        Self::from_sum_kl(sum_kl(&sol.lambdas, stats))
    }
}
