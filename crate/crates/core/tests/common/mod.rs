//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use splitleak::attacks::{leak_auc, roc_auc, ScoringFunction};
use splitleak::harness::{DatasetSpec, ExperimentConfig};
use splitleak::model::{
    backward, forward, loss, Activation, LayerSpec, OptimizerSpec, SplitNet,
};
use splitleak::numeric::{finite_difference_gradient, sample_standard_normal, Matrix, RngStream};
use splitleak::solver::{
    build_covariances, objective, power_budget, solve, sum_kl, BatchStats, Lambdas, LambdaSolution,
    SolverSettings,
};

/// O(n^2) Mann-Whitney count: ties between a positive and a negative count 1/2.
pub fn pairwise_auc(scores: &[f64], labels: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1.0 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0.0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Worst `|roc_auc - pairwise|` over `cases` random inputs of size <= 64, with
/// scores drawn from a small grid so ties are common.
pub fn auc_oracle_max_error(cases: usize, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < cases {
        let n = 2 + rng.index(63);
        let labels: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.bernoulli(0.4)))).collect();
        if labels.iter().all(|&y| y == 1.0) || labels.iter().all(|&y| y == 0.0) {
            continue;
        }
        let coarse = rng.bernoulli(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| if coarse { rng.index(5) as f64 } else { rng.normal() })
            .collect();
        let got = roc_auc(&scores, &labels).unwrap();
        worst = worst.max((got - pairwise_auc(&scores, &labels)).abs());
        done += 1;
    }
    worst
}

fn random_activation(rng: &mut RngStream) -> Activation {
    [Activation::Relu, Activation::Sigmoid, Activation::Tanh, Activation::Identity][rng.index(4)]
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| rel_err(x, y)).fold(0.0, f64::max)
}

/// Random split net of 2..=4 layers with a random cut, a random batch, and labels.
pub fn random_net(rng: &mut RngStream) -> (SplitNet, Matrix, Vec<f64>) {
    let n_layers = 2 + rng.index(3);
    let mut dims = vec![1 + rng.index(5)];
    for _ in 0..n_layers - 1 {
        dims.push(1 + rng.index(6));
    }
    dims.push(1);
    let specs: Vec<LayerSpec> = (0..n_layers)
        .map(|k| LayerSpec {
            in_dim: dims[k],
            out_dim: dims[k + 1],
            activation: if k + 1 == n_layers { Activation::Identity } else { random_activation(rng) },
        })
        .collect();
    let cut = 1 + rng.index(n_layers - 1);
    let mut net = SplitNet::from_specs(&specs, cut, rng).unwrap();
    // zero initial biases can put dead-ReLU rows exactly on a kink; jitter every parameter
    for mlp in [&mut net.f, &mut net.h] {
        let p: Vec<f64> = mlp.params_flat().iter().map(|w| w + 0.1 * rng.normal()).collect();
        mlp.set_params_flat(&p).unwrap();
    }
    let b = 1 + rng.index(6);
    let x = Matrix::from_vec(b, dims[0], sample_standard_normal(rng, b * dims[0])).unwrap();
    let y = (0..b).map(|_| f64::from(u8::from(rng.bernoulli(0.5)))).collect();
    (net, x, y)
}

/// Largest relative error of every backprop gradient against central
/// differences with step `h` on one random net.
pub fn gradient_check(seed: u64, h: f64) -> f64 {
    let mut rng = RngStream::new(seed);
    let (net, x, y) = random_net(&mut rng);
    let b = x.rows() as f64;
    let state = forward(&net, &x).unwrap();
    let bundle = backward(&net, &state, &y).unwrap();

    let sum_loss = |n: &SplitNet, cut: &Matrix| -> f64 {
        let out = n.h.forward(cut).unwrap();
        out.output().iter_rows().zip(&y).map(|(r, &t)| loss(r[0], t)).sum()
    };
    let mut worst: f64 = 0.0;

    // parameters: batch-mean loss
    let theta_f = net.f.params_flat();
    let fd_f = finite_difference_gradient(
        |p| {
            let mut n = net.clone();
            n.f.set_params_flat(p).unwrap();
            sum_loss(&n, n.f.forward(&x).unwrap().output()) / b
        },
        &theta_f,
        h,
    );
    worst = worst.max(max_rel_err(&bundle.f_grads.flat(), &fd_f));
    let theta_h = net.h.params_flat();
    let cut = state.cut_features().clone();
    let fd_h = finite_difference_gradient(
        |p| {
            let mut n = net.clone();
            n.h.set_params_flat(p).unwrap();
            sum_loss(&n, &cut) / b
        },
        &theta_h,
        h,
    );
    worst = worst.max(max_rel_err(&bundle.h_grads.flat(), &fd_h));

    // cut features: per-example loss
    let fd_cut = finite_difference_gradient(
        |c| sum_loss(&net, &Matrix::from_vec(cut.rows(), cut.cols(), c.to_vec()).unwrap()),
        cut.as_slice(),
        h,
    );
    worst = worst.max(max_rel_err(bundle.cut_gradients.as_slice(), &fd_cut));

    // first hidden layer activations
    let a1 = state.f_trace.post[0].clone();
    let fd_a1 = finite_difference_gradient(
        |a| {
            let a = Matrix::from_vec(a1.rows(), a1.cols(), a.to_vec()).unwrap();
            let c = if net.f.layers.len() == 1 {
                a
            } else {
                net.f.forward_from(1, &a).unwrap().output().clone()
            };
            sum_loss(&net, &c)
        },
        a1.as_slice(),
        h,
    );
    worst.max(max_rel_err(bundle.first_layer_gradients.as_slice(), &fd_a1))
}

/// Random solver instance: class stats around a random `delta_g` of dimension `d`.
pub fn random_stats(rng: &mut RngStream, d: usize) -> BatchStats {
    let p = 0.05 + 0.9 * rng.uniform();
    let u = 0.01 + 2.0 * rng.uniform();
    let v = 0.01 + 2.0 * rng.uniform();
    let scale = 0.3 + 2.0 * rng.uniform();
    let dg: Vec<f64> = sample_standard_normal(rng, d).into_iter().map(|z| z * scale).collect();
    BatchStats::from_parts(p, u, v, dg, 1024).unwrap()
}

/// Brute-force minimum of the objective over the full four-eigenvalue feasible
/// set (no zero rule assumed): a uniform grid over three eigenvalues with the
/// fourth solved from the power equality.
pub fn grid_oracle(stats: &BatchStats, power: f64, n: usize) -> f64 {
    let p = stats.p;
    let k = (stats.d - 1) as f64;
    let pos_iso_max = if stats.d > 1 { power / (p * stats.d as f64) } else { 0.0 };
    let neg_iso_max = if stats.d > 1 { power / ((1.0 - p) * stats.d as f64) } else { 0.0 };
    let pos_pr_max = power / p;
    let lin = |hi: f64, i: usize, m: usize| if m == 0 { 0.0 } else { hi * i as f64 / m as f64 };
    let iso_n = if stats.d > 1 { n } else { 0 };
    let mut best = f64::INFINITY;
    for a in 0..=iso_n {
        let pos_iso = lin(pos_iso_max, a, iso_n);
        for bb in 0..=iso_n {
            let neg_iso = lin(neg_iso_max, bb, iso_n);
            for c in 0..=n {
                let pos_principal = lin(pos_pr_max, c, n);
                if pos_principal < pos_iso {
                    continue;
                }
                let rest = power - p * (pos_principal + k * pos_iso) - (1.0 - p) * k * neg_iso;
                let neg_principal = rest / (1.0 - p);
                if neg_principal < neg_iso {
                    continue;
                }
                let l = Lambdas {
                    pos_principal,
                    pos_iso,
                    neg_principal,
                    neg_iso,
                };
                best = best.min(objective(&l, stats));
            }
        }
    }
    best
}

/// Symmetrized Gaussian KL between the two perturbed class distributions,
/// from dense covariance matrices.
pub fn dense_sum_kl(sol: &LambdaSolution, stats: &BatchStats) -> f64 {
    let d = stats.d;
    let (pos, neg) = build_covariances(sol, stats).unwrap();
    let to_na = |m: &Matrix| DMatrix::from_row_slice(d, d, m.as_slice());
    let eye = DMatrix::<f64>::identity(d, d);
    let s1 = to_na(&pos.to_dense()) + &eye * stats.v_floored();
    let s0 = to_na(&neg.to_dense()) + &eye * stats.u_floored();
    let mu = DVector::from_iterator(d, stats.pos_mean.iter().zip(&stats.neg_mean).map(|(a, b)| a - b));
    let kl = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        let b_inv = b.clone().try_inverse().unwrap();
        let quad = (mu.transpose() * &b_inv * &mu)[(0, 0)];
        0.5 * ((&b_inv * a).trace() + quad - d as f64 + (b.determinant() / a.determinant()).ln())
    };
    kl(&s1, &s0) + kl(&s0, &s1)
}

pub struct TheoremCheck {
    pub sum_kl: f64,
    pub bound: f64,
    pub norm_auc: f64,
    pub cos_auc: f64,
}

/// Draws `n` clean gradients per class from the spherical class model, adds the
/// solved noise, and measures both attacks on the perturbed samples.
pub fn theorem1_instance(rng: &mut RngStream, d: usize, n: usize) -> TheoremCheck {
    loop {
        let stats = random_stats(rng, d);
        let s = 0.5 + 8.0 * rng.uniform();
        let sol = solve(&stats, power_budget(s, &stats), &SolverSettings::default()).unwrap();
        let eps = sum_kl(&sol.lambdas, &stats);
        if eps >= 4.0 {
            continue;
        }
        let (pos_cov, neg_cov) = build_covariances(&sol, &stats).unwrap();
        let mut rows = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(2 * n);
        let mut clean_pos = Vec::new();
        for (y, mean, var, cov) in [
            (1.0, &stats.pos_mean, stats.v, &pos_cov),
            (0.0, &stats.neg_mean, stats.u, &neg_cov),
        ] {
            for _ in 0..n {
                let mut g: Vec<f64> = mean.iter().map(|m| m + var.sqrt() * rng.normal()).collect();
                if y == 1.0 && clean_pos.is_empty() {
                    clean_pos = g.clone();
                }
                splitleak::numeric::add_structured_gaussian(cov, rng, &mut g);
                rows.push(g);
                labels.push(y);
            }
        }
        let g = Matrix::from_rows(&rows).unwrap();
        let norm_auc = leak_auc(&g, &labels, &ScoringFunction::Norm).unwrap();
        let cos_auc = leak_auc(&g, &labels, &ScoringFunction::cosine(clean_pos).unwrap()).unwrap();
        return TheoremCheck {
            sum_kl: eps,
            bound: splitleak::solver::auc_upper_bound(eps).unwrap(),
            norm_auc,
            cos_auc,
        };
    }
}

/// Worst standardized deviation `|mean - g| / (std / sqrt(n))` over all
/// coordinates when perturbing the fixed batch `g` `n` times.
pub fn unbiasedness_z(
    mech: &splitleak::protection::MechanismConfig,
    g: &Matrix,
    labels: &[f64],
    n: usize,
    seed: u64,
) -> f64 {
    let mut rng = RngStream::new(seed);
    let m = g.as_slice().len();
    let (mut sum, mut sum_sq) = (vec![0.0; m], vec![0.0; m]);
    for _ in 0..n {
        let out = mech.perturb(g, labels, &mut rng).unwrap();
        for ((s, q), &x) in sum.iter_mut().zip(&mut sum_sq).zip(out.perturbed.as_slice()) {
            *s += x;
            *q += x * x;
        }
    }
    let nf = n as f64;
    let mut worst: f64 = 0.0;
    for k in 0..m {
        let mean = sum[k] / nf;
        let var = (sum_sq[k] / nf - mean * mean).max(0.0);
        let se = (var / nf).sqrt();
        let dev = (mean - g.as_slice()[k]).abs();
        let z = if se > 0.0 { dev / se } else if dev < 1e-12 { 0.0 } else { f64::INFINITY };
        worst = worst.max(z);
    }
    worst
}

/// A mixed-class batch of random gradient rows with per-class offsets.
pub fn random_gradient_batch(rng: &mut RngStream, b: usize, d: usize) -> (Matrix, Vec<f64>) {
    let labels: Vec<f64> = (0..b).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect();
    let shift: Vec<f64> = sample_standard_normal(rng, d);
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&y| {
            let mut r = sample_standard_normal(rng, d);
            if y == 1.0 {
                r.iter_mut().zip(&shift).for_each(|(a, s)| *a = 0.3 * *a + 2.0 * s);
            } else {
                r.iter_mut().for_each(|a| *a *= 0.2);
            }
            r
        })
        .collect();
    (Matrix::from_rows(&rows).unwrap(), labels)
}

/// Imbalanced synthetic task used by the end-to-end criteria.
pub fn fixture_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::with_dataset(DatasetSpec::Synthetic {
        n: 40_000,
        d_in: 20,
        pos_frac: 0.1,
        separation: 2.0,
        noise_scale: 1.0,
        seed: 7,
    });
    cfg.batch_size = 1024;
    cfg.iterations = 200;
    cfg.optimizer = OptimizerSpec::adam(1e-3);
    cfg.seed = 11;
    cfg
}
