mod common;

use common::*;
use proptest::prelude::*;
use splitleak::numeric::RngStream;
use splitleak::solver::{
    auc_upper_bound, objective, power_budget, solve, sum_kl, BatchStats, Lambdas, SolverSettings,
};

#[test]
fn solver_beats_grid_oracle() {
    let mut rng = RngStream::new(100);
    for _ in 0..20 {
        let d = 1 + rng.index(6);
        let stats = random_stats(&mut rng, d);
        let power = power_budget(0.1 + 10.0 * rng.uniform(), &stats);
        let sol = solve(&stats, power, &SolverSettings::default()).unwrap();
        let grid = grid_oracle(&stats, power, 80);
        assert!(sol.objective_value <= grid * (1.0 + 1e-3), "{} vs grid {grid}", sol.objective_value);
        assert!(sol.converged);
    }
}

#[test]
fn sum_kl_matches_dense_gaussian_kl() {
    let mut rng = RngStream::new(101);
    for d in 1..=5 {
        for _ in 0..10 {
            let stats = random_stats(&mut rng, d);
            let sol = solve(&stats, power_budget(1.0 + rng.uniform(), &stats), &SolverSettings::default()).unwrap();
            let dense = dense_sum_kl(&sol, &stats);
            assert!((sum_kl(&sol.lambdas, &stats) - dense).abs() < 1e-9 * dense.max(1.0));
        }
    }
}

#[test]
fn attacks_stay_under_theorem_bound() {
    let mut rng = RngStream::new(102);
    for _ in 0..5 {
        let c = theorem1_instance(&mut rng, 4, 5_000);
        assert!(c.sum_kl < 4.0);
        assert!(c.norm_auc <= c.bound + 0.03, "norm {} > bound {}", c.norm_auc, c.bound);
        assert!(c.cos_auc <= c.bound + 0.03, "cos {} > bound {}", c.cos_auc, c.bound);
    }
}

/// The program objective is not jointly convex on the power hyperplane, even
/// with the zero rule applied: moving budget between the negative class's
/// principal and isotropic eigenvalues bends the chord the wrong way.
#[test]
fn objective_is_not_jointly_convex() {
    let (p, d) = (0.92, 3);
    let stats = BatchStats::from_parts(p, 0.32, 0.75, vec![0.1178f64.sqrt(), 0.0, 0.0], 64).unwrap();
    let x = Lambdas {
        pos_principal: 1.1144,
        pos_iso: 0.0,
        neg_principal: 134.897,
        neg_iso: 15.299,
    };
    let mut y = Lambdas {
        pos_principal: 0.7891,
        pos_iso: 0.0,
        neg_principal: 0.0,
        neg_iso: 54.728,
    };
    // place y on the same hyperplane as x
    y.neg_principal = (x.power(p, d) - p * y.pos_principal) / (1.0 - p) - 2.0 * y.neg_iso;
    assert!(y.neg_principal >= y.neg_iso);
    assert!((x.power(p, d) - y.power(p, d)).abs() < 1e-9);
    let mid = Lambdas {
        pos_principal: 0.5 * (x.pos_principal + y.pos_principal),
        pos_iso: 0.0,
        neg_principal: 0.5 * (x.neg_principal + y.neg_principal),
        neg_iso: 0.5 * (x.neg_iso + y.neg_iso),
    };
    let chord = 0.5 * (objective(&x, &stats) + objective(&y, &stats));
    assert!(objective(&mid, &stats) > chord + 0.1, "{} vs {chord}", objective(&mid, &stats));
}

fn stats_strategy() -> impl Strategy<Value = BatchStats> {
    (0.05f64..0.95, 1e-4f64..2.0, 1e-4f64..2.0, 1e-3f64..3.0, 1usize..8).prop_map(|(p, u, v, scale, d)| {
        let mut dg = vec![0.0; d];
        dg[0] = scale;
        BatchStats::from_parts(p, u, v, dg, 256).unwrap()
    })
}

/// Point on the power hyperplane in the solver's free coordinates
/// `[iso, principal - iso, other_principal]`, with the zero rule applied.
fn lambdas_from_free(stats: &BatchStats, x: [f64; 3]) -> Lambdas {
    let (iso, principal, other) = (x[0], x[0] + x[1], x[2]);
    if stats.u < stats.v {
        Lambdas {
            pos_principal: other,
            pos_iso: 0.0,
            neg_principal: principal,
            neg_iso: iso,
        }
    } else {
        Lambdas {
            pos_principal: principal,
            pos_iso: iso,
            neg_principal: other,
            neg_iso: 0.0,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn solution_is_feasible(stats in stats_strategy(), s in 0.01f64..20.0) {
        let power = power_budget(s, &stats);
        let sol = solve(&stats, power, &SolverSettings::default()).unwrap();
        let l = sol.lambdas;
        prop_assert!(l.pos_iso >= 0.0 && l.neg_iso >= 0.0);
        prop_assert!(l.pos_iso <= l.pos_principal + 1e-9 && l.neg_iso <= l.neg_principal + 1e-9);
        prop_assert!((l.power(stats.p, stats.d) - power).abs() <= 1e-6 * power);
        if stats.u < stats.v {
            prop_assert_eq!(l.pos_iso, 0.0);
        } else {
            prop_assert_eq!(l.neg_iso, 0.0);
        }
    }

    #[test]
    fn objective_nonincreasing_in_power(stats in stats_strategy(), s in 0.01f64..10.0, k in 1.01f64..4.0) {
        let settings = SolverSettings::default();
        let lo = solve(&stats, power_budget(s, &stats), &settings).unwrap().objective_value;
        let hi = solve(&stats, power_budget(s * k, &stats), &settings).unwrap().objective_value;
        prop_assert!(hi <= lo * (1.0 + 1e-9));
    }

    /// Along every segment the coordinate search moves on (two free
    /// coordinates traded off at fixed power) the objective is convex.
    #[test]
    fn convex_along_solver_segments(
        stats in stats_strategy(),
        s in 0.01f64..20.0,
        pair in 0usize..3,
        a in prop::array::uniform3(0.0f64..1.0),
        t in (0.0f64..1.0, 0.0f64..1.0),
    ) {
        let (i, j) = [(0, 1), (1, 2), (0, 2)][pair];
        let d = stats.d as f64;
        let q = if stats.u < stats.v { 1.0 - stats.p } else { stats.p };
        let w = [q * d, q, 1.0 - q];
        let power = power_budget(s, &stats);
        let total: f64 = a.iter().sum::<f64>().max(1e-9);
        let base: [f64; 3] = std::array::from_fn(|k| a[k] / total * power / w[k]);
        let budget = w[i] * base[i] + w[j] * base[j];
        let at = |frac: f64| {
            let mut x = base;
            x[i] = frac * budget / w[i];
            x[j] = (1.0 - frac) * budget / w[j];
            objective(&lambdas_from_free(&stats, x), &stats)
        };
        let (f0, f1) = (at(t.0), at(t.1));
        let fm = at(0.5 * (t.0 + t.1));
        prop_assert!(fm <= 0.5 * (f0 + f1) + 1e-12 * (f0 + f1).abs().max(1.0));
    }

    #[test]
    fn auc_bound_monotone_in_range(a in 0.0f64..4.0, b in 0.0f64..4.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (fl, fh) = (auc_upper_bound(lo).unwrap(), auc_upper_bound(hi).unwrap());
        prop_assert!(fl <= fh + 1e-15);
        prop_assert!((0.5..=1.0).contains(&fl) && (0.5..=1.0).contains(&fh));
    }
}
