mod common;

use common::*;
use splitleak::numeric::{norm_sq, RngStream};
use splitleak::protection::MechanismConfig;
use splitleak::solver::SolverSettings;

fn mechanisms() -> [MechanismConfig; 4] {
    [
        MechanismConfig::None,
        MechanismConfig::Iso { t: 4.0 },
        MechanismConfig::MaxNorm,
        MechanismConfig::Marvell {
            s: 4.0,
            solver: SolverSettings::default(),
        },
    ]
}

#[test]
fn every_mechanism_is_unbiased() {
    let mut rng = RngStream::new(20);
    let (g, labels) = random_gradient_batch(&mut rng, 8, 5);
    for (k, m) in mechanisms().iter().enumerate() {
        let z = unbiasedness_z(m, &g, &labels, 40_000, 200 + k as u64);
        assert!(z <= 4.5, "{}: z = {z}", m.name());
    }
}

#[test]
fn max_norm_matches_largest_norm() {
    let mut rng = RngStream::new(21);
    let (g, labels) = random_gradient_batch(&mut rng, 10, 4);
    let target = g.iter_rows().map(norm_sq).fold(0.0, f64::max);
    let n = 40_000;
    let mut acc = vec![0.0; g.rows()];
    for _ in 0..n {
        let out = MechanismConfig::MaxNorm.perturb(&g, &labels, &mut rng).unwrap();
        acc.iter_mut().zip(out.perturbed.iter_rows()).for_each(|(a, r)| *a += norm_sq(r));
    }
    for a in acc {
        assert!((a / n as f64 - target).abs() <= 0.03 * target);
    }
}

#[test]
fn marvell_noise_hides_norm_gap() {
    let mut rng = RngStream::new(22);
    let (g, labels) = random_gradient_batch(&mut rng, 400, 8);
    let clean = splitleak::attacks::leak_auc(&g, &labels, &splitleak::attacks::ScoringFunction::Norm).unwrap();
    let m = MechanismConfig::Marvell {
        s: 4.0,
        solver: SolverSettings::default(),
    };
    let out = m.perturb(&g, &labels, &mut rng).unwrap();
    let noisy = splitleak::attacks::leak_auc(&out.perturbed, &labels, &splitleak::attacks::ScoringFunction::Norm).unwrap();
    let cert = out.certificate.unwrap();
    assert!(clean > 0.99);
    assert!(noisy <= cert.auc_bound + 0.05, "{noisy} vs bound {}", cert.auc_bound);
}
