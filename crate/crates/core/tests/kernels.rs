//! Gram properties, expansion norms and the reproducing bound on random
//! situations.

use std::sync::Arc;

use leading_core::kernels::{
    check_psd, embedding_constant_estimate, gram, KernelExpansion, LinearWindowKernel, RbfWindowKernel, RkhsElement,
    SituationKernel, TruncatedUniversalKernel,
};
use leading_core::protocol::{markov_lift, PredictionStrategy, Situation, Window};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_situation(rng: &mut ChaCha8Rng, d: usize) -> Situation {
    let h = rng.random_range(0..5);
    let pairs: Vec<(Vec<f64>, f64)> = (0..h)
        .map(|_| ((0..d).map(|_| rng.random::<f64>()).collect(), rng.random_range(-1.0..=1.0)))
        .collect();
    Situation::from_history(pairs, (0..d).map(|_| rng.random::<f64>()).collect())
}

fn universal() -> Arc<TruncatedUniversalKernel> {
    let members: Vec<Arc<dyn PredictionStrategy>> = vec![
        Arc::new(markov_lift(|w: &Window<'_>| w.outcome_back(1).unwrap_or(0.0), 1, 0.0)),
        Arc::new(|s: &Situation| 2.0 * s.current()[0] - 1.0),
        Arc::new(|_: &Situation| 0.3),
        Arc::new(|s: &Situation| (3.0 * s.current()[0]).sin()),
    ];
    Arc::new(TruncatedUniversalKernel::new(members, vec![1.0, 1.0, 0.3, 1.0]).unwrap())
}

fn kernels() -> Vec<Arc<dyn SituationKernel>> {
    vec![
        Arc::new(RbfWindowKernel::new(2, 0.7, -10.0).unwrap()),
        Arc::new(LinearWindowKernel::new(2, 2, 10.0).unwrap()),
        universal(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gram_is_symmetric_and_psd(seed in any::<u64>(), n in 1usize..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sits: Vec<Situation> = (0..n).map(|_| random_situation(&mut rng, 2)).collect();
        for k in kernels() {
            let g = gram(k.as_ref(), &sits).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((g[(i, j)] - g[(j, i)]).abs() <= 1e-12);
                    prop_assert!((g[(i, j)] - k.eval(&sits[i], &sits[j])).abs() <= 1e-12);
                }
            }
            prop_assert!(check_psd(&g, 1e-8).is_ok());
        }
    }

    #[test]
    fn norm_scales_and_bounds_evaluations(seed in any::<u64>(), alpha in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in kernels() {
            let centers: Vec<Situation> = (0..5).map(|_| random_situation(&mut rng, 2)).collect();
            let coeffs: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let e = KernelExpansion::new(k.clone(), centers, coeffs).unwrap();
            let scaled = e.scaled(alpha);
            prop_assert!((scaled.norm() - alpha.abs() * e.norm()).abs() <= 1e-12 * (1.0 + e.norm()));
            for _ in 0..20 {
                let s = random_situation(&mut rng, 2);
                let bound = e.norm() * k.eval(&s, &s).sqrt();
                prop_assert!(e.eval(&s).abs() <= bound * (1.0 + 1e-9) + 1e-12);
                prop_assert!(e.eval(&s).abs() <= e.norm() * k.embedding_constant_bound() * (1.0 + 1e-9) + 1e-12);
            }
        }
    }
}

#[test]
fn rbf_gram_of_fifty_has_no_negative_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let sits: Vec<Situation> = (0..50).map(|_| random_situation(&mut rng, 1)).collect();
    let k = RbfWindowKernel::new(1, 1.0, -10.0).unwrap();
    let g = gram(&k, &sits).unwrap();
    let eig = g.symmetric_eigenvalues();
    let max = eig.max();
    assert!(eig.iter().all(|&l| l >= -1e-8 * max));
}

#[test]
fn embedding_estimates_stay_below_declared_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in kernels() {
        let est = embedding_constant_estimate(k.as_ref(), || random_situation(&mut rng, 2), 500);
        assert!(est <= k.embedding_constant_bound() + 1e-12);
    }
    // |w| <= sqrt(dim) * max coordinate for the linear window
    let lin = LinearWindowKernel::new(2, 2, 1.0).unwrap();
    let est = embedding_constant_estimate(&lin, || random_situation(&mut rng, 2), 500);
    assert!(est <= (lin.window_dim() as f64).sqrt() + 1e-12);
}

#[test]
fn universal_members_reproduce_their_strategies() {
    let u = universal();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let expected = |n: usize, s: &Situation| match n {
        1 => s.recent().next().map_or(0.0, |(_, y)| y),
        2 => 2.0 * s.current()[0] - 1.0,
        3 => 0.3,
        _ => (3.0 * s.current()[0]).sin(),
    };
    for n in 1..=u.len() {
        let m = u.member(n).unwrap();
        for _ in 0..50 {
            let s = random_situation(&mut rng, 2);
            assert!((m.eval(&s) - expected(n, &s)).abs() <= 1e-12, "member {n}");
            // the unit coefficient on coordinate n gives 2^-n F_n / |F_n|_C
            let sup = [1.0, 1.0, 0.3, 1.0][n - 1];
            assert!((u.coordinate(n, &s) - 2f64.powi(-(n as i32)) * expected(n, &s) / sup).abs() <= 1e-15);
        }
    }
    let s = random_situation(&mut rng, 2);
    assert!((u.member(3).unwrap().eval(&s) - 0.3).abs() <= 1e-15);
}
