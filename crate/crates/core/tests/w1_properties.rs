//! Cross-oracle and metric-axiom checks for the W1 implementations.

use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

use tether_core::cloud::WeightedPointCloud;
use tether_core::rng::stream;
use tether_core::transport::{
    w1_assignment, w1_dual_lower_bound, w1_sorted_1d, Probe,
};

fn cloud_1d(xs: &[f64]) -> WeightedPointCloud {
    WeightedPointCloud::empirical(xs.iter().map(|&x| DVector::from_vec(vec![x])).collect())
        .unwrap()
}

fn random_cloud(dim: usize, m: usize, seed_label: &str) -> WeightedPointCloud {
    let mut rng = stream(17, seed_label);
    WeightedPointCloud::empirical(
        (0..m)
            .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-3.0..3.0)))
            .collect(),
    )
    .unwrap()
}

#[test]
fn sort_and_assignment_agree_on_200_seeded_1d_instances() {
    let mut rng = stream(42, "w1/cross-oracle");
    for trial in 0..200 {
        let m = rng.random_range(1..=64usize);
        let a: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (ca, cb) = (cloud_1d(&a), cloud_1d(&b));
        let sorted = w1_sorted_1d(&ca, &cb).unwrap().value;
        let assigned = w1_assignment(&ca, &cb).unwrap().value;
        assert!(
            (sorted - assigned).abs() <= 1e-12,
            "trial {trial}: sort {sorted} vs assignment {assigned}"
        );
    }
}

#[test]
fn dual_bound_never_exceeds_exact_value() {
    let mut rng = stream(43, "w1/dual-vs-exact");
    for trial in 0..100 {
        let dim = rng.random_range(1..=2usize);
        let m = rng.random_range(2..=24usize);
        let a = random_cloud(dim, m, &format!("w1/dual/a/{trial}"));
        let b = random_cloud(dim, m, &format!("w1/dual/b/{trial}"));
        let exact = w1_assignment(&a, &b).unwrap().value;
        let probes = Probe::default_family(dim, -4.0, 4.0, 8, trial as u64);
        let bound = w1_dual_lower_bound(&a, &b, &probes).unwrap().value;
        assert!(
            bound <= exact + 1e-12,
            "trial {trial}: dual bound {bound} above exact {exact}"
        );
    }
}

#[test]
fn metric_axioms_on_sampled_triples() {
    let mut rng = stream(44, "w1/triples");
    for trial in 0..50 {
        let dim = rng.random_range(1..=2usize);
        let m = rng.random_range(2..=16usize);
        let a = random_cloud(dim, m, &format!("w1/tri/a/{trial}"));
        let b = random_cloud(dim, m, &format!("w1/tri/b/{trial}"));
        let c = random_cloud(dim, m, &format!("w1/tri/c/{trial}"));
        let dab = w1_assignment(&a, &b).unwrap().value;
        let dba = w1_assignment(&b, &a).unwrap().value;
        let dbc = w1_assignment(&b, &c).unwrap().value;
        let dac = w1_assignment(&a, &c).unwrap().value;
        assert!((dab - dba).abs() <= 1e-12, "symmetry violated at trial {trial}");
        assert!(
            dac <= dab + dbc + 1e-10,
            "triangle inequality violated at trial {trial}: {dac} > {dab} + {dbc}"
        );
        assert!(w1_assignment(&a, &a).unwrap().value == 0.0);
    }
}

#[test]
fn lipschitz_functions_are_dominated_by_w1() {
    // For any probe with empirical Lipschitz constant L on the joint
    // support, |int f da - int f db| <= L * W1(a, b).
    let mut rng = stream(45, "w1/lipschitz-bound");
    for trial in 0..50 {
        let m = rng.random_range(2..=32usize);
        let a = random_cloud(1, m, &format!("w1/lip/a/{trial}"));
        let b = random_cloud(1, m, &format!("w1/lip/b/{trial}"));
        let w1 = w1_sorted_1d(&a, &b).unwrap().value;
        let scale = rng.random_range(0.2..3.0);
        let f = |x: &DVector<f64>| (scale * x[0]).sin();
        // Empirical Lipschitz constant over the joint support.
        let support: Vec<&DVector<f64>> = a.points().iter().chain(b.points().iter()).collect();
        let mut lip: f64 = 0.0;
        for i in 0..support.len() {
            for j in (i + 1)..support.len() {
                let d = (support[i] - support[j]).norm();
                if d > 0.0 {
                    lip = lip.max((f(support[i]) - f(support[j])).abs() / d);
                }
            }
        }
        let gap = (a.pair(f) - b.pair(f)).abs();
        assert!(
            gap <= lip * w1 + 1e-10,
            "trial {trial}: gap {gap} exceeds L*W1 = {}",
            lip * w1
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sort1d_is_symmetric_and_translation_covariant(
        xs in prop::collection::vec(-10.0f64..10.0, 1..24),
        ys in prop::collection::vec(-10.0f64..10.0, 1..24),
        shift in -5.0f64..5.0,
    ) {
        let a = cloud_1d(&xs);
        let b = cloud_1d(&ys);
        let ab = w1_sorted_1d(&a, &b).unwrap().value;
        let ba = w1_sorted_1d(&b, &a).unwrap().value;
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ab >= 0.0);
        // Translating both clouds leaves the distance unchanged up to
        // roundoff in the point coordinates.
        let shift_v = DVector::from_vec(vec![shift]);
        let at = a.translate(&shift_v);
        let bt = b.translate(&shift_v);
        let abt = w1_sorted_1d(&at, &bt).unwrap().value;
        prop_assert!((ab - abt).abs() <= 1e-9 * (1.0 + ab));
    }

    #[test]
    fn identical_multisets_have_zero_distance(
        xs in prop::collection::vec(-10.0f64..10.0, 1..32),
    ) {
        let a = cloud_1d(&xs);
        // Same multiset, different order.
        let mut rev = xs.clone();
        rev.reverse();
        let b = cloud_1d(&rev);
        prop_assert_eq!(w1_sorted_1d(&a, &b).unwrap().value, 0.0);
        prop_assert_eq!(w1_assignment(&a, &b).unwrap().value, 0.0);
    }
}
