use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use switchmorse::benchmarks::Benchmark;
use switchmorse::dynamics::{PolyBasis, Sample, ToggleSwitch, TrajectoryDataset};
use switchmorse::sysid::{alternate, alternate_from_labels, mode_sdp, IdentConfig};
use switchmorse::Error;

fn crossings(f: impl Fn(f64) -> usize, lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut prev = f(lo);
    for i in 1..=steps {
        let t = lo + (hi - lo) * i as f64 / steps as f64;
        let m = f(t);
        if m != prev {
            out.push(t);
            prev = m;
        }
    }
    out
}

#[test]
fn toggle_classifier_switches_near_thresholds() {
    let b = Benchmark::toggle_switch();
    let data = b.simulate(0).unwrap();
    let model = b.identify(&data).unwrap().model;
    let cls = model.classifier.as_ref().unwrap();
    // along x1 = 1 the true mode changes only where x2 crosses 3, and
    // symmetrically along x2 = 1
    let vertical = crossings(|t| cls.predict(&[1.0, t]), 0.0, 6.0, 600);
    let horizontal = crossings(|t| cls.predict(&[t, 1.0]), 0.0, 6.0, 600);
    for c in [&vertical, &horizontal] {
        assert!(!c.is_empty());
        assert!(c.iter().all(|t| (2.5..=3.5).contains(t)), "{c:?}");
    }
}

#[test]
fn vdp_inner_band_classifier_is_concave_in_x1() {
    let b = Benchmark::van_der_pol();
    let data = b.simulate(0).unwrap();
    let model = b.identify(&data).unwrap().model;
    let cls = model.classifier.as_ref().unwrap();
    let inner = cls.predict(&[0.0, 0.0]);
    assert_ne!(inner, cls.predict(&[2.5, 0.0]));
    let basis = PolyBasis::new(2, cls.degree);
    let sq = basis.exponents.iter().position(|e| e == &vec![2, 0]).unwrap();
    // weights skip the constant feature
    assert!(cls.weights[inner][sq - 1] < 0.0, "{:?}", cls.weights[inner]);
}

fn toggle_with_true_labels() -> (TrajectoryDataset, Vec<usize>) {
    let b = Benchmark::toggle_switch();
    let data = b.simulate(1).unwrap();
    let ts = ToggleSwitch::default();
    let labels = data.samples.iter().map(|s| ts.mode(&s.x)).collect();
    (data, labels)
}

#[test]
fn relabeling_permutes_the_fit() {
    let (data, labels) = toggle_with_true_labels();
    let cfg = IdentConfig {
        k: 4,
        ..IdentConfig::default()
    };
    let perm = [2, 0, 3, 1];
    let a = alternate_from_labels(&data, &cfg, labels.clone()).unwrap();
    let b = alternate_from_labels(&data, &cfg, labels.iter().map(|&l| perm[l]).collect()).unwrap();
    for j in 0..4 {
        for (x, y) in a.model.coeffs[j].iter().zip(&b.model.coeffs[perm[j]]) {
            assert!((x - y).abs() < 1e-6);
        }
    }
    let (oa, ob) = (a.objective_history.last().unwrap(), b.objective_history.last().unwrap());
    assert!((oa - ob).abs() <= 1e-9 * data.len() as f64);
}

/// Random states of `x' = A_j x + b_j` with `j = [x1 > 0]`.
fn two_mode_affine(n: usize, seed: u64) -> TrajectoryDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = [[[-1.0, 0.5], [0.0, -2.0]], [[0.3, -1.0], [1.0, -0.5]]];
    let b = [[1.0, -2.0], [-3.0, 0.5]];
    let samples = (0..n)
        .map(|i| {
            let x = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let j = usize::from(x[0] > 0.0);
            let xdot = (0..2).map(|r| a[j][r][0] * x[0] + a[j][r][1] * x[1] + b[j][r]).collect();
            Sample {
                traj_id: i,
                t: 0.0,
                x,
                xdot,
            }
        })
        .collect();
    TrajectoryDataset::new(2, samples).unwrap()
}

#[test]
fn two_mode_affine_system_is_fit_exactly() {
    let data = two_mode_affine(200, 4);
    let res = alternate(&data, &IdentConfig::default()).unwrap();
    let obj = *res.objective_history.last().unwrap();
    assert!(obj <= 1e-4 * data.len() as f64, "{obj}");
    let h = &res.objective_history;
    assert!(h.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{h:?}");
    assert!(res.classifier_accuracy >= 0.95);
}

#[test]
fn more_modes_than_samples_is_a_config_error() {
    let data = two_mode_affine(3, 0);
    let cfg = IdentConfig {
        k: 4,
        ..IdentConfig::default()
    };
    assert!(matches!(alternate(&data, &cfg), Err(Error::Config(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn soft_assignments_lie_on_the_simplex(seed in 0u64..10_000, k in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = two_mode_affine(12, seed);
        let coeffs: Vec<Vec<f64>> = (0..k).map(|_| (0..6).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let asg = mode_sdp(&data, &coeffs, 1, 1e-8, 100).unwrap();
        for row in &asg.soft {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-6, "{row:?}");
            prop_assert!(row.iter().all(|&v| (-1e-6..=1.0 + 1e-6).contains(&v)), "{row:?}");
        }
        prop_assert_eq!(asg.hard.len(), data.len());
    }
}
