mod oracles;

use autows::eval::{
    classification_error, default_tau_grid, performance_profile, pr_curves, ratio_matrix, score, score_by_id, Metric,
    ObjectiveKind, ObjectiveTable, RATIO_EPS,
};
use autows::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLD: [usize; 12] = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2];
const PRED: [usize; 12] = [0, 0, 1, 2, 1, 1, 1, 0, 2, 2, 0, 1];

#[test]
fn twelve_point_instance_matches_hand_oracle() {
    // confusion (gold rows, predicted columns): [2 1 1; 1 3 0; 1 1 2]
    let expected = [
        (Metric::MicroF1, 7.0 / 12.0),
        (Metric::Accuracy, 7.0 / 12.0),
        (Metric::WeightedF1, 73.0 / 126.0),
        (Metric::BalancedAccuracy, 7.0 / 12.0),
        (Metric::Precision, 53.0 / 90.0),
        (Metric::Recall, 7.0 / 12.0),
        (Metric::CohenKappa, 3.0 / 8.0),
        (Metric::Jaccard, 37.0 / 90.0),
        (Metric::Matthews, 36.0 / 9024f64.sqrt()),
    ];
    let covered = [true; 12];
    for (m, want) in expected {
        let got = score(m, &PRED, &GOLD, &covered);
        assert!((got - want).abs() < 1e-9, "{}: {got} vs {want}", m.id());
    }
}

#[test]
fn uncovered_points_are_ignored() {
    let mut pred = PRED.to_vec();
    let mut gold = GOLD.to_vec();
    let mut covered = vec![true; 12];
    pred.extend([2, 2, 2]);
    gold.extend([0, 1, 0]);
    covered.extend([false; 3]);
    for m in Metric::ALL {
        let full = score(m, &PRED, &GOLD, &[true; 12]);
        assert!((score(m, &pred, &gold, &covered) - full).abs() < 1e-12);
    }
    assert_eq!(score(Metric::Accuracy, &pred, &gold, &[false; 15]), 0.0);
}

#[test]
fn trivial_metric_cases() {
    let gold = [0, 1, 0, 1];
    for m in Metric::ALL {
        assert!((score(m, &gold, &gold, &[true; 4]) - 1.0).abs() < 1e-12, "{}", m.id());
    }
    let constant = [0, 0, 0, 0];
    assert_eq!(score(Metric::Accuracy, &constant, &gold, &[true; 4]), 0.5);
    assert_eq!(score(Metric::CohenKappa, &constant, &gold, &[true; 4]), 0.0);
    assert_eq!(score(Metric::Matthews, &constant, &gold, &[true; 4]), 0.0);
    let single = [1, 1, 1];
    assert_eq!(score(Metric::CohenKappa, &single, &single, &[true; 3]), 0.0);
    assert_eq!(score(Metric::Matthews, &single, &single, &[true; 3]), 0.0);
    assert!(score_by_id("f2", &gold, &gold, &[true; 4]).is_err());
    assert_eq!(score_by_id("cohen_kappa", &gold, &gold, &[true; 4]).unwrap(), 1.0);
}

#[test]
fn accuracy_bridges_classification_error() {
    let acc = score(Metric::Accuracy, &PRED, &GOLD, &[true; 12]);
    assert!((acc - (1.0 - classification_error(&PRED, &GOLD))).abs() < 1e-15);
}

fn table(values: Vec<Vec<Option<f64>>>) -> ObjectiveTable {
    let methods = (0..values.len()).map(|i| format!("m{i}")).collect();
    let problems = (0..values[0].len()).map(|i| format!("p{i}")).collect();
    ObjectiveTable::new(methods, problems, values, ObjectiveKind::ClassificationError).unwrap()
}

#[test]
fn profile_golden_two_by_two() {
    let t = table(vec![vec![Some(0.2), Some(0.4)], vec![Some(0.1), Some(0.3)]]);
    let r = ratio_matrix(&t).unwrap();
    assert!((r[0][0] - 2.0).abs() < 1e-12);
    assert!((r[0][1] - 4.0 / 3.0).abs() < 1e-12);
    assert_eq!(r[1], vec![1.0, 1.0]);
    let curves = performance_profile(&t, &[1.0, 1.5, 2.0]).unwrap();
    assert_eq!(curves[0].rho, vec![0.0, 0.5, 1.0]);
    assert_eq!(curves[1].rho, vec![1.0, 1.0, 1.0]);
}

#[test]
fn zero_best_and_sentinel() {
    let t = table(vec![vec![Some(0.0)], vec![Some(0.5)], vec![None]]);
    let r = ratio_matrix(&t).unwrap();
    assert_eq!(r[0][0], 1.0);
    assert_eq!(r[1][0], 0.5 / RATIO_EPS);
    assert!(r[2][0].is_infinite());
    let curves = performance_profile(&t, &default_tau_grid()).unwrap();
    assert!(curves[1].rho.iter().all(|&x| x == 0.0));
    assert_eq!(curves[1].rho_at_infinity, 1.0);
    assert_eq!(curves[2].rho_at_infinity, 0.0);
    let none = table(vec![vec![None]]);
    assert!(performance_profile(&none, &[1.0]).is_err());
}

#[test]
fn single_method_profile_is_one() {
    let t = table(vec![vec![Some(0.3), Some(0.0), Some(1.0)]]);
    let c = performance_profile(&t, &default_tau_grid()).unwrap();
    assert!(c[0].rho.iter().all(|&x| x == 1.0));
}

#[test]
fn objective_table_csv_round_trip() {
    let t = table(vec![vec![Some(0.25), None], vec![Some(0.1), Some(0.3)]]);
    let csv = t.to_csv();
    assert!(csv.contains("n/a"));
    assert_eq!(ObjectiveTable::from_csv(&csv).unwrap(), t);
}

fn random_table(seed: u64) -> Vec<Vec<Option<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (s, p) = (rng.random_range(1..6), rng.random_range(1..8));
    let mut v: Vec<Vec<Option<f64>>> = (0..s)
        .map(|_| {
            (0..p)
                .map(|_| (rng.random::<f64>() > 0.15).then(|| rng.random_range(0.0..1.0)))
                .collect()
        })
        .collect();
    for j in 0..p {
        if v.iter().all(|r| r[j].is_none()) {
            v[0][j] = Some(0.5);
        }
    }
    v
}

#[test]
fn profiles_match_definition_on_random_tables() {
    let taus = default_tau_grid();
    for seed in 0..100 {
        let values = random_table(seed);
        let curves = performance_profile(&table(values.clone()), &taus).unwrap();
        for (m, c) in curves.iter().enumerate() {
            for (k, &tau) in taus.iter().enumerate() {
                assert_eq!(c.rho[k], oracles::profile_rho(&values, m, tau, RATIO_EPS), "seed {seed}");
            }
        }
    }
}

proptest! {
    #[test]
    fn curves_are_monotone_and_bounded(seed in 0u64..10_000) {
        let t = table(random_table(seed));
        let curves = performance_profile(&t, &default_tau_grid()).unwrap();
        for c in &curves {
            prop_assert!(c.rho.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(c.rho.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!(c.rho.last().copied().unwrap() <= c.rho_at_infinity);
        }
        let best = curves.iter().map(|c| c.rho[0]).fold(0.0, f64::max);
        prop_assert!(best >= 1.0 / t.problems.len() as f64);
    }

    #[test]
    fn curves_are_scale_invariant(seed in 0u64..10_000, scale in 0.01f64..100.0, column in 0usize..8) {
        let values = random_table(seed);
        let p = values[0].len();
        let j = column % p;
        let mut scaled = values.clone();
        for row in scaled.iter_mut() {
            row[j] = row[j].map(|v| v * scale);
        }
        let a = performance_profile(&table(values), &default_tau_grid()).unwrap();
        let b = performance_profile(&table(scaled), &default_tau_grid()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.rho, &y.rho);
        }
    }
}

#[test]
fn pr_curves_cases() {
    let perfect = Matrix::from_rows(&[[0.9, 0.1], [0.8, 0.2], [0.3, 0.7], [0.1, 0.9]]).unwrap();
    let curves = pr_curves(&perfect, &[0, 0, 1, 1]);
    assert_eq!(curves.len(), 2);
    for c in &curves {
        let reaching_full: Vec<_> = c.iter().filter(|p| p.recall <= 1.0 && p.precision == 1.0).collect();
        assert!(reaching_full.iter().any(|p| p.recall == 1.0));
    }
    let single = Matrix::from_rows(&[[0.6, 0.4], [0.2, 0.8]]).unwrap();
    for c in pr_curves(&single, &[0, 1]) {
        assert_eq!(c.len(), 2);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 4000;
    let gold: Vec<usize> = (0..n).map(|_| usize::from(rng.random::<f64>() < 0.3)).collect();
    let rows: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let p: f64 = rng.random();
            [1.0 - p, p]
        })
        .collect();
    let curves = pr_curves(&Matrix::from_rows(&rows).unwrap(), &gold);
    let full = curves[1].iter().find(|p| p.recall == 1.0).unwrap();
    assert!((full.precision - 0.3).abs() < 0.03, "{}", full.precision);
}
