mod oracles;

use autows::label_model::{dawid_skene_fit, majority_vote, DawidSkeneParams};
use autows::VoteMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn matrix(rows: &[Vec<i32>], classes: usize) -> VoteMatrix {
    VoteMatrix::from_rows(rows, classes, "lf").unwrap()
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Vec<i32>>, usize) {
    let classes = rng.random_range(2..=3);
    let lfs = rng.random_range(1..=5);
    let items = rng.random_range(1..=20);
    let truth: Vec<usize> = (0..items).map(|_| rng.random_range(0..classes)).collect();
    let acc: Vec<f64> = (0..lfs).map(|_| rng.random_range(0.5..0.95)).collect();
    let rows = truth
        .iter()
        .map(|&t| {
            (0..lfs)
                .map(|j| {
                    if rng.random::<f64>() < 0.3 {
                        -1
                    } else if rng.random::<f64>() < acc[j] {
                        t as i32
                    } else {
                        rng.random_range(0..classes) as i32
                    }
                })
                .collect()
        })
        .collect();
    (rows, classes)
}

#[test]
fn dawid_skene_matches_reference_em() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for instance in 0..100 {
        let (rows, classes) = random_instance(&mut rng);
        let model_abstains = instance % 2 == 0;
        let params = DawidSkeneParams {
            max_iter: 25,
            tol: f64::NEG_INFINITY,
            smoothing: 0.01,
            model_abstains,
        };
        let (model, out) = dawid_skene_fit(&matrix(&rows, classes), &params).unwrap();
        assert_eq!(model.iterations_run, 25);
        let want = oracles::reference_em(&rows, classes, 25, 0.01, model_abstains);
        for (i, w) in want.iter().enumerate() {
            for c in 0..classes {
                let got = out.posterior.get(i, c);
                assert!((got - w[c]).abs() < 1e-6, "instance {instance} row {i}: {got} vs {}", w[c]);
            }
        }
    }
}

#[test]
fn majority_vote_exhaustive_three_by_three() {
    let symbols = [-1, 0, 1];
    for code in 0..3usize.pow(9) {
        let mut c = code;
        let rows: Vec<Vec<i32>> = (0..3)
            .map(|_| {
                (0..3)
                    .map(|_| {
                        let s = symbols[c % 3];
                        c /= 3;
                        s
                    })
                    .collect()
            })
            .collect();
        let out = majority_vote(&matrix(&rows, 2)).unwrap();
        for (i, row) in rows.iter().enumerate() {
            match oracles::count_majority(row, 2) {
                Some(cls) => {
                    assert!(out.covered[i]);
                    assert_eq!(out.hard[i], cls as i32, "rows {rows:?}");
                }
                None => {
                    assert!(!out.covered[i]);
                    assert_eq!(out.hard[i], -1);
                    assert!(out.posterior.row(i).iter().all(|&p| p == 0.0));
                }
            }
        }
    }
}

#[test]
fn objective_trace_is_monotone_with_smoothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..30 {
        let (rows, classes) = random_instance(&mut rng);
        let (model, _) = dawid_skene_fit(
            &matrix(&rows, classes),
            &DawidSkeneParams {
                max_iter: 40,
                tol: f64::NEG_INFINITY,
                smoothing: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        for w in model.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{:?}", model.objective_trace);
        }
    }
}

#[test]
fn unsmoothed_log_likelihood_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    for instance in 0..30 {
        let (rows, classes) = random_instance(&mut rng);
        let (model, _) = dawid_skene_fit(
            &matrix(&rows, classes),
            &DawidSkeneParams {
                max_iter: 40,
                tol: f64::NEG_INFINITY,
                smoothing: 0.0,
                model_abstains: instance % 2 == 0,
            },
        )
        .unwrap();
        for w in model.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{:?}", model.log_likelihood_trace);
        }
    }
}

#[test]
fn unipolar_sources_are_informative() {
    // two one-class sources on a balanced binary problem
    let mut rows = Vec::new();
    let mut gold = Vec::new();
    for i in 0..200 {
        let t = i % 2;
        let hit = i % 10 != 0;
        rows.push(if t == 0 { vec![if hit { 0 } else { -1 }, -1] } else { vec![-1, if hit { 1 } else { -1 }] });
        gold.push(t);
    }
    rows.push(vec![0, 1]);
    gold.push(0);
    let (_, out) = dawid_skene_fit(&matrix(&rows, 2), &DawidSkeneParams::default()).unwrap();
    assert!(out.accuracy_covered(&gold).unwrap() > 0.99);
}

#[test]
fn uncovered_rows_have_zero_posterior() {
    let rows = vec![vec![0, 1], vec![-1, -1], vec![1, 1]];
    let (_, out) = dawid_skene_fit(&matrix(&rows, 2), &DawidSkeneParams::default()).unwrap();
    assert_eq!(out.hard[1], -1);
    assert!(!out.covered[1]);
    assert_eq!(out.posterior.row(1), &[0.0, 0.0]);
    assert!((out.coverage - 2.0 / 3.0).abs() < 1e-15);
}

fn votes_strategy() -> impl Strategy<Value = (Vec<Vec<i32>>, usize)> {
    (2usize..4, 1usize..5, 1usize..12).prop_flat_map(|(classes, lfs, items)| {
        (
            prop::collection::vec(prop::collection::vec(-1i32..classes as i32, lfs), items),
            Just(classes),
        )
    })
}

proptest! {
    #[test]
    fn column_permutation_leaves_labels_unchanged((rows, classes) in votes_strategy(), rot in 0usize..5) {
        let k = rows[0].len();
        let perm: Vec<Vec<i32>> = rows.iter().map(|r| (0..k).map(|j| r[(j + rot) % k]).collect()).collect();
        let a = majority_vote(&matrix(&rows, classes)).unwrap();
        let b = majority_vote(&matrix(&perm, classes)).unwrap();
        prop_assert_eq!(&a.hard, &b.hard);
        let p = DawidSkeneParams { max_iter: 20, tol: f64::NEG_INFINITY, smoothing: 0.01, ..Default::default() };
        let (_, da) = dawid_skene_fit(&matrix(&rows, classes), &p).unwrap();
        let (_, db) = dawid_skene_fit(&matrix(&perm, classes), &p).unwrap();
        for i in 0..rows.len() {
            for c in 0..classes {
                prop_assert!((da.posterior.get(i, c) - db.posterior.get(i, c)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn all_abstain_column_is_ignored((rows, classes) in votes_strategy()) {
        let extended: Vec<Vec<i32>> = rows.iter().map(|r| { let mut r = r.clone(); r.push(-1); r }).collect();
        let a = majority_vote(&matrix(&rows, classes)).unwrap();
        let b = majority_vote(&matrix(&extended, classes)).unwrap();
        prop_assert_eq!(a, b);
        let p = DawidSkeneParams { max_iter: 20, tol: f64::NEG_INFINITY, smoothing: 0.01, ..Default::default() };
        let (_, da) = dawid_skene_fit(&matrix(&rows, classes), &p).unwrap();
        let (_, db) = dawid_skene_fit(&matrix(&extended, classes), &p).unwrap();
        for i in 0..rows.len() {
            for c in 0..classes {
                prop_assert!((da.posterior.get(i, c) - db.posterior.get(i, c)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn majority_vote_is_class_equivariant((rows, classes) in votes_strategy(), shift in 1usize..3) {
        let relabel = |v: i32| if v < 0 { v } else { ((v as usize + shift) % classes) as i32 };
        let moved: Vec<Vec<i32>> = rows.iter().map(|r| r.iter().map(|&v| relabel(v)).collect()).collect();
        let a = majority_vote(&matrix(&rows, classes)).unwrap();
        let b = majority_vote(&matrix(&moved, classes)).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let mut counts = vec![0; classes];
            row.iter().filter(|&&v| v >= 0).for_each(|&v| counts[v as usize] += 1);
            let top = *counts.iter().max().unwrap();
            let tied = counts.iter().filter(|&&c| c == top).count() > 1;
            if !tied {
                prop_assert_eq!(b.hard[i], relabel(a.hard[i]));
            }
        }
    }

    #[test]
    fn posteriors_are_distributions((rows, classes) in votes_strategy()) {
        let (_, out) = dawid_skene_fit(&matrix(&rows, classes), &DawidSkeneParams::default()).unwrap();
        for i in 0..rows.len() {
            let s: f64 = out.posterior.row(i).iter().sum();
            if out.covered[i] {
                prop_assert!((s - 1.0).abs() < 1e-9);
                prop_assert_eq!(out.hard[i] as usize, autows::matrix::argmax(out.posterior.row(i)));
            } else {
                prop_assert_eq!(s, 0.0);
            }
        }
    }
}
