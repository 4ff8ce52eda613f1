use autows::baselines::{few_shot_logistic, label_propagation, zero_shot_argmax, PropagationParams};
use autows::goggles::{
    build_affinity, fit_cluster, goggles_predict, map_clusters, stack_affinities, ClusterMethod, GogglesConfig,
};
use autows::learners::LearnerConfig;
use autows::synthetic::{blobs, logits_view, BlobSpec};
use autows::{FeatureMatrix, LabelVector, Matrix};
use proptest::prelude::*;

fn blob_bundle(classes: usize, seed: u64) -> autows::DatasetBundle {
    blobs(&BlobSpec {
        n_train: 300,
        n_val: 60,
        dim: 6,
        classes,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn train_accuracy(b: &autows::DatasetBundle, hard: &[i32]) -> f64 {
    let gold = b.train_labels.as_ref().unwrap().values();
    hard.iter().zip(gold).filter(|(&h, &g)| h == g as i32).count() as f64 / gold.len() as f64
}

#[test]
fn affinity_cases() {
    let f = FeatureMatrix::from_rows(&[[1.0, 0.0], [2.0, 0.0], [0.0, 3.0], [-1.0, 0.0], [0.0, 0.0]], "raw").unwrap();
    let a = build_affinity(&f).values;
    assert!((a.get(0, 1) - 1.0).abs() < 1e-12);
    assert!(a.get(0, 2).abs() < 1e-12);
    assert!((a.get(0, 3) + 1.0).abs() < 1e-12);
    assert_eq!(a.get(4, 4), 1.0);
    assert_eq!(a.get(4, 0), 0.0);
    for i in 0..5 {
        for j in 0..5 {
            assert!((a.get(i, j) - a.get(j, i)).abs() < 1e-9);
            assert!(a.get(i, j).abs() <= 1.0);
        }
    }
}

#[test]
fn stacking_cases() {
    let f = FeatureMatrix::from_rows(&[[1.0, 0.0], [1.0, 1.0]], "raw").unwrap();
    let a = build_affinity(&f);
    assert_eq!(stack_affinities(std::slice::from_ref(&a)).unwrap(), a.values);
    let two = stack_affinities(&[a.clone(), a.clone()]).unwrap();
    assert_eq!((two.rows(), two.cols()), (2, 4));
    assert_eq!(&two.row(1)[..2], a.values.row(1));
    let g = FeatureMatrix::from_rows(&[[1.0], [2.0], [3.0]], "raw").unwrap();
    assert!(stack_affinities(&[a, build_affinity(&g)]).is_err());
}

#[test]
fn every_method_recovers_blobs() {
    let b = blob_bundle(2, 3);
    for method in [ClusterMethod::Gmm, ClusterMethod::Kmeans, ClusterMethod::Spectral] {
        let (model, out) = goggles_predict(&[&b], &GogglesConfig { method, seed: 1 }).unwrap();
        assert_eq!(out.coverage, 1.0);
        assert!(model.assignments.iter().all(|&a| a < 2));
        let acc = train_accuracy(&b, &out.hard);
        assert!(acc >= 0.95, "{method:?}: {acc}");
        if let Some(r) = &model.responsibilities {
            for row in r.iter_rows() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn kmeans_with_k_equal_n_isolates_points() {
    let x = Matrix::from_rows(&[[0.0, 0.0], [5.0, 0.0], [0.0, 5.0], [9.0, 9.0]]).unwrap();
    let m = fit_cluster(&x, 4, ClusterMethod::Kmeans, 0).unwrap();
    let mut a = m.assignments.clone();
    a.sort_unstable();
    assert_eq!(a, vec![0, 1, 2, 3]);
    assert!(fit_cluster(&x, 5, ClusterMethod::Kmeans, 0).is_err());
}

#[test]
fn cluster_mapping_counts() {
    let x = Matrix::from_rows(&[[0.0], [0.1], [10.0], [10.1], [20.0], [20.1]]).unwrap();
    let mut m = fit_cluster(&x, 3, ClusterMethod::Kmeans, 0).unwrap();
    // three clusters; the third has no labeled member
    m.assignments = vec![0, 0, 1, 1, 2, 2];
    let labels = LabelVector::with_classes(vec![2, 2, 1, 2], 3).unwrap();
    let mapped = map_clusters(m, &[0, 1, 2, 3], &labels).unwrap();
    // cluster 0: {2, 2} -> 2; cluster 1: {1, 2} tie -> 1; cluster 2: global majority 2
    assert_eq!(mapped.cluster_to_class, vec![2, 1, 2]);
}

#[test]
fn single_labeled_class_collapses_predictions() {
    let mut b = blob_bundle(2, 4);
    let n = b.val_labels.len();
    b.val_labels = LabelVector::with_classes(vec![1; n], 2).unwrap();
    let (_, out) = goggles_predict(&[&b], &GogglesConfig::default()).unwrap();
    assert!(out.hard.iter().all(|&h| h == 1));
    let fs = few_shot_logistic(&b, &LearnerConfig::default()).unwrap();
    assert!(fs.hard.iter().all(|&h| h == 1));
}

#[test]
fn goggles_accepts_several_views() {
    let b = blob_bundle(3, 6);
    let scaled = b
        .map_features(|f| {
            let v: Vec<f64> = f.values().as_slice().iter().map(|x| x * 3.0).collect();
            FeatureMatrix::new(Matrix::from_vec(f.rows(), f.cols(), v)?, f.provenance())
        })
        .unwrap();
    let (_, out) = goggles_predict(&[&b, &scaled], &GogglesConfig::default()).unwrap();
    assert_eq!(out.coverage, 1.0);
    assert!(train_accuracy(&b, &out.hard) >= 0.9);
}

#[test]
fn baselines_on_blobs() {
    let b = blob_bundle(3, 8);
    let fs = few_shot_logistic(&b, &LearnerConfig::default()).unwrap();
    assert_eq!(fs.coverage, 1.0);
    assert!(train_accuracy(&b, &fs.hard) >= 0.95);
    let lp = label_propagation(&b, &PropagationParams::default()).unwrap();
    assert_eq!(lp.coverage, 1.0);
    assert!(train_accuracy(&b, &lp.hard) >= 0.9);
    let gold = b.train_labels.as_ref().unwrap().values().to_vec();
    let logits = FeatureMatrix::new(logits_view(&gold, 3, 4.0, 1), "external:clip_logits").unwrap();
    let zs = zero_shot_argmax(&logits, 3).unwrap();
    assert_eq!(zs.coverage, 1.0);
    assert!(train_accuracy(&b, &zs.hard) >= 0.9);
}

proptest! {
    #[test]
    fn affinity_ignores_row_scale(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..6), scale in 0.1f64..10.0, which in 0usize..6) {
        let f = FeatureMatrix::from_rows(&rows, "raw").unwrap();
        let mut scaled = rows.clone();
        let i = which % rows.len();
        scaled[i].iter_mut().for_each(|v| *v *= scale);
        let g = FeatureMatrix::from_rows(&scaled, "raw").unwrap();
        let (a, b) = (build_affinity(&f).values, build_affinity(&g).values);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn relabeling_clusters_keeps_predictions(shift in 1usize..3) {
        let x = Matrix::from_rows(&[[0.0], [0.2], [5.0], [5.2], [10.0], [10.3]]).unwrap();
        let m = fit_cluster(&x, 3, ClusterMethod::Kmeans, 0).unwrap();
        let labels = LabelVector::with_classes(vec![0, 1, 2], 3).unwrap();
        let idx = [0, 2, 4];
        let a = map_clusters(m.clone(), &idx, &labels).unwrap();
        let mut permuted = m;
        permuted.assignments.iter_mut().for_each(|c| *c = (*c + shift) % 3);
        let b = map_clusters(permuted, &idx, &labels).unwrap();
        for i in 0..6 {
            prop_assert_eq!(a.cluster_to_class[a.assignments[i]], b.cluster_to_class[b.assignments[i]]);
        }
    }

    #[test]
    fn zero_shot_ignores_row_offsets(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..6), offset in -10.0f64..10.0) {
        let f = FeatureMatrix::from_rows(&rows, "external:x_logits").unwrap();
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + offset).collect()).collect();
        let g = FeatureMatrix::from_rows(&shifted, "external:x_logits").unwrap();
        let (a, b) = (zero_shot_argmax(&f, 3).unwrap(), zero_shot_argmax(&g, 3).unwrap());
        // ties can flip under rounding only when two logits are equal
        for (i, r) in rows.iter().enumerate() {
            let mut s = r.clone();
            s.sort_by(f64::total_cmp);
            if s[2] - s[1] > 1e-9 {
                prop_assert_eq!(a.hard[i], b.hard[i]);
            }
        }
    }
}
