mod common;

use std::fs;

use autows::eval::ObjectiveTable;
use autows::goggles::ClusterMethod;
use autows::synthetic::BlobSpec;
use autows_bench::sweep::{expand, point_seed, sweep, SweepAxis, SweepConfig};
use autows_bench::{Error, Method};
use common::{blob_manifest, config, small_blobs};

fn sweep_config(base: autows_bench::RunConfig, axis: SweepAxis) -> SweepConfig {
    SweepConfig {
        base,
        axis,
        workers: Some(2),
    }
}

#[test]
fn cardinality_sweep_gives_four_by_one_table() {
    let tmp = tempfile::tempdir().unwrap();
    let m = blob_manifest(tmp.path(), BlobSpec { dim: 8, ..small_blobs(2) });
    let c = sweep_config(
        config(&m, Method::SnubaUnipolar, &tmp.path().join("out")),
        SweepAxis::Cardinality {
            values: vec![1, 2, 4, 8],
        },
    );
    let r = sweep(&c).unwrap();
    assert_eq!(r.outcomes.len(), 4);
    for t in [&r.accuracy, &r.coverage] {
        assert_eq!(t.methods, ["D=1", "D=2", "D=4", "D=8"]);
        assert_eq!(t.problems.len(), 1);
        assert!(t.values.iter().all(|row| row.len() == 1));
    }
    for (i, o) in r.outcomes.iter().enumerate() {
        assert!(o.report.is_ok());
        let acc = o.report.accuracy_covered.unwrap();
        assert!((r.accuracy.values[i][0].unwrap() - (1.0 - acc)).abs() < 1e-12);
    }
    let written = r.write(&tmp.path().join("tables")).unwrap();
    let text = fs::read_to_string(&written[0]).unwrap();
    assert_eq!(ObjectiveTable::from_csv(&text).unwrap(), r.accuracy);
}

#[test]
fn metric_weight_draws_repeat() {
    let tmp = tempfile::tempdir().unwrap();
    let m = blob_manifest(tmp.path(), small_blobs(2));
    let mut base = config(&m, Method::SnubaUnipolar, &tmp.path().join("out"));
    base.seed = 11;
    let c = sweep_config(base, SweepAxis::MetricWeights { draws: 3 });
    let a = expand(&c).unwrap();
    let b = expand(&c).unwrap();
    assert_eq!(a.len(), 3);
    assert_eq!(a, b);
    let weights: Vec<_> = a.iter().map(|p| p.config.synthesis.selection_weights.clone()).collect();
    assert_ne!(weights[0], weights[1]);
    for w in &weights {
        assert!((w.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let ra = sweep(&c).unwrap();
    let rb = sweep(&c).unwrap();
    assert_eq!(ra.accuracy, rb.accuracy);
    assert!(rb.outcomes.iter().all(|o| o.cached));
}

#[test]
fn budget_sweep_stops_at_first_oversized_point() {
    let tmp = tempfile::tempdir().unwrap();
    let m = blob_manifest(tmp.path(), BlobSpec { n_val: 150, ..small_blobs(2) });
    let c = sweep_config(
        config(&m, Method::SnubaUnipolar, &tmp.path().join("out")),
        SweepAxis::LabelBudget {
            values: (1..=10).map(|i| i * 100).collect(),
        },
    );
    let err = sweep(&c).unwrap_err();
    assert!(
        matches!(
            err,
            Error::BudgetExceeded {
                point: 2,
                budget: 200,
                available: 150
            }
        ),
        "{err}"
    );
    assert!(err.to_string().contains("budget exceeds available labels"));
    // nothing ran
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn axis_must_fit_the_method() {
    let tmp = tempfile::tempdir().unwrap();
    let m = blob_manifest(tmp.path(), small_blobs(2));
    let c = sweep_config(
        config(&m, Method::Goggles, &tmp.path().join("out")),
        SweepAxis::IwsThreshold { values: vec![0.6] },
    );
    assert!(matches!(sweep(&c), Err(Error::AxisMismatch(_))));
    let ok = sweep_config(
        config(&m, Method::Goggles, &tmp.path().join("out")),
        SweepAxis::GogglesMethod {
            values: vec![ClusterMethod::Gmm, ClusterMethod::Kmeans, ClusterMethod::Spectral],
        },
    );
    let r = sweep(&ok).unwrap();
    assert_eq!(r.accuracy.methods, ["gmm", "kmeans", "spectral"]);
}

#[test]
fn threshold_sweep_seeds_points_from_base_and_index() {
    let tmp = tempfile::tempdir().unwrap();
    let m = blob_manifest(tmp.path(), small_blobs(2));
    let mut base = config(&m, Method::IwsAuto, &tmp.path().join("out"));
    base.seed = 4;
    let c = sweep_config(
        base,
        SweepAxis::IwsThreshold {
            values: vec![0.5, 0.7, 0.9, 1.01],
        },
    );
    let points = expand(&c).unwrap();
    for (i, p) in points.iter().enumerate() {
        assert_eq!(p.config.seed, point_seed(4, i));
    }
    let r = sweep(&c).unwrap();
    // coverage can only shrink as the bar rises, so 1 - coverage grows
    let cov: Vec<f64> = r.coverage.values.iter().map(|row| row[0].unwrap()).collect();
    assert!(cov.windows(2).all(|w| w[0] <= w[1]), "{cov:?}");
    assert_eq!(cov[3], 1.0);
    // an empty selection has no covered accuracy
    assert_eq!(r.accuracy.values[3][0], None);
}

#[test]
fn sweep_file_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let m = blob_manifest(tmp.path(), small_blobs(2));
    let c = sweep_config(
        config(&m, Method::FewShot, &tmp.path().join("out")),
        SweepAxis::LabelBudget { values: vec![20, 40] },
    );
    let p = tmp.path().join("sweep.json");
    fs::write(&p, serde_json::to_string_pretty(&c).unwrap()).unwrap();
    assert_eq!(SweepConfig::read(&p).unwrap(), c);
    let text = fs::read_to_string(&p).unwrap();
    assert!(text.contains("\"axis\": \"label_budget\""));
}
