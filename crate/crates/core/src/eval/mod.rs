//! Classification metrics, precision-recall curves and performance profiles.

mod metrics;
mod pr;
mod profiles;

pub use metrics::{classification_error, score, score_by_id, score_confusion, Confusion, Metric, MetricWeights};
pub use pr::{pr_curves, PrPoint};
pub use profiles::{
    curves_to_csv, curves_to_plot_json, default_tau_grid, performance_profile, ratio_matrix, write_curves,
    ObjectiveKind, ObjectiveTable, ProfileCurve, RATIO_EPS,
};
