//! Ablation sweeps: one run per grid point, assembled into objective tables.

use std::fs;
use std::path::{Path, PathBuf};

use autows::eval::{MetricWeights, ObjectiveKind, ObjectiveTable};
use autows::goggles::ClusterMethod;
use autows::lf::sample_metric_weights;
use autows::Manifest;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Method, RunConfig};
use crate::error::{io, Error, Result};
use crate::run::{self, resolve_provenance, RunOutcome};

/// The varied parameter and its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum SweepAxis {
    Cardinality { values: Vec<usize> },
    LabelBudget { values: Vec<usize> },
    /// `draws` flat-Dirichlet metric weightings, used for both LF selection
    /// and abstain-threshold fitting.
    MetricWeights { draws: usize },
    IwsThreshold { values: Vec<f64> },
    GogglesMethod { values: Vec<ClusterMethod> },
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Cardinality { .. } => "cardinality",
            SweepAxis::LabelBudget { .. } => "label_budget",
            SweepAxis::MetricWeights { .. } => "metric_weights",
            SweepAxis::IwsThreshold { .. } => "iws_threshold",
            SweepAxis::GogglesMethod { .. } => "goggles_method",
        }
    }

    fn accepts(&self, method: Method) -> bool {
        match self {
            SweepAxis::Cardinality { .. } => method.uses_lfs(),
            SweepAxis::LabelBudget { .. } => true,
            SweepAxis::MetricWeights { .. } => matches!(method, Method::SnubaUnipolar | Method::SnubaMultipolar),
            SweepAxis::IwsThreshold { .. } => method == Method::IwsAuto,
            SweepAxis::GogglesMethod { .. } => method == Method::Goggles,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Cardinality { values } | SweepAxis::LabelBudget { values } => values.len(),
            SweepAxis::MetricWeights { draws } => *draws,
            SweepAxis::IwsThreshold { values } => values.len(),
            SweepAxis::GogglesMethod { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub axis: SweepAxis,
    /// Worker threads; `None` uses one per logical core.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl SweepConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
        let mut config: SweepConfig = serde_json::from_str(&text)?;
        config.base.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }
}

/// One grid point, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub label: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis: String,
    pub points: Vec<SweepPoint>,
    pub outcomes: Vec<RunOutcome>,
    /// `1 - accuracy_covered` per point.
    pub accuracy: ObjectiveTable,
    /// `1 - coverage` per point.
    pub coverage: ObjectiveTable,
}

/// SplitMix64 finalizer over (base seed, point index).
pub fn point_seed(base: u64, index: usize) -> u64 {
    let mut z = base.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Labeled examples available to a run of `config`.
fn available_labels(config: &RunConfig) -> Result<usize> {
    let manifest = Manifest::read(&config.manifest)?;
    let Some(provenance) = resolve_provenance(config, &manifest) else {
        return Ok(usize::MAX);
    };
    let unbudgeted = RunConfig {
        label_budget: None,
        ..config.clone()
    };
    Ok(run::load(&unbudgeted, &provenance)?.val_labels.len())
}

/// Expands the axis into per-point configs. Fails on an axis that does not
/// apply to the method or a budget larger than the labeled set.
pub fn expand(config: &SweepConfig) -> Result<Vec<SweepPoint>> {
    let base = &config.base;
    base.validate()?;
    if !config.axis.accepts(base.method) {
        return Err(Error::AxisMismatch(format!(
            "{} sweep does not apply to {}",
            config.axis.name(),
            base.method
        )));
    }
    if config.axis.is_empty() {
        return Err(Error::Config("sweep axis has no points".into()));
    }
    let point = |index: usize, label: String, edit: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        c.seed = point_seed(base.seed, index);
        edit(&mut c);
        SweepPoint { label, config: c }
    };
    let points = match &config.axis {
        SweepAxis::Cardinality { values } => values
            .iter()
            .enumerate()
            .map(|(i, &d)| point(i, format!("D={d}"), &|c| c.synthesis.cardinality = d))
            .collect(),
        SweepAxis::LabelBudget { values } => {
            let available = available_labels(base)?;
            if let Some((i, &b)) = values.iter().enumerate().find(|(_, &b)| b > available) {
                return Err(Error::BudgetExceeded {
                    point: i + 1,
                    budget: b,
                    available,
                });
            }
            values
                .iter()
                .enumerate()
                .map(|(i, &b)| point(i, format!("budget={b}"), &|c| c.label_budget = Some(b)))
                .collect()
        }
        SweepAxis::MetricWeights { draws } => {
            let weights: Vec<MetricWeights> = sample_metric_weights(base.seed, *draws);
            weights
                .into_iter()
                .enumerate()
                .map(|(i, w)| {
                    point(i, format!("weights#{i}"), &|c| {
                        c.synthesis.selection_weights = w.clone();
                        c.synthesis.threshold_weights = w.clone();
                    })
                })
                .collect()
        }
        SweepAxis::IwsThreshold { values } => {
            if let Some(t) = values.iter().find(|t| !t.is_finite()) {
                return Err(Error::Config(format!("threshold {t} is not finite")));
            }
            values
                .iter()
                .enumerate()
                .map(|(i, &t)| point(i, format!("t={t}"), &|c| c.iws_threshold = Some(t)))
                .collect()
        }
        SweepAxis::GogglesMethod { values } => values
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let name = serde_json::to_value(m).ok().and_then(|v| v.as_str().map(String::from));
                point(i, name.unwrap_or_else(|| format!("{m:?}")), &|c| c.goggles_method = m)
            })
            .collect(),
    };
    Ok(points)
}

/// Runs every point on a bounded worker pool and assembles the tables.
pub fn sweep(config: &SweepConfig) -> Result<SweepResult> {
    let points = expand(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<RunOutcome> =
        pool.install(|| points.par_iter().map(|p| run::run(&p.config)).collect::<Result<_>>())?;

    let methods: Vec<String> = points.iter().map(|p| p.label.clone()).collect();
    let dataset = outcomes
        .first()
        .map(|o| o.report.dataset.clone())
        .unwrap_or_default();
    let column = |f: &dyn Fn(&RunOutcome) -> Option<f64>| -> Vec<Vec<Option<f64>>> {
        outcomes.iter().map(|o| vec![f(o).map(|v| (1.0 - v).max(0.0))]).collect()
    };
    let accuracy = ObjectiveTable::new(
        methods.clone(),
        vec![dataset.clone()],
        column(&|o| o.report.accuracy_covered),
        ObjectiveKind::ClassificationError,
    )?;
    let coverage = ObjectiveTable::new(
        methods,
        vec![dataset],
        column(&|o| o.report.coverage),
        ObjectiveKind::OneMinusCoverage,
    )?;
    Ok(SweepResult {
        axis: config.axis.name().to_string(),
        points,
        outcomes,
        accuracy,
        coverage,
    })
}

impl SweepResult {
    /// Writes `<axis>_accuracy.csv`, `<axis>_coverage.csv` and a points
    /// index into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut index = String::from("point,label,status,run_dir\n");
        for (i, (p, o)) in self.points.iter().zip(&self.outcomes).enumerate() {
            index.push_str(&format!("{},{},{},{}\n", i + 1, p.label, o.report.status, o.dir.display()));
        }
        let files = [
            (format!("{}_accuracy.csv", self.axis), self.accuracy.to_csv()),
            (format!("{}_coverage.csv", self.axis), self.coverage.to_csv()),
            (format!("{}_points.csv", self.axis), index),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| io(&p, e))?;
            written.push(p);
        }
        Ok(written)
    }
}
