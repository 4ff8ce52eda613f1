//! One end-to-end run: load, label, evaluate, write artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use autows::baselines::{few_shot_logistic, label_propagation, zero_shot_argmax};
use autows::eval::{pr_curves, PrPoint};
use autows::goggles::{goggles_predict, GogglesConfig};
use autows::iws::{self, SelectionStatus, SessionMode, SessionState};
use autows::label_model::{dawid_skene_fit, majority_vote, merge_votes, LabelModelKind};
use autows::lf::{apply_lfset, snuba_synthesize, SnubaMode};
use autows::{load_bundle_with, DatasetBundle, LFSet, LoadOptions, Manifest, Matrix, VoteMatrix, WeakLabelOutput};
use serde::{Deserialize, Serialize};

use crate::cache;
use crate::config::{Method, RunConfig};
use crate::error::{io, Error, Result};

pub const STATUS_OK: &str = "ok";
pub const STATUS_LOGIT_WIDTH: &str = "n/a:logit_width";
pub const STATUS_POOL_TOO_SMALL: &str = "n/a:pool_too_small";
pub const STATUS_MODALITY: &str = "n/a:modality";

/// Summary of a run. Contains nothing time-dependent, so identical inputs
/// give byte-identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// `ok` or an `n/a:*` incompatibility code.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub method: Method,
    pub dataset: String,
    pub provenance: String,
    pub cache_key: String,
    pub classes: usize,
    pub n_train: usize,
    pub n_labeled: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_lfs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection_status: Option<SelectionStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    /// Accuracy over covered training points; null without gold labels or
    /// coverage.
    pub accuracy_covered: Option<f64>,
    /// Accuracy over all training points after filling uncovered ones.
    pub accuracy_all_with_fill: Option<f64>,
    pub warnings: Vec<String>,
    /// Artifact file names inside the run directory.
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }

    pub fn is_na(&self) -> bool {
        self.status.starts_with("n/a")
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub dir: PathBuf,
    pub cached: bool,
    pub elapsed: Duration,
}

/// Labeling result before evaluation.
struct Labeled {
    output: WeakLabelOutput,
    num_lfs: Option<usize>,
    selection_status: Option<SelectionStatus>,
    warnings: Vec<String>,
    artifacts: Vec<(String, Vec<u8>)>,
}

/// Provenance string a run will load, or `None` when the manifest cannot
/// supply the requested representation.
pub fn resolve_provenance(config: &RunConfig, manifest: &Manifest) -> Option<String> {
    let requested = match &config.provenance {
        Some(p) => p.clone(),
        None if config.method == Method::ZeroShot => manifest
            .train
            .features
            .keys()
            .find(|k| k.ends_with("_logits"))?
            .clone(),
        None => manifest.default_provenance()?.to_string(),
    };
    let base = requested.split('+').next().unwrap_or_default();
    let everywhere = manifest.train.features.contains_key(base) && manifest.val.features.contains_key(base);
    everywhere.then_some(requested)
}

pub fn load(config: &RunConfig, provenance: &str) -> Result<DatasetBundle> {
    let opts = LoadOptions {
        provenance: Some(provenance.to_string()),
        standardize: config.standardize,
    };
    let mut bundle = load_bundle_with(&config.manifest, &opts)?;
    if let Some(b) = config.label_budget {
        bundle = bundle.with_label_budget(b)?;
    }
    Ok(bundle)
}

fn na_report(config: &RunConfig, manifest: &Manifest, provenance: &str, status: &str, message: String) -> RunReport {
    RunReport {
        status: status.to_string(),
        message: Some(message),
        method: config.method,
        dataset: manifest.name.clone(),
        provenance: provenance.to_string(),
        cache_key: String::new(),
        classes: manifest.classes,
        n_train: 0,
        n_labeled: 0,
        num_lfs: None,
        selection_status: None,
        coverage: None,
        accuracy_covered: None,
        accuracy_all_with_fill: None,
        warnings: Vec::new(),
        artifacts: vec!["report.json".into(), "config.json".into()],
    }
}

fn uncovered(n: usize, classes: usize) -> WeakLabelOutput {
    WeakLabelOutput {
        posterior: Matrix::zeros(n, classes),
        hard: vec![-1; n],
        covered: vec![false; n],
        coverage: 0.0,
    }
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Aggregates LF votes (plus external votes when configured).
fn aggregate(
    config: &RunConfig,
    bundle: &DatasetBundle,
    lfset: &LFSet,
    mut warnings: Vec<String>,
    selection_status: Option<SelectionStatus>,
) -> Result<Labeled> {
    let n = bundle.train_features.rows();
    let mut artifacts = vec![("lfset.json".to_string(), lfset.to_json()?.into_bytes())];
    let primary = if lfset.is_empty() {
        None
    } else {
        Some(apply_lfset(lfset, &bundle.train_features)?)
    };
    let external = bundle.external_votes.as_ref().filter(|_| config.use_external_votes);
    let votes: Option<VoteMatrix> = match (primary, external) {
        (Some(p), Some(e)) => Some(merge_votes(&p, e)?),
        (Some(p), None) => Some(p),
        (None, Some(e)) => Some(e.clone()),
        (None, None) => None,
    };
    let Some(votes) = votes else {
        warnings.push("no labeling functions; every training point is uncovered".into());
        return Ok(Labeled {
            output: uncovered(n, bundle.classes()),
            num_lfs: Some(0),
            selection_status,
            warnings,
            artifacts,
        });
    };
    artifacts.push(("votes.csv".into(), votes.to_csv().into_bytes()));
    let output = match config.label_model {
        LabelModelKind::Majority => {
            artifacts.push(("label_model.json".into(), json_bytes(&serde_json::json!({"kind": "majority"}))?));
            majority_vote(&votes)?
        }
        LabelModelKind::DawidSkene => {
            let (model, out) = dawid_skene_fit(&votes, &config.dawid_skene)?;
            artifacts.push(("label_model.json".into(), json_bytes(&model)?));
            out
        }
    };
    Ok(Labeled {
        output,
        num_lfs: Some(lfset.len()),
        selection_status,
        warnings,
        artifacts,
    })
}

fn iws_selection(config: &RunConfig, bundle: &DatasetBundle) -> Result<std::result::Result<Labeled, String>> {
    let synthesis = config.canonical().synthesis;
    let pool = match iws::build_pool(bundle, &synthesis, config.min_pool) {
        Ok(p) => p,
        Err(e @ autows::Error::PoolTooSmall { .. }) => return Ok(Err(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let threshold = config.iws_threshold.unwrap_or_else(|| iws::default_threshold(bundle.classes()));
    let selection = match config.method {
        Method::IwsAuto => {
            let mut session = SessionState::new(pool, bundle, SessionMode::Automated, threshold)?;
            iws::run_automated(&mut session)?
        }
        _ => {
            let path = config.verdict_log.as_deref().expect("validated");
            let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
            let log = iws::parse_verdict_log(&text)?;
            let session = SessionState::new(pool, bundle, SessionMode::Interactive, threshold)?;
            iws::replay(session, &log)?
        }
    };
    let mut warnings = Vec::new();
    if selection.status == SelectionStatus::EmptyWarning {
        warnings.push("selection is empty".into());
    }
    aggregate(config, bundle, &selection.lfset, warnings, Some(selection.status)).map(Ok)
}

/// Runs the configured method. `Ok(Err(status, message))` reports an
/// incompatibility.
fn label(config: &RunConfig, bundle: &DatasetBundle, provenance: &str) -> Result<std::result::Result<Labeled, (&'static str, String)>> {
    let synthesis = config.canonical().synthesis;
    let plain = |output: WeakLabelOutput| Labeled {
        output,
        num_lfs: None,
        selection_status: None,
        warnings: Vec::new(),
        artifacts: Vec::new(),
    };
    Ok(Ok(match config.method {
        Method::SnubaUnipolar | Method::SnubaMultipolar => {
            let mode = if config.method == Method::SnubaUnipolar {
                SnubaMode::Unipolar
            } else {
                SnubaMode::Multipolar
            };
            let lfset = snuba_synthesize(bundle, &synthesis, mode)?;
            aggregate(config, bundle, &lfset, Vec::new(), None)?
        }
        Method::IwsAuto | Method::IwsInteractive => match iws_selection(config, bundle)? {
            Ok(l) => l,
            Err(msg) => return Ok(Err((STATUS_POOL_TOO_SMALL, msg))),
        },
        Method::Goggles => {
            let mut views = vec![bundle.clone()];
            for p in &config.extra_provenances {
                let manifest = Manifest::read(&config.manifest)?;
                let probe = RunConfig {
                    provenance: Some(p.clone()),
                    ..config.clone()
                };
                if resolve_provenance(&probe, &manifest).is_none() {
                    return Ok(Err((STATUS_MODALITY, format!("manifest has no `{p}` features"))));
                }
                views.push(load(config, p)?);
            }
            let refs: Vec<&DatasetBundle> = views.iter().collect();
            let gc = GogglesConfig {
                method: config.goggles_method,
                seed: config.seed,
            };
            let (model, output) = goggles_predict(&refs, &gc)?;
            let mut l = plain(output);
            l.artifacts.push(("cluster_model.json".into(), model.summary_json()?.into_bytes()));
            l.artifacts.push(("assignments.csv".into(), model.to_csv().into_bytes()));
            l
        }
        Method::FewShot => plain(few_shot_logistic(bundle, &synthesis.learner)?),
        Method::LabelProp => plain(label_propagation(bundle, &config.propagation)?),
        Method::ZeroShot => {
            if bundle.dim() != bundle.classes() {
                return Ok(Err((
                    STATUS_LOGIT_WIDTH,
                    format!(
                        "logit width mismatch: provenance `{provenance}` has {} columns for {} classes",
                        bundle.dim(),
                        bundle.classes()
                    ),
                )));
            }
            plain(zero_shot_argmax(&bundle.train_features, bundle.classes())?)
        }
    }))
}

/// Labels and evaluates without touching the cache.
pub fn execute(config: &RunConfig, key: &str) -> Result<(RunReport, Vec<(String, Vec<u8>)>)> {
    config.validate()?;
    let manifest = Manifest::read(&config.manifest)?;
    let config_bytes = json_bytes(&config.canonical())?;
    let Some(provenance) = resolve_provenance(config, &manifest) else {
        let wanted = config.provenance.clone().unwrap_or_else(|| "<default>".into());
        let mut r = na_report(
            config,
            &manifest,
            &wanted,
            STATUS_MODALITY,
            format!("manifest provides no `{wanted}` representation for {}", config.method),
        );
        r.cache_key = key.to_string();
        return Ok((r.clone(), vec![("config.json".into(), config_bytes), ("report.json".into(), json_bytes(&r)?)]));
    };
    let bundle = load(config, &provenance)?;
    let labeled = match label(config, &bundle, &provenance)? {
        Ok(l) => l,
        Err((status, message)) => {
            let mut r = na_report(config, &manifest, &provenance, status, message);
            r.cache_key = key.to_string();
            r.n_train = bundle.train_features.rows();
            r.n_labeled = bundle.val_labels.len();
            return Ok((r.clone(), vec![("config.json".into(), config_bytes), ("report.json".into(), json_bytes(&r)?)]));
        }
    };

    let out = &labeled.output;
    let mut warnings = labeled.warnings.clone();
    let counts = bundle.val_labels.counts();
    let total: usize = counts.iter().sum();
    let prior: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let (accuracy_covered, accuracy_all_with_fill, pr) = match &bundle.train_labels {
        Some(gold) => (
            out.accuracy_covered(gold.values()),
            Some(out.accuracy_all_with_fill(gold.values(), config.fill_policy, &prior, config.seed)),
            Some(pr_curves(&out.posterior, gold.values())),
        ),
        None => {
            warnings.push("manifest has no train labels; accuracy not computed".into());
            (None, None, None)
        }
    };

    let mut files: Vec<(String, Vec<u8>)> = vec![
        ("config.json".into(), config_bytes),
        ("weak_labels.csv".into(), out.to_csv().into_bytes()),
    ];
    if let Some(pr) = &pr {
        let by_class: BTreeMap<String, &Vec<PrPoint>> =
            pr.iter().enumerate().map(|(c, pts)| (format!("class{c}"), pts)).collect();
        files.push(("pr_curves.json".into(), json_bytes(&by_class)?));
    }
    files.extend(labeled.artifacts);
    let mut names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    names.push("report.json".into());
    names.sort();

    let report = RunReport {
        status: STATUS_OK.into(),
        message: None,
        method: config.method,
        dataset: manifest.name.clone(),
        provenance,
        cache_key: key.to_string(),
        classes: bundle.classes(),
        n_train: bundle.train_features.rows(),
        n_labeled: bundle.val_labels.len(),
        num_lfs: labeled.num_lfs,
        selection_status: labeled.selection_status,
        coverage: Some(out.coverage),
        accuracy_covered,
        accuracy_all_with_fill,
        warnings,
        artifacts: names,
    };
    files.push(("report.json".into(), json_bytes(&report)?));
    Ok((report, files))
}

/// Runs with caching: a previous run with the same key is returned as is.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    config.validate()?;
    let key = cache::cache_key(config)?;
    let dir = config.output_dir.join(&key[..16]);
    let report_path = dir.join("report.json");
    if report_path.exists() {
        let text = fs::read_to_string(&report_path).map_err(|e| io(&report_path, e))?;
        let report: RunReport = serde_json::from_str(&text)?;
        if report.cache_key == key {
            log::info!("cache hit {}", dir.display());
            return Ok(RunOutcome {
                report,
                dir,
                cached: true,
                elapsed: start.elapsed(),
            });
        }
        return Err(Error::Config(format!("{} holds a different run", dir.display())));
    }
    let (report, files) = execute(config, &key)?;
    cache::publish(&dir, &files)?;
    Ok(RunOutcome {
        report,
        dir,
        cached: false,
        elapsed: start.elapsed(),
    })
}

/// Reads a run directory's report.
pub fn read_report(dir: &Path) -> Result<RunReport> {
    let p = dir.join("report.json");
    let text = fs::read_to_string(&p).map_err(|e| io(&p, e))?;
    Ok(serde_json::from_str(&text)?)
}
