//! Dataset containers, manifest loading and deterministic feature transforms.

mod pca;
mod transform;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::label_model::VoteMatrix;
use crate::matrix::Matrix;

pub use pca::{fit_pca, fit_pca_with_cap, PcaModel, DEFAULT_PCA_DIM_CAP};
pub use transform::{bit_reversal_permute, Standardizer};

/// An `n x d` embedding matrix together with the name of the representation
/// that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    values: Matrix,
    provenance: String,
}

impl FeatureMatrix {
    pub fn new(values: Matrix, provenance: impl Into<String>) -> Result<Self> {
        let provenance = provenance.into();
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::EmptyInput);
        }
        if provenance.is_empty() {
            return Err(Error::InvalidArgument("empty provenance".into()));
        }
        if let Some(r) = (0..values.rows()).find(|&r| values.row(r).iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument(format!("non-finite value in row {r}")));
        }
        Ok(Self { values, provenance })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], provenance: &str) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, provenance)
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }
}

/// Class indices in `0..classes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    values: Vec<usize>,
    classes: usize,
    class_names: Vec<String>,
}

impl LabelVector {
    pub fn new(values: Vec<usize>, classes: usize, class_names: Vec<String>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 classes, got {classes}")));
        }
        if class_names.len() != classes {
            return Err(Error::ShapeMismatch(format!(
                "{} class names for {classes} classes",
                class_names.len()
            )));
        }
        if let Some((row, &v)) = values.iter().enumerate().find(|(_, &v)| v >= classes) {
            return Err(Error::LabelOutOfRange {
                path: PathBuf::new(),
                row,
                label: v as i64,
                classes,
            });
        }
        Ok(Self {
            values,
            classes,
            class_names,
        })
    }

    /// Labels with generated class names `"0"`, `"1"`, ...
    pub fn with_classes(values: Vec<usize>, classes: usize) -> Result<Self> {
        Self::new(values, classes, (0..classes).map(|c| c.to_string()).collect())
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> LabelVector {
        LabelVector {
            values: idx.iter().map(|&i| self.values[i]).collect(),
            classes: self.classes,
            class_names: self.class_names.clone(),
        }
    }

    /// Per-class counts.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &v in &self.values {
            c[v] += 1;
        }
        c
    }
}

/// Everything one run needs: the unlabeled pool, the small labeled set and
/// optional evaluation-only data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub name: String,
    pub train_features: FeatureMatrix,
    pub val_features: FeatureMatrix,
    pub val_labels: LabelVector,
    /// Gold labels for the training pool, evaluation only.
    pub train_labels: Option<LabelVector>,
    pub test_features: Option<FeatureMatrix>,
    pub test_labels: Option<LabelVector>,
    pub external_votes: Option<VoteMatrix>,
}

impl DatasetBundle {
    /// Bundle with only the required parts; checks shapes.
    pub fn new(
        name: impl Into<String>,
        train_features: FeatureMatrix,
        val_features: FeatureMatrix,
        val_labels: LabelVector,
    ) -> Result<Self> {
        let b = DatasetBundle {
            name: name.into(),
            train_features,
            val_features,
            val_labels,
            train_labels: None,
            test_features: None,
            test_labels: None,
            external_votes: None,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn classes(&self) -> usize {
        self.val_labels.classes()
    }

    pub fn dim(&self) -> usize {
        self.train_features.cols()
    }

    pub fn provenance(&self) -> &str {
        self.train_features.provenance()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.train_features.cols();
        let prov = self.train_features.provenance();
        let check = |what: &str, f: &FeatureMatrix| -> Result<()> {
            if f.cols() != d {
                return Err(Error::ShapeMismatch(format!(
                    "{what} has {} columns, train has {d}",
                    f.cols()
                )));
            }
            if f.provenance() != prov {
                return Err(Error::ShapeMismatch(format!(
                    "{what} provenance `{}` differs from train `{prov}`",
                    f.provenance()
                )));
            }
            Ok(())
        };
        check("val", &self.val_features)?;
        if let Some(t) = &self.test_features {
            check("test", t)?;
        }
        if self.val_labels.len() != self.val_features.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} val labels for {} val rows",
                self.val_labels.len(),
                self.val_features.rows()
            )));
        }
        let c = self.classes();
        if let Some(l) = &self.train_labels {
            if l.len() != self.train_features.rows() || l.classes() != c {
                return Err(Error::ShapeMismatch("train labels do not match train split".into()));
            }
        }
        match (&self.test_features, &self.test_labels) {
            (Some(f), Some(l)) if f.rows() != l.len() || l.classes() != c => {
                return Err(Error::ShapeMismatch("test labels do not match test split".into()))
            }
            (None, Some(_)) => return Err(Error::ShapeMismatch("test labels without test features".into())),
            _ => {}
        }
        if let Some(v) = &self.external_votes {
            if v.rows() != self.train_features.rows() || v.classes() != c {
                return Err(Error::ShapeMismatch(format!(
                    "external votes are {}x{} over {} classes; train has {} rows, {c} classes",
                    v.rows(),
                    v.cols(),
                    v.classes(),
                    self.train_features.rows()
                )));
            }
        }
        Ok(())
    }

    /// Keeps only the first `budget` labeled validation examples.
    pub fn with_label_budget(&self, budget: usize) -> Result<DatasetBundle> {
        let m = self.val_labels.len();
        if budget > m {
            return Err(Error::InvalidArgument(format!(
                "budget exceeds available labels ({budget} > {m})"
            )));
        }
        if budget == 0 {
            return Err(Error::EmptyValidation);
        }
        let idx: Vec<usize> = (0..budget).collect();
        let mut out = self.clone();
        out.val_features = FeatureMatrix::new(self.val_features.values().select_rows(&idx), self.provenance())?;
        out.val_labels = self.val_labels.select(&idx);
        Ok(out)
    }

    /// Applies a row-wise transform to every feature split.
    pub fn map_features<F>(&self, f: F) -> Result<DatasetBundle>
    where
        F: Fn(&FeatureMatrix) -> Result<FeatureMatrix>,
    {
        let mut out = self.clone();
        out.train_features = f(&self.train_features)?;
        out.val_features = f(&self.val_features)?;
        out.test_features = self.test_features.as_ref().map(&f).transpose()?;
        out.validate()?;
        Ok(out)
    }
}

/// Files for one split, keyed by provenance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitFiles {
    pub features: BTreeMap<String, PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

/// On-disk dataset description. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub classes: usize,
    pub class_names: Vec<String>,
    pub train: SplitFiles,
    pub val: SplitFiles,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<SplitFiles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_votes: Option<PathBuf>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Provenance used when none is requested: `raw` if present, otherwise
    /// the first available key.
    pub fn default_provenance(&self) -> Option<&str> {
        if self.train.features.contains_key("raw") {
            Some("raw")
        } else {
            self.train.features.keys().next().map(String::as_str)
        }
    }

    /// Every file the manifest references, in a stable order.
    pub fn referenced_files(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = Vec::new();
        for s in [Some(&self.train), Some(&self.val), self.test.as_ref()].into_iter().flatten() {
            out.extend(s.features.values().map(PathBuf::as_path));
            out.extend(s.labels.as_deref());
        }
        out.extend(self.external_votes.as_deref());
        out
    }
}

/// Options for [`load_bundle_with`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// A manifest provenance key, optionally followed by derived transforms:
    /// `raw+pca100` fits PCA on the train split, `raw+bitrev` applies the
    /// bit-reversal permutation.
    pub provenance: Option<String>,
    /// Standardize columns with train-split statistics.
    pub standardize: bool,
}

/// Loads the manifest's default provenance without standardization.
pub fn load_bundle(manifest_path: &Path) -> Result<DatasetBundle> {
    load_bundle_with(manifest_path, &LoadOptions::default())
}

pub fn load_bundle_with(manifest_path: &Path, opts: &LoadOptions) -> Result<DatasetBundle> {
    let manifest = Manifest::read(manifest_path)?;
    let base_dir = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    };
    let requested = match &opts.provenance {
        Some(p) => p.clone(),
        None => manifest
            .default_provenance()
            .ok_or_else(|| Error::InvalidArgument("manifest lists no train features".into()))?
            .to_string(),
    };
    let mut parts = requested.split('+');
    let base = parts.next().unwrap_or_default().to_string();
    let transforms: Vec<&str> = parts.collect();

    let classes = manifest.classes;
    if manifest.class_names.len() != classes {
        return Err(Error::ShapeMismatch(format!(
            "{} class names for {classes} classes",
            manifest.class_names.len()
        )));
    }
    let load_features = |split: &str, files: &SplitFiles| -> Result<FeatureMatrix> {
        let p = files.features.get(&base).ok_or_else(|| {
            Error::InvalidArgument(format!("split `{split}` has no features for provenance `{base}`"))
        })?;
        let m = io::read_matrix_csv(&resolve(p))?;
        FeatureMatrix::new(m, base.clone())
    };
    let load_labels = |p: &Path, rows: usize| -> Result<LabelVector> {
        let path = resolve(p);
        let values = io::read_labels(&path, classes)?;
        if values.len() != rows {
            return Err(Error::ShapeMismatch(format!(
                "{}: {} labels for {rows} feature rows",
                path.display(),
                values.len()
            )));
        }
        LabelVector::new(values, classes, manifest.class_names.clone())
    };

    let train_features = load_features("train", &manifest.train)?;
    let val_features = load_features("val", &manifest.val)?;
    let val_path = manifest
        .val
        .labels
        .as_deref()
        .ok_or(Error::EmptyValidation)?;
    let val_labels = load_labels(val_path, val_features.rows())?;
    let train_labels = manifest
        .train
        .labels
        .as_deref()
        .map(|p| load_labels(p, train_features.rows()))
        .transpose()?;
    let (test_features, test_labels) = match &manifest.test {
        Some(t) => {
            let f = load_features("test", t)?;
            let l = t.labels.as_deref().map(|p| load_labels(p, f.rows())).transpose()?;
            (Some(f), l)
        }
        None => (None, None),
    };
    let external_votes = manifest
        .external_votes
        .as_deref()
        .map(|p| VoteMatrix::read_csv(&resolve(p), classes, "external"))
        .transpose()?;

    let mut bundle = DatasetBundle {
        name: manifest.name.clone(),
        train_features,
        val_features,
        val_labels,
        train_labels,
        test_features,
        test_labels,
        external_votes,
    };
    bundle.validate()?;

    if opts.standardize {
        let s = Standardizer::fit(&bundle.train_features);
        bundle = bundle.map_features(|f| s.apply(f))?;
    }
    for t in transforms {
        bundle = apply_named_transform(&bundle, t)?;
    }
    Ok(bundle)
}

fn apply_named_transform(bundle: &DatasetBundle, name: &str) -> Result<DatasetBundle> {
    if let Some(k) = name.strip_prefix("pca") {
        let k: usize = k
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad transform `{name}`")))?;
        let model = fit_pca(&bundle.train_features, k)?;
        bundle.map_features(|f| model.apply(f))
    } else if name == "bitrev" {
        let d = bundle.dim();
        let side = (d as f64).sqrt().round() as usize;
        bundle.map_features(|f| bit_reversal_permute(f, side))
    } else {
        Err(Error::InvalidArgument(format!("unknown transform `{name}`")))
    }
}
