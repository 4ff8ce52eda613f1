//! Seeded synthetic datasets for tests and benchmarks.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, FeatureMatrix, LabelVector, Manifest, SplitFiles};
use crate::error::{Error, Result};
use crate::io;
use crate::label_model::VoteMatrix;
use crate::matrix::Matrix;

/// Gaussian blobs: class `c` is centered at `separation * e_c`, so each
/// class stands out on its own coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub dim: usize,
    pub classes: usize,
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_val: 100,
            n_test: 0,
            dim: 10,
            classes: 2,
            separation: 4.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

/// Two classes decided by `x0 + x1 > 0`; the other coordinates are noise.
/// Points closer than `margin` to the boundary are redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub dim: usize,
    pub margin: f64,
    pub seed: u64,
}

impl Default for InteractionSpec {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_val: 200,
            dim: 10,
            margin: 0.2,
            seed: 0,
        }
    }
}

fn class_names(classes: usize) -> Vec<String> {
    (0..classes).map(|c| format!("class{c}")).collect()
}

fn blob_split(spec: &BlobSpec, n: usize, rng: &mut ChaCha8Rng) -> (Matrix, Vec<usize>) {
    let mut x = Matrix::zeros(n, spec.dim);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = rng.random_range(0..spec.classes);
        for (j, v) in x.row_mut(i).iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            *v = spec.noise * z + if j == c { spec.separation } else { 0.0 };
        }
        y.push(c);
    }
    (x, y)
}

fn assemble(
    name: &str,
    classes: usize,
    train: (Matrix, Vec<usize>),
    val: (Matrix, Vec<usize>),
    test: Option<(Matrix, Vec<usize>)>,
) -> Result<DatasetBundle> {
    let names = class_names(classes);
    let mut b = DatasetBundle::new(
        name,
        FeatureMatrix::new(train.0, "raw")?,
        FeatureMatrix::new(val.0, "raw")?,
        LabelVector::new(val.1, classes, names.clone())?,
    )?;
    b.train_labels = Some(LabelVector::new(train.1, classes, names.clone())?);
    if let Some((x, y)) = test {
        b.test_features = Some(FeatureMatrix::new(x, "raw")?);
        b.test_labels = Some(LabelVector::new(y, classes, names)?);
    }
    b.validate()?;
    Ok(b)
}

pub fn blobs(spec: &BlobSpec) -> Result<DatasetBundle> {
    if spec.classes < 2 || spec.dim < spec.classes {
        return Err(Error::InvalidArgument(format!(
            "blobs need 2 <= classes <= dim, got classes = {}, dim = {}",
            spec.classes, spec.dim
        )));
    }
    if spec.n_train == 0 || spec.n_val == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train = blob_split(spec, spec.n_train, &mut rng);
    let val = blob_split(spec, spec.n_val, &mut rng);
    let test = (spec.n_test > 0).then(|| blob_split(spec, spec.n_test, &mut rng));
    assemble(&format!("blobs-c{}-d{}", spec.classes, spec.dim), spec.classes, train, val, test)
}

fn interaction_split(spec: &InteractionSpec, n: usize, rng: &mut ChaCha8Rng) -> (Matrix, Vec<usize>) {
    let mut x = Matrix::zeros(n, spec.dim);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row_mut(i);
        loop {
            for v in row.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            if (row[0] + row[1]).abs() >= spec.margin {
                break;
            }
        }
        y.push(usize::from(row[0] + row[1] > 0.0));
    }
    (x, y)
}

pub fn interaction(spec: &InteractionSpec) -> Result<DatasetBundle> {
    if spec.dim < 2 {
        return Err(Error::InvalidArgument("interaction data needs dim >= 2".into()));
    }
    if spec.n_train == 0 || spec.n_val == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train = interaction_split(spec, spec.n_train, &mut rng);
    let val = interaction_split(spec, spec.n_val, &mut rng);
    assemble(&format!("interaction-d{}", spec.dim), 2, train, val, None)
}

/// Noisy one-hot logits of width `width` for the given labels: the true
/// class gets `strength`, everything gets unit Gaussian noise.
pub fn logits_view(labels: &[usize], width: usize, strength: f64, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Matrix::zeros(labels.len(), width);
    for (i, &c) in labels.iter().enumerate() {
        for (j, v) in x.row_mut(i).iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = z + if j == c { strength } else { 0.0 };
        }
    }
    x
}

/// Votes from `lfs` simulated sources, each covering a row with probability
/// `coverage` and voting the gold label with probability `accuracy`,
/// otherwise a uniformly chosen wrong class.
pub fn simulated_votes(gold: &[usize], classes: usize, lfs: usize, coverage: f64, accuracy: f64, seed: u64) -> Result<VoteMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(gold.len() * lfs);
    for &g in gold {
        for _ in 0..lfs {
            let v = if rng.random::<f64>() >= coverage {
                -1
            } else if classes < 2 || rng.random::<f64>() < accuracy {
                g as i32
            } else {
                let w = rng.random_range(0..classes - 1);
                (if w >= g { w + 1 } else { w }) as i32
            };
            values.push(v);
        }
    }
    let ids = (0..lfs).map(|k| format!("sim{k}")).collect();
    VoteMatrix::new(gold.len(), values, ids, classes)
}

/// Writes the bundle's splits under `dir` and returns the manifest path.
/// Features are stored under the bundle's provenance key.
pub fn write_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let prov = bundle.provenance().to_string();
    let split = |name: &str, x: &FeatureMatrix, y: Option<&LabelVector>| -> Result<SplitFiles> {
        let fx = PathBuf::from(format!("{name}_{prov}.csv"));
        io::write_matrix_csv(&dir.join(&fx), x.values())?;
        let labels = match y {
            Some(y) => {
                let fy = PathBuf::from(format!("{name}_labels.txt"));
                io::write_labels(&dir.join(&fy), y.values())?;
                Some(fy)
            }
            None => None,
        };
        Ok(SplitFiles {
            features: [(prov.clone(), fx)].into_iter().collect(),
            labels,
        })
    };
    let train = split("train", &bundle.train_features, bundle.train_labels.as_ref())?;
    let val = split("val", &bundle.val_features, Some(&bundle.val_labels))?;
    let test = bundle
        .test_features
        .as_ref()
        .map(|x| split("test", x, bundle.test_labels.as_ref()))
        .transpose()?;
    let external_votes = match &bundle.external_votes {
        Some(v) => {
            let p = PathBuf::from("external_votes.csv");
            v.write_csv(&dir.join(&p))?;
            Some(p)
        }
        None => None,
    };
    let manifest = Manifest {
        name: bundle.name.clone(),
        classes: bundle.classes(),
        class_names: bundle.val_labels.class_names().to_vec(),
        train,
        val,
        test,
        external_votes,
    };
    let path = dir.join("manifest.json");
    manifest.write(&path)?;
    Ok(path)
}

/// Adds another representation to a written manifest, e.g. a logits view.
pub fn add_view(manifest_path: &Path, provenance: &str, train: &Matrix, val: &Matrix, test: Option<&Matrix>) -> Result<()> {
    let mut manifest = Manifest::read(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let put = |name: &str, x: &Matrix, files: &mut SplitFiles| -> Result<()> {
        let f = PathBuf::from(format!("{name}_{}.csv", provenance.replace(':', "_")));
        io::write_matrix_csv(&dir.join(&f), x)?;
        files.features.insert(provenance.to_string(), f);
        Ok(())
    };
    put("train", train, &mut manifest.train)?;
    put("val", val, &mut manifest.val)?;
    if let (Some(x), Some(files)) = (test, manifest.test.as_mut()) {
        put("test", x, files)?;
    }
    manifest.write(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_bundle;

    #[test]
    fn blobs_are_seeded() {
        let spec = BlobSpec { n_train: 50, n_val: 10, ..Default::default() };
        assert_eq!(blobs(&spec).unwrap(), blobs(&spec).unwrap());
        let other = blobs(&BlobSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(blobs(&spec).unwrap(), other);
    }

    #[test]
    fn interaction_labels_follow_rule() {
        let b = interaction(&InteractionSpec { n_train: 100, n_val: 20, ..Default::default() }).unwrap();
        let y = b.train_labels.as_ref().unwrap().values();
        for (i, row) in b.train_features.values().iter_rows().enumerate() {
            assert_eq!(y[i], usize::from(row[0] + row[1] > 0.0));
            assert!((row[0] + row[1]).abs() >= 0.2);
        }
    }

    #[test]
    fn written_bundle_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let spec = BlobSpec { n_train: 30, n_val: 8, n_test: 5, dim: 3, classes: 3, ..Default::default() };
        let mut b = blobs(&spec).unwrap();
        let gold = b.train_labels.as_ref().unwrap().values().to_vec();
        b.external_votes = Some(simulated_votes(&gold, 3, 2, 0.5, 0.8, 3).unwrap());
        let path = write_bundle(&b, dir.path()).unwrap();
        let back = load_bundle(&path).unwrap();
        assert_eq!(back.train_features, b.train_features);
        assert_eq!(back.val_labels, b.val_labels);
        assert_eq!(back.test_labels, b.test_labels);
        assert_eq!(back.external_votes.as_ref().unwrap().to_csv(), b.external_votes.as_ref().unwrap().to_csv());
    }
}
