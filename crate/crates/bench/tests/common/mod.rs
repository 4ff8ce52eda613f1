#![allow(dead_code)]

use std::path::{Path, PathBuf};

use autows::synthetic::{add_view, blobs, logits_view, write_bundle, BlobSpec};
use autows_bench::{Method, RunConfig};

/// Writes a blobs dataset (with a `C`-wide logits view) and returns the
/// manifest path.
pub fn blob_manifest(dir: &Path, spec: BlobSpec) -> PathBuf {
    let b = blobs(&spec).unwrap();
    let path = write_bundle(&b, &dir.join(format!("data-{}-{}-{}", spec.classes, spec.dim, spec.seed))).unwrap();
    let gold = b.train_labels.as_ref().unwrap().values();
    let train = logits_view(gold, spec.classes, 3.0, spec.seed);
    let val = logits_view(b.val_labels.values(), spec.classes, 3.0, spec.seed + 1);
    add_view(&path, "external:clip_logits", &train, &val, None).unwrap();
    path
}

pub fn small_blobs(classes: usize) -> BlobSpec {
    BlobSpec {
        n_train: 400,
        n_val: 100,
        dim: 6,
        classes,
        seed: 5,
        ..Default::default()
    }
}

pub fn config(manifest: &Path, method: Method, out: &Path) -> RunConfig {
    RunConfig {
        manifest: manifest.to_path_buf(),
        method,
        output_dir: out.to_path_buf(),
        ..Default::default()
    }
}

/// Every file of a run directory, sorted by name.
pub fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}
