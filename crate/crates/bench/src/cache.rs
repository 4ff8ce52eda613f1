//! Content-addressed artifact cache. A run's directory name is a SHA-256
//! over its canonical config and the digests of every input file, so a
//! repeated run finds its previous artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use autows::Manifest;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{io, Result};

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Input files of a run: the manifest, every file it references, and the
/// verdict log if any.
pub fn input_files(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let manifest = Manifest::read(&config.manifest)?;
    let base = config.manifest.parent().unwrap_or(Path::new("."));
    let mut files = vec![config.manifest.clone()];
    files.extend(manifest.referenced_files().into_iter().map(|p| {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }));
    files.extend(config.verdict_log.clone());
    Ok(files)
}

pub fn cache_key(config: &RunConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(config.canonical_json()?.as_bytes());
    for f in input_files(config)? {
        h.update(b"\n");
        // the file's name and contents matter, not where it lives
        h.update(f.file_name().map(|n| n.as_encoded_bytes()).unwrap_or_default());
        h.update(b":");
        h.update(file_digest(&f)?.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

/// Writes `files` into `dir` by staging them in a sibling directory and
/// renaming it into place. Returns false if another writer got there first.
pub fn publish(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<bool> {
    let parent = dir.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let staging = tempfile_dir(parent, &name)?;
    for (file, bytes) in files {
        let p = staging.join(file);
        fs::write(&p, bytes).map_err(|e| io(&p, e))?;
    }
    match fs::rename(&staging, dir) {
        Ok(()) => Ok(true),
        Err(_) if dir.join("report.json").exists() => {
            let _ = fs::remove_dir_all(&staging);
            Ok(false)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(io(dir, e))
        }
    }
}

fn tempfile_dir(parent: &Path, name: &str) -> Result<PathBuf> {
    for attempt in 0u32.. {
        let p = parent.join(format!(".{name}.{}.{attempt}.tmp", std::process::id()));
        match fs::create_dir(&p) {
            Ok(()) => return Ok(p),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io(&p, e)),
        }
    }
    unreachable!("attempt counter is unbounded")
}
