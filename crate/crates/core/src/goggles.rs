//! Affinity-based clustering with a labeled cluster-to-class map.
//!
//! Each instance is described by its row of cosine similarities to every
//! other instance (rows from several representations are concatenated),
//! the rows are clustered into `C` groups, and each group takes the
//! majority label of the labeled instances it contains. Every point gets a
//! label, so coverage is always 1.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, FeatureMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::label_model::WeakLabelOutput;
use crate::matrix::{argmax, dot, sq_dist, Matrix};

const MAX_ITER: usize = 300;
const GAIN_TOL: f64 = 1e-6;
const VAR_FLOOR: f64 = 1e-6;

/// Symmetric `n x n` cosine-similarity matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityMatrix {
    pub values: Matrix,
    pub source: String,
}

/// `A_ij = <x_i, x_j> / (|x_i| |x_j|)`; zero rows get zero similarities
/// except a unit diagonal.
pub fn build_affinity(features: &FeatureMatrix) -> AffinityMatrix {
    let x = features.values();
    let n = x.rows();
    let norms: Vec<f64> = x.iter_rows().map(|r| dot(r, r).sqrt()).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else if norms[i] == 0.0 || norms[j] == 0.0 {
                        0.0
                    } else {
                        (dot(x.row(i), x.row(j)) / (norms[i] * norms[j])).clamp(-1.0, 1.0)
                    }
                })
                .collect()
        })
        .collect();
    let mut values = Matrix::from_rows(&rows).expect("square");
    // mirror the upper triangle so symmetry is exact
    for i in 0..n {
        for j in 0..i {
            let v = values.get(j, i);
            values.set(i, j, v);
        }
    }
    AffinityMatrix {
        values,
        source: features.provenance().to_string(),
    }
}

/// Row-wise concatenation: instance `i` becomes `[A1_i, A2_i, ...]`.
pub fn stack_affinities(mats: &[AffinityMatrix]) -> Result<Matrix> {
    let first = mats.first().ok_or(Error::EmptyInput)?;
    let n = first.values.rows();
    if let Some(bad) = mats.iter().find(|m| m.values.rows() != n) {
        return Err(Error::ShapeMismatch(format!(
            "affinity `{}` has {} rows, expected {n}",
            bad.source,
            bad.values.rows()
        )));
    }
    let mut out = Matrix::zeros(n, n * mats.len());
    for i in 0..n {
        let row = out.row_mut(i);
        for (b, m) in mats.iter().enumerate() {
            row[b * n..(b + 1) * n].copy_from_slice(m.values.row(i));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    #[default]
    Gmm,
    Kmeans,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub method: ClusterMethod,
    pub k: usize,
    pub seed: u64,
    pub assignments: Vec<usize>,
    /// `n x K` posterior memberships (GMM only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub responsibilities: Option<Matrix>,
    /// Per-iteration log-likelihood (GMM) or inertia (k-means).
    #[serde(default)]
    pub trace: Vec<f64>,
    /// Class per cluster, set by [`map_clusters`].
    #[serde(default)]
    pub cluster_to_class: Vec<usize>,
}

impl ClusterModel {
    /// JSON summary without per-point data.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            method: ClusterMethod,
            k: usize,
            seed: u64,
            cluster_to_class: &'a [usize],
        }
        Ok(serde_json::to_string_pretty(&Summary {
            method: self.method,
            k: self.k,
            seed: self.seed,
            cluster_to_class: &self.cluster_to_class,
        })? + "\n")
    }

    /// One `cluster` column, one row per point.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cluster\n");
        for a in &self.assignments {
            s.push_str(&a.to_string());
            s.push('\n');
        }
        s
    }

    pub fn write_assignments_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// k-means++ seeding. Once every remaining point coincides with a chosen
/// center, the lowest unchosen index is taken.
fn kmeans_pp(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && u < acc {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("positive mass"))
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(x.row(i), x.row(next)));
        }
    }
    chosen
}

fn nearest(row: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter_rows().enumerate() {
        let d = sq_dist(row, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let mut centers = x.select_rows(&kmeans_pp(x, k, rng));
    let mut assign = vec![0; n];
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let assigned: Vec<(usize, f64)> = (0..n).into_par_iter().map(|i| nearest(x.row(i), &centers)).collect();
        let inertia: f64 = assigned.iter().map(|a| a.1).sum();
        for (a, (c, _)) in assign.iter_mut().zip(&assigned) {
            *a = *c;
        }
        trace.push(inertia);
        if prev - inertia < GAIN_TOL {
            break;
        }
        prev = inertia;
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            for (s, v) in sums.row_mut(assign[i]).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            // empty clusters keep their previous center
            if counts[c] > 0 {
                let row = centers.row_mut(c);
                for (r, s) in row.iter_mut().zip(sums.row(c)) {
                    *r = s / counts[c] as f64;
                }
            }
        }
    }
    (assign, trace)
}

fn gmm(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Matrix, Vec<f64>)> {
    let (n, d) = (x.rows(), x.cols());
    let mut means = x.select_rows(&kmeans_pp(x, k, rng));
    let mut global_var = vec![0.0; d];
    let mut mu = vec![0.0; d];
    for r in x.iter_rows() {
        for j in 0..d {
            mu[j] += r[j] / n as f64;
        }
    }
    for r in x.iter_rows() {
        for j in 0..d {
            global_var[j] += (r[j] - mu[j]).powi(2) / n as f64;
        }
    }
    let mut vars = Matrix::zeros(k, d);
    for c in 0..k {
        for j in 0..d {
            vars.set(c, j, global_var[j].max(VAR_FLOOR));
        }
    }
    let mut weights = vec![1.0 / k as f64; k];
    let mut resp = Matrix::zeros(n, k);
    let mut trace = Vec::new();
    let ln2pi = (2.0 * std::f64::consts::PI).ln();

    for iter in 0..MAX_ITER {
        // E-step
        let consts: Vec<f64> = (0..k)
            .map(|c| weights[c].ln() - 0.5 * (d as f64 * ln2pi + vars.row(c).iter().map(|v| v.ln()).sum::<f64>()))
            .collect();
        let rows: Vec<(Vec<f64>, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = x.row(i);
                let mut l: Vec<f64> = (0..k)
                    .map(|c| {
                        let (m, v) = (means.row(c), vars.row(c));
                        let q: f64 = (0..d).map(|j| (xi[j] - m[j]).powi(2) / v[j]).sum();
                        consts[c] - 0.5 * q
                    })
                    .collect();
                let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = l.iter().map(|v| (v - max).exp()).sum();
                l.iter_mut().for_each(|v| *v = (*v - max).exp() / z);
                (l, max + z.ln())
            })
            .collect();
        let mut ll = 0.0;
        for (i, (r, li)) in rows.into_iter().enumerate() {
            resp.row_mut(i).copy_from_slice(&r);
            ll += li;
        }
        if !ll.is_finite() {
            return Err(Error::NonFiniteLikelihood);
        }
        let mean_ll = ll / n as f64;
        let gain = trace.last().map_or(f64::INFINITY, |&p| mean_ll - p);
        trace.push(mean_ll);
        if iter > 0 && gain < GAIN_TOL {
            break;
        }
        // M-step
        for c in 0..k {
            let nk: f64 = (0..n).map(|i| resp.get(i, c)).sum();
            weights[c] = nk / n as f64;
            if nk <= 0.0 {
                continue;
            }
            let mut m = vec![0.0; d];
            for i in 0..n {
                let r = resp.get(i, c);
                if r > 0.0 {
                    for (mj, xj) in m.iter_mut().zip(x.row(i)) {
                        *mj += r * xj;
                    }
                }
            }
            m.iter_mut().for_each(|v| *v /= nk);
            let mut v = vec![0.0; d];
            for i in 0..n {
                let r = resp.get(i, c);
                if r > 0.0 {
                    for j in 0..d {
                        v[j] += r * (x.get(i, j) - m[j]).powi(2);
                    }
                }
            }
            means.row_mut(c).copy_from_slice(&m);
            for (j, vj) in v.into_iter().enumerate() {
                vars.set(c, j, (vj / nk).max(VAR_FLOOR));
            }
        }
    }
    let assign = resp.iter_rows().map(argmax).collect();
    Ok((assign, resp, trace))
}

fn spectral_embedding(x: &Matrix, k: usize) -> Matrix {
    let n = x.rows();
    let fm = FeatureMatrix::new(x.clone(), "spectral").expect("finite input");
    let a = build_affinity(&fm).values;
    let w = |i: usize, j: usize| (a.get(i, j) + 1.0) / 2.0;
    let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| w(i, j)).sum::<f64>()).collect();
    // bottom eigenvectors of I - D^-1/2 W D^-1/2 are the top ones of the
    // normalized affinity
    let m = DMatrix::from_fn(n, n, |i, j| w(i, j) / (deg[i] * deg[j]).sqrt());
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
    let mut emb = Matrix::zeros(n, k);
    for (c, &col) in order.iter().take(k).enumerate() {
        for i in 0..n {
            emb.set(i, c, eig.eigenvectors[(i, col)]);
        }
    }
    for i in 0..n {
        let row = emb.row_mut(i);
        let norm = dot(row, row).sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    emb
}

/// Clusters the rows of `x` into `k` groups. Spectral clustering builds its
/// graph from the cosine affinity of the rows, shifted to `(A + 1) / 2`.
pub fn fit_cluster(x: &Matrix, k: usize, method: ClusterMethod, seed: u64) -> Result<ClusterModel> {
    let n = x.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("K = {k} must be in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (assignments, responsibilities, trace) = match method {
        ClusterMethod::Kmeans => {
            let (a, t) = kmeans(x, k, &mut rng);
            (a, None, t)
        }
        ClusterMethod::Gmm => {
            let (a, r, t) = gmm(x, k, &mut rng)?;
            (a, Some(r), t)
        }
        ClusterMethod::Spectral => {
            let emb = spectral_embedding(x, k);
            let (a, t) = kmeans(&emb, k, &mut rng);
            (a, None, t)
        }
    };
    Ok(ClusterModel {
        method,
        k,
        seed,
        assignments,
        responsibilities,
        trace,
        cluster_to_class: Vec::new(),
    })
}

/// Maps each cluster to the majority label of its labeled members
/// (`labels[j]` belongs to point `labeled_idx[j]`). Clusters without
/// labeled members take the overall majority label; ties go to the lower
/// class.
pub fn map_clusters(mut model: ClusterModel, labeled_idx: &[usize], labels: &LabelVector) -> Result<ClusterModel> {
    if labeled_idx.is_empty() {
        return Err(Error::NoLabeledPoints);
    }
    if labeled_idx.len() != labels.len() {
        return Err(Error::ShapeMismatch("labeled indices and labels differ in length".into()));
    }
    let c = labels.classes();
    let mut tally = vec![vec![0usize; c]; model.k];
    let mut global = vec![0usize; c];
    for (&i, &y) in labeled_idx.iter().zip(labels.values()) {
        let cl = *model
            .assignments
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("labeled index {i} out of range")))?;
        tally[cl][y] += 1;
        global[y] += 1;
    }
    let top = |counts: &[usize]| {
        let mut best = 0;
        for (j, &v) in counts.iter().enumerate() {
            if v > counts[best] {
                best = j;
            }
        }
        best
    };
    let fallback = top(&global);
    model.cluster_to_class = tally
        .iter()
        .map(|t| if t.iter().all(|&v| v == 0) { fallback } else { top(t) })
        .collect();
    Ok(model)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GogglesConfig {
    pub method: ClusterMethod,
    pub seed: u64,
}

/// Full pipeline over one or more representations of the same data. The
/// labeled split is clustered together with the training pool so its
/// labels can name the clusters; the output covers the training pool.
pub fn goggles_predict(views: &[&DatasetBundle], config: &GogglesConfig) -> Result<(ClusterModel, WeakLabelOutput)> {
    let first = views.first().ok_or(Error::EmptyInput)?;
    let (n, m, c) = (first.train_features.rows(), first.val_features.rows(), first.classes());
    for v in views {
        if v.train_features.rows() != n || v.val_features.rows() != m || v.val_labels != first.val_labels {
            return Err(Error::ShapeMismatch("views disagree on rows or labels".into()));
        }
    }
    let affinities: Vec<AffinityMatrix> = views
        .par_iter()
        .map(|v| {
            let all = v.val_features.values().vstack(v.train_features.values())?;
            Ok(build_affinity(&FeatureMatrix::new(all, v.provenance())?))
        })
        .collect::<Result<_>>()?;
    let stacked = stack_affinities(&affinities)?;
    let model = fit_cluster(&stacked, c, config.method, config.seed)?;
    let labeled: Vec<usize> = (0..m).collect();
    let model = map_clusters(model, &labeled, &first.val_labels)?;

    let mut posterior = Matrix::zeros(n, c);
    let mut hard = Vec::with_capacity(n);
    for i in 0..n {
        let row = m + i;
        let cl = model.assignments[row];
        hard.push(model.cluster_to_class[cl] as i32);
        let p = posterior.row_mut(i);
        match &model.responsibilities {
            Some(r) => {
                for (k, &cls) in model.cluster_to_class.iter().enumerate() {
                    p[cls] += r.get(row, k);
                }
            }
            None => p[model.cluster_to_class[cl]] = 1.0,
        }
    }
    let out = WeakLabelOutput {
        posterior,
        hard,
        covered: vec![true; n],
        coverage: 1.0,
    };
    Ok((model, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows, "raw").unwrap()
    }

    #[test]
    fn affinity_cases() {
        let a = build_affinity(&fm(&[&[1.0, 0.0], &[2.0, 0.0], &[0.0, 3.0], &[-1.0, 0.0], &[0.0, 0.0]]));
        let v = &a.values;
        assert!((v.get(0, 1) - 1.0).abs() < 1e-15);
        assert_eq!(v.get(0, 2), 0.0);
        assert!((v.get(0, 3) + 1.0).abs() < 1e-15);
        assert_eq!(v.get(4, 4), 1.0);
        assert_eq!(v.get(4, 0), 0.0);
    }

    #[test]
    fn stacking() {
        let a = build_affinity(&fm(&[&[1.0, 0.0], &[0.0, 1.0]]));
        assert_eq!(stack_affinities(std::slice::from_ref(&a)).unwrap(), a.values);
        let s = stack_affinities(&[a.clone(), a.clone()]).unwrap();
        assert_eq!((s.rows(), s.cols()), (2, 4));
        assert_eq!(&s.row(1)[..2], a.values.row(1));
        let b = build_affinity(&fm(&[&[1.0], &[2.0], &[3.0]]));
        assert!(stack_affinities(&[a, b]).is_err());
    }

    #[test]
    fn kmeans_with_k_equal_n() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [5.0], [9.0]]).unwrap();
        let m = fit_cluster(&x, 4, ClusterMethod::Kmeans, 1).unwrap();
        let mut a = m.assignments.clone();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3]);
        assert!(fit_cluster(&x, 5, ClusterMethod::Kmeans, 1).is_err());
    }

    #[test]
    fn map_with_empty_cluster_falls_back() {
        let model = ClusterModel {
            method: ClusterMethod::Kmeans,
            k: 3,
            seed: 0,
            assignments: vec![0, 0, 1, 1, 2],
            responsibilities: None,
            trace: vec![],
            cluster_to_class: vec![],
        };
        let labels = LabelVector::with_classes(vec![1, 1, 0], 3).unwrap();
        let m = map_clusters(model, &[0, 1, 2], &labels).unwrap();
        assert_eq!(m.cluster_to_class, vec![1, 0, 1]);
    }
}
