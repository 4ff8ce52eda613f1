//! Comparison systems that label the training pool without LFs: a
//! supervised classifier on the labeled split, clamped label propagation
//! over a kNN graph, and argmax over externally supplied class logits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, FeatureMatrix};
use crate::error::{Error, Result};
use crate::label_model::WeakLabelOutput;
use crate::learners::{train_logistic, LearnerConfig};
use crate::matrix::{argmax, sq_dist, Matrix};

/// Logistic regression on every feature of the labeled split, applied to
/// the training pool.
pub fn few_shot_logistic(bundle: &DatasetBundle, cfg: &LearnerConfig) -> Result<WeakLabelOutput> {
    let y = bundle.val_labels.values();
    if y.is_empty() {
        return Err(Error::EmptyValidation);
    }
    let subset: Vec<usize> = (0..bundle.dim()).collect();
    let model = train_logistic(bundle.val_features.values(), &subset, y, bundle.classes(), cfg)?;
    let p = model.predict_proba(bundle.train_features.values())?;
    Ok(WeakLabelOutput::fully_covered(p))
}

/// Symmetric weighted graph without self-loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationGraph {
    /// Sorted `(neighbor, weight)` lists.
    pub adjacency: Vec<Vec<(usize, f64)>>,
    pub k: usize,
    pub sigma: f64,
}

impl PropagationGraph {
    /// Union of each point's `k` nearest neighbors with RBF weights
    /// `exp(-|x_i - x_j|^2 / (2 sigma^2))`. Distance ties go to the lower
    /// index.
    pub fn knn(x: &Matrix, k: usize, sigma: f64) -> Result<Self> {
        let n = x.rows();
        if k == 0 || k >= n {
            return Err(Error::InvalidArgument(format!("k = {k} must be in 1..{n}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument("sigma must be positive".into()));
        }
        let neighbors: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut d: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (sq_dist(x.row(i), x.row(j)), j))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d.truncate(k);
                d.into_iter().map(|(dist, j)| (j, dist)).collect()
            })
            .collect();
        let mut edges: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
        for (i, list) in neighbors.iter().enumerate() {
            for &(j, d2) in list {
                let w = (-d2 / (2.0 * sigma * sigma)).exp().max(f64::MIN_POSITIVE);
                edges[i].insert(j, w);
                edges[j].insert(i, w);
            }
        }
        Ok(Self {
            adjacency: edges.into_iter().map(|m| m.into_iter().collect()).collect(),
            k,
            sigma,
        })
    }

    /// Graph from explicit undirected edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
        for &(i, j, w) in edges {
            if i == j || i >= n || j >= n || !(w > 0.0 && w <= 1.0) {
                return Err(Error::InvalidArgument(format!("bad edge ({i}, {j}, {w})")));
            }
            adj[i].insert(j, w);
            adj[j].insert(i, w);
        }
        Ok(Self {
            adjacency: adj.into_iter().map(|m| m.into_iter().collect()).collect(),
            k: 0,
            sigma: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationParams {
    pub k: usize,
    /// `None`: median pairwise distance of an evenly strided subsample of
    /// at most 500 points.
    pub sigma: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            k: 10,
            sigma: None,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

/// Median pairwise Euclidean distance over at most `cap` rows taken at an
/// even stride.
pub fn median_pairwise_distance(x: &Matrix, cap: usize) -> f64 {
    let n = x.rows();
    let step = n.div_ceil(cap.max(1)).max(1);
    let idx: Vec<usize> = (0..n).step_by(step).collect();
    let mut d = Vec::with_capacity(idx.len() * idx.len() / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            d.push(sq_dist(x.row(i), x.row(j)).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let med = if d.len() % 2 == 1 { d[mid] } else { (d[mid - 1] + d[mid]) / 2.0 };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Iterates `F <- rownorm(W F)` with seed rows clamped to their one-hot
/// labels until the largest change is below `tol`. Rows never reached by
/// any seed end up uniform and take class 0.
pub fn propagate(
    graph: &PropagationGraph,
    seeds: &[(usize, usize)],
    classes: usize,
    max_iter: usize,
    tol: f64,
) -> Result<WeakLabelOutput> {
    if seeds.is_empty() {
        return Err(Error::NoLabeledPoints);
    }
    let n = graph.len();
    let mut f = Matrix::zeros(n, classes);
    let mut clamped = vec![false; n];
    for &(i, c) in seeds {
        if i >= n || c >= classes {
            return Err(Error::InvalidArgument(format!("seed ({i}, {c}) out of range")));
        }
        f.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
        f.set(i, c, 1.0);
        clamped[i] = true;
    }
    for _ in 0..max_iter {
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                if clamped[i] {
                    return f.row(i).to_vec();
                }
                let mut acc = vec![0.0; classes];
                for &(j, w) in &graph.adjacency[i] {
                    for (a, v) in acc.iter_mut().zip(f.row(j)) {
                        *a += w * v;
                    }
                }
                let s: f64 = acc.iter().sum();
                if s > 0.0 {
                    acc.iter_mut().for_each(|a| *a /= s);
                }
                acc
            })
            .collect();
        let next = Matrix::from_rows(&rows)?;
        let change = next
            .as_slice()
            .iter()
            .zip(f.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        f = next;
        if change < tol {
            break;
        }
    }
    for i in 0..n {
        let row = f.row_mut(i);
        if row.iter().all(|&v| v == 0.0) {
            row.iter_mut().for_each(|v| *v = 1.0 / classes as f64);
        }
    }
    Ok(WeakLabelOutput::fully_covered(f))
}

/// Clamped propagation over the labeled split plus the training pool;
/// returns labels for the training pool.
pub fn label_propagation(bundle: &DatasetBundle, params: &PropagationParams) -> Result<WeakLabelOutput> {
    let m = bundle.val_features.rows();
    if bundle.val_labels.is_empty() {
        return Err(Error::NoLabeledPoints);
    }
    let all = bundle.val_features.values().vstack(bundle.train_features.values())?;
    let sigma = params.sigma.unwrap_or_else(|| median_pairwise_distance(&all, 500));
    let graph = PropagationGraph::knn(&all, params.k, sigma)?;
    let seeds: Vec<(usize, usize)> = bundle.val_labels.values().iter().copied().enumerate().collect();
    let out = propagate(&graph, &seeds, bundle.classes(), params.max_iter, params.tol)?;
    let idx: Vec<usize> = (m..all.rows()).collect();
    Ok(WeakLabelOutput::fully_covered(out.posterior.select_rows(&idx)))
}

/// Argmax of per-class logits with softmax posteriors.
pub fn zero_shot_argmax(features: &FeatureMatrix, classes: usize) -> Result<WeakLabelOutput> {
    if features.cols() != classes {
        return Err(Error::LogitWidth {
            width: features.cols(),
            classes,
        });
    }
    let mut p = features.values().clone();
    for i in 0..p.rows() {
        let row = p.row_mut(i);
        let max = row[argmax(row)];
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    let mut out = WeakLabelOutput::fully_covered(p);
    out.hard = features.values().iter_rows().map(|r| argmax(r) as i32).collect();
    Ok(out)
}
