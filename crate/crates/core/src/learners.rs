//! Base hypothesis families for labeling functions: axis-aligned decision
//! stumps, multinomial logistic regression and k-nearest neighbors.
//!
//! Every learner is trained on a feature subset and predicts class
//! probabilities from full-width feature rows.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Stump,
    Logistic,
    Knn,
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerKind::Stump => "stump",
            LearnerKind::Logistic => "logistic",
            LearnerKind::Knn => "knn",
        })
    }
}

/// Hyperparameters shared by the learner families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub knn_k: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            max_iter: 500,
            tol: 1e-6,
            knn_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerParams {
    /// Votes `left` where `x[feature] <= threshold`, `right` otherwise.
    /// `feature` is a column of the full feature matrix.
    Stump {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// `C x (D + 1)` weights, bias in the last column.
    Logistic { weights: Matrix },
    Knn { points: Matrix, labels: Vec<usize>, k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLearner {
    pub feature_subset: Vec<usize>,
    pub classes: usize,
    pub params: LearnerParams,
}

fn check_inputs(x: &Matrix, subset: &[usize], y: &[usize], classes: usize) -> Result<()> {
    if x.rows() == 0 || y.is_empty() {
        return Err(Error::EmptyInput);
    }
    if x.rows() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} rows, {} labels", x.rows(), y.len())));
    }
    if subset.is_empty() || subset.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("feature subset must be non-empty and strictly increasing".into()));
    }
    if let Some(&last) = subset.last() {
        if last >= x.cols() {
            return Err(Error::DimensionMismatch {
                expected: last + 1,
                got: x.cols(),
            });
        }
    }
    if classes < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    if y.iter().any(|&c| c >= classes) {
        return Err(Error::InvalidArgument("label out of range".into()));
    }
    Ok(())
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

/// Fits the single-axis stump with the highest training accuracy over all
/// features in `subset` and all midpoints between sorted distinct values.
/// Ties prefer the earlier feature, then the lower threshold; leaf votes
/// are per-side majorities with ties toward the lower class.
pub fn train_stump(x: &Matrix, subset: &[usize], y: &[usize], classes: usize) -> Result<WeakLearner> {
    check_inputs(x, subset, y, classes)?;
    let n = y.len();
    let mut total = vec![0usize; classes];
    for &c in y {
        total[c] += 1;
    }
    let global = majority(&total);
    // no-split fallback: both leaves vote the global majority
    let mut best: (usize, f64, usize, usize, usize) =
        (total[global], x.get(0, subset[0]), global, global, subset[0]);
    let mut found_split = false;

    let mut order: Vec<usize> = (0..n).collect();
    let mut left = vec![0usize; classes];
    for &f in subset {
        order.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
        left.iter_mut().for_each(|c| *c = 0);
        for pos in 0..n - 1 {
            let i = order[pos];
            left[y[i]] += 1;
            let (v, next) = (x.get(i, f), x.get(order[pos + 1], f));
            if v == next {
                continue;
            }
            let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let (lc, rc) = (majority(&left), majority(&right));
            let correct = left[lc] + right[rc];
            if !found_split || correct > best.0 {
                best = (correct, v + (next - v) / 2.0, lc, rc, f);
                found_split = true;
            }
        }
    }
    let (_, threshold, l, r, feature) = best;
    Ok(WeakLearner {
        feature_subset: subset.to_vec(),
        classes,
        params: LearnerParams::Stump {
            feature,
            threshold,
            left: l,
            right: r,
        },
    })
}

/// Mean cross-entropy plus `l2 / 2 * ||W||^2` (bias excluded) and its
/// gradient. `x` holds the already-restricted `n x D` features.
pub fn logistic_loss_grad(weights: &Matrix, x: &Matrix, y: &[usize], l2: f64) -> (f64, Matrix) {
    let (c, dp1) = (weights.rows(), weights.cols());
    let d = dp1 - 1;
    assert_eq!(x.cols(), d, "weights must be C x (D + 1)");
    let n = x.rows() as f64;
    let mut grad = Matrix::zeros(c, dp1);
    let mut loss = 0.0;
    let mut logits = vec![0.0; c];
    for (i, row) in x.iter_rows().enumerate() {
        for (k, l) in logits.iter_mut().enumerate() {
            let w = weights.row(k);
            *l = w[d] + row.iter().zip(&w[..d]).map(|(a, b)| a * b).sum::<f64>();
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let lse = max + z.ln();
        loss += lse - logits[y[i]];
        for k in 0..c {
            let p = (logits[k] - lse).exp() - f64::from(u8::from(k == y[i]));
            let g = grad.row_mut(k);
            for j in 0..d {
                g[j] += p * row[j];
            }
            g[d] += p;
        }
    }
    loss /= n;
    let mut reg = 0.0;
    for k in 0..c {
        let w = weights.row(k);
        let g = grad.row_mut(k);
        for j in 0..dp1 {
            g[j] /= n;
        }
        for j in 0..d {
            g[j] += l2 * w[j];
            reg += w[j] * w[j];
        }
    }
    (loss + 0.5 * l2 * reg, grad)
}

/// Full-batch gradient descent with Armijo backtracking from zero weights.
/// Returns the weights and the loss after every accepted step (the first
/// entry is the loss at zero).
pub fn fit_logistic_weights(
    x: &Matrix,
    y: &[usize],
    classes: usize,
    cfg: &LearnerConfig,
) -> Result<(Matrix, Vec<f64>)> {
    if cfg.l2 < 0.0 {
        return Err(Error::InvalidArgument("l2 must be non-negative".into()));
    }
    let dp1 = x.cols() + 1;
    let mut w = Matrix::zeros(classes, dp1);
    let (mut loss, mut grad) = logistic_loss_grad(&w, x, y, cfg.l2);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let mut trace = vec![loss];
    let mut step = 1.0;
    for _ in 0..cfg.max_iter {
        let gnorm2: f64 = grad.as_slice().iter().map(|g| g * g).sum();
        if gnorm2.sqrt() < cfg.tol {
            break;
        }
        let mut accepted = None;
        for _ in 0..60 {
            let data = w
                .as_slice()
                .iter()
                .zip(grad.as_slice())
                .map(|(a, g)| a - step * g)
                .collect();
            let cand = Matrix::from_vec(classes, dp1, data).expect("same shape");
            let (l, g) = logistic_loss_grad(&cand, x, y, cfg.l2);
            if l.is_finite() && l <= loss - 1e-4 * step * gnorm2 {
                accepted = Some((cand, l, g));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, l, g)) = accepted else { break };
        w = cand;
        loss = l;
        grad = g;
        trace.push(loss);
        step *= 2.0;
    }
    if !loss.is_finite() || !w.all_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok((w, trace))
}

pub fn train_logistic(
    x: &Matrix,
    subset: &[usize],
    y: &[usize],
    classes: usize,
    cfg: &LearnerConfig,
) -> Result<WeakLearner> {
    check_inputs(x, subset, y, classes)?;
    let xs = x.select_cols(subset);
    let (weights, _) = fit_logistic_weights(&xs, y, classes, cfg)?;
    Ok(WeakLearner {
        feature_subset: subset.to_vec(),
        classes,
        params: LearnerParams::Logistic { weights },
    })
}

pub fn train_knn(x: &Matrix, subset: &[usize], y: &[usize], classes: usize, k: usize) -> Result<WeakLearner> {
    check_inputs(x, subset, y, classes)?;
    if k == 0 || k > y.len() {
        return Err(Error::InvalidArgument(format!("k = {k} must be in 1..={}", y.len())));
    }
    Ok(WeakLearner {
        feature_subset: subset.to_vec(),
        classes,
        params: LearnerParams::Knn {
            points: x.select_cols(subset),
            labels: y.to_vec(),
            k,
        },
    })
}

/// Trains the requested family. kNN's `k` is clamped to the number of
/// training points.
pub fn train(
    kind: LearnerKind,
    x: &Matrix,
    subset: &[usize],
    y: &[usize],
    classes: usize,
    cfg: &LearnerConfig,
) -> Result<WeakLearner> {
    match kind {
        LearnerKind::Stump => train_stump(x, subset, y, classes),
        LearnerKind::Logistic => train_logistic(x, subset, y, classes, cfg),
        LearnerKind::Knn => train_knn(x, subset, y, classes, cfg.knn_k.min(y.len()).max(1)),
    }
}

impl WeakLearner {
    pub fn kind(&self) -> LearnerKind {
        match self.params {
            LearnerParams::Stump { .. } => LearnerKind::Stump,
            LearnerParams::Logistic { .. } => LearnerKind::Logistic,
            LearnerParams::Knn { .. } => LearnerKind::Knn,
        }
    }

    /// Class probabilities for full-width rows of `x`; each row sums to 1.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        let needed = self.feature_subset.last().map_or(0, |&l| l + 1);
        if x.cols() < needed {
            return Err(Error::DimensionMismatch {
                expected: needed,
                got: x.cols(),
            });
        }
        let c = self.classes;
        let mut out = Matrix::zeros(x.rows(), c);
        match &self.params {
            LearnerParams::Stump {
                feature,
                threshold,
                left,
                right,
            } => {
                for i in 0..x.rows() {
                    let cls = if x.get(i, *feature) <= *threshold { *left } else { *right };
                    out.set(i, cls, 1.0);
                }
            }
            LearnerParams::Logistic { weights } => {
                let d = self.feature_subset.len();
                let mut logits = vec![0.0; c];
                for i in 0..x.rows() {
                    let row = x.row(i);
                    for (k, l) in logits.iter_mut().enumerate() {
                        let w = weights.row(k);
                        *l = w[d] + self.feature_subset.iter().zip(w).map(|(&j, wj)| row[j] * wj).sum::<f64>();
                    }
                    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let o = out.row_mut(i);
                    let mut z = 0.0;
                    for k in 0..c {
                        o[k] = (logits[k] - max).exp();
                        z += o[k];
                    }
                    o.iter_mut().for_each(|p| *p /= z);
                }
            }
            LearnerParams::Knn { points, labels, k } => {
                let mut q = vec![0.0; self.feature_subset.len()];
                let mut dist: Vec<(f64, usize)> = Vec::with_capacity(points.rows());
                for i in 0..x.rows() {
                    let row = x.row(i);
                    for (qj, &j) in q.iter_mut().zip(&self.feature_subset) {
                        *qj = row[j];
                    }
                    dist.clear();
                    dist.extend(points.iter_rows().enumerate().map(|(s, p)| (sq_dist(&q, p), s)));
                    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    let o = out.row_mut(i);
                    for &(_, s) in dist.iter().take(*k) {
                        o[labels[s]] += 1.0 / *k as f64;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Short human-readable description.
    pub fn summary(&self) -> String {
        match &self.params {
            LearnerParams::Stump {
                feature,
                threshold,
                left,
                right,
            } => format!("stump x[{feature}] <= {threshold:.4} ? {left} : {right}"),
            LearnerParams::Logistic { .. } => format!("logistic on {:?}", self.feature_subset),
            LearnerParams::Knn { k, .. } => format!("{k}-nn on {:?}", self.feature_subset),
        }
    }
}
