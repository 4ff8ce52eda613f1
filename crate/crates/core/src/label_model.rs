//! Vote matrices and the aggregators that turn them into weak labels.
//!
//! Two label models are provided: plain majority vote and Dawid-Skene EM
//! with per-source confusion matrices. Both treat `-1` as an abstain that
//! carries no information; rows where every source abstains stay uncovered.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::matrix::{argmax, Matrix};

pub const ABSTAIN: i32 = -1;

/// `n x K` votes over `{-1} ∪ 0..C`, one column per source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteMatrix {
    rows: usize,
    cols: usize,
    values: Vec<i32>,
    lf_ids: Vec<String>,
    classes: usize,
}

impl VoteMatrix {
    pub fn new(rows: usize, values: Vec<i32>, lf_ids: Vec<String>, classes: usize) -> Result<Self> {
        let cols = lf_ids.len();
        if cols == 0 {
            return Err(Error::InvalidArgument("vote matrix needs at least one column".into()));
        }
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} votes for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if let Some(pos) = values
            .iter()
            .position(|&v| v < ABSTAIN || (v >= 0 && v as usize >= classes))
        {
            return Err(Error::InvalidArgument(format!(
                "vote {} at row {} column {} outside -1..{classes}",
                values[pos],
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            lf_ids,
            classes,
        })
    }

    /// Builds from per-row vote lists with generated ids `{prefix}{k}`.
    pub fn from_rows<R: AsRef<[i32]>>(rows: &[R], classes: usize, prefix: &str) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.as_ref().len() != cols {
                return Err(Error::ShapeMismatch("ragged vote rows".into()));
            }
            values.extend_from_slice(r.as_ref());
        }
        let ids = (0..cols).map(|k| format!("{prefix}{k}")).collect();
        Self::new(rows.len(), values, ids, classes)
    }

    /// Builds from per-source columns.
    pub fn from_columns(columns: &[Vec<i32>], lf_ids: Vec<String>, classes: usize) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::ShapeMismatch("vote columns differ in length".into()));
        }
        let mut values = Vec::with_capacity(rows * columns.len());
        for i in 0..rows {
            values.extend(columns.iter().map(|c| c[i]));
        }
        Self::new(rows, values, lf_ids, classes)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn lf_ids(&self) -> &[String] {
        &self.lf_ids
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> i32 {
        self.values[i * self.cols + k]
    }

    pub fn row(&self, i: usize) -> &[i32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, k: usize) -> Vec<i32> {
        (0..self.rows).map(|i| self.get(i, k)).collect()
    }

    pub fn select_columns(&self, idx: &[usize]) -> Result<VoteMatrix> {
        let cols: Vec<Vec<i32>> = idx.iter().map(|&k| self.column(k)).collect();
        let ids = idx.iter().map(|&k| self.lf_ids[k].clone()).collect();
        VoteMatrix::from_columns(&cols, ids, self.classes)
    }

    pub fn read_csv(path: &Path, classes: usize, prefix: &str) -> Result<VoteMatrix> {
        let (rows, cols, data) = io::read_int_matrix_csv(path)?;
        let values = data
            .into_iter()
            .map(|v| i32::try_from(v).unwrap_or(i32::MIN))
            .collect();
        let ids = (0..cols).map(|k| format!("{prefix}{k}")).collect();
        VoteMatrix::new(rows, values, ids, classes).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{}\n", self.rows, self.cols);
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(i32::to_string).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Weak labels for every row: class posterior, hard label and coverage flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLabelOutput {
    /// `n x C`; rows of uncovered points are all zero.
    pub posterior: Matrix,
    /// Class index, or `-1` where uncovered.
    pub hard: Vec<i32>,
    pub covered: Vec<bool>,
    pub coverage: f64,
}

impl WeakLabelOutput {
    /// Output covering every row with hard label = posterior argmax.
    pub fn fully_covered(posterior: Matrix) -> Self {
        let hard = posterior.iter_rows().map(|r| argmax(r) as i32).collect();
        let n = posterior.rows();
        Self {
            posterior,
            hard,
            covered: vec![true; n],
            coverage: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.hard.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hard.is_empty()
    }

    /// Accuracy over covered rows; `None` when nothing is covered.
    pub fn accuracy_covered(&self, gold: &[usize]) -> Option<f64> {
        let mut hit = 0usize;
        let mut total = 0usize;
        for (i, &g) in gold.iter().enumerate() {
            if self.covered[i] {
                total += 1;
                hit += usize::from(self.hard[i] == g as i32);
            }
        }
        (total > 0).then(|| hit as f64 / total as f64)
    }

    /// Hard labels with uncovered rows filled according to `policy`.
    pub fn filled(&self, policy: FillPolicy, prior: &[f64], seed: u64) -> Vec<i32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let majority = argmax(prior) as i32;
        self.hard
            .iter()
            .zip(&self.covered)
            .map(|(&h, &c)| match (c, policy) {
                (true, _) | (false, FillPolicy::None) => h,
                (false, FillPolicy::MajorityClass) => majority,
                (false, FillPolicy::PriorSample) => sample_index(prior, rng.random::<f64>()) as i32,
            })
            .collect()
    }

    /// Accuracy over all rows after filling; rows still at `-1` count as errors.
    pub fn accuracy_all_with_fill(&self, gold: &[usize], policy: FillPolicy, prior: &[f64], seed: u64) -> f64 {
        if gold.is_empty() {
            return 0.0;
        }
        let filled = self.filled(policy, prior, seed);
        let hit = filled
            .iter()
            .zip(gold)
            .filter(|(&h, &g)| h == g as i32)
            .count();
        hit as f64 / gold.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let c = self.posterior.cols();
        let mut s = String::from("hard,covered");
        for j in 0..c {
            let _ = write!(s, ",p{j}");
        }
        s.push('\n');
        for i in 0..self.len() {
            let _ = write!(s, "{},{}", self.hard[i], u8::from(self.covered[i]));
            for v in self.posterior.row(i) {
                let _ = write!(s, ",{v:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn sample_index(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w / total;
        if u < acc {
            return i;
        }
    }
    weights.len().saturating_sub(1)
}

/// How uncovered rows are labeled when computing fill-policy accuracy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    #[default]
    None,
    PriorSample,
    MajorityClass,
}

/// Which aggregator to run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelModelKind {
    Majority,
    #[default]
    DawidSkene,
}

/// Concatenates two vote matrices side by side; ids get `primary:` and
/// `external:` prefixes.
pub fn merge_votes(primary: &VoteMatrix, external: &VoteMatrix) -> Result<VoteMatrix> {
    if primary.rows != external.rows {
        return Err(Error::ShapeMismatch(format!(
            "{} rows vs {} rows",
            primary.rows, external.rows
        )));
    }
    if primary.classes != external.classes {
        return Err(Error::ShapeMismatch(format!(
            "{} classes vs {} classes",
            primary.classes, external.classes
        )));
    }
    let mut values = Vec::with_capacity(primary.values.len() + external.values.len());
    for i in 0..primary.rows {
        values.extend_from_slice(primary.row(i));
        values.extend_from_slice(external.row(i));
    }
    let ids = primary
        .lf_ids
        .iter()
        .map(|id| format!("primary:{id}"))
        .chain(external.lf_ids.iter().map(|id| format!("external:{id}")))
        .collect();
    VoteMatrix::new(primary.rows, values, ids, primary.classes)
}

/// Fraction of rows with at least one non-abstain vote.
pub fn coverage(votes: &VoteMatrix) -> f64 {
    if votes.rows == 0 {
        return 0.0;
    }
    let covered = (0..votes.rows)
        .filter(|&i| votes.row(i).iter().any(|&v| v != ABSTAIN))
        .count();
    covered as f64 / votes.rows as f64
}

pub fn majority_vote(votes: &VoteMatrix) -> Result<WeakLabelOutput> {
    if votes.cols == 0 {
        return Err(Error::EmptyInput);
    }
    let (n, c) = (votes.rows, votes.classes);
    let mut posterior = Matrix::zeros(n, c);
    let mut hard = vec![ABSTAIN; n];
    let mut covered = vec![false; n];
    let mut counts = vec![0.0; c];
    for i in 0..n {
        counts.iter_mut().for_each(|x| *x = 0.0);
        let mut total = 0.0;
        for &v in votes.row(i) {
            if v != ABSTAIN {
                counts[v as usize] += 1.0;
                total += 1.0;
            }
        }
        if total > 0.0 {
            covered[i] = true;
            hard[i] = argmax(&counts) as i32;
            for (p, &k) in posterior.row_mut(i).iter_mut().zip(&counts) {
                *p = k / total;
            }
        }
    }
    Ok(finish(posterior, hard, covered))
}

fn finish(posterior: Matrix, hard: Vec<i32>, covered: Vec<bool>) -> WeakLabelOutput {
    let n = covered.len();
    let coverage = if n == 0 {
        0.0
    } else {
        covered.iter().filter(|&&c| c).count() as f64 / n as f64
    };
    WeakLabelOutput {
        posterior,
        hard,
        covered,
        coverage,
    }
}

/// Runs the configured aggregator with default settings.
pub fn aggregate(votes: &VoteMatrix, kind: LabelModelKind) -> Result<WeakLabelOutput> {
    match kind {
        LabelModelKind::Majority => majority_vote(votes),
        LabelModelKind::DawidSkene => dawid_skene_fit(votes, &DawidSkeneParams::default()).map(|(_, out)| out),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DawidSkeneParams {
    pub max_iter: usize,
    /// Stop once the log-likelihood gain of an iteration falls below this.
    pub tol: f64,
    /// Additive pseudo-count on the prior and every confusion cell.
    pub smoothing: f64,
    /// Treat an abstain as an observed outcome with its own confusion
    /// column. Without it, a source that only ever votes one class carries
    /// no information about the true class.
    pub model_abstains: bool,
}

impl Default for DawidSkeneParams {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
            smoothing: 0.01,
            model_abstains: true,
        }
    }
}

/// Fitted class prior and per-source confusion matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DawidSkeneModel {
    pub class_prior: Vec<f64>,
    /// One row-stochastic matrix per source: `P(vote = j | true = c)`. It is
    /// `C x (C + 1)` with abstain as the last column when abstains are
    /// modeled, `C x C` otherwise. Sources that never vote stay uniform and
    /// are ignored.
    pub confusion: Vec<Matrix>,
    /// Sources with at least one vote on a covered row.
    pub active_sources: Vec<bool>,
    pub model_abstains: bool,
    pub iterations_run: usize,
    /// Observed-data log-likelihood over covered rows at the final parameters.
    pub log_likelihood: f64,
    /// Log-likelihood after each iteration.
    pub log_likelihood_trace: Vec<f64>,
    /// Log-likelihood plus the smoothing (Dirichlet) log-prior after each
    /// iteration; this is the quantity EM increases monotonically.
    pub objective_trace: Vec<f64>,
}

/// Column of `vote` in a confusion matrix, or `None` if it is skipped.
fn outcome(vote: i32, classes: usize, model_abstains: bool) -> Option<usize> {
    match (vote, model_abstains) {
        (ABSTAIN, true) => Some(classes),
        (ABSTAIN, false) => None,
        (v, _) => Some(v as usize),
    }
}

struct Likelihood<'a> {
    log_prior: Vec<f64>,
    log_conf: Vec<Matrix>,
    active: &'a [bool],
    model_abstains: bool,
}

impl Likelihood<'_> {
    /// Writes the normalized posterior of one row into `out` and returns
    /// the row's log marginal likelihood.
    fn e_step_row(&self, row: &[i32], out: &mut [f64]) -> f64 {
        let c = out.len();
        for (cls, o) in out.iter_mut().enumerate() {
            let mut s = self.log_prior[cls];
            for (k, &v) in row.iter().enumerate() {
                if !self.active[k] {
                    continue;
                }
                if let Some(j) = outcome(v, c, self.model_abstains) {
                    s += self.log_conf[k].get(cls, j);
                }
            }
            *o = s;
        }
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let mut z = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            z += *o;
        }
        out.iter_mut().for_each(|o| *o /= z);
        max + z.ln()
    }
}

impl DawidSkeneModel {
    /// Posterior class probabilities for new vote rows under the fitted model.
    pub fn predict(&self, votes: &VoteMatrix) -> Result<WeakLabelOutput> {
        let c = self.class_prior.len();
        if votes.classes != c || votes.cols != self.confusion.len() {
            return Err(Error::ShapeMismatch(format!(
                "model has {} sources over {c} classes, votes have {} over {}",
                self.confusion.len(),
                votes.cols,
                votes.classes
            )));
        }
        let lik = Likelihood {
            log_prior: self.class_prior.iter().map(|p| p.ln()).collect(),
            log_conf: self.confusion.iter().map(ln_matrix).collect(),
            active: &self.active_sources,
            model_abstains: self.model_abstains,
        };
        let mut posterior = Matrix::zeros(votes.rows, c);
        let mut hard = vec![ABSTAIN; votes.rows];
        let mut covered = vec![false; votes.rows];
        for i in 0..votes.rows {
            if votes.row(i).iter().all(|&v| v == ABSTAIN) {
                continue;
            }
            covered[i] = true;
            lik.e_step_row(votes.row(i), posterior.row_mut(i));
            hard[i] = argmax(posterior.row(i)) as i32;
        }
        Ok(finish(posterior, hard, covered))
    }
}

fn ln_matrix(m: &Matrix) -> Matrix {
    let data = m.as_slice().iter().map(|v| v.ln()).collect();
    Matrix::from_vec(m.rows(), m.cols(), data).expect("same shape")
}

/// Dawid-Skene EM initialized from majority-vote posteriors.
///
/// Each iteration runs an M-step (smoothed prior and confusion estimates
/// from the current posteriors) followed by an E-step over covered rows.
/// Iteration stops after `max_iter` iterations or, from the second
/// iteration on, once the log-likelihood gain drops below `tol`.
pub fn dawid_skene_fit(votes: &VoteMatrix, params: &DawidSkeneParams) -> Result<(DawidSkeneModel, WeakLabelOutput)> {
    if votes.cols == 0 {
        return Err(Error::EmptyInput);
    }
    if params.smoothing < 0.0 || !params.smoothing.is_finite() {
        return Err(Error::InvalidArgument("smoothing must be a finite non-negative number".into()));
    }
    let (n, k_src, c) = (votes.rows, votes.cols, votes.classes);
    let s = params.smoothing;
    let width = if params.model_abstains { c + 1 } else { c };
    let mv = majority_vote(votes)?;
    let covered_rows: Vec<usize> = (0..n).filter(|&i| mv.covered[i]).collect();
    let active: Vec<bool> = (0..k_src)
        .map(|k| covered_rows.iter().any(|&i| votes.get(i, k) != ABSTAIN))
        .collect();

    let mut post = mv.posterior.clone();
    let mut prior = vec![1.0 / c as f64; c];
    let mut confusion = vec![Matrix::from_vec(c, width, vec![1.0 / width as f64; c * width]).expect("shape"); k_src];
    let mut ll_trace = Vec::new();
    let mut obj_trace = Vec::new();

    for _ in 0..params.max_iter {
        // M-step
        let mut mass = vec![s; c];
        for &i in &covered_rows {
            for (m, p) in mass.iter_mut().zip(post.row(i)) {
                *m += p;
            }
        }
        let total: f64 = mass.iter().sum();
        for (p, m) in prior.iter_mut().zip(&mass) {
            *p = if total > 0.0 { m / total } else { 1.0 / c as f64 };
        }
        for (k, conf) in confusion.iter_mut().enumerate() {
            if !active[k] {
                continue;
            }
            let mut counts = Matrix::from_vec(c, width, vec![s; c * width]).expect("shape");
            for &i in &covered_rows {
                let Some(j) = outcome(votes.get(i, k), c, params.model_abstains) else {
                    continue;
                };
                for (cls, p) in post.row(i).iter().enumerate() {
                    counts.set(cls, j, counts.get(cls, j) + p);
                }
            }
            for cls in 0..c {
                let row = counts.row_mut(cls);
                let z: f64 = row.iter().sum();
                if z > 0.0 {
                    row.iter_mut().for_each(|x| *x /= z);
                } else {
                    row.iter_mut().for_each(|x| *x = 1.0 / width as f64);
                }
            }
            *conf = counts;
        }

        // E-step
        let lik = Likelihood {
            log_prior: prior.iter().map(|p| p.ln()).collect(),
            log_conf: confusion.iter().map(ln_matrix).collect(),
            active: &active,
            model_abstains: params.model_abstains,
        };
        let mut ll = 0.0;
        for &i in &covered_rows {
            ll += lik.e_step_row(votes.row(i), post.row_mut(i));
        }
        if !ll.is_finite() && !covered_rows.is_empty() {
            return Err(Error::NonFiniteLikelihood);
        }
        let mut obj = ll;
        if s > 0.0 {
            obj += s * lik.log_prior.iter().sum::<f64>();
            obj += s * lik
                .log_conf
                .iter()
                .zip(&active)
                .filter(|(_, &a)| a)
                .map(|(m, _)| m.as_slice().iter().sum::<f64>())
                .sum::<f64>();
        }
        let gain = ll - ll_trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        ll_trace.push(ll);
        obj_trace.push(obj);
        if ll_trace.len() > 1 && gain < params.tol {
            break;
        }
    }

    let mut hard = vec![ABSTAIN; n];
    for &i in &covered_rows {
        hard[i] = argmax(post.row(i)) as i32;
    }
    let model = DawidSkeneModel {
        class_prior: prior,
        confusion,
        active_sources: active,
        model_abstains: params.model_abstains,
        iterations_run: ll_trace.len(),
        log_likelihood: ll_trace.last().copied().unwrap_or(0.0),
        log_likelihood_trace: ll_trace,
        objective_trace: obj_trace,
    };
    Ok((model, finish(post, hard, mv.covered)))
}
