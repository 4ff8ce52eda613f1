//! Labeling-function synthesis.
//!
//! Candidates are (learner family, feature subset) pairs. Synthesis trains
//! every candidate on the still-active labeled points, commits the best one
//! by a weighted metric score on the full labeled set, fits its abstain
//! margin, and deactivates the labeled points it already labels correctly.
//! Unipolar mode runs that loop once per class on a one-vs-rest problem and
//! emits LFs that vote only for their class; multipolar mode runs it once
//! over all classes.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, FeatureMatrix};
use crate::error::{Error, Result};
use crate::eval::{Metric, MetricWeights};
use crate::label_model::{VoteMatrix, ABSTAIN};
use crate::learners::{self, LearnerConfig, LearnerKind, WeakLearner};
use crate::matrix::{argmax, Matrix};

/// Abstain margins tried by [`fit_abstain_margin`]: 0.00, 0.05, ..., 0.45.
pub fn margin_grid() -> Vec<f64> {
    (0..10).map(|i| i as f64 * 0.05).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Polarity {
    /// Votes only for `target` or abstains.
    Unipolar { target: usize },
    Multipolar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnubaMode {
    Unipolar,
    Multipolar,
}

/// A trained learner plus its abstain policy. The learner of a unipolar LF
/// is binary: class 1 is the target, class 0 the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingFunction {
    pub id: String,
    pub learner: WeakLearner,
    pub polarity: Polarity,
    /// Abstain when the top probability is below `1 / C' + beta`, where
    /// `C'` is the learner's class count.
    pub beta: f64,
}

impl LabelingFunction {
    pub fn new(id: String, learner: WeakLearner, polarity: Polarity, beta: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&beta) {
            return Err(Error::InvalidArgument(format!("abstain margin {beta} outside [0, 0.5)")));
        }
        if matches!(polarity, Polarity::Unipolar { .. }) && learner.classes != 2 {
            return Err(Error::InvalidArgument("unipolar LFs need a binary learner".into()));
        }
        Ok(Self {
            id,
            learner,
            polarity,
            beta,
        })
    }

    /// Votes for each row of full-width features; `-1` is abstain.
    pub fn votes(&self, x: &Matrix) -> Result<Vec<i32>> {
        let p = self.learner.predict_proba(x)?;
        Ok(votes_from_proba(&p, self.beta, self.polarity))
    }
}

fn votes_from_proba(p: &Matrix, beta: f64, polarity: Polarity) -> Vec<i32> {
    let floor = 1.0 / p.cols() as f64 + beta;
    p.iter_rows()
        .map(|row| {
            let top = argmax(row);
            if row[top] < floor {
                return ABSTAIN;
            }
            match polarity {
                Polarity::Multipolar => top as i32,
                Polarity::Unipolar { target } if top == 1 => target as i32,
                Polarity::Unipolar { .. } => ABSTAIN,
            }
        })
        .collect()
}

/// One candidate: a learner family on a feature subset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateDescriptor {
    pub kind: LearnerKind,
    pub subset: Vec<usize>,
}

impl CandidateDescriptor {
    pub fn tag(&self) -> String {
        let s: Vec<String> = self.subset.iter().map(usize::to_string).collect();
        format!("{}-{}", self.kind, s.join("_"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    /// Features per candidate (`D`).
    pub cardinality: usize,
    /// Upper bound on the number of candidates.
    pub max_candidates: usize,
    pub kinds: Vec<LearnerKind>,
    pub selection_weights: MetricWeights,
    pub threshold_weights: MetricWeights,
    pub max_lfs_per_class: usize,
    pub min_improvement: f64,
    pub seed: u64,
    pub learner: LearnerConfig,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            cardinality: 1,
            max_candidates: 1000,
            kinds: vec![LearnerKind::Stump, LearnerKind::Logistic],
            selection_weights: MetricWeights::one_hot(Metric::MicroF1),
            threshold_weights: MetricWeights::one_hot(Metric::WeightedF1),
            max_lfs_per_class: 3,
            min_improvement: 0.02,
            seed: 0,
            learner: LearnerConfig::default(),
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.cardinality == 0 {
            return Err(Error::InvalidArgument("cardinality must be at least 1".into()));
        }
        if self.cardinality > d {
            return Err(Error::InvalidArgument(format!(
                "cardinality {} exceeds feature dimension {d}",
                self.cardinality
            )));
        }
        if self.max_candidates == 0 {
            return Err(Error::InvalidArgument("max_candidates must be at least 1".into()));
        }
        if self.kinds.is_empty() {
            return Err(Error::InvalidArgument("no learner kinds configured".into()));
        }
        Ok(())
    }
}

/// Per-iteration synthesis record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRecord {
    /// Target class in unipolar mode.
    pub class: Option<usize>,
    pub iteration: usize,
    pub candidates: usize,
    pub active: usize,
    pub chosen: Option<String>,
    pub score: f64,
    pub stop: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LFSet {
    pub classes: usize,
    pub lfs: Vec<LabelingFunction>,
    pub synthesis_log: Vec<SynthesisRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<SynthesisConfig>,
}

impl LFSet {
    pub fn empty(classes: usize) -> Self {
        Self {
            classes,
            lfs: Vec::new(),
            synthesis_log: Vec::new(),
            config: None,
        }
    }

    pub fn len(&self) -> usize {
        self.lfs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lfs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&LabelingFunction> {
        self.lfs.iter().find(|lf| lf.id == id)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<LFSet> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: LFSet = serde_json::from_str(&text)?;
        let ids: BTreeSet<&str> = set.lfs.iter().map(|l| l.id.as_str()).collect();
        if ids.len() != set.lfs.len() {
            return Err(Error::InvalidArgument("duplicate LF ids".into()));
        }
        Ok(set)
    }
}

/// `C(n, k)`, or `None` on overflow.
pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// The `index`-th `k`-subset of `0..n` in lexicographic order.
fn unrank_subset(mut index: u128, n: usize, k: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut v = 0;
    for i in 0..k {
        loop {
            let rest = binomial(n - v - 1, k - i - 1).expect("fits when total fits");
            if index < rest {
                break;
            }
            index -= rest;
            v += 1;
        }
        out.push(v);
        v += 1;
    }
    out
}

fn next_subset(s: &mut [usize], n: usize) -> bool {
    let k = s.len();
    for i in (0..k).rev() {
        if s[i] < n - k + i {
            s[i] += 1;
            for j in i + 1..k {
                s[j] = s[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Candidate descriptors for a `d`-dimensional problem. Every subset is
/// enumerated when that yields at most `max_candidates` candidates;
/// otherwise `max_candidates / |kinds|` distinct subsets are drawn
/// uniformly with the config seed. Subsets come out in lexicographic order,
/// each paired with every configured kind.
pub fn candidates_for_dim(d: usize, config: &SynthesisConfig) -> Result<Vec<CandidateDescriptor>> {
    config.validate(d)?;
    let k = config.cardinality;
    let kinds = &config.kinds;
    let total = binomial(d, k);
    let enumerate_all = total
        .and_then(|t| t.checked_mul(kinds.len() as u128))
        .is_some_and(|c| c <= config.max_candidates as u128);
    let subsets: Vec<Vec<usize>> = if enumerate_all {
        let mut s: Vec<usize> = (0..k).collect();
        let mut out = vec![s.clone()];
        while next_subset(&mut s, d) {
            out.push(s.clone());
        }
        out
    } else {
        let want = (config.max_candidates / kinds.len()).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        match total {
            Some(t) if t <= usize::MAX as u128 => {
                let mut picked: Vec<usize> = index::sample(&mut rng, t as usize, want).into_vec();
                picked.sort_unstable();
                picked.into_iter().map(|i| unrank_subset(i as u128, d, k)).collect()
            }
            _ => {
                let mut seen = BTreeSet::new();
                while seen.len() < want {
                    let mut s = index::sample(&mut rng, d, k).into_vec();
                    s.sort_unstable();
                    seen.insert(s);
                }
                seen.into_iter().collect()
            }
        }
    };
    Ok(subsets
        .into_iter()
        .flat_map(|s| {
            kinds.iter().map(move |&kind| CandidateDescriptor {
                kind,
                subset: s.clone(),
            })
        })
        .collect())
}

pub fn generate_candidates(bundle: &DatasetBundle, config: &SynthesisConfig) -> Result<Vec<CandidateDescriptor>> {
    candidates_for_dim(bundle.dim(), config)
}

/// Picks the abstain margin from [`margin_grid`] that maximizes the weighted
/// metric on the points it leaves covered. Ties go to the smaller margin.
/// Returns `(beta, score)`.
pub fn fit_abstain_margin(probas: &Matrix, y: &[usize], weights: &MetricWeights) -> (f64, f64) {
    let c = probas.cols() as f64;
    let pred: Vec<usize> = probas.iter_rows().map(argmax).collect();
    let top: Vec<f64> = probas.iter_rows().zip(&pred).map(|(r, &p)| r[p]).collect();
    let mut best = (0.0, f64::NEG_INFINITY);
    for beta in margin_grid() {
        let covered: Vec<bool> = top.iter().map(|&t| t >= 1.0 / c + beta).collect();
        let s = weights.score(&pred, y, &covered);
        if s > best.1 {
            best = (beta, s);
        }
    }
    best
}

/// Draws `count` weight vectors from the flat Dirichlet over the nine
/// metrics by normalizing unit-rate exponential draws.
pub fn sample_metric_weights(seed: u64, count: usize) -> Vec<MetricWeights> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut w = [0.0; 9];
            for x in w.iter_mut() {
                *x = Exp1.sample(&mut rng);
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            MetricWeights::new(w).expect("normalized draw")
        })
        .collect()
}

/// Votes of every LF, one column each.
pub fn apply_lfset(lfset: &LFSet, features: &FeatureMatrix) -> Result<VoteMatrix> {
    let columns = lfset
        .lfs
        .par_iter()
        .map(|lf| lf.votes(features.values()))
        .collect::<Result<Vec<_>>>()?;
    let ids = lfset.lfs.iter().map(|lf| lf.id.clone()).collect();
    VoteMatrix::from_columns(&columns, ids, lfset.classes)
}

struct Problem<'a> {
    x: &'a Matrix,
    /// Labels in the learner's class space.
    y: Vec<usize>,
    /// Learner class count.
    classes: usize,
    polarity: Polarity,
    /// Original labels, for deciding which points a vote labels correctly.
    truth: &'a [usize],
    chance: f64,
}

/// Runs one select-and-deactivate loop, appending LFs and log records.
fn synthesis_loop(
    problem: &Problem<'_>,
    candidates: &[CandidateDescriptor],
    config: &SynthesisConfig,
    max_lfs: usize,
    out: &mut LFSet,
) -> Result<()> {
    let m = problem.y.len();
    let class = match problem.polarity {
        Polarity::Unipolar { target } => Some(target),
        Polarity::Multipolar => None,
    };
    let mut active = vec![true; m];
    // unipolar loops only make progress on the target's own points
    let counts_as_progress = |i: usize| match problem.polarity {
        Polarity::Unipolar { target } => problem.truth[i] == target,
        Polarity::Multipolar => true,
    };
    let all: Vec<bool> = vec![true; m];
    for iteration in 0..max_lfs {
        let mut record = SynthesisRecord {
            class,
            iteration,
            candidates: candidates.len(),
            active: active.iter().filter(|&&a| a).count(),
            chosen: None,
            score: 0.0,
            stop: None,
        };
        if !(0..m).any(|i| active[i] && counts_as_progress(i)) {
            record.stop = Some("no active labeled points".into());
            out.synthesis_log.push(record);
            return Ok(());
        }
        let idx: Vec<usize> = (0..m).filter(|&i| active[i]).collect();
        let xa = problem.x.select_rows(&idx);
        let ya: Vec<usize> = idx.iter().map(|&i| problem.y[i]).collect();

        let trained: Vec<Option<(WeakLearner, Matrix, f64)>> = candidates
            .par_iter()
            .map(|cand| {
                let learner =
                    learners::train(cand.kind, &xa, &cand.subset, &ya, problem.classes, &config.learner).ok()?;
                let proba = learner.predict_proba(problem.x).ok()?;
                let pred: Vec<usize> = proba.iter_rows().map(argmax).collect();
                let score = config.selection_weights.score(&pred, &problem.y, &all);
                Some((learner, proba, score))
            })
            .collect();
        let mut best: Option<usize> = None;
        for (i, t) in trained.iter().enumerate() {
            if let Some((_, _, s)) = t {
                if best.is_none_or(|b| *s > trained[b].as_ref().expect("scored").2) {
                    best = Some(i);
                }
            }
        }
        let Some(b) = best else {
            return Err(Error::NoTrainableCandidate);
        };
        let (learner, proba, score) = trained.into_iter().nth(b).flatten().expect("best exists");
        record.score = score;
        if score <= problem.chance + config.min_improvement {
            record.stop = Some("best score at chance level".into());
            out.synthesis_log.push(record);
            return Ok(());
        }
        let (beta, _) = fit_abstain_margin(&proba, &problem.y, &config.threshold_weights);
        let prefix = match class {
            Some(c) => format!("u{c}"),
            None => "m".to_string(),
        };
        let id = format!("{prefix}-{iteration}-{}", candidates[b].tag());
        let lf = LabelingFunction::new(id.clone(), learner, problem.polarity, beta)?;
        let votes = votes_from_proba(&proba, beta, problem.polarity);
        let mut progressed = false;
        for i in 0..m {
            if active[i] && votes[i] != ABSTAIN && votes[i] == problem.truth[i] as i32 {
                active[i] = false;
                progressed |= counts_as_progress(i);
            }
        }
        record.chosen = Some(id);
        out.lfs.push(lf);
        if !progressed {
            record.stop = Some("committed LF labels no active point".into());
            out.synthesis_log.push(record);
            return Ok(());
        }
        out.synthesis_log.push(record);
    }
    Ok(())
}

/// Synthesizes an LF set from the bundle's labeled validation split.
pub fn snuba_synthesize(bundle: &DatasetBundle, config: &SynthesisConfig, mode: SnubaMode) -> Result<LFSet> {
    let y = bundle.val_labels.values();
    if y.is_empty() {
        return Err(Error::EmptyValidation);
    }
    let classes = bundle.classes();
    let candidates = generate_candidates(bundle, config)?;
    let x = bundle.val_features.values();
    let mut out = LFSet::empty(classes);
    out.config = Some(config.clone());
    match mode {
        SnubaMode::Multipolar => {
            let problem = Problem {
                x,
                y: y.to_vec(),
                classes,
                polarity: Polarity::Multipolar,
                truth: y,
                chance: 1.0 / classes as f64,
            };
            synthesis_loop(&problem, &candidates, config, config.max_lfs_per_class, &mut out)?;
        }
        SnubaMode::Unipolar => {
            for target in 0..classes {
                let binary: Vec<usize> = y.iter().map(|&c| usize::from(c == target)).collect();
                let prior = binary.iter().sum::<usize>() as f64 / y.len() as f64;
                let problem = Problem {
                    x,
                    y: binary,
                    classes: 2,
                    polarity: Polarity::Unipolar { target },
                    truth: y,
                    chance: prior,
                };
                synthesis_loop(&problem, &candidates, config, config.max_lfs_per_class, &mut out)?;
            }
        }
    }
    Ok(out)
}

/// Trains one unipolar LF per (class, candidate) on all labeled points,
/// each with its own fitted margin, without any selection.
pub fn unipolar_pool(
    bundle: &DatasetBundle,
    candidates: &[CandidateDescriptor],
    config: &SynthesisConfig,
) -> Result<Vec<LabelingFunction>> {
    let y = bundle.val_labels.values();
    if y.is_empty() {
        return Err(Error::EmptyValidation);
    }
    let x = bundle.val_features.values();
    let jobs: Vec<(usize, &CandidateDescriptor)> = (0..bundle.classes())
        .flat_map(|c| candidates.iter().map(move |d| (c, d)))
        .collect();
    let lfs: Vec<Option<LabelingFunction>> = jobs
        .par_iter()
        .map(|&(target, cand)| {
            let binary: Vec<usize> = y.iter().map(|&c| usize::from(c == target)).collect();
            let learner = learners::train(cand.kind, x, &cand.subset, &binary, 2, &config.learner).ok()?;
            let proba = learner.predict_proba(x).ok()?;
            let (beta, _) = fit_abstain_margin(&proba, &binary, &config.threshold_weights);
            LabelingFunction::new(
                format!("c{target}-{}", cand.tag()),
                learner,
                Polarity::Unipolar { target },
                beta,
            )
            .ok()
        })
        .collect();
    Ok(lfs.into_iter().flatten().collect())
}
