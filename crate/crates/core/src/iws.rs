//! Selection from a pre-generated pool of unipolar candidate LFs, either by
//! an automated accuracy threshold or through an interactive vetting
//! session driven one candidate at a time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::label_model::ABSTAIN;
use crate::lf::{self, LFSet, LabelingFunction, Polarity, SynthesisConfig};

/// Pools smaller than this are reported as incompatible with the method.
pub const DEFAULT_MIN_POOL: usize = 10;

/// Validation-set statistics shown for a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateStats {
    pub coverage: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

impl CandidateStats {
    pub fn priority(&self) -> f64 {
        self.accuracy * self.coverage
    }
}

/// Builds the candidate pool: one unipolar LF per (class, descriptor).
pub fn build_pool(bundle: &DatasetBundle, config: &SynthesisConfig, min_pool: usize) -> Result<LFSet> {
    let candidates = lf::generate_candidates(bundle, config)?;
    let lfs = lf::unipolar_pool(bundle, &candidates, config)?;
    if lfs.is_empty() || lfs.len() < min_pool {
        return Err(Error::PoolTooSmall {
            size: lfs.len(),
            min: min_pool,
        });
    }
    Ok(LFSet {
        classes: bundle.classes(),
        lfs,
        synthesis_log: Vec::new(),
        config: Some(config.clone()),
    })
}

/// Coverage, precision, recall and accuracy on the labeled split. Precision
/// and recall are for the target class of a unipolar LF, macro-averaged over
/// voted classes otherwise; accuracy is over covered points.
pub fn compute_stats(lf: &LabelingFunction, bundle: &DatasetBundle) -> Result<CandidateStats> {
    let votes = lf.votes(bundle.val_features.values())?;
    Ok(stats_from_votes(&votes, bundle.val_labels.values(), lf.polarity))
}

pub fn stats_from_votes(votes: &[i32], gold: &[usize], polarity: Polarity) -> CandidateStats {
    let m = gold.len();
    let covered: Vec<usize> = (0..m).filter(|&i| votes[i] != ABSTAIN).collect();
    if covered.is_empty() || m == 0 {
        return CandidateStats {
            coverage: 0.0,
            precision: 0.0,
            recall: 0.0,
            accuracy: 0.0,
        };
    }
    let correct = covered.iter().filter(|&&i| votes[i] == gold[i] as i32).count() as f64;
    let pr = |c: usize| -> (f64, f64) {
        let tp = covered
            .iter()
            .filter(|&&i| votes[i] == c as i32 && gold[i] == c)
            .count() as f64;
        let predicted = covered.iter().filter(|&&i| votes[i] == c as i32).count() as f64;
        let actual = gold.iter().filter(|&&g| g == c).count() as f64;
        let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let r = if actual > 0.0 { tp / actual } else { 0.0 };
        (p, r)
    };
    let (precision, recall) = match polarity {
        Polarity::Unipolar { target } => pr(target),
        Polarity::Multipolar => {
            let mut voted: Vec<usize> = covered.iter().map(|&i| votes[i] as usize).collect();
            voted.sort_unstable();
            voted.dedup();
            let sums = voted.iter().map(|&c| pr(c)).fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
            (sums.0 / voted.len() as f64, sums.1 / voted.len() as f64)
        }
    };
    CandidateStats {
        coverage: covered.len() as f64 / m as f64,
        precision,
        recall,
        accuracy: correct / covered.len() as f64,
    }
}

/// `max(0.5, 1/C) + 0.1`.
pub fn default_threshold(classes: usize) -> f64 {
    0.5f64.max(1.0 / classes as f64) + 0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Useful,
    NotUseful,
    Pending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Automated,
    Interactive,
}

/// One line of the replayable verdict log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub lf_id: String,
    pub useful: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStatus {
    Ok,
    /// Nothing was selected; downstream aggregation has no sources.
    EmptyWarning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub lfset: LFSet,
    pub status: SelectionStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub pool: LFSet,
    /// Pool ids by descending `accuracy * coverage`, ties by id.
    pub order: Vec<String>,
    pub stats: BTreeMap<String, CandidateStats>,
    pub verdicts: BTreeMap<String, Verdict>,
    pub log: Vec<VerdictRecord>,
    pub mode: SessionMode,
    pub threshold: f64,
    pub finalized: bool,
}

/// Next step of an interactive session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NextCandidate {
    Candidate { lf_id: String, stats: CandidateStats },
    Done { done: bool },
}

impl SessionState {
    pub fn new(pool: LFSet, bundle: &DatasetBundle, mode: SessionMode, threshold: f64) -> Result<Self> {
        let stats: BTreeMap<String, CandidateStats> = pool
            .lfs
            .iter()
            .map(|lf| Ok((lf.id.clone(), compute_stats(lf, bundle)?)))
            .collect::<Result<_>>()?;
        if stats.len() != pool.lfs.len() {
            return Err(Error::InvalidArgument("duplicate candidate ids in pool".into()));
        }
        let mut order: Vec<String> = stats.keys().cloned().collect();
        order.sort_by(|a, b| {
            stats[b]
                .priority()
                .total_cmp(&stats[a].priority())
                .then_with(|| a.cmp(b))
        });
        let verdicts = order.iter().map(|id| (id.clone(), Verdict::Pending)).collect();
        Ok(Self {
            pool,
            order,
            stats,
            verdicts,
            log: Vec::new(),
            mode,
            threshold,
            finalized: false,
        })
    }

    pub fn pending(&self) -> usize {
        self.verdicts.values().filter(|v| **v == Verdict::Pending).count()
    }

    pub fn decided(&self) -> usize {
        self.verdicts.len() - self.pending()
    }

    /// Highest-priority pending candidate, or done.
    pub fn next(&self) -> Result<NextCandidate> {
        if self.finalized {
            return Err(Error::SessionFinalized);
        }
        if self.mode != SessionMode::Interactive {
            return Err(Error::WrongMode("interactive"));
        }
        Ok(self
            .order
            .iter()
            .find(|id| self.verdicts[*id] == Verdict::Pending)
            .map_or(NextCandidate::Done { done: true }, |id| NextCandidate::Candidate {
                lf_id: id.clone(),
                stats: self.stats[id],
            }))
    }

    /// Records a verdict exactly once per candidate.
    pub fn verdict(&mut self, lf_id: &str, useful: bool) -> Result<()> {
        if self.finalized {
            return Err(Error::SessionFinalized);
        }
        let v = self
            .verdicts
            .get_mut(lf_id)
            .ok_or_else(|| Error::UnknownCandidate(lf_id.to_string()))?;
        if *v != Verdict::Pending {
            return Err(Error::AlreadyDecided(lf_id.to_string()));
        }
        *v = if useful { Verdict::Useful } else { Verdict::NotUseful };
        self.log.push(VerdictRecord {
            lf_id: lf_id.to_string(),
            useful,
        });
        Ok(())
    }

    /// Closes the session. Useful candidates are returned by descending
    /// validation accuracy, ties by id; anything still pending is dropped.
    pub fn finalize(&mut self) -> Result<Selection> {
        if self.finalized {
            return Err(Error::SessionFinalized);
        }
        self.finalized = true;
        Ok(self.selection())
    }

    fn selection(&self) -> Selection {
        let mut chosen: Vec<&LabelingFunction> = self
            .pool
            .lfs
            .iter()
            .filter(|lf| self.verdicts[&lf.id] == Verdict::Useful)
            .collect();
        chosen.sort_by(|a, b| {
            self.stats[&b.id]
                .accuracy
                .total_cmp(&self.stats[&a.id].accuracy)
                .then_with(|| a.id.cmp(&b.id))
        });
        let lfset = LFSet {
            classes: self.pool.classes,
            lfs: chosen.into_iter().cloned().collect(),
            synthesis_log: Vec::new(),
            config: self.pool.config.clone(),
        };
        let status = if lfset.is_empty() {
            SelectionStatus::EmptyWarning
        } else {
            SelectionStatus::Ok
        };
        Selection { lfset, status }
    }

    /// The verdict log as newline-delimited JSON.
    pub fn log_ndjson(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.log {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        Ok(s)
    }
}

/// Applies the threshold rule to every candidate: useful iff accuracy is at
/// least the threshold and coverage is positive.
pub fn run_automated(session: &mut SessionState) -> Result<Selection> {
    if session.mode != SessionMode::Automated {
        return Err(Error::WrongMode("automated"));
    }
    let t = session.threshold;
    for id in session.order.clone() {
        if session.verdicts[&id] == Verdict::Pending {
            let s = session.stats[&id];
            session.verdict(&id, s.accuracy >= t && s.coverage > 0.0)?;
        }
    }
    session.finalize()
}

/// Parses a newline-delimited verdict log.
pub fn parse_verdict_log(text: &str) -> Result<Vec<VerdictRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Rebuilds a session's final selection from its verdict log.
pub fn replay(session: SessionState, log: &[VerdictRecord]) -> Result<Selection> {
    let mut session = SessionState {
        mode: SessionMode::Interactive,
        ..session
    };
    for r in log {
        session.verdict(&r.lf_id, r.useful)?;
    }
    session.finalize()
}
