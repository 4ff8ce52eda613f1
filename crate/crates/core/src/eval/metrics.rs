use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The nine classification metrics available for LF selection and
/// abstain-threshold fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MicroF1,
    WeightedF1,
    Accuracy,
    BalancedAccuracy,
    Precision,
    Recall,
    CohenKappa,
    Jaccard,
    Matthews,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::MicroF1,
        Metric::WeightedF1,
        Metric::Accuracy,
        Metric::BalancedAccuracy,
        Metric::Precision,
        Metric::Recall,
        Metric::CohenKappa,
        Metric::Jaccard,
        Metric::Matthews,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Metric::MicroF1 => "micro_f1",
            Metric::WeightedF1 => "weighted_f1",
            Metric::Accuracy => "accuracy",
            Metric::BalancedAccuracy => "balanced_accuracy",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::CohenKappa => "cohen_kappa",
            Metric::Jaccard => "jaccard",
            Metric::Matthews => "matthews",
        }
    }

    pub fn index(self) -> usize {
        Metric::ALL.iter().position(|&m| m == self).expect("listed")
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .iter()
            .copied()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

/// Confusion counts over the covered points, restricted to the labels that
/// occur in either gold or predictions.
#[derive(Debug, Clone)]
pub struct Confusion {
    /// Sorted label universe.
    pub labels: Vec<usize>,
    /// `counts[t][p]` indexes into `labels`.
    pub counts: Vec<Vec<f64>>,
    pub total: f64,
}

impl Confusion {
    pub fn new(pred: &[usize], gold: &[usize], covered: &[bool]) -> Confusion {
        let mut labels: Vec<usize> = pred
            .iter()
            .zip(gold)
            .zip(covered)
            .filter(|(_, &c)| c)
            .flat_map(|((&p, &g), _)| [p, g])
            .collect();
        labels.sort_unstable();
        labels.dedup();
        let l = labels.len();
        let pos = |x: usize| labels.binary_search(&x).expect("in universe");
        let mut counts = vec![vec![0.0; l]; l];
        let mut total = 0.0;
        for ((&p, &g), &c) in pred.iter().zip(gold).zip(covered) {
            if c {
                counts[pos(g)][pos(p)] += 1.0;
                total += 1.0;
            }
        }
        Confusion { labels, counts, total }
    }

    fn true_count(&self, i: usize) -> f64 {
        self.counts[i].iter().sum()
    }

    fn pred_count(&self, j: usize) -> f64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    fn correct(&self) -> f64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn per_class(cm: &Confusion) -> Vec<(f64, f64, f64, f64)> {
    // (precision, recall, f1, jaccard) per label
    (0..cm.labels.len())
        .map(|i| {
            let tp = cm.counts[i][i];
            let t = cm.true_count(i);
            let p = cm.pred_count(i);
            let prec = ratio(tp, p);
            let rec = ratio(tp, t);
            let f1 = ratio(2.0 * tp, t + p);
            let jac = ratio(tp, t + p - tp);
            (prec, rec, f1, jac)
        })
        .collect()
}

/// Scores predictions on the covered points. Precision, recall and Jaccard
/// are macro-averaged over the labels present in gold or predictions;
/// balanced accuracy averages recall over labels present in gold. Kappa and
/// MCC are 0 when undefined. An empty covered set scores 0.
pub fn score(metric: Metric, pred: &[usize], gold: &[usize], covered: &[bool]) -> f64 {
    let cm = Confusion::new(pred, gold, covered);
    score_confusion(metric, &cm)
}

pub fn score_by_id(metric: &str, pred: &[usize], gold: &[usize], covered: &[bool]) -> Result<f64> {
    Ok(score(metric.parse()?, pred, gold, covered))
}

pub fn score_confusion(metric: Metric, cm: &Confusion) -> f64 {
    let n = cm.total;
    if n == 0.0 {
        return 0.0;
    }
    let l = cm.labels.len();
    let pc = per_class(cm);
    let macro_avg = |f: &dyn Fn(&(f64, f64, f64, f64)) -> f64| pc.iter().map(f).sum::<f64>() / l as f64;
    match metric {
        Metric::Accuracy | Metric::MicroF1 => cm.correct() / n,
        Metric::WeightedF1 => (0..l).map(|i| pc[i].2 * cm.true_count(i)).sum::<f64>() / n,
        Metric::BalancedAccuracy => {
            let present: Vec<usize> = (0..l).filter(|&i| cm.true_count(i) > 0.0).collect();
            present.iter().map(|&i| pc[i].1).sum::<f64>() / present.len() as f64
        }
        Metric::Precision => macro_avg(&|x| x.0),
        Metric::Recall => macro_avg(&|x| x.1),
        Metric::Jaccard => macro_avg(&|x| x.3),
        Metric::CohenKappa => {
            let po = cm.correct() / n;
            let pe: f64 = (0..l).map(|i| cm.true_count(i) * cm.pred_count(i)).sum::<f64>() / (n * n);
            if (1.0 - pe).abs() < 1e-15 {
                0.0
            } else {
                (po - pe) / (1.0 - pe)
            }
        }
        Metric::Matthews => {
            let c = cm.correct();
            let sum_pt: f64 = (0..l).map(|i| cm.pred_count(i) * cm.true_count(i)).sum();
            let sum_p2: f64 = (0..l).map(|i| cm.pred_count(i).powi(2)).sum();
            let sum_t2: f64 = (0..l).map(|i| cm.true_count(i).powi(2)).sum();
            let den = ((n * n - sum_p2) * (n * n - sum_t2)).sqrt();
            if den == 0.0 {
                0.0
            } else {
                (c * n - sum_pt) / den
            }
        }
    }
}

/// Convex combination of the nine metrics, serialized as a plain array in
/// [`Metric::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 9]", try_from = "[f64; 9]")]
pub struct MetricWeights {
    weights: [f64; 9],
}

impl TryFrom<[f64; 9]> for MetricWeights {
    type Error = Error;

    fn try_from(weights: [f64; 9]) -> Result<Self> {
        Self::new(weights)
    }
}

impl From<MetricWeights> for [f64; 9] {
    fn from(w: MetricWeights) -> Self {
        w.weights
    }
}

impl MetricWeights {
    pub fn new(weights: [f64; 9]) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("metric weights must be non-negative".into()));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() >= 1e-9 {
            return Err(Error::InvalidArgument(format!("metric weights sum to {s}, not 1")));
        }
        Ok(Self { weights })
    }

    pub fn one_hot(metric: Metric) -> Self {
        let mut weights = [0.0; 9];
        weights[metric.index()] = 1.0;
        Self { weights }
    }

    pub fn weights(&self) -> &[f64; 9] {
        &self.weights
    }

    pub fn weight(&self, m: Metric) -> f64 {
        self.weights[m.index()]
    }

    pub fn score(&self, pred: &[usize], gold: &[usize], covered: &[bool]) -> f64 {
        let cm = Confusion::new(pred, gold, covered);
        Metric::ALL
            .iter()
            .filter(|m| self.weight(**m) > 0.0)
            .map(|&m| self.weight(m) * score_confusion(m, &cm))
            .sum()
    }
}

/// Classification error over all rows, for building objective tables.
pub fn classification_error(pred: &[usize], gold: &[usize]) -> f64 {
    if gold.is_empty() {
        return 1.0;
    }
    let wrong = pred.iter().zip(gold).filter(|(p, g)| p != g).count();
    wrong as f64 / gold.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all(n: usize) -> Vec<bool> {
        vec![true; n]
    }

    #[test]
    fn perfect_predictions() {
        let g = [0, 1, 2, 1, 0];
        for m in Metric::ALL {
            assert!((score(m, &g, &g, &all(5)) - 1.0).abs() < 1e-12, "{m}");
        }
        let single = [1, 1, 1];
        assert_eq!(score(Metric::CohenKappa, &single, &single, &all(3)), 0.0);
        assert_eq!(score(Metric::Matthews, &single, &single, &all(3)), 0.0);
    }

    #[test]
    fn constant_prediction_on_balanced_gold() {
        let g = [0, 1, 0, 1];
        let p = [0, 0, 0, 0];
        assert_eq!(score(Metric::Accuracy, &p, &g, &all(4)), 0.5);
        assert_eq!(score(Metric::CohenKappa, &p, &g, &all(4)), 0.0);
        assert_eq!(score(Metric::Matthews, &p, &g, &all(4)), 0.0);
    }

    #[test]
    fn empty_coverage_scores_zero() {
        assert_eq!(score(Metric::Accuracy, &[0, 1], &[0, 1], &[false, false]), 0.0);
    }

    #[test]
    fn ids_parse() {
        for m in Metric::ALL {
            assert_eq!(m.id().parse::<Metric>().unwrap(), m);
        }
        assert!(matches!(score_by_id("f2", &[0], &[0], &[true]), Err(Error::UnknownMetric(_))));
    }

    #[test]
    fn weights_validated() {
        assert!(MetricWeights::new([0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).is_ok());
        assert!(MetricWeights::new([0.5; 9]).is_err());
        let w = MetricWeights::one_hot(Metric::Accuracy);
        assert_eq!(w.score(&[0, 1], &[0, 0], &all(2)), 0.5);
    }
}
