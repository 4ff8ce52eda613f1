use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

/// One point on a precision-recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision-recall points per class, sweeping the threshold over every
/// distinct posterior value of that class from high to low. A point at a
/// threshold predicts positive wherever `posterior >= threshold`.
pub fn pr_curves(posterior: &Matrix, gold: &[usize]) -> Vec<Vec<PrPoint>> {
    (0..posterior.cols())
        .map(|c| {
            let mut scored: Vec<(f64, bool)> = (0..posterior.rows())
                .map(|i| (posterior.get(i, c), gold[i] == c))
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0));
            let positives = scored.iter().filter(|s| s.1).count() as f64;
            let mut points = Vec::new();
            let (mut tp, mut predicted) = (0.0, 0.0);
            let mut i = 0;
            while i < scored.len() {
                let t = scored[i].0;
                while i < scored.len() && scored[i].0 == t {
                    predicted += 1.0;
                    tp += f64::from(u8::from(scored[i].1));
                    i += 1;
                }
                points.push(PrPoint {
                    threshold: t,
                    recall: if positives > 0.0 { tp / positives } else { 0.0 },
                    precision: if predicted > 0.0 { tp / predicted } else { 1.0 },
                });
            }
            points
        })
        .collect()
}
