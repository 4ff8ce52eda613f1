use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const STD_FLOOR: f64 = 1e-12;

/// Per-column zero-mean, unit-variance scaling with statistics from one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &FeatureMatrix) -> Self {
        let x = features.values();
        let (n, d) = (x.rows() as f64, x.cols());
        let mut mean = vec![0.0; d];
        for row in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x.iter_rows() {
            for j in 0..d {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Self { mean, std }
    }

    pub fn apply(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        let d = self.mean.len();
        if features.cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: features.cols(),
            });
        }
        let mut out = features.values().clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        FeatureMatrix::new(out, features.provenance())
    }
}

fn reverse_bits(i: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Reorders the rows and columns of each `side x side` example by the
/// bit-reversal permutation of their indices. The transform is an involution.
pub fn bit_reversal_permute(features: &FeatureMatrix, side: usize) -> Result<FeatureMatrix> {
    if !side.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(side));
    }
    let d = features.cols();
    if side.checked_mul(side) != Some(d) {
        return Err(Error::ShapeMismatch(format!(
            "{d} columns is not {side}x{side}"
        )));
    }
    let bits = side.trailing_zeros();
    let perm: Vec<usize> = (0..side).map(|i| reverse_bits(i, bits)).collect();
    let mut out = Matrix::zeros(features.rows(), d);
    for (r, src) in features.values().iter_rows().enumerate() {
        let dst = out.row_mut(r);
        for row in 0..side {
            for col in 0..side {
                dst[row * side + col] = src[perm[row] * side + perm[col]];
            }
        }
    }
    FeatureMatrix::new(out, features.provenance())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pixel_moves_to_reversed_row() {
        let mut px = vec![0.0; 64];
        px[8] = 1.0; // (row 1, col 0)
        let f = FeatureMatrix::from_rows(&[px], "raw").unwrap();
        let out = bit_reversal_permute(&f, 8).unwrap();
        let hot: Vec<usize> = (0..64).filter(|&i| out.row(0)[i] == 1.0).collect();
        assert_eq!(hot, vec![4 * 8]);
    }

    #[test]
    fn side_must_be_power_of_two() {
        let f = FeatureMatrix::from_rows(&[vec![0.0; 36]], "raw").unwrap();
        let err = bit_reversal_permute(&f, 6).unwrap_err();
        assert!(err.to_string().contains("side must be a power of two"));
        let f = FeatureMatrix::from_rows(&[vec![0.0; 10]], "raw").unwrap();
        assert!(bit_reversal_permute(&f, 4).is_err());
    }

    #[test]
    fn standardize_unit_variance() {
        let f = FeatureMatrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]], "raw").unwrap();
        let s = Standardizer::fit(&f);
        let z = s.apply(&f).unwrap();
        assert_eq!(z.row(0), &[-1.0, 0.0]);
        assert_eq!(z.row(1), &[1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn bit_reversal_is_involution(log_side in 0u32..4, seed in any::<u64>()) {
            let side = 1usize << log_side;
            let vals: Vec<f64> = (0..side * side * 2)
                .map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64)
                .collect();
            let m = Matrix::from_vec(2, side * side, vals).unwrap();
            let f = FeatureMatrix::new(m, "raw").unwrap();
            let twice = bit_reversal_permute(&bit_reversal_permute(&f, side).unwrap(), side).unwrap();
            prop_assert_eq!(twice, f);
        }
    }
}
