//! Normalization and pairwise similarity between embedded samples.

use rayon::prelude::*;

use crate::error::{HsrError, Result};
use crate::matrix::{distance, Matrix, Scalar};

/// Rows with a norm at or below this are rejected by normalization.
pub const MIN_NORM: f64 = 1e-12;

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize(features: &Matrix) -> Result<Matrix> {
    if !features.is_finite() {
        return Err(HsrError::NonFinite("features"));
    }
    let mut out = features.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm = row
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt();
        if norm <= MIN_NORM {
            return Err(HsrError::ZeroVector { row: i });
        }
        for v in row.iter_mut() {
            *v = (*v as f64 / norm) as f32;
        }
    }
    Ok(out)
}

/// Negative Euclidean distances between all pairs of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f32>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// `S[i][j] = -||x_i - x_j||`, accumulated in f64 and stored as f32.
///
/// Rows are computed in parallel; each entry depends only on its two input rows,
/// so the result does not depend on the thread count.
pub fn pairwise_similarity(features: &Matrix) -> Result<SimilarityMatrix> {
    if features.rows() == 0 {
        return Err(HsrError::EmptyInput("features"));
    }
    if !features.is_finite() {
        return Err(HsrError::NonFinite("features"));
    }
    let n = features.rows();
    let mut values = vec![0f32; n * n];
    values.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        let xi = features.row(i);
        for (j, o) in out.iter_mut().enumerate() {
            *o = if i == j {
                0.0
            } else {
                -(distance(xi, features.row(j)) as f32)
            };
        }
    });
    Ok(SimilarityMatrix { n, values })
}

/// Full Euclidean distance matrix in f64, row-major `n × n`.
pub fn distance_matrix<T: Scalar>(features: &Matrix<T>) -> Vec<f64> {
    let n = features.rows();
    let mut out = vec![0f64; n * n];
    if n == 0 {
        return out;
    }
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let xi = features.row(i);
        for (j, o) in row.iter_mut().enumerate() {
            if i != j {
                *o = distance(xi, features.row(j));
            }
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rng_from(seed);
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-2.0f32..2.0))
            .collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn normalize_three_four_five() {
        let m = l2_normalize(&Matrix::from_rows(&[[3.0f32, 4.0]]).unwrap()).unwrap();
        assert!((m.get(0, 0) - 0.6).abs() < 1e-7);
        assert!((m.get(0, 1) - 0.8).abs() < 1e-7);
    }

    #[test]
    fn normalize_axis_vectors() {
        let m = l2_normalize(&Matrix::from_rows(&[[1.0f32, 0.0], [0.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn normalize_random_rows_are_unit() {
        let m = l2_normalize(&random_matrix(5, 8, 3)).unwrap();
        for r in m.iter_rows() {
            let norm = r.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn normalize_rejects_zero_rows() {
        let m = Matrix::from_rows(&[[1.0f32, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(
            l2_normalize(&m),
            Err(HsrError::ZeroVector { row: 1 })
        ));
    }

    #[test]
    fn similarity_one_dimensional_pair() {
        let s = pairwise_similarity(&Matrix::from_rows(&[[0.0f32], [3.0]]).unwrap()).unwrap();
        assert_eq!(s.row(0), &[0.0, -3.0]);
        assert_eq!(s.row(1), &[-3.0, 0.0]);
    }

    #[test]
    fn similarity_identical_rows_is_zero() {
        let s = pairwise_similarity(&Matrix::from_rows(&[[1.0f32, 2.0]; 4]).unwrap()).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn similarity_matches_double_loop() {
        let x = random_matrix(20, 4, 11);
        let s = pairwise_similarity(&x).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let mut acc = 0.0f64;
                for k in 0..4 {
                    let d = x.get(i, k) as f64 - x.get(j, k) as f64;
                    acc += d * d;
                }
                assert!((s.get(i, j) as f64 + acc.sqrt()).abs() < 1e-5);
                assert_eq!(s.get(i, j), s.get(j, i));
                assert!(s.get(i, j) <= 0.0);
            }
        }
    }

    #[test]
    fn similarity_rejects_non_finite() {
        let x = Matrix::from_rows(&[[f32::NAN, 0.0]]).unwrap();
        assert!(matches!(
            pairwise_similarity(&x),
            Err(HsrError::NonFinite(_))
        ));
    }

    #[test]
    fn similarity_decreases_with_distance() {
        let x = random_matrix(30, 3, 5);
        let s = pairwise_similarity(&x).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                for k in 0..30 {
                    let (dj, dk) = (distance(x.row(i), x.row(j)), distance(x.row(i), x.row(k)));
                    if dj < dk - 1e-6 {
                        assert!(s.get(i, j) >= s.get(i, k));
                    }
                }
            }
        }
    }

    #[test]
    fn similarity_is_deterministic() {
        let x = random_matrix(40, 6, 9);
        assert_eq!(
            pairwise_similarity(&x).unwrap(),
            pairwise_similarity(&x).unwrap()
        );
    }
}
