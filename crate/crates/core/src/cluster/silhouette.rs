use crate::error::{HsrError, Result};
use crate::labels::PseudoLabels;
use crate::matrix::{Matrix, Scalar};
use crate::similarity::distance_matrix;

/// Per-sample silhouettes plus per-cluster means and the selection threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterQuality {
    /// `None` for noise samples.
    pub per_sample: Vec<Option<f64>>,
    /// Mean silhouette, indexed by cluster id.
    pub msil: Vec<f64>,
    pub lambda: f64,
}

/// Silhouette coefficient of every non-noise sample.
///
/// `a(i)` is the mean distance to the other members of its cluster, `b(i)` the
/// smallest mean distance to another cluster. Members of singleton clusters score 0.
pub fn silhouette_samples<T: Scalar>(
    features: &Matrix<T>,
    labels: &PseudoLabels,
) -> Result<Vec<Option<f64>>> {
    if features.rows() != labels.len() {
        return Err(HsrError::Shape(format!(
            "{} samples but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let dist = distance_matrix(features);
    silhouette_precomputed(&dist, labels)
}

pub fn silhouette_precomputed(dist: &[f64], labels: &PseudoLabels) -> Result<Vec<Option<f64>>> {
    let n = labels.len();
    let k = labels.num_clusters();
    if k < 2 {
        return Err(HsrError::SingleCluster);
    }
    let sizes = labels.sizes();
    let mut sums = vec![0.0f64; k];
    let out = (0..n)
        .map(|i| {
            let own = labels.cluster(i)?;
            if sizes[own] == 1 {
                return Some(0.0);
            }
            sums.iter_mut().for_each(|s| *s = 0.0);
            for (j, &d) in dist[i * n..(i + 1) * n].iter().enumerate() {
                if let Some(c) = labels.cluster(j) {
                    sums[c] += d;
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            Some(if denom > 0.0 { (b - a) / denom } else { 0.0 })
        })
        .collect();
    Ok(out)
}

/// Arithmetic mean of the silhouettes of each cluster's members.
pub fn mean_silhouette_per_cluster(per_sample: &[Option<f64>], labels: &PseudoLabels) -> Vec<f64> {
    let mut sum = vec![0.0; labels.num_clusters()];
    let mut count = vec![0usize; labels.num_clusters()];
    for (i, s) in per_sample.iter().enumerate() {
        if let (Some(c), Some(s)) = (labels.cluster(i), s) {
            sum[c] += s;
            count[c] += 1;
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}
