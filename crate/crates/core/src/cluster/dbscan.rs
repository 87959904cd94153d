use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{HsrError, Result};
use crate::labels::PseudoLabels;
use crate::matrix::{Matrix, Scalar};
use crate::similarity::distance_matrix;

/// Default `min_pts`.
pub const DEFAULT_MIN_PTS: usize = 4;
/// Default percentile (in percent) used by [`eps_heuristic`].
pub const DEFAULT_EPS_PERCENTILE: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl DbscanParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(HsrError::Config(format!(
                "eps must be finite and > 0, got {eps}"
            )));
        }
        if min_pts == 0 {
            return Err(HsrError::Config("min_pts must be >= 1".into()));
        }
        Ok(Self { eps, min_pts })
    }
}

/// Neighborhoods within `eps`, self included, ascending by index.
fn neighborhoods(dist: &[f64], n: usize, eps: f64) -> Vec<Vec<usize>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            dist[i * n..(i + 1) * n]
                .iter()
                .enumerate()
                .filter(|&(_, &d)| d <= eps)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

/// Density-based clustering over Euclidean distances.
///
/// A point is core when at least `min_pts` points (itself included) lie within `eps`.
/// Clusters are grown from unvisited core points in ascending index order; a border
/// point belongs to the first cluster that reaches it.
pub fn dbscan<T: Scalar>(features: &Matrix<T>, params: DbscanParams) -> Result<PseudoLabels> {
    if !features.is_finite() {
        return Err(HsrError::NonFinite("features"));
    }
    let n = features.rows();
    let dist = distance_matrix(features);
    Ok(dbscan_precomputed(&dist, n, params))
}

/// [`dbscan`] over a precomputed row-major `n × n` distance matrix.
pub fn dbscan_precomputed(dist: &[f64], n: usize, params: DbscanParams) -> PseudoLabels {
    const UNVISITED: i64 = -2;
    const NOISE: i64 = -1;

    let neigh = neighborhoods(dist, n, params.eps);
    let is_core: Vec<bool> = neigh.iter().map(|nb| nb.len() >= params.min_pts).collect();
    let mut labels = vec![UNVISITED; n];
    let mut next = 0i64;
    let mut queue = VecDeque::new();

    for i in 0..n {
        if labels[i] != UNVISITED {
            continue;
        }
        if !is_core[i] {
            labels[i] = NOISE;
            continue;
        }
        labels[i] = next;
        queue.extend(neigh[i].iter().copied());
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                labels[j] = next;
            }
            if labels[j] != UNVISITED {
                continue;
            }
            labels[j] = next;
            if is_core[j] {
                queue.extend(neigh[j].iter().copied());
            }
        }
        next += 1;
    }
    PseudoLabels::compact(&labels)
}

/// Linear-interpolated percentile of a sorted slice, `pct` in `[0, 100]`.
pub(crate) fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    let pos = (pct / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `pct`-th percentile of every sample's distance to its `k`-th nearest other sample.
pub fn eps_heuristic<T: Scalar>(features: &Matrix<T>, k: usize, pct: f64) -> Result<f64> {
    let n = features.rows();
    if k == 0 || n <= k {
        return Err(HsrError::TooFewSamples { n, k });
    }
    if !features.is_finite() {
        return Err(HsrError::NonFinite("features"));
    }
    let dist = distance_matrix(features);
    Ok(eps_heuristic_precomputed(&dist, n, k, pct))
}

pub fn eps_heuristic_precomputed(dist: &[f64], n: usize, k: usize, pct: f64) -> f64 {
    let mut kth: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row: Vec<f64> = dist[i * n..(i + 1) * n]
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &d)| d)
                .collect();
            let (_, v, _) = row.select_nth_unstable_by(k - 1, f64::total_cmp);
            *v
        })
        .collect();
    kth.sort_by(f64::total_cmp);
    percentile_sorted(&kth, pct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::NOISE;
    use crate::seed::rng_from;
    use rand::Rng;

    fn points(rows: &[[f32; 2]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    /// Textbook DBSCAN written against raw coordinates, no shared helpers.
    fn reference_dbscan(x: &[[f32; 2]], eps: f64, min_pts: usize) -> Vec<i64> {
        let n = x.len();
        let d = |a: usize, b: usize| {
            let dx = x[a][0] as f64 - x[b][0] as f64;
            let dy = x[a][1] as f64 - x[b][1] as f64;
            (dx * dx + dy * dy).sqrt()
        };
        let region = |p: usize| (0..n).filter(|&q| d(p, q) <= eps).collect::<Vec<_>>();
        let mut label: Vec<Option<i64>> = vec![None; n];
        let mut c = 0;
        for p in 0..n {
            if label[p].is_some() {
                continue;
            }
            let nb = region(p);
            if nb.len() < min_pts {
                label[p] = Some(-1);
                continue;
            }
            label[p] = Some(c);
            let mut seeds = nb;
            let mut k = 0;
            while k < seeds.len() {
                let q = seeds[k];
                k += 1;
                if label[q] == Some(-1) {
                    label[q] = Some(c);
                }
                if label[q].is_some() {
                    continue;
                }
                label[q] = Some(c);
                let nq = region(q);
                if nq.len() >= min_pts {
                    seeds.extend(nq);
                }
            }
            c += 1;
        }
        label.into_iter().map(Option::unwrap).collect()
    }

    fn two_blobs() -> Vec<[f32; 2]> {
        let mut v = Vec::new();
        for k in 0..10 {
            let a = k as f32 * 0.6283;
            v.push([0.1 * a.cos(), 0.1 * a.sin()]);
        }
        for k in 0..10 {
            let a = k as f32 * 0.6283;
            v.push([5.0 + 0.1 * a.cos(), 0.1 * a.sin()]);
        }
        v
    }

    #[test]
    fn two_blobs_two_clusters() {
        let x = two_blobs();
        let labels = dbscan(&points(&x), DbscanParams::new(0.5, 4).unwrap()).unwrap();
        assert_eq!(labels.num_clusters(), 2);
        assert_eq!(labels.num_noise(), 0);
        let expected: Vec<i32> = reference_dbscan(&x, 0.5, 4)
            .iter()
            .map(|&l| l as i32)
            .collect();
        assert_eq!(labels.as_slice(), expected.as_slice());
    }

    #[test]
    fn huge_eps_gives_one_cluster() {
        let x = two_blobs();
        let labels = dbscan(&points(&x), DbscanParams::new(100.0, 1).unwrap()).unwrap();
        assert_eq!(labels.num_clusters(), 1);
        assert_eq!(labels.num_noise(), 0);
    }

    #[test]
    fn isolated_point_is_noise() {
        let mut x = two_blobs();
        x.push([0.0, 50.0]);
        let labels = dbscan(&points(&x), DbscanParams::new(0.5, 4).unwrap()).unwrap();
        assert_eq!(labels.as_slice()[20], NOISE);
    }

    #[test]
    fn matches_reference_on_random_data() {
        let mut rng = rng_from(21);
        for trial in 0..30 {
            let n = rng.random_range(5..80);
            let x: Vec<[f32; 2]> = (0..n)
                .map(|_| [rng.random_range(0.0..4.0f32), rng.random_range(0.0..4.0f32)])
                .collect();
            let eps = rng.random_range(0.2..0.8);
            let min_pts = rng.random_range(1..6);
            let got = dbscan(&points(&x), DbscanParams::new(eps, min_pts).unwrap()).unwrap();
            let want = reference_dbscan(&x, eps, min_pts);
            let want: Vec<i32> = want.iter().map(|&l| l as i32).collect();
            assert_eq!(got.as_slice(), want.as_slice(), "trial {trial}");
        }
    }

    #[test]
    fn params_are_validated() {
        assert!(DbscanParams::new(0.0, 4).is_err());
        assert!(DbscanParams::new(f64::NAN, 4).is_err());
        assert!(DbscanParams::new(1.0, 0).is_err());
    }

    #[test]
    fn eps_of_identical_points_is_zero() {
        let x = Matrix::from_rows(&[[1.0f32, 1.0]; 10]).unwrap();
        assert_eq!(eps_heuristic(&x, 4, DEFAULT_EPS_PERCENTILE).unwrap(), 0.0);
    }

    #[test]
    fn eps_needs_more_than_k_samples() {
        let x = Matrix::from_rows(&[[1.0f32, 1.0]; 4]).unwrap();
        assert!(matches!(
            eps_heuristic(&x, 4, 1.5),
            Err(HsrError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn eps_between_blob_scales() {
        // blob radius 0.1, gap 5
        let x = two_blobs();
        let eps = eps_heuristic(&points(&x), 4, DEFAULT_EPS_PERCENTILE).unwrap();
        assert!(eps > 0.0 && eps < 0.2 * 1.01 && eps < 5.0, "{eps}");
    }

    #[test]
    fn eps_matches_brute_force_knn() {
        let mut rng = rng_from(4);
        let x: Vec<[f32; 2]> = (0..100)
            .map(|_| [rng.random::<f32>(), rng.random::<f32>()])
            .collect();
        let mut kth = Vec::new();
        for i in 0..100 {
            let mut d: Vec<f64> = (0..100)
                .filter(|&j| j != i)
                .map(|j| {
                    let dx = x[i][0] as f64 - x[j][0] as f64;
                    let dy = x[i][1] as f64 - x[j][1] as f64;
                    (dx * dx + dy * dy).sqrt()
                })
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            kth.push(d[3]);
        }
        kth.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // numpy-style linear interpolation at 1.5% of 99 gaps
        let pos = 0.015 * 99.0;
        let want = kth[1] + (kth[2] - kth[1]) * (pos - 1.0);
        let got = eps_heuristic(&points(&x), 4, 1.5).unwrap();
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}
