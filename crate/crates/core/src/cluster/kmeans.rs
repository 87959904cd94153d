use rand::Rng;

use crate::matrix::{Matrix, Scalar};
use crate::seed::{derive_seed, rng_from};

pub const MAX_LLOYD_ITERATIONS: usize = 100;
/// Independent k-means++ starts tried by [`kmeans2`].
pub const DEFAULT_N_INIT: usize = 10;
/// Total variance at or below this counts as a degenerate (unsplittable) set.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

/// Result of a two-way K-means split.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeans2 {
    /// 0/1 per row; label 0 always holds row 0.
    pub labels: Vec<u8>,
    /// Set when the input had no spread; all labels are 0.
    pub degenerate: bool,
    /// Within-cluster sum of squares after each assignment step.
    pub objective_trace: Vec<f64>,
}

impl KMeans2 {
    pub fn inertia(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }
}

fn mean_of<T: Scalar>(x: &Matrix<T>, rows: impl Iterator<Item = usize>) -> Vec<f64> {
    let mut acc = vec![0.0; x.cols()];
    let mut count = 0usize;
    for i in rows {
        for (a, v) in acc.iter_mut().zip(x.row(i)) {
            *a += v.to_f64();
        }
        count += 1;
    }
    for a in &mut acc {
        *a /= count.max(1) as f64;
    }
    acc
}

fn sq_to(row: &[impl Scalar], center: &[f64]) -> f64 {
    row.iter()
        .zip(center)
        .map(|(x, c)| {
            let d = x.to_f64() - c;
            d * d
        })
        .sum()
}

/// Within-cluster sum of squares of a 0/1 labelling.
pub fn within_cluster_ss<T: Scalar>(x: &Matrix<T>, labels: &[u8]) -> f64 {
    let mut total = 0.0;
    for c in 0..2u8 {
        let rows: Vec<usize> = (0..x.rows()).filter(|&i| labels[i] == c).collect();
        if rows.is_empty() {
            continue;
        }
        let center = mean_of(x, rows.iter().copied());
        total += rows.iter().map(|&i| sq_to(x.row(i), &center)).sum::<f64>();
    }
    total
}

/// Two-way K-means: the lowest-inertia result of [`DEFAULT_N_INIT`] seeded starts.
pub fn kmeans2<T: Scalar>(x: &Matrix<T>, seed: u64) -> KMeans2 {
    kmeans2_restarts(x, seed, DEFAULT_N_INIT)
}

/// Best of `n_init` runs of [`kmeans2_single`], start `r` seeded by `(seed, r)`.
/// Equal inertias keep the earlier start.
pub fn kmeans2_restarts<T: Scalar>(x: &Matrix<T>, seed: u64, n_init: usize) -> KMeans2 {
    let mut best = kmeans2_single(x, derive_seed(seed, &[0]));
    if best.degenerate {
        return best;
    }
    for r in 1..n_init as u64 {
        let run = kmeans2_single(x, derive_seed(seed, &[r]));
        if run.inertia() < best.inertia() {
            best = run;
        }
    }
    best
}

/// One two-way K-means run with k-means++ seeding.
///
/// Lloyd iterations stop when assignments no longer change, or after
/// [`MAX_LLOYD_ITERATIONS`]. Ties in assignment go to cluster 0.
pub fn kmeans2_single<T: Scalar>(x: &Matrix<T>, seed: u64) -> KMeans2 {
    let m = x.rows();
    let all_zero = KMeans2 {
        labels: vec![0; m],
        degenerate: true,
        objective_trace: vec![0.0],
    };
    if m < 2 {
        return all_zero;
    }
    let mean = mean_of(x, 0..m);
    let variance = (0..m).map(|i| sq_to(x.row(i), &mean)).sum::<f64>() / m as f64;
    if variance <= DEGENERATE_VARIANCE {
        return KMeans2 {
            objective_trace: vec![variance * m as f64],
            ..all_zero
        };
    }

    let mut rng = rng_from(seed);
    let first = rng.random_range(0..m);
    let c0: Vec<f64> = x.row(first).iter().map(|v| v.to_f64()).collect();
    let weights: Vec<f64> = (0..m).map(|i| sq_to(x.row(i), &c0)).collect();
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    let mut second = m - 1;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 && target < w {
            second = i;
            break;
        }
        target -= w;
    }
    // floating-point leftovers can land on a zero-weight tail row
    if weights[second] == 0.0 {
        second = (0..m).rev().find(|&i| weights[i] > 0.0).unwrap_or(second);
    }
    let mut centers = [
        c0,
        x.row(second).iter().map(|v| v.to_f64()).collect::<Vec<_>>(),
    ];

    let assign = |centers: &[Vec<f64>; 2]| -> (Vec<u8>, f64) {
        let mut obj = 0.0;
        let labels = (0..m)
            .map(|i| {
                let d0 = sq_to(x.row(i), &centers[0]);
                let d1 = sq_to(x.row(i), &centers[1]);
                if d1 < d0 {
                    obj += d1;
                    1
                } else {
                    obj += d0;
                    0
                }
            })
            .collect();
        (labels, obj)
    };

    let (mut labels, obj) = assign(&centers);
    let mut trace = vec![obj];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        if !labels.contains(&0) || !labels.contains(&1) {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            *center = mean_of(x, (0..m).filter(|&i| labels[i] == c as u8));
        }
        let (next, obj) = assign(&centers);
        if next == labels {
            // objective with the updated centers
            trace.push(obj);
            break;
        }
        if !next.contains(&0) || !next.contains(&1) {
            break;
        }
        labels = next;
        trace.push(obj);
    }
    let last = *trace.last().unwrap();
    let final_obj = within_cluster_ss(x, &labels);
    if final_obj < last {
        trace.push(final_obj);
    }

    if labels[0] == 1 {
        for l in &mut labels {
            *l ^= 1;
        }
    }
    KMeans2 {
        labels,
        degenerate: false,
        objective_trace: trace,
    }
}
