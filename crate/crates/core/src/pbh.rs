//! Part-based homogeneity: split clusters that score poorly on silhouette using
//! independent two-way splits of their upper and lower part embeddings.

use rayon::prelude::*;

use crate::cluster::{
    kmeans2, mean_silhouette_per_cluster, silhouette_precomputed, ClusterQuality,
};
use crate::error::{HsrError, Result};
use crate::labels::PseudoLabels;
use crate::matrix::Matrix;
use crate::seed::derive_seed;
use crate::similarity::distance_matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaMode {
    /// `mean(mSil) - 3 * std(mSil)` over the current clusters.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PbhConfig {
    pub lambda: LambdaMode,
    pub min_cluster_size_for_split: usize,
}

impl Default for PbhConfig {
    fn default() -> Self {
        Self {
            lambda: LambdaMode::Auto,
            min_cluster_size_for_split: 4,
        }
    }
}

impl PbhConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size_for_split < 2 {
            return Err(HsrError::Config(
                "min_cluster_size_for_split must be >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// `mean - 3 * std` with the population standard deviation.
pub fn compute_lambda(msil: &[f64]) -> Result<f64> {
    if msil.is_empty() {
        return Err(HsrError::EmptyInput("mSil values"));
    }
    let n = msil.len() as f64;
    let mean = msil.iter().sum::<f64>() / n;
    let var = msil.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(mean - 3.0 * var.sqrt())
}

/// Silhouettes, per-cluster means and λ for the given global embeddings.
pub fn cluster_quality(
    embeddings: &Matrix,
    labels: &PseudoLabels,
    config: &PbhConfig,
) -> Result<ClusterQuality> {
    let dist = distance_matrix(embeddings);
    cluster_quality_precomputed(&dist, labels, config)
}

pub fn cluster_quality_precomputed(
    dist: &[f64],
    labels: &PseudoLabels,
    config: &PbhConfig,
) -> Result<ClusterQuality> {
    let per_sample = silhouette_precomputed(dist, labels)?;
    let msil = mean_silhouette_per_cluster(&per_sample, labels);
    let lambda = match config.lambda {
        LambdaMode::Auto => compute_lambda(&msil)?,
        LambdaMode::Fixed(v) => v,
    };
    Ok(ClusterQuality {
        per_sample,
        msil,
        lambda,
    })
}

/// Clusters with mSil strictly below λ and at least the minimum split size, ascending.
pub fn select_imperfect(
    quality: &ClusterQuality,
    sizes: &[usize],
    config: &PbhConfig,
) -> Vec<usize> {
    quality
        .msil
        .iter()
        .enumerate()
        .filter(|&(c, &m)| m < quality.lambda && sizes[c] >= config.min_cluster_size_for_split)
        .map(|(c, _)| c)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitOutcome {
    /// Lookup-table label per member: `2 * y_upper + y_lower`.
    pub labels: Vec<u8>,
    pub upper_degenerate: bool,
    pub lower_degenerate: bool,
}

impl SplitOutcome {
    pub fn num_groups(&self) -> usize {
        let mut seen = [false; 4];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }
}

/// Splits one cluster by two-way K-means on each part.
///
/// `(y_u, y_l)` maps to `(0,0)→0, (0,1)→1, (1,0)→2, (1,1)→3`. A degenerate part
/// contributes a constant 0 bit.
pub fn split_cluster(upper: &Matrix, lower: &Matrix, seed: u64) -> SplitOutcome {
    let u = kmeans2(upper, derive_seed(seed, &[0]));
    let l = kmeans2(lower, derive_seed(seed, &[1]));
    let labels = u
        .labels
        .iter()
        .zip(&l.labels)
        .map(|(&a, &b)| 2 * a + b)
        .collect();
    SplitOutcome {
        labels,
        upper_degenerate: u.degenerate,
        lower_degenerate: l.degenerate,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterReport {
    pub cluster: usize,
    pub size: usize,
    pub msil: f64,
    pub selected: bool,
    pub groups: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PbhOutcome {
    pub labels: PseudoLabels,
    pub lambda: Option<f64>,
    pub report: Vec<ClusterReport>,
}

impl PbhOutcome {
    pub fn num_selected(&self) -> usize {
        self.report.iter().filter(|r| r.selected).count()
    }
}

/// Replaces every selected cluster by its part-based split groups.
///
/// Unselected clusters and noise keep their membership; the label space is compacted
/// afterwards. Each cluster's split is seeded from `(seed, cluster id)` so the result
/// does not depend on processing order.
pub fn apply_pbh(
    labels: &PseudoLabels,
    quality: &ClusterQuality,
    upper: &Matrix,
    lower: &Matrix,
    config: &PbhConfig,
    seed: u64,
) -> Result<PbhOutcome> {
    if upper.rows() != labels.len() || lower.rows() != labels.len() {
        return Err(HsrError::Shape(
            "part embeddings not aligned with labels".into(),
        ));
    }
    if quality.msil.len() != labels.num_clusters() {
        return Err(HsrError::Shape(
            "cluster quality not aligned with labels".into(),
        ));
    }
    let members = labels.members();
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let selected = select_imperfect(quality, &sizes, config);

    let splits: Vec<(usize, SplitOutcome)> = selected
        .par_iter()
        .map(|&c| {
            let m = &members[c];
            let out = split_cluster(
                &upper.select_rows(m),
                &lower.select_rows(m),
                derive_seed(seed, &[c as u64]),
            );
            (c, out)
        })
        .collect();

    let mut raw: Vec<i64> = labels
        .as_slice()
        .iter()
        .map(|&l| if l < 0 { -1 } else { 4 * l as i64 })
        .collect();
    let mut groups = vec![1usize; labels.num_clusters()];
    for (c, split) in &splits {
        for (&i, &g) in members[*c].iter().zip(&split.labels) {
            raw[i] = 4 * *c as i64 + g as i64;
        }
        groups[*c] = split.num_groups();
    }
    let report = (0..labels.num_clusters())
        .map(|c| ClusterReport {
            cluster: c,
            size: sizes[c],
            msil: quality.msil[c],
            selected: selected.binary_search(&c).is_ok(),
            groups: groups[c],
        })
        .collect();
    Ok(PbhOutcome {
        labels: PseudoLabels::compact(&raw),
        lambda: Some(quality.lambda),
        report,
    })
}

/// Full rectification step: quality from `global`, splits from `upper`/`lower`.
/// With fewer than two clusters the labels come back unchanged.
pub fn rectify_hard_negatives(
    global: &Matrix,
    upper: &Matrix,
    lower: &Matrix,
    labels: &PseudoLabels,
    config: &PbhConfig,
    seed: u64,
) -> Result<(PbhOutcome, Option<ClusterQuality>)> {
    config.validate()?;
    let quality = match cluster_quality(global, labels, config) {
        Ok(q) => q,
        Err(HsrError::SingleCluster) => {
            return Ok((
                PbhOutcome {
                    labels: labels.clone(),
                    lambda: None,
                    report: Vec::new(),
                },
                None,
            ));
        }
        Err(e) => return Err(e),
    };
    let outcome = apply_pbh(labels, &quality, upper, lower, config, seed)?;
    Ok((outcome, Some(quality)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::NOISE;

    fn quality(msil: Vec<f64>, lambda: f64) -> ClusterQuality {
        ClusterQuality {
            per_sample: Vec::new(),
            msil,
            lambda,
        }
    }

    #[test]
    fn lambda_of_constant_scores() {
        assert!((compute_lambda(&[0.5, 0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lambda_hand_arithmetic() {
        assert!((compute_lambda(&[0.9, 0.1]).unwrap() - (-0.7)).abs() < 1e-12);
        assert!(matches!(compute_lambda(&[]), Err(HsrError::EmptyInput(_))));
        assert_eq!(compute_lambda(&[0.3]).unwrap(), 0.3);
    }

    #[test]
    fn selection_is_strict() {
        let cfg = PbhConfig::default();
        assert!(select_imperfect(&quality(vec![0.5, 0.5], 0.5), &[10, 10], &cfg).is_empty());
        assert_eq!(
            select_imperfect(&quality(vec![-0.2, 0.8], 0.1), &[10, 10], &cfg),
            vec![0]
        );
        assert!(select_imperfect(&quality(vec![-0.2, 0.8], 0.1), &[2, 10], &cfg).is_empty());
    }

    #[test]
    fn lookup_table_four_groups() {
        let upper = Matrix::from_rows(&[[0.0f32], [0.0], [5.0], [5.0]]).unwrap();
        let lower = Matrix::from_rows(&[[0.0f32], [5.0], [0.0], [5.0]]).unwrap();
        let s = split_cluster(&upper, &lower, 3);
        assert_eq!(s.labels, vec![0, 1, 2, 3]);
        assert_eq!(s.num_groups(), 4);
    }

    #[test]
    fn identical_members_stay_together() {
        let same = Matrix::from_rows(&[[1.0f32, 2.0]; 5]).unwrap();
        let s = split_cluster(&same, &same, 3);
        assert!(s.upper_degenerate && s.lower_degenerate);
        assert_eq!(s.num_groups(), 1);
    }

    fn toy() -> (PseudoLabels, Matrix, Matrix) {
        // cluster 0: four members whose lower part splits in two; cluster 1 tight
        let labels = PseudoLabels::from_labels(&[0, 0, 0, 0, 1, 1, 1, 1, NOISE]);
        let upper = Matrix::from_rows(&[[0.0f32]; 9]).unwrap();
        let lower = Matrix::from_rows(&[
            [0.0f32],
            [0.0],
            [4.0],
            [4.0],
            [1.0],
            [1.0],
            [1.0],
            [1.0],
            [9.0],
        ])
        .unwrap();
        (labels, upper, lower)
    }

    #[test]
    fn nothing_selected_is_identity() {
        let (labels, upper, lower) = toy();
        let q = quality(vec![0.9, 0.9], 0.5);
        let out = apply_pbh(&labels, &q, &upper, &lower, &PbhConfig::default(), 1).unwrap();
        assert_eq!(out.labels, labels);
    }

    #[test]
    fn two_way_split_adds_one_cluster() {
        let (labels, upper, lower) = toy();
        let q = quality(vec![0.1, 0.9], 0.5);
        let out = apply_pbh(&labels, &q, &upper, &lower, &PbhConfig::default(), 1).unwrap();
        assert_eq!(out.labels.num_clusters(), labels.num_clusters() + 1);
        assert_eq!(out.labels.as_slice(), &[0, 0, 1, 1, 2, 2, 2, 2, NOISE]);
        assert_eq!(out.report[0].groups, 2);
        assert!(out.report[0].selected && !out.report[1].selected);
    }

    #[test]
    fn degenerate_selected_cluster_is_identity() {
        let (labels, upper, _) = toy();
        let q = quality(vec![0.1, 0.1], 0.5);
        let out = apply_pbh(&labels, &q, &upper, &upper, &PbhConfig::default(), 1).unwrap();
        assert_eq!(out.labels, labels);
    }

    #[test]
    fn single_cluster_returns_input() {
        let labels = PseudoLabels::from_labels(&[0, 0, 0, 0]);
        let x = Matrix::from_rows(&[[0.0f32], [1.0], [2.0], [3.0]]).unwrap();
        let (out, q) =
            rectify_hard_negatives(&x, &x, &x, &labels, &PbhConfig::default(), 0).unwrap();
        assert!(q.is_none());
        assert_eq!(out.labels, labels);
    }
}
