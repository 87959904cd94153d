//! Retrieval evaluation (Rank-1, mAP) and mining diagnostics.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{HsrError, Result};
use crate::icm::RankLists;
use crate::labels::PseudoLabels;
use crate::matrix::{distance, Matrix, Scalar};

/// Disjoint query and gallery index sets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvalSplit {
    pub query: Vec<usize>,
    pub gallery: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub r1: f64,
    pub map: f64,
    pub num_queries: usize,
    pub num_excluded: usize,
}

impl EvalResult {
    pub fn csv_line(&self) -> String {
        format!(
            "{:.6},{:.6},{},{}",
            self.r1, self.map, self.num_queries, self.num_excluded
        )
    }
}

/// Average precision of a ranked relevance list.
pub fn average_precision(relevance: &[bool], num_relevant: usize) -> Result<f64> {
    if num_relevant == 0 {
        return Err(HsrError::NoRelevant);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / num_relevant as f64)
}

/// Ranks the gallery for every query and scores the retrieval.
///
/// Gallery entries sharing both identity and camera with the query are dropped
/// before ranking. Queries left without any relevant entry are excluded and counted.
pub fn evaluate<T: Scalar>(
    embeddings: &Matrix<T>,
    gt_ids: &[u32],
    cameras: &[u32],
    split: &EvalSplit,
) -> Result<EvalResult> {
    if gt_ids.len() != embeddings.rows() || cameras.len() != embeddings.rows() {
        return Err(HsrError::Shape(
            "evaluation metadata not aligned with embeddings".into(),
        ));
    }
    let per_query: Vec<Option<(bool, f64)>> = split
        .query
        .par_iter()
        .map(|&q| {
            let mut ranked: Vec<(f64, usize)> = split
                .gallery
                .iter()
                .filter(|&&g| !(gt_ids[g] == gt_ids[q] && cameras[g] == cameras[q]))
                .map(|&g| (distance(embeddings.row(q), embeddings.row(g)), g))
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let rel: Vec<bool> = ranked
                .iter()
                .map(|&(_, g)| gt_ids[g] == gt_ids[q])
                .collect();
            let num_rel = rel.iter().filter(|&&r| r).count();
            let ap = average_precision(&rel, num_rel).ok()?;
            Some((rel[0], ap))
        })
        .collect();

    let scored: Vec<(bool, f64)> = per_query.iter().flatten().copied().collect();
    let num_excluded = per_query.len() - scored.len();
    let n = scored.len();
    let (r1, map) = if n == 0 {
        (0.0, 0.0)
    } else {
        (
            scored.iter().filter(|s| s.0).count() as f64 / n as f64,
            scored.iter().map(|s| s.1).sum::<f64>() / n as f64,
        )
    };
    Ok(EvalResult {
        r1,
        map,
        num_queries: n,
        num_excluded,
    })
}

/// Mean fraction of rank-list entries sharing the anchor's identity; empty lists skipped.
pub fn rank_precision(rank: &RankLists, gt_ids: &[u32]) -> f64 {
    let fracs: Vec<f64> = rank
        .lists()
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| l.iter().filter(|&&j| gt_ids[j] == gt_ids[i]).count() as f64 / l.len() as f64)
        .collect();
    if fracs.is_empty() {
        0.0
    } else {
        fracs.iter().sum::<f64>() / fracs.len() as f64
    }
}

/// Fraction of all rank-list entries that are true matches placed in a different
/// pseudo cluster than the anchor (noise counts as its own cluster).
pub fn hard_positive_rate(rank: &RankLists, gt_ids: &[u32], labels: &PseudoLabels) -> f64 {
    let mut total = 0usize;
    let mut hard = 0usize;
    for (i, l) in rank.lists().iter().enumerate() {
        for &j in l {
            total += 1;
            let split = labels.is_noise(i) || labels.as_slice()[i] != labels.as_slice()[j];
            if gt_ids[j] == gt_ids[i] && split {
                hard += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hard as f64 / total as f64
    }
}

/// Size-weighted mean of each cluster's majority-identity share; noise excluded.
pub fn cluster_purity(labels: &PseudoLabels, gt_ids: &[u32]) -> f64 {
    let mut majority = 0usize;
    let mut total = 0usize;
    for members in labels.members() {
        let mut counts: HashMap<u32, usize> = HashMap::new();
        for &i in &members {
            *counts.entry(gt_ids[i]).or_default() += 1;
        }
        majority += counts.values().copied().max().unwrap_or(0);
        total += members.len();
    }
    if total == 0 {
        0.0
    } else {
        majority as f64 / total as f64
    }
}
