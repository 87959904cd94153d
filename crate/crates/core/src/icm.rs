//! Inter-camera mining of hard positives.
//!
//! Each sample gets a ranked list of its `K` most similar samples taken from *other*
//! cameras. A pair is kept as a hard positive only when each sample appears in the
//! other's list (mutual best buddies). Those pairs then drive an extra triplet loss
//! whose negatives carry a different pseudo label and lie outside the anchor's list.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{HsrError, Result};
use crate::labels::PseudoLabels;
use crate::seed::rng_from;
use crate::similarity::SimilarityMatrix;

pub const DEFAULT_K: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankLists {
    k: usize,
    lists: Vec<Vec<usize>>,
}

impl RankLists {
    pub fn from_lists(k: usize, lists: Vec<Vec<usize>>) -> Self {
        Self { k, lists }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn list(&self, i: usize) -> &[usize] {
        &self.lists[i]
    }

    pub fn lists(&self) -> &[Vec<usize>] {
        &self.lists
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.lists[i].contains(&j)
    }

    pub fn mean_length(&self) -> f64 {
        if self.lists.is_empty() {
            return 0.0;
        }
        self.lists.iter().map(Vec::len).sum::<usize>() as f64 / self.lists.len() as f64
    }
}

/// For every sample, the `k` most similar samples from a different camera.
///
/// Ordered by descending similarity, ties by ascending index.
pub fn build_rank_lists(sim: &SimilarityMatrix, cameras: &[u32], k: usize) -> Result<RankLists> {
    if cameras.len() != sim.len() {
        return Err(HsrError::Shape(format!(
            "{} cameras for a {}-sample similarity matrix",
            cameras.len(),
            sim.len()
        )));
    }
    if k == 0 {
        return Err(HsrError::Config("K must be >= 1".into()));
    }
    let n = sim.len();
    let lists = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = sim.row(i);
            let mut cand: Vec<usize> = (0..n).filter(|&j| cameras[j] != cameras[i]).collect();
            let order =
                |&a: &usize, &b: &usize| -> Ordering { row[b].total_cmp(&row[a]).then(a.cmp(&b)) };
            if cand.len() > k {
                cand.select_nth_unstable_by(k - 1, order);
                cand.truncate(k);
            }
            cand.sort_unstable_by(order);
            cand
        })
        .collect();
    Ok(RankLists { k, lists })
}

/// Mutually contained rank-list pairs, stored as `(i, j)` with `i < j`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MutualPairs {
    pairs: BTreeSet<(usize, usize)>,
    partners: Vec<Vec<usize>>,
}

impl MutualPairs {
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let pairs: BTreeSet<_> = pairs
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        let mut partners = vec![Vec::new(); n];
        for &(a, b) in &pairs {
            partners[a].push(b);
            partners[b].push(a);
        }
        for p in &mut partners {
            p.sort_unstable();
        }
        Self { pairs, partners }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.pairs.contains(&(a.min(b), a.max(b)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    /// Mutual partners of `i`, ascending.
    pub fn partners(&self, i: usize) -> &[usize] {
        self.partners.get(i).map_or(&[], Vec::as_slice)
    }
}

pub fn mutual_pairs(rank: &RankLists) -> MutualPairs {
    let n = rank.len();
    let pairs = (0..n).flat_map(|i| {
        rank.list(i)
            .iter()
            .copied()
            .filter(move |&j| i < j && rank.contains(j, i))
            .map(move |j| (i, j))
    });
    MutualPairs::from_pairs(n, pairs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// How ICM negatives are chosen from the admissible pool.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NegativeMode {
    #[default]
    Uniform,
    /// Closest admissible sample under the supplied similarity.
    Hardest,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IcmSample {
    pub triplets: Vec<Triplet>,
    pub skipped_no_positive: usize,
    pub skipped_no_negative: usize,
}

/// Anchors usable for the ICM loss: non-noise samples with at least one mutual partner.
pub fn eligible_anchors(pairs: &MutualPairs, labels: &PseudoLabels) -> Vec<usize> {
    (0..labels.len())
        .filter(|&i| !labels.is_noise(i) && !pairs.partners(i).is_empty())
        .collect()
}

/// Negative pool of `anchor`: non-noise samples with another pseudo label that are
/// not in the anchor's rank list.
pub fn negative_pool(rank: &RankLists, labels: &PseudoLabels, anchor: usize) -> Vec<usize> {
    let own = labels.as_slice()[anchor];
    (0..labels.len())
        .filter(|&m| {
            let l = labels.as_slice()[m];
            !labels.is_noise(m) && l != own && !rank.contains(anchor, m)
        })
        .collect()
}

/// Draws `per_anchor` ICM triplets for each anchor.
///
/// Positives are mutual partners, drawn uniformly with replacement; negatives are
/// drawn uniformly from [`negative_pool`]. Anchors without a partner or without a
/// negative are skipped and counted.
pub fn sample_icm_triplets(
    rank: &RankLists,
    pairs: &MutualPairs,
    labels: &PseudoLabels,
    anchors: &[usize],
    per_anchor: usize,
    seed: u64,
) -> IcmSample {
    sample_icm_triplets_with(
        rank,
        pairs,
        labels,
        anchors,
        per_anchor,
        seed,
        NegativeMode::Uniform,
        None,
    )
}

/// [`sample_icm_triplets`] with a configurable negative policy. `Hardest` needs
/// `similarity(anchor, candidate)`; it falls back to uniform sampling without one.
#[allow(clippy::too_many_arguments)]
pub fn sample_icm_triplets_with(
    rank: &RankLists,
    pairs: &MutualPairs,
    labels: &PseudoLabels,
    anchors: &[usize],
    per_anchor: usize,
    seed: u64,
    mode: NegativeMode,
    similarity: Option<&dyn Fn(usize, usize) -> f64>,
) -> IcmSample {
    let mut rng = rng_from(seed);
    let mut out = IcmSample::default();
    for &a in anchors {
        let positives = pairs.partners(a);
        if positives.is_empty() {
            out.skipped_no_positive += 1;
            continue;
        }
        let pool = negative_pool(rank, labels, a);
        if pool.is_empty() {
            out.skipped_no_negative += 1;
            continue;
        }
        let hardest = match (mode, similarity) {
            (NegativeMode::Hardest, Some(sim)) => pool
                .iter()
                .copied()
                .max_by(|&x, &y| sim(a, x).total_cmp(&sim(a, y)).then(y.cmp(&x))),
            _ => None,
        };
        for _ in 0..per_anchor {
            let positive = *positives.choose(&mut rng).expect("non-empty");
            let negative = hardest.unwrap_or_else(|| pool[rng.random_range(0..pool.len())]);
            out.triplets.push(Triplet {
                anchor: a,
                positive,
                negative,
            });
        }
    }
    out
}
