use rand::seq::index::sample;
use rand::Rng;

use crate::error::{HsrError, Result};
use crate::labels::PseudoLabels;
use crate::seed::rng_from;

/// Identity-balanced batch: `p_ids` distinct clusters, `k_imgs` members from each.
///
/// Members are drawn without replacement when the cluster is large enough and with
/// replacement otherwise. Output is grouped by cluster.
pub fn pk_sample(
    labels: &PseudoLabels,
    p_ids: usize,
    k_imgs: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let members = labels.members();
    let available: Vec<usize> = (0..members.len())
        .filter(|&c| !members[c].is_empty())
        .collect();
    if available.len() < p_ids || p_ids == 0 {
        return Err(HsrError::TooFewClusters {
            have: available.len(),
            need: p_ids.max(1),
        });
    }
    let mut rng = rng_from(seed);
    let mut batch = Vec::with_capacity(p_ids * k_imgs);
    for pick in sample(&mut rng, available.len(), p_ids) {
        let m = &members[available[pick]];
        if m.len() >= k_imgs {
            batch.extend(sample(&mut rng, m.len(), k_imgs).into_iter().map(|i| m[i]));
        } else {
            batch.extend((0..k_imgs).map(|_| m[rng.random_range(0..m.len())]));
        }
    }
    Ok(batch)
}
