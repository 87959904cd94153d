use std::collections::BTreeMap;

/// Label value used for samples that belong to no cluster.
pub const NOISE: i32 = -1;

/// Per-sample cluster assignment with a compact label space `0..num_clusters`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PseudoLabels {
    labels: Vec<i32>,
    num_clusters: usize,
}

impl PseudoLabels {
    /// Builds labels from arbitrary ids, mapping distinct non-negative ids onto
    /// `0..k` in ascending id order. Negative ids become [`NOISE`].
    pub fn compact(raw: &[i64]) -> Self {
        let mut map = BTreeMap::new();
        for &l in raw.iter().filter(|&&l| l >= 0) {
            map.entry(l).or_insert(0usize);
        }
        for (next, v) in map.values_mut().enumerate() {
            *v = next;
        }
        let labels = raw
            .iter()
            .map(|&l| if l < 0 { NOISE } else { map[&l] as i32 })
            .collect();
        Self {
            labels,
            num_clusters: map.len(),
        }
    }

    pub fn from_labels(raw: &[i32]) -> Self {
        Self::compact(&raw.iter().map(|&l| l as i64).collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.labels
    }

    /// Cluster of sample `i`, or `None` for noise.
    #[inline]
    pub fn cluster(&self, i: usize) -> Option<usize> {
        let l = self.labels[i];
        (l >= 0).then_some(l as usize)
    }

    #[inline]
    pub fn is_noise(&self, i: usize) -> bool {
        self.labels[i] == NOISE
    }

    pub fn num_noise(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Member indices of every cluster, ascending within each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_clusters];
        for &l in self.labels.iter().filter(|&&l| l >= 0) {
            out[l as usize] += 1;
        }
        out
    }
}
