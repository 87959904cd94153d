//! The sample set every stage operates on: raw per-part features, camera ids and
//! (for synthetic data) ground-truth identities.

use crate::error::{HsrError, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    raw_global: Matrix,
    raw_parts: Vec<Matrix>,
    cameras: Vec<u32>,
    gt_ids: Option<Vec<u32>>,
}

impl EmbeddingSet {
    /// Builds a set from part blocks; the global feature is their concatenation.
    pub fn from_parts(
        parts: Vec<Matrix>,
        cameras: Vec<u32>,
        gt_ids: Option<Vec<u32>>,
    ) -> Result<Self> {
        let refs: Vec<&Matrix> = parts.iter().collect();
        let raw_global = Matrix::hconcat(&refs)?;
        Self::new(raw_global, parts, cameras, gt_ids)
    }

    pub fn new(
        raw_global: Matrix,
        raw_parts: Vec<Matrix>,
        cameras: Vec<u32>,
        gt_ids: Option<Vec<u32>>,
    ) -> Result<Self> {
        let n = raw_global.rows();
        if n == 0 {
            return Err(HsrError::Dataset("dataset has no samples".into()));
        }
        if raw_parts.is_empty() {
            return Err(HsrError::Dataset("dataset has no part blocks".into()));
        }
        let d_part = raw_parts[0].cols();
        if raw_parts
            .iter()
            .any(|p| p.rows() != n || p.cols() != d_part)
        {
            return Err(HsrError::Dataset("part blocks disagree in shape".into()));
        }
        if raw_global.cols() != d_part * raw_parts.len() {
            return Err(HsrError::Dataset(format!(
                "global width {} != {} parts x {d_part}",
                raw_global.cols(),
                raw_parts.len()
            )));
        }
        if !raw_global.is_finite() || raw_parts.iter().any(|p| !p.is_finite()) {
            return Err(HsrError::NonFinite("raw features"));
        }
        for i in 0..n {
            let g = raw_global.row(i);
            for (p, block) in raw_parts.iter().enumerate() {
                let slice = &g[p * d_part..(p + 1) * d_part];
                let same = slice
                    .iter()
                    .zip(block.row(i))
                    .all(|(a, b)| a.to_bits() == b.to_bits());
                if !same {
                    return Err(HsrError::Dataset(format!(
                        "row {i}: global feature is not the concatenation of its parts"
                    )));
                }
            }
        }
        if cameras.len() != n {
            return Err(HsrError::Dataset(format!(
                "{} cameras for {n} samples",
                cameras.len()
            )));
        }
        if let Some(gt) = &gt_ids {
            if gt.len() != n {
                return Err(HsrError::Dataset(format!(
                    "{} gt ids for {n} samples",
                    gt.len()
                )));
            }
        }
        Ok(Self {
            raw_global,
            raw_parts,
            cameras,
            gt_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.raw_global.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn raw_global(&self) -> &Matrix {
        &self.raw_global
    }

    pub fn raw_parts(&self) -> &[Matrix] {
        &self.raw_parts
    }

    pub fn part(&self, p: usize) -> &Matrix {
        &self.raw_parts[p]
    }

    pub fn num_parts(&self) -> usize {
        self.raw_parts.len()
    }

    pub fn part_dim(&self) -> usize {
        self.raw_parts[0].cols()
    }

    pub fn cameras(&self) -> &[u32] {
        &self.cameras
    }

    pub fn num_cameras(&self) -> usize {
        self.cameras.iter().max().map_or(0, |&c| c as usize + 1)
    }

    /// Number of distinct camera ids actually present.
    pub fn camera_diversity(&self) -> usize {
        let mut c = self.cameras.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    }

    pub fn gt_ids(&self) -> Option<&[u32]> {
        self.gt_ids.as_deref()
    }

    /// Element-wise mean of the part blocks: the input to the global embedding.
    pub fn mean_part_input(&self) -> Matrix {
        let n = self.len();
        let d = self.part_dim();
        let scale = 1.0 / self.raw_parts.len() as f64;
        let mut out = Matrix::zeros(n, d);
        for i in 0..n {
            let row = out.row_mut(i);
            for (k, v) in row.iter_mut().enumerate() {
                let sum: f64 = self.raw_parts.iter().map(|p| p.get(i, k) as f64).sum();
                *v = (sum * scale) as f32;
            }
        }
        out
    }
}
