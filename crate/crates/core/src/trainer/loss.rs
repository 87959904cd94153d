//! Losses over unit-norm embeddings with analytic gradients.

use crate::error::{HsrError, Result};
use crate::matrix::Matrix;
use crate::trainer::model::ClassifierHead;

#[derive(Clone, Debug)]
pub struct CeOutput {
    pub loss: f64,
    pub grad_head: Matrix<f64>,
    pub grad_embeddings: Matrix<f64>,
}

#[derive(Clone, Debug)]
pub struct TripletOutput {
    pub loss: f64,
    pub grad_embeddings: Matrix<f64>,
    /// Number of terms averaged into `loss`.
    pub terms: usize,
}

/// Mean softmax cross-entropy of `head · e` against `labels`.
pub fn ce_loss_and_grad(
    head: &ClassifierHead,
    embeddings: &Matrix<f64>,
    labels: &[usize],
) -> Result<CeOutput> {
    let (n, d, c) = (embeddings.rows(), embeddings.cols(), head.num_classes());
    if labels.len() != n || head.weights.cols() != d {
        return Err(HsrError::Shape("cross-entropy inputs not aligned".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(HsrError::Shape(format!("label {bad} outside {c} classes")));
    }
    let mut grad_head = Matrix::<f64>::zeros(c, d);
    let mut grad_embeddings = Matrix::<f64>::zeros(n, d);
    if n == 0 {
        return Ok(CeOutput {
            loss: 0.0,
            grad_head,
            grad_embeddings,
        });
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut probs = vec![0.0; c];
    for (i, &y) in labels.iter().enumerate() {
        let e = embeddings.row(i);
        for (k, p) in probs.iter_mut().enumerate() {
            *p = head.weights.row(k).iter().zip(e).map(|(w, x)| w * x).sum();
        }
        let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for p in probs.iter_mut() {
            *p = (*p - max).exp();
            z += *p;
        }
        probs.iter_mut().for_each(|p| *p /= z);
        loss -= probs[y].max(f64::MIN_POSITIVE).ln();

        let ge = grad_embeddings.row_mut(i);
        for k in 0..c {
            let delta = (probs[k] - f64::from(u8::from(k == y))) * inv_n;
            if delta == 0.0 {
                continue;
            }
            let w = head.weights.row(k);
            for (g, wv) in ge.iter_mut().zip(w) {
                *g += delta * wv;
            }
            for (g, x) in grad_head.row_mut(k).iter_mut().zip(e) {
                *g += delta * x;
            }
        }
    }
    Ok(CeOutput {
        loss: loss * inv_n,
        grad_head,
        grad_embeddings,
    })
}

fn dist(e: &Matrix<f64>, a: usize, b: usize) -> f64 {
    crate::matrix::distance(e.row(a), e.row(b))
}

/// Adds `scale * d|e_a - e_b| / d(e_a, e_b)` into `grad`.
fn add_distance_grad(grad: &mut Matrix<f64>, e: &Matrix<f64>, a: usize, b: usize, scale: f64) {
    let d = dist(e, a, b);
    if d == 0.0 || a == b {
        return;
    }
    let k = scale / d;
    for j in 0..e.cols() {
        let diff = k * (e.get(a, j) - e.get(b, j));
        grad.set(a, j, grad.get(a, j) + diff);
        grad.set(b, j, grad.get(b, j) - diff);
    }
}

fn hinge_terms(
    e: &Matrix<f64>,
    triplets: impl Iterator<Item = (usize, usize, usize)>,
    margin: f64,
) -> (Vec<(usize, usize, usize, f64)>, usize) {
    let mut active = Vec::new();
    let mut count = 0;
    for (a, p, n) in triplets {
        count += 1;
        let h = dist(e, a, p) - dist(e, a, n) + margin;
        active.push((a, p, n, h));
    }
    (active, count)
}

fn reduce(e: &Matrix<f64>, terms: Vec<(usize, usize, usize, f64)>, count: usize) -> TripletOutput {
    let mut grad = Matrix::<f64>::zeros(e.rows(), e.cols());
    if count == 0 {
        return TripletOutput {
            loss: 0.0,
            grad_embeddings: grad,
            terms: 0,
        };
    }
    let w = 1.0 / count as f64;
    let mut loss = 0.0;
    for (a, p, n, h) in terms {
        if h > 0.0 {
            loss += h;
            add_distance_grad(&mut grad, e, a, p, w);
            add_distance_grad(&mut grad, e, a, n, -w);
        }
    }
    TripletOutput {
        loss: loss * w,
        grad_embeddings: grad,
        terms: count,
    }
}

/// Batch-hard triplet loss: each anchor uses its farthest positive and nearest
/// negative within the batch. Ties pick the lowest position.
pub fn batch_hard_triplet_loss_and_grad(
    embeddings: &Matrix<f64>,
    labels: &[usize],
    margin: f64,
) -> Result<TripletOutput> {
    let n = embeddings.rows();
    if labels.len() != n {
        return Err(HsrError::Shape("triplet labels not aligned".into()));
    }
    if labels.iter().all(|&l| Some(&l) == labels.first()) {
        return Err(HsrError::DegenerateBatch);
    }
    let triplets = (0..n).filter_map(|a| {
        let mut hardest_pos: Option<(usize, f64)> = None;
        let mut hardest_neg: Option<(usize, f64)> = None;
        for b in (0..n).filter(|&b| b != a) {
            let d = dist(embeddings, a, b);
            if labels[b] == labels[a] {
                if hardest_pos.is_none_or(|(_, best)| d > best) {
                    hardest_pos = Some((b, d));
                }
            } else if hardest_neg.is_none_or(|(_, best)| d < best) {
                hardest_neg = Some((b, d));
            }
        }
        Some((a, hardest_pos?.0, hardest_neg?.0))
    });
    let (terms, count) = hinge_terms(embeddings, triplets.collect::<Vec<_>>().into_iter(), margin);
    Ok(reduce(embeddings, terms, count))
}

/// Mean hinge over every valid (anchor, positive, negative) position triple.
pub fn all_pairs_triplet_loss_and_grad(
    embeddings: &Matrix<f64>,
    labels: &[usize],
    margin: f64,
) -> Result<TripletOutput> {
    let n = embeddings.rows();
    if labels.len() != n {
        return Err(HsrError::Shape("triplet labels not aligned".into()));
    }
    if labels.iter().all(|&l| Some(&l) == labels.first()) {
        return Err(HsrError::DegenerateBatch);
    }
    let mut triplets = Vec::new();
    for a in 0..n {
        for p in (0..n).filter(|&p| p != a && labels[p] == labels[a]) {
            for m in (0..n).filter(|&m| labels[m] != labels[a]) {
                triplets.push((a, p, m));
            }
        }
    }
    let (terms, count) = hinge_terms(embeddings, triplets.into_iter(), margin);
    Ok(reduce(embeddings, terms, count))
}

/// Mean hinge over explicit `(anchor, positive, negative)` row triples.
/// An empty list gives zero loss and zero gradient.
pub fn icm_triplet_loss_and_grad(
    embeddings: &Matrix<f64>,
    triplets: &[(usize, usize, usize)],
    margin: f64,
) -> Result<TripletOutput> {
    let n = embeddings.rows();
    if triplets.iter().any(|&(a, p, m)| a >= n || p >= n || m >= n) {
        return Err(HsrError::Shape(
            "triplet references a row outside the batch".into(),
        ));
    }
    let (terms, count) = hinge_terms(embeddings, triplets.iter().copied(), margin);
    Ok(reduce(embeddings, terms, count))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_c() {
        let head = ClassifierHead {
            weights: Matrix::zeros(4, 3),
        };
        let e = Matrix::from_rows(&[[1.0f64, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let out = ce_loss_and_grad(&head, &e, &[0, 3]).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_logits_give_near_zero_loss() {
        let head = ClassifierHead {
            weights: Matrix::from_rows(&[[100.0f64, 0.0], [-100.0, 0.0]]).unwrap(),
        };
        let e = Matrix::from_rows(&[[1.0f64, 0.0]]).unwrap();
        assert!(ce_loss_and_grad(&head, &e, &[0]).unwrap().loss < 1e-12);
    }

    #[test]
    fn identical_embeddings_hit_the_margin() {
        let e = Matrix::from_rows(&[[1.0f64, 0.0]; 4]).unwrap();
        let out = batch_hard_triplet_loss_and_grad(&e, &[0, 0, 1, 1], 0.3).unwrap();
        assert!((out.loss - 0.3).abs() < 1e-12);
        assert!(out.grad_embeddings.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn separated_classes_give_zero_loss() {
        let e = Matrix::from_rows(&[[1.0f64, 0.0], [1.0, 0.0], [-1.0, 0.0], [-1.0, 0.0]]).unwrap();
        let out = batch_hard_triplet_loss_and_grad(&e, &[0, 0, 1, 1], 0.3).unwrap();
        assert_eq!(out.loss, 0.0);
        let out = all_pairs_triplet_loss_and_grad(&e, &[0, 0, 1, 1], 0.3).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn single_class_batch_is_degenerate() {
        let e = Matrix::from_rows(&[[1.0f64, 0.0]; 3]).unwrap();
        assert!(matches!(
            batch_hard_triplet_loss_and_grad(&e, &[2, 2, 2], 0.3),
            Err(HsrError::DegenerateBatch)
        ));
    }

    #[test]
    fn icm_hinge_cases() {
        let e = Matrix::from_rows(&[[0.0f64, 0.0], [0.0, 0.0], [0.6, 0.0]]).unwrap();
        assert_eq!(
            icm_triplet_loss_and_grad(&e, &[(0, 1, 2)], 0.3)
                .unwrap()
                .loss,
            0.0
        );
        let e = Matrix::from_rows(&[[0.0f64, 0.0], [0.5, 0.0]]).unwrap();
        let out = icm_triplet_loss_and_grad(&e, &[(0, 1, 1)], 0.3).unwrap();
        assert!((out.loss - 0.3).abs() < 1e-12);
        let out = icm_triplet_loss_and_grad(&e, &[], 0.3).unwrap();
        assert_eq!((out.loss, out.terms), (0.0, 0));
    }
}
