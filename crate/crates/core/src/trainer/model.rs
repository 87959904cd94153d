use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{HsrError, Result};
use crate::matrix::{Matrix, Scalar};
use crate::seed::rng_from;
use crate::similarity::MIN_NORM;

pub const DEFAULT_EMBEDDING_DIM: usize = 64;

/// Linear projection followed by L2 normalization, shared by the global input and
/// both part inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorModel {
    weights: Matrix,
    bias: Vec<f32>,
}

/// Embeddings plus the pre-normalization norms needed for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub embeddings: Matrix<f64>,
    pub norms: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ProjectorModel {
    /// Gaussian weights with variance `1 / d_in`, zero bias.
    pub fn random(d_in: usize, d_out: usize, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let scale = 1.0 / (d_in as f64).sqrt();
        let data = (0..d_in * d_out)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z * scale) as f32
            })
            .collect();
        Self {
            weights: Matrix::new(d_out, d_in, data).expect("sized above"),
            bias: vec![0.0; d_out],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut weights = Matrix::zeros(d, d);
        for i in 0..d {
            weights.set(i, i, 1.0);
        }
        Self {
            weights,
            bias: vec![0.0; d],
        }
    }

    pub fn from_parts(weights: Matrix, bias: Vec<f32>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(HsrError::Shape(format!(
                "bias has {} entries for {} outputs",
                bias.len(),
                weights.rows()
            )));
        }
        if !weights.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(HsrError::NonFinite("model parameters"));
        }
        Ok(Self { weights, bias })
    }

    pub fn d_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn d_out(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f32], &mut [f32]) {
        (self.weights.as_mut_slice(), &mut self.bias)
    }

    fn project_row<T: Scalar>(&self, x: &[T], out: &mut [f64]) {
        for (o, (w, b)) in out.iter_mut().zip(self.weights.iter_rows().zip(&self.bias)) {
            *o = *b as f64
                + w.iter()
                    .zip(x)
                    .map(|(w, x)| *w as f64 * x.to_f64())
                    .sum::<f64>();
        }
    }

    /// `normalize(W x + b)` for every row, in f64.
    pub fn forward_cached<T: Scalar>(&self, raw: &Matrix<T>) -> Result<ForwardCache> {
        if raw.cols() != self.d_in() {
            return Err(HsrError::Shape(format!(
                "model expects {} inputs, got {}",
                self.d_in(),
                raw.cols()
            )));
        }
        let mut embeddings = Matrix::<f64>::zeros(raw.rows(), self.d_out());
        let mut norms = Vec::with_capacity(raw.rows());
        for i in 0..raw.rows() {
            let out = embeddings.row_mut(i);
            self.project_row(raw.row(i), out);
            let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(HsrError::NonFinite("projected features"));
            }
            if norm <= MIN_NORM {
                return Err(HsrError::ZeroVector { row: i });
            }
            out.iter_mut().for_each(|v| *v /= norm);
            norms.push(norm);
        }
        Ok(ForwardCache { embeddings, norms })
    }

    /// Unit-norm f32 embeddings.
    pub fn forward<T: Scalar>(&self, raw: &Matrix<T>) -> Result<Matrix> {
        Ok(self.forward_cached(raw)?.embeddings.cast())
    }

    /// Gradients of the parameters given the gradient w.r.t. the normalized outputs.
    pub fn backward<T: Scalar>(
        &self,
        raw: &Matrix<T>,
        cache: &ForwardCache,
        grad_embeddings: &Matrix<f64>,
    ) -> ProjectorGrads {
        let (d_out, d_in) = (self.d_out(), self.d_in());
        let mut gw = vec![0.0; d_out * d_in];
        let mut gb = vec![0.0; d_out];
        let mut dz = vec![0.0; d_out];
        for i in 0..raw.rows() {
            let e = cache.embeddings.row(i);
            let g = grad_embeddings.row(i);
            let eg: f64 = e.iter().zip(g).map(|(a, b)| a * b).sum();
            let inv = 1.0 / cache.norms[i];
            for k in 0..d_out {
                dz[k] = (g[k] - e[k] * eg) * inv;
            }
            if dz.iter().all(|&v| v == 0.0) {
                continue;
            }
            let x = raw.row(i);
            for (o, &d) in dz.iter().enumerate() {
                gb[o] += d;
                let row = &mut gw[o * d_in..(o + 1) * d_in];
                for (w, xv) in row.iter_mut().zip(x) {
                    *w += d * xv.to_f64();
                }
            }
        }
        ProjectorGrads {
            weights: gw,
            bias: gb,
        }
    }
}

/// Linear classifier over embeddings, one row per current pseudo class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead {
    pub weights: Matrix<f64>,
}

impl ClassifierHead {
    /// Uniform in `[-1/sqrt(d), 1/sqrt(d)]`.
    pub fn new(num_classes: usize, d: usize, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let s = 1.0 / (d as f64).sqrt();
        let data = (0..num_classes * d)
            .map(|_| rng.random_range(-s..=s))
            .collect();
        Self {
            weights: Matrix::new(num_classes, d, data).expect("sized above"),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }
}

/// Plain SGD: `p -= lr * g`. Nothing is updated if any gradient is non-finite.
pub fn sgd_step<T: Scalar>(params: &mut [T], grads: &[f64], lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(HsrError::Shape(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(HsrError::NonFinite("gradient"));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        *p = T::from_f64(p.to_f64() - lr * g);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_model_preserves_unit_rows() {
        let x = Matrix::from_rows(&[[0.6f32, 0.8, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let y = ProjectorModel::identity(3).forward(&x).unwrap();
        for (a, b) in x.as_slice().iter().zip(y.as_slice()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn forward_matches_direct_matmul() {
        let model = ProjectorModel::random(5, 7, 3);
        let mut rng = rng_from(8);
        let x = Matrix::new(
            6,
            5,
            (0..30).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
        )
        .unwrap();
        let y = model.forward(&x).unwrap();
        for i in 0..6 {
            let mut z = [0.0f64; 7];
            for (o, zo) in z.iter_mut().enumerate() {
                for k in 0..5 {
                    *zo += model.weights().get(o, k) as f64 * x.get(i, k) as f64;
                }
                *zo += model.bias()[o] as f64;
            }
            let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            for o in 0..7 {
                assert!((y.get(i, o) as f64 - z[o] / n).abs() < 1e-6);
            }
            let norm: f64 = y
                .row(i)
                .iter()
                .map(|&v| (v as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn forward_rejects_collapsed_rows() {
        let x = Matrix::from_rows(&[[0.0f32, 0.0]]).unwrap();
        assert!(matches!(
            ProjectorModel::identity(2).forward(&x),
            Err(HsrError::ZeroVector { row: 0 })
        ));
        assert!(ProjectorModel::identity(3).forward(&x).is_err());
    }

    #[test]
    fn sgd_arithmetic() {
        let mut p = [1.0f32];
        sgd_step(&mut p, &[2.0], 0.005).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-7);
        let mut q = [0.5f64, -1.0];
        sgd_step(&mut q, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(q, [0.5, -1.0]);
    }

    #[test]
    fn sgd_refuses_non_finite() {
        let mut p = [1.0f32, 2.0];
        assert!(sgd_step(&mut p, &[0.1, f64::NAN], 0.1).is_err());
        assert_eq!(p, [1.0, 2.0]);
    }
}
