//! Synthetic camera-biased benchmark with known identities.
//!
//! Every identity has an upper and a lower part center. Each camera adds its own
//! offset direction to both parts, strong enough (for `alpha_cam > sigma_id`) that a
//! person seen by two cameras can be farther apart than two people seen by the same
//! camera. Twin identities share one part center exactly, so they differ only in the
//! other part.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::EmbeddingSet;
use crate::error::{HsrError, Result};
use crate::eval::EvalSplit;
use crate::matrix::Matrix;
use crate::seed::{derive_seed, rng_from};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TwinPart {
    Upper,
    Lower,
    /// Upper for even-numbered twin pairs, lower for odd.
    Alternate,
}

impl std::str::FromStr for TwinPart {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "upper" => Ok(Self::Upper),
            "lower" => Ok(Self::Lower),
            "alternate" => Ok(Self::Alternate),
            _ => Err(format!("expected upper, lower or alternate, got `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub num_ids: usize,
    pub cams: usize,
    pub samples_per_id_per_cam: usize,
    pub d_part: usize,
    pub sigma_id: f64,
    pub alpha_cam: f64,
    pub twin_fraction: f64,
    pub twin_part: TwinPart,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_ids: 60,
            cams: 6,
            samples_per_id_per_cam: 3,
            d_part: 32,
            sigma_id: 1.0,
            alpha_cam: 1.2,
            twin_fraction: 0.3,
            twin_part: TwinPart::Alternate,
            noise_sigma: 0.15,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HsrError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.twin_fraction) {
            return bad("twin_fraction must lie in [0, 1]");
        }
        if self.cams < 2 {
            return bad("cams must be >= 2");
        }
        if self.num_ids == 0 || self.samples_per_id_per_cam == 0 || self.d_part == 0 {
            return bad("num_ids, samples_per_id_per_cam and d_part must be >= 1");
        }
        for (name, v) in [
            ("sigma_id", self.sigma_id),
            ("alpha_cam", self.alpha_cam),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(HsrError::Config(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub dataset: EmbeddingSet,
    pub split: EvalSplit,
    /// `(id_a, id_b, shared part)` for every twin pair.
    pub twin_pairs: Vec<(u32, u32, TwinPart)>,
}

fn gaussian(rng: &mut impl Rng, dim: usize, sigma: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

fn unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = gaussian(rng, dim, 1.0);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let d = config.d_part;
    let mut rng = rng_from(derive_seed(config.seed, &[0x5157]));

    // camera offsets: per camera and part, a unit direction scaled to the identity spread
    let spread = (d as f64).sqrt();
    let offsets: Vec<[Vec<f64>; 2]> = (0..config.cams)
        .map(|_| {
            let mut part = || {
                let scale = config.alpha_cam * spread * rng.random_range(0.75..1.25);
                unit(&mut rng, d)
                    .into_iter()
                    .map(|x| x * scale)
                    .collect::<Vec<_>>()
            };
            [part(), part()]
        })
        .collect();

    let mut centers: Vec<[Vec<f64>; 2]> = (0..config.num_ids)
        .map(|_| {
            [
                gaussian(&mut rng, d, config.sigma_id),
                gaussian(&mut rng, d, config.sigma_id),
            ]
        })
        .collect();

    let num_pairs = (config.twin_fraction * config.num_ids as f64 / 2.0).floor() as usize;
    let mut order: Vec<usize> = (0..config.num_ids).collect();
    order.shuffle(&mut rng);
    let mut twin_pairs = Vec::with_capacity(num_pairs);
    for k in 0..num_pairs {
        let (a, b) = (order[2 * k], order[2 * k + 1]);
        let part = match config.twin_part {
            TwinPart::Alternate if k % 2 == 0 => TwinPart::Upper,
            TwinPart::Alternate => TwinPart::Lower,
            p => p,
        };
        let p = usize::from(part == TwinPart::Lower);
        centers[b][p] = centers[a][p].clone();
        twin_pairs.push((a.min(b) as u32, a.max(b) as u32, part));
    }

    let n = config.num_ids * config.cams * config.samples_per_id_per_cam;
    let mut upper = Vec::with_capacity(n * d);
    let mut lower = Vec::with_capacity(n * d);
    let mut cameras = Vec::with_capacity(n);
    let mut gt = Vec::with_capacity(n);
    let mut split = EvalSplit::default();
    for (id, center) in centers.iter().enumerate() {
        for (cam, offset) in offsets.iter().enumerate() {
            for s in 0..config.samples_per_id_per_cam {
                let index = cameras.len();
                for (p, out) in [&mut upper, &mut lower].into_iter().enumerate() {
                    let noise = gaussian(&mut rng, d, config.noise_sigma);
                    out.extend((0..d).map(|k| (center[p][k] + offset[p][k] + noise[k]) as f32));
                }
                cameras.push(cam as u32);
                gt.push(id as u32);
                if s == 0 {
                    split.query.push(index);
                } else {
                    split.gallery.push(index);
                }
            }
        }
    }
    let parts = vec![Matrix::new(n, d, upper)?, Matrix::new(n, d, lower)?];
    let dataset = EmbeddingSet::from_parts(parts, cameras, Some(gt))?;
    Ok(SynthData {
        dataset,
        split,
        twin_pairs,
    })
}
