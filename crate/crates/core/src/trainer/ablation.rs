//! Five-way component ablation on the synthetic benchmark.

use crate::error::{HsrError, Result};
use crate::eval::evaluate;
use crate::synth::{generate, SynthConfig};
use crate::trainer::{embed, initial_model, run_hsr, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// The untrained projector.
    DirectTransfer,
    Baseline,
    BaselinePbh,
    BaselineIcm,
    Hsr,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::DirectTransfer,
        Variant::Baseline,
        Variant::BaselinePbh,
        Variant::BaselineIcm,
        Variant::Hsr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::DirectTransfer => "direct_transfer",
            Variant::Baseline => "baseline",
            Variant::BaselinePbh => "baseline_pbh",
            Variant::BaselineIcm => "baseline_icm",
            Variant::Hsr => "hsr",
        }
    }

    /// `None` for the variant that skips training altogether.
    pub fn train_config(self, base: &TrainConfig) -> Option<TrainConfig> {
        let (use_icm, use_pbh) = match self {
            Variant::DirectTransfer => return None,
            Variant::Baseline => (false, false),
            Variant::BaselinePbh => (false, true),
            Variant::BaselineIcm => (true, false),
            Variant::Hsr => (true, true),
        };
        Some(TrainConfig {
            use_icm,
            use_pbh,
            ..base.clone()
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub r1: f64,
    pub map: f64,
}

/// Runs every variant for each seed.
///
/// Seed `s` regenerates the benchmark with `synth.seed + s` and trains with seed `s`,
/// so all variants of one seed see the same data and the same initial model.
pub fn run_ablation(
    synth: &SynthConfig,
    train: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(seeds.len() * Variant::ALL.len());
    for &seed in seeds {
        let data = generate(&SynthConfig {
            seed: synth.seed.wrapping_add(seed),
            ..synth.clone()
        })?;
        let gt = data
            .dataset
            .gt_ids()
            .ok_or_else(|| HsrError::Dataset("benchmark has no identities".into()))?;
        for variant in Variant::ALL {
            let result = match variant.train_config(train) {
                None => {
                    let model = initial_model(&data.dataset, train, seed);
                    evaluate(
                        &embed(&model, &data.dataset)?,
                        gt,
                        data.dataset.cameras(),
                        &data.split,
                    )?
                }
                Some(cfg) => {
                    let run = run_hsr(&data.dataset, None, &cfg, seed)?;
                    evaluate(
                        &embed(&run.model, &data.dataset)?,
                        gt,
                        data.dataset.cameras(),
                        &data.split,
                    )?
                }
            };
            rows.push(AblationRow {
                variant,
                seed,
                r1: result.r1,
                map: result.map,
            });
        }
    }
    Ok(rows)
}

/// Mean mAP per variant, in [`Variant::ALL`] order.
pub fn mean_map(rows: &[AblationRow]) -> Vec<(Variant, f64)> {
    Variant::ALL
        .iter()
        .map(|&v| {
            let maps: Vec<f64> = rows
                .iter()
                .filter(|r| r.variant == v)
                .map(|r| r.map)
                .collect();
            let mean = if maps.is_empty() {
                f64::NAN
            } else {
                maps.iter().sum::<f64>() / maps.len() as f64
            };
            (v, mean)
        })
        .collect()
}
