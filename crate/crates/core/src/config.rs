//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! K = 10
//! eps = auto
//! use_pbh = false
//! ```

use std::str::FromStr;

use crate::error::{HsrError, Result};
use crate::icm::NegativeMode;
use crate::pbh::LambdaMode;
use crate::synth::{SynthConfig, TwinPart};
use crate::trainer::{TrainConfig, TripletMode};

#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub seed: u64,
}

fn typed<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T> {
    value.parse().map_err(|_| HsrError::Type {
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

fn auto_or_float(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "auto" {
        Ok(None)
    } else {
        typed(key, value, "`auto` or a number").map(Some)
    }
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(HsrError::Type {
            key: key.to_string(),
            value: value.to_string(),
            expected: "a boolean",
        }),
    }
}

fn choice<T>(key: &str, value: &str, options: &[(&str, T)], expected: &'static str) -> Result<T>
where
    T: Copy,
{
    options
        .iter()
        .find(|(name, _)| *name == value)
        .map(|(_, v)| *v)
        .ok_or_else(|| HsrError::Type {
            key: key.to_string(),
            value: value.to_string(),
            expected,
        })
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let t = &mut self.train;
        let s = &mut self.synth;
        match key {
            "K" => t.icm_k = typed(key, value, "a non-negative integer")?,
            "min_pts" => t.min_pts = typed(key, value, "a non-negative integer")?,
            "eps" => t.eps = auto_or_float(key, value)?,
            "eps_percentile" => t.eps_percentile = typed(key, value, "a number")?,
            "lambda" => {
                t.pbh.lambda =
                    auto_or_float(key, value)?.map_or(LambdaMode::Auto, LambdaMode::Fixed)
            }
            "min_cluster_size_for_split" => {
                t.pbh.min_cluster_size_for_split = typed(key, value, "a non-negative integer")?
            }
            "margin" => t.margin = typed(key, value, "a number")?,
            "lr" => t.lr = typed(key, value, "a number")?,
            "epochs_per_iter" => t.epochs_per_iter = typed(key, value, "a non-negative integer")?,
            "iterations" => t.iterations = typed(key, value, "a non-negative integer")?,
            "P_ids" => t.p_ids = typed(key, value, "a non-negative integer")?,
            "K_imgs" => t.k_imgs = typed(key, value, "a non-negative integer")?,
            "D_out" => t.d_out = typed(key, value, "a non-negative integer")?,
            "use_icm" => t.use_icm = boolean(key, value)?,
            "use_pbh" => t.use_pbh = boolean(key, value)?,
            "triplet_mode" => {
                t.triplet_mode = choice(
                    key,
                    value,
                    &[
                        ("batch_hard", TripletMode::BatchHard),
                        ("all_pairs", TripletMode::AllPairs),
                    ],
                    "batch_hard or all_pairs",
                )?
            }
            "icm_negatives" => {
                t.icm_negatives = choice(
                    key,
                    value,
                    &[
                        ("uniform", NegativeMode::Uniform),
                        ("hardest", NegativeMode::Hardest),
                    ],
                    "uniform or hardest",
                )?
            }
            "seed" => self.seed = typed(key, value, "a non-negative integer")?,
            "num_ids" => s.num_ids = typed(key, value, "a non-negative integer")?,
            "cams" => s.cams = typed(key, value, "a non-negative integer")?,
            "samples_per_id_per_cam" => {
                s.samples_per_id_per_cam = typed(key, value, "a non-negative integer")?
            }
            "D_part" => s.d_part = typed(key, value, "a non-negative integer")?,
            "sigma_id" => s.sigma_id = typed(key, value, "a number")?,
            "alpha_cam" => s.alpha_cam = typed(key, value, "a number")?,
            "twin_fraction" => s.twin_fraction = typed(key, value, "a number")?,
            "twin_part" => {
                s.twin_part = typed::<TwinPart>(key, value, "upper, lower or alternate")?
            }
            "noise_sigma" => s.noise_sigma = typed(key, value, "a number")?,
            _ => {
                return Err(HsrError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.synth.validate()
    }
}

/// Parses a configuration file; omitted keys keep their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| HsrError::Parse {
            line,
            msg: format!("expected `key = value`, got `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(HsrError::Parse {
                line,
                msg: "empty key or value".into(),
            });
        }
        cfg.set(key, value, line)?;
    }
    cfg.validate()?;
    Ok(cfg)
}
