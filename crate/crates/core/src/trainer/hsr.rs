//! The iterative cluster → rectify → train loop.

use std::collections::HashMap;

use crate::cluster::{
    dbscan_precomputed, eps_heuristic_precomputed, DbscanParams, DEFAULT_EPS_PERCENTILE,
};
use crate::dataset::EmbeddingSet;
use crate::error::{HsrError, Result};
use crate::eval::{evaluate, hard_positive_rate, rank_precision, EvalSplit};
use crate::icm::{
    build_rank_lists, eligible_anchors, mutual_pairs, sample_icm_triplets_with, NegativeMode,
};
use crate::labels::PseudoLabels;
use crate::matrix::Matrix;
use crate::pbh::{apply_pbh, cluster_quality_precomputed, PbhConfig};
use crate::seed::{derive_seed, tag};
use crate::similarity::{distance_matrix, pairwise_similarity};
use crate::trainer::loss::{
    all_pairs_triplet_loss_and_grad, batch_hard_triplet_loss_and_grad, ce_loss_and_grad,
    icm_triplet_loss_and_grad, TripletOutput,
};
use crate::trainer::model::{sgd_step, ClassifierHead, ProjectorModel};
use crate::trainer::sampler::pk_sample;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TripletMode {
    #[default]
    BatchHard,
    AllPairs,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs_per_iter: usize,
    pub iterations: usize,
    pub p_ids: usize,
    pub k_imgs: usize,
    pub margin: f64,
    pub d_out: usize,
    pub use_icm: bool,
    pub use_pbh: bool,
    /// Rank-list length for inter-camera mining.
    pub icm_k: usize,
    pub min_pts: usize,
    /// `None` derives eps from the data every iteration.
    pub eps: Option<f64>,
    pub eps_percentile: f64,
    pub pbh: PbhConfig,
    pub triplet_mode: TripletMode,
    pub icm_negatives: NegativeMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            epochs_per_iter: 10,
            iterations: 30,
            p_ids: 8,
            k_imgs: 4,
            margin: 0.3,
            d_out: crate::trainer::model::DEFAULT_EMBEDDING_DIM,
            use_icm: true,
            use_pbh: true,
            icm_k: crate::icm::DEFAULT_K,
            min_pts: crate::cluster::DEFAULT_MIN_PTS,
            eps: None,
            eps_percentile: DEFAULT_EPS_PERCENTILE,
            pbh: PbhConfig::default(),
            triplet_mode: TripletMode::BatchHard,
            icm_negatives: NegativeMode::Uniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs_per_iter", self.epochs_per_iter),
            ("P_ids", self.p_ids),
            ("K_imgs", self.k_imgs),
            ("D_out", self.d_out),
            ("K", self.icm_k),
            ("min_pts", self.min_pts),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(HsrError::Config(format!("{name} must be >= 1")));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(HsrError::Config("lr must be finite and > 0".into()));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(HsrError::Config("margin must be finite and >= 0".into()));
        }
        if let Some(eps) = self.eps {
            DbscanParams::new(eps, self.min_pts)?;
        }
        self.pbh.validate()
    }

    pub fn batch_size(&self) -> usize {
        self.p_ids * self.k_imgs
    }
}

/// One row of training history.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub eps: f64,
    /// Clusters after rectification, i.e. the classes trained on.
    pub num_clusters: usize,
    pub num_noise: usize,
    pub mean_msil: Option<f64>,
    pub lambda: Option<f64>,
    pub pbh_selected: usize,
    pub num_pairs: usize,
    pub steps: usize,
    pub loss_ce: f64,
    pub loss_trip: f64,
    pub loss_icm: f64,
    /// Mean of `loss_ce + loss_trip + loss_icm` per step.
    pub loss_total: f64,
    pub r1: Option<f64>,
    pub map: Option<f64>,
    pub rank_precision: Option<f64>,
    pub hard_positive_rate: Option<f64>,
    /// Set when the iteration could not train, e.g. fewer than two clusters.
    pub skipped: Option<String>,
}

#[derive(Clone, Debug)]
pub struct HsrRun {
    pub model: ProjectorModel,
    pub history: Vec<IterationRecord>,
    /// Training labels of every iteration.
    pub labels: Vec<PseudoLabels>,
}

/// Inputs the model consumes: the part average for the global embedding and each part.
struct Inputs {
    global: Matrix,
    upper: Matrix,
    lower: Matrix,
}

impl Inputs {
    fn new(dataset: &EmbeddingSet) -> Result<Self> {
        if dataset.num_parts() != 2 {
            return Err(HsrError::Dataset(format!(
                "expected 2 part blocks, got {}",
                dataset.num_parts()
            )));
        }
        Ok(Self {
            global: dataset.mean_part_input(),
            upper: dataset.part(0).clone(),
            lower: dataset.part(1).clone(),
        })
    }
}

/// Initial model for a dataset and seed; evaluating it is the no-adaptation baseline.
pub fn initial_model(dataset: &EmbeddingSet, config: &TrainConfig, seed: u64) -> ProjectorModel {
    ProjectorModel::random(
        dataset.part_dim(),
        config.d_out,
        derive_seed(seed, &[tag::MODEL_INIT]),
    )
}

/// Global embeddings of every sample.
pub fn embed(model: &ProjectorModel, dataset: &EmbeddingSet) -> Result<Matrix> {
    model.forward(&dataset.mean_part_input())
}

pub fn run_hsr(
    dataset: &EmbeddingSet,
    split: Option<&EvalSplit>,
    config: &TrainConfig,
    seed: u64,
) -> Result<HsrRun> {
    run_hsr_from(
        initial_model(dataset, config, seed),
        dataset,
        split,
        config,
        seed,
    )
}

/// Runs the loop starting from an existing model.
pub fn run_hsr_from(
    mut model: ProjectorModel,
    dataset: &EmbeddingSet,
    split: Option<&EvalSplit>,
    config: &TrainConfig,
    seed: u64,
) -> Result<HsrRun> {
    config.validate()?;
    if model.d_in() != dataset.part_dim() {
        return Err(HsrError::Shape(format!(
            "model input width {} != part width {}",
            model.d_in(),
            dataset.part_dim()
        )));
    }
    if config.use_icm && dataset.camera_diversity() < 2 {
        return Err(HsrError::Dataset(
            "inter-camera mining needs at least two cameras".into(),
        ));
    }
    let inputs = Inputs::new(dataset)?;
    let n = dataset.len();
    let gt = dataset.gt_ids();
    let mut history = Vec::with_capacity(config.iterations);
    let mut label_history = Vec::with_capacity(config.iterations);

    for iter in 1..=config.iterations {
        let emb = model.forward(&inputs.global)?;
        let dist = distance_matrix(&emb);

        let eps = match config.eps {
            Some(e) => e,
            None if n > config.min_pts => {
                eps_heuristic_precomputed(&dist, n, config.min_pts, config.eps_percentile)
            }
            None => {
                return Err(HsrError::TooFewSamples {
                    n,
                    k: config.min_pts,
                })
            }
        };
        // identical embeddings give eps = 0, which DBSCAN cannot take
        let eps = eps.max(1e-9);
        let mut labels = dbscan_precomputed(&dist, n, DbscanParams::new(eps, config.min_pts)?);

        let quality = match cluster_quality_precomputed(&dist, &labels, &config.pbh) {
            Ok(q) => Some(q),
            Err(HsrError::SingleCluster) => None,
            Err(e) => return Err(e),
        };
        let mean_msil = quality
            .as_ref()
            .map(|q| q.msil.iter().sum::<f64>() / q.msil.len() as f64);
        let mut pbh_selected = 0;
        if config.use_pbh {
            if let Some(q) = &quality {
                let upper = model.forward(&inputs.upper)?;
                let lower = model.forward(&inputs.lower)?;
                let seed = derive_seed(seed, &[tag::PBH_SPLIT, iter as u64]);
                let out = apply_pbh(&labels, q, &upper, &lower, &config.pbh, seed)?;
                pbh_selected = out.num_selected();
                labels = out.labels;
            }
        }

        let sim = pairwise_similarity(&emb)?;
        let rank = build_rank_lists(&sim, dataset.cameras(), config.icm_k)?;
        let pairs = mutual_pairs(&rank);

        let mut record = IterationRecord {
            iter,
            eps,
            num_clusters: labels.num_clusters(),
            num_noise: labels.num_noise(),
            mean_msil,
            lambda: quality.as_ref().map(|q| q.lambda),
            pbh_selected,
            num_pairs: pairs.len(),
            steps: 0,
            loss_ce: 0.0,
            loss_trip: 0.0,
            loss_icm: 0.0,
            loss_total: 0.0,
            r1: None,
            map: None,
            rank_precision: gt.map(|g| rank_precision(&rank, g)),
            hard_positive_rate: gt.map(|g| hard_positive_rate(&rank, g, &labels)),
            skipped: None,
        };

        if labels.num_clusters() < 2 {
            record.skipped = Some(format!(
                "{} clusters; nothing to train on",
                labels.num_clusters()
            ));
        } else {
            let icm = config.use_icm.then(|| IcmState {
                anchors_ok: {
                    let mut ok = vec![false; n];
                    for a in eligible_anchors(&pairs, &labels) {
                        ok[a] = true;
                    }
                    ok
                },
                rank: &rank,
                pairs: &pairs,
                sim: &sim,
            });
            train_iteration(
                &mut model,
                &inputs,
                &labels,
                icm.as_ref(),
                config,
                seed,
                iter,
                &mut record,
            )?;
        }

        if let (Some(split), Some(gt)) = (split, gt) {
            let emb = model.forward(&inputs.global)?;
            let r = evaluate(&emb, gt, dataset.cameras(), split)?;
            record.r1 = Some(r.r1);
            record.map = Some(r.map);
        }
        history.push(record);
        label_history.push(labels);
    }
    Ok(HsrRun {
        model,
        history,
        labels: label_history,
    })
}

struct IcmState<'a> {
    anchors_ok: Vec<bool>,
    rank: &'a crate::icm::RankLists,
    pairs: &'a crate::icm::MutualPairs,
    sim: &'a crate::similarity::SimilarityMatrix,
}

#[allow(clippy::too_many_arguments)]
fn train_iteration(
    model: &mut ProjectorModel,
    inputs: &Inputs,
    labels: &PseudoLabels,
    icm: Option<&IcmState<'_>>,
    config: &TrainConfig,
    seed: u64,
    iter: usize,
    record: &mut IterationRecord,
) -> Result<()> {
    let num_classes = labels.num_clusters();
    let mut head = ClassifierHead::new(
        num_classes,
        config.d_out,
        derive_seed(seed, &[tag::HEAD_INIT, iter as u64]),
    );
    let p_ids = config.p_ids.min(num_classes);
    let trainable = labels.len() - labels.num_noise();
    let batches = (trainable / (p_ids * config.k_imgs)).max(1);

    let (mut sum_ce, mut sum_trip, mut sum_icm, mut steps) = (0.0, 0.0, 0.0, 0usize);
    for epoch in 0..config.epochs_per_iter {
        for b in 0..batches {
            let path = [iter as u64, epoch as u64, b as u64];
            let batch = pk_sample(
                labels,
                p_ids,
                config.k_imgs,
                derive_seed(seed, &[tag::PK_BATCH, path[0], path[1], path[2]]),
            )?;
            let batch_labels: Vec<usize> = batch
                .iter()
                .map(|&i| labels.cluster(i).expect("non-noise"))
                .collect();

            // rows: batch positions first, then ICM samples living outside the batch
            let mut rows = batch.clone();
            let mut icm_triplets = Vec::new();
            if let Some(icm) = icm {
                let mut position: HashMap<usize, usize> = HashMap::new();
                for (pos, &i) in batch.iter().enumerate() {
                    position.entry(i).or_insert(pos);
                }
                let mut anchors: Vec<usize> = batch
                    .iter()
                    .copied()
                    .filter(|&i| icm.anchors_ok[i])
                    .collect();
                anchors.sort_unstable();
                anchors.dedup();
                let similarity = |a: usize, m: usize| icm.sim.get(a, m) as f64;
                let sample = sample_icm_triplets_with(
                    icm.rank,
                    icm.pairs,
                    labels,
                    &anchors,
                    config.k_imgs,
                    derive_seed(seed, &[tag::ICM_SAMPLE, path[0], path[1], path[2]]),
                    config.icm_negatives,
                    Some(&similarity),
                );
                let mut slot = |i: usize, rows: &mut Vec<usize>| -> usize {
                    *position.entry(i).or_insert_with(|| {
                        rows.push(i);
                        rows.len() - 1
                    })
                };
                for t in sample.triplets {
                    let a = slot(t.anchor, &mut rows);
                    let p = slot(t.positive, &mut rows);
                    let m = slot(t.negative, &mut rows);
                    icm_triplets.push((a, p, m));
                }
            }

            let raw = inputs.global.select_rows(&rows);
            let cache = model.forward_cached(&raw)?;
            let emb = &cache.embeddings;
            let batch_emb = emb.select_rows(&(0..batch.len()).collect::<Vec<_>>());

            let ce = ce_loss_and_grad(&head, &batch_emb, &batch_labels)?;
            let trip = match config.triplet_mode {
                TripletMode::BatchHard => {
                    batch_hard_triplet_loss_and_grad(&batch_emb, &batch_labels, config.margin)
                }
                TripletMode::AllPairs => {
                    all_pairs_triplet_loss_and_grad(&batch_emb, &batch_labels, config.margin)
                }
            }?;
            let icm_out = if icm.is_some() {
                icm_triplet_loss_and_grad(emb, &icm_triplets, config.margin)?
            } else {
                TripletOutput {
                    loss: 0.0,
                    grad_embeddings: Matrix::zeros(emb.rows(), emb.cols()),
                    terms: 0,
                }
            };

            let mut grad = icm_out.grad_embeddings;
            for (pos, (g_ce, g_tr)) in ce
                .grad_embeddings
                .iter_rows()
                .zip(trip.grad_embeddings.iter_rows())
                .enumerate()
            {
                for (g, (a, b)) in grad.row_mut(pos).iter_mut().zip(g_ce.iter().zip(g_tr)) {
                    *g += a + b;
                }
            }
            let grads = model.backward(&raw, &cache, &grad);
            let (w, bias) = model.params_mut();
            sgd_step(w, &grads.weights, config.lr)?;
            sgd_step(bias, &grads.bias, config.lr)?;
            sgd_step(
                head.weights.as_mut_slice(),
                ce.grad_head.as_slice(),
                config.lr,
            )?;

            sum_ce += ce.loss;
            sum_trip += trip.loss;
            sum_icm += icm_out.loss;
            steps += 1;
        }
    }
    let s = steps.max(1) as f64;
    record.steps = steps;
    record.loss_ce = sum_ce / s;
    record.loss_trip = sum_trip / s;
    record.loss_icm = sum_icm / s;
    record.loss_total = (sum_ce + sum_trip + sum_icm) / s;
    Ok(())
}
