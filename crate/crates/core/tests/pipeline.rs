//! End-to-end behaviour on the synthetic benchmark.

use rand::Rng;

use hsr_core::cluster::{dbscan, within_cluster_ss, DbscanParams};
use hsr_core::eval::{cluster_purity, rank_precision};
use hsr_core::icm::{build_rank_lists, RankLists};
use hsr_core::matrix::distance;
use hsr_core::pbh::{rectify_hard_negatives, split_cluster, PbhConfig};
use hsr_core::seed::rng_from;
use hsr_core::similarity::{l2_normalize, pairwise_similarity};
use hsr_core::synth::{generate, SynthConfig, TwinPart};
use hsr_core::trainer::loss::ce_loss_and_grad;
use hsr_core::trainer::{embed, initial_model, run_hsr, sgd_step, ClassifierHead, TrainConfig};
use hsr_core::{Matrix, PseudoLabels};

fn same_partition(a: &[i32], b: &[u32]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

#[test]
fn raw_nearest_neighbour_is_accurate_without_bias_or_twins() {
    for seed in 0..5 {
        let data = generate(&SynthConfig {
            alpha_cam: 0.0,
            twin_fraction: 0.0,
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let x = data.dataset.raw_global();
        let gt = data.dataset.gt_ids().unwrap();
        let n = x.rows();
        let correct = (0..n)
            .filter(|&i| {
                let nn = (0..n)
                    .filter(|&j| j != i)
                    .min_by(|&a, &b| {
                        distance(x.row(i), x.row(a)).total_cmp(&distance(x.row(i), x.row(b)))
                    })
                    .unwrap();
                gt[nn] == gt[i]
            })
            .count();
        let acc = correct as f64 / n as f64;
        assert!(acc >= 0.99, "seed {seed}: accuracy {acc}");
    }
}

#[test]
fn noiseless_unbiased_benchmark_clusters_exactly() {
    let data = generate(&SynthConfig {
        alpha_cam: 0.0,
        noise_sigma: 0.0,
        ..SynthConfig::default()
    })
    .unwrap();
    let x = l2_normalize(data.dataset.raw_global()).unwrap();
    let gt = data.dataset.gt_ids().unwrap();
    let labels = dbscan(&x, DbscanParams::new(1e-3, 4).unwrap()).unwrap();
    assert_eq!(labels.num_noise(), 0);
    assert_eq!(labels.num_clusters(), 60);
    assert!(same_partition(labels.as_slice(), gt));
    assert_eq!(cluster_purity(&labels, gt), 1.0);
}

#[test]
fn merged_twin_pair_is_split_by_part_features() {
    // one twin pair sharing the upper part; wide parts keep the distance scales tight:
    // normalized within-twin distance ~1.0, unrelated identities ~1.41
    let data = generate(&SynthConfig {
        num_ids: 20,
        d_part: 128,
        alpha_cam: 0.0,
        noise_sigma: 0.05,
        twin_fraction: 0.1,
        twin_part: TwinPart::Upper,
        seed: 11,
        ..SynthConfig::default()
    })
    .unwrap();
    assert_eq!(data.twin_pairs.len(), 1);
    let (ta, tb, _) = data.twin_pairs[0];
    let set = &data.dataset;
    let gt = set.gt_ids().unwrap();
    let global = l2_normalize(set.raw_global()).unwrap();
    let labels = dbscan(&global, DbscanParams::new(1.15, 4).unwrap()).unwrap();
    assert_eq!(labels.num_clusters(), 19);
    let a = gt.iter().position(|&g| g == ta).unwrap();
    let b = gt.iter().position(|&g| g == tb).unwrap();
    assert_eq!(labels.cluster(a), labels.cluster(b));

    let upper = l2_normalize(set.part(0)).unwrap();
    let lower = l2_normalize(set.part(1)).unwrap();
    let (out, quality) =
        rectify_hard_negatives(&global, &upper, &lower, &labels, &PbhConfig::default(), 3).unwrap();
    let quality = quality.unwrap();
    let twin_cluster = labels.cluster(a).unwrap();
    assert!(quality.msil[twin_cluster] < quality.lambda);
    assert_eq!(out.num_selected(), 1);
    // the shared part still splits along its noise, so the pair may become up to four groups
    assert!((20..=22).contains(&out.labels.num_clusters()));
    assert_ne!(out.labels.cluster(a), out.labels.cluster(b));
    assert_eq!(cluster_purity(&out.labels, gt), 1.0);
    assert!(cluster_purity(&labels, gt) < 1.0);
}

#[test]
fn twin_split_follows_the_differing_part() {
    // two identities with one identical upper part and separated lower parts
    let mut rng = rng_from(5);
    for trial in 0..20 {
        let m = 12;
        let d = 4;
        let upper = Matrix::new(m, d, vec![0.5; m * d]).unwrap();
        let lower: Vec<f32> = (0..m)
            .flat_map(|i| {
                let center = if i % 2 == 0 { 1.0 } else { -1.0 };
                (0..d)
                    .map(|_| center + rng.random_range(-0.3f32..0.3))
                    .collect::<Vec<_>>()
            })
            .collect();
        let lower = Matrix::new(m, d, lower).unwrap();
        let split = split_cluster(&upper, &lower, trial);
        assert!(split.upper_degenerate && !split.lower_degenerate);
        assert_eq!(split.num_groups(), 2);

        let mut best = (f64::INFINITY, 0u32);
        for mask in 1u32..(1 << (m - 1)) {
            let labels: Vec<u8> = (0..m).map(|i| ((mask >> i) & 1) as u8).collect();
            let ss = within_cluster_ss(&lower, &labels);
            if ss < best.0 {
                best = (ss, mask);
            }
        }
        let oracle: Vec<u32> = (0..m).map(|i| (best.1 >> i) & 1).collect();
        let got: Vec<i32> = split.labels.iter().map(|&l| l as i32).collect();
        assert!(same_partition(&got, &oracle), "trial {trial}");
    }
}

#[test]
fn strong_camera_bias_yields_hard_positives_at_first_iteration() {
    let data = generate(&SynthConfig {
        twin_fraction: 0.0,
        alpha_cam: 2.0,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        iterations: 1,
        epochs_per_iter: 1,
        ..TrainConfig::default()
    };
    let run = run_hsr(&data.dataset, Some(&data.split), &cfg, 0).unwrap();
    assert!(run.history[0].hard_positive_rate.unwrap() > 0.0);
}

fn unfiltered_top_k(x: &Matrix, k: usize) -> RankLists {
    let sim = pairwise_similarity(x).unwrap();
    let lists = (0..x.rows())
        .map(|i| {
            let mut others: Vec<usize> = (0..x.rows()).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| sim.get(i, b).total_cmp(&sim.get(i, a)).then(a.cmp(&b)));
            others.truncate(k);
            others
        })
        .collect();
    RankLists::from_lists(k, lists)
}

#[test]
fn camera_filter_improves_rank_list_precision() {
    for seed in 0..5 {
        let data = generate(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let gt = data.dataset.gt_ids().unwrap();
        let emb = embed(
            &initial_model(&data.dataset, &TrainConfig::default(), seed),
            &data.dataset,
        )
        .unwrap();
        let filtered = build_rank_lists(
            &pairwise_similarity(&emb).unwrap(),
            data.dataset.cameras(),
            10,
        )
        .unwrap();
        let pf = rank_precision(&filtered, gt);
        let pu = rank_precision(&unfiltered_top_k(&emb, 10), gt);
        assert!(pf >= pu, "seed {seed}: filtered {pf} < unfiltered {pu}");
    }
}

fn small_benchmark() -> hsr_core::synth::SynthData {
    generate(&SynthConfig {
        num_ids: 16,
        cams: 3,
        d_part: 8,
        ..SynthConfig::default()
    })
    .unwrap()
}

#[test]
fn zero_iterations_returns_the_initial_model() {
    let data = small_benchmark();
    let cfg = TrainConfig {
        iterations: 0,
        ..TrainConfig::default()
    };
    let run = run_hsr(&data.dataset, Some(&data.split), &cfg, 9).unwrap();
    assert!(run.history.is_empty());
    assert_eq!(run.model, initial_model(&data.dataset, &cfg, 9));
}

#[test]
fn baseline_has_no_icm_term() {
    let data = small_benchmark();
    let cfg = TrainConfig {
        iterations: 2,
        epochs_per_iter: 2,
        use_icm: false,
        use_pbh: false,
        eps_percentile: 50.0,
        ..TrainConfig::default()
    };
    let run = run_hsr(&data.dataset, Some(&data.split), &cfg, 1).unwrap();
    assert_eq!(run.history.len(), 2);
    for h in &run.history {
        assert_eq!(h.loss_icm, 0.0);
        assert_eq!(h.pbh_selected, 0);
        assert!(h.steps > 0 && h.loss_ce > 0.0);
        assert!(h.r1.is_some() && h.map.is_some());
    }
}

#[test]
fn all_noise_iteration_is_skipped_and_recorded() {
    let data = small_benchmark();
    let cfg = TrainConfig {
        iterations: 2,
        eps: Some(1e-6),
        ..TrainConfig::default()
    };
    let run = run_hsr(&data.dataset, None, &cfg, 2).unwrap();
    for h in &run.history {
        assert_eq!(h.num_clusters, 0);
        assert_eq!(h.steps, 0);
        assert!(h.skipped.is_some());
    }
    assert_eq!(run.model, initial_model(&data.dataset, &cfg, 2));
    assert!(run
        .labels
        .iter()
        .all(|l: &PseudoLabels| l.num_noise() == l.len()));
}

#[test]
fn small_sgd_step_lowers_cross_entropy() {
    let mut rng = rng_from(3);
    let emb = Matrix::new(
        12,
        6,
        (0..72).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
    let mut head = ClassifierHead::new(3, 6, 4);
    let before = ce_loss_and_grad(&head, &emb, &labels).unwrap();
    sgd_step(
        head.weights.as_mut_slice(),
        before.grad_head.as_slice(),
        0.05,
    )
    .unwrap();
    let after = ce_loss_and_grad(&head, &emb, &labels).unwrap();
    assert!(after.loss < before.loss);
}
