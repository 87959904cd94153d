//! The `hsr` command-line tool.
//!
//! Exit codes: 0 on success, 1 for usage or input errors, 2 when the pipeline itself fails.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cluster::{dbscan, eps_heuristic, DbscanParams};
use crate::config::{parse_config, RunConfig};
use crate::dataset::EmbeddingSet;
use crate::error::{HsrError, Result};
use crate::eval::evaluate;
use crate::icm::{build_rank_lists, mutual_pairs};
use crate::io::{csv_writer, load_dataset, save_dataset};
use crate::labels::PseudoLabels;
use crate::matrix::Matrix;
use crate::pbh::rectify_hard_negatives;
use crate::seed::{derive_seed, tag};
use crate::similarity::{l2_normalize, pairwise_similarity};
use crate::synth::{generate, SynthConfig};
use crate::trainer::ablation::{mean_map, run_ablation};
use crate::trainer::checkpoint::{load_checkpoint, save_checkpoint};
use crate::trainer::{embed, initial_model, run_hsr_from, HsrRun, ProjectorModel};

#[derive(Parser, Debug)]
#[command(
    name = "hsr",
    version,
    about = "Pseudo-label rectification for unsupervised re-identification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// `key = value` configuration file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the `seed` key of the configuration
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct Input {
    /// Dataset directory holding embeddings.hsre and metadata.csv
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Model checkpoint; without one the normalized raw features are used
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic camera-biased benchmark
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Density clustering into pseudo labels
    Cluster {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
    },
    /// Inter-camera mutual pairs
    Icm {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
    },
    /// Split imperfect clusters by part features
    Pbh {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        /// Labels CSV to rectify; clusters from scratch when omitted
        #[arg(long, value_name = "PATH")]
        labels: Option<PathBuf>,
    },
    /// Iterative clustering and training
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory holding embeddings.hsre and metadata.csv
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Start from this checkpoint instead of a random projector
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Rank-1 and mAP of a checkpoint on the dataset's query/gallery split
    Eval {
        /// Dataset directory holding embeddings.hsre, metadata.csv and split.csv
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Compare the five component configurations over several seeds
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Number of seeds, counted up from --seed
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
}

/// Runs the tool on `args` (including the program name) and returns the exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => parse_config(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<&Path> {
    fs::create_dir_all(&common.out)?;
    Ok(&common.out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Global and part features: model embeddings with a checkpoint, normalized raw features without.
struct Features {
    global: Matrix,
    upper: Matrix,
    lower: Matrix,
}

fn features(set: &EmbeddingSet, checkpoint: Option<&Path>) -> Result<Features> {
    if set.num_parts() != 2 {
        return Err(HsrError::Dataset(format!(
            "expected 2 part blocks, got {}",
            set.num_parts()
        )));
    }
    match checkpoint {
        Some(path) => {
            let model = load_checkpoint(path)?;
            check_model(&model, set)?;
            Ok(Features {
                global: embed(&model, set)?,
                upper: model.forward(set.part(0))?,
                lower: model.forward(set.part(1))?,
            })
        }
        None => Ok(Features {
            global: l2_normalize(set.raw_global())?,
            upper: l2_normalize(set.part(0))?,
            lower: l2_normalize(set.part(1))?,
        }),
    }
}

fn check_model(model: &ProjectorModel, set: &EmbeddingSet) -> Result<()> {
    if model.d_in() != set.part_dim() {
        return Err(HsrError::Dataset(format!(
            "checkpoint expects part width {}, dataset has {}",
            model.d_in(),
            set.part_dim()
        )));
    }
    Ok(())
}

fn cluster_labels(global: &Matrix, cfg: &RunConfig) -> Result<(PseudoLabels, f64)> {
    let t = &cfg.train;
    let eps = match t.eps {
        Some(e) => e,
        None => eps_heuristic(global, t.min_pts, t.eps_percentile)?,
    };
    if eps <= 0.0 {
        return Err(HsrError::Config(
            "automatic eps is 0 (duplicate features); set `eps` explicitly".into(),
        ));
    }
    Ok((dbscan(global, DbscanParams::new(eps, t.min_pts)?)?, eps))
}

fn write_labels(path: &Path, labels: &PseudoLabels) -> Result<()> {
    let mut w = csv_writer(create(path)?);
    w.write_record(["index", "label"])?;
    for (i, l) in labels.as_slice().iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn read_labels(path: &Path, n: usize) -> Result<PseudoLabels> {
    let mut r = csv::ReaderBuilder::new().from_path(path)?;
    let mut labels = vec![None; n];
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let field = |k: usize| -> Result<i64> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| HsrError::Parse {
                    line,
                    msg: "expected `index,label` integers".into(),
                })
        };
        let (index, label) = (field(0)?, field(1)?);
        let slot = usize::try_from(index)
            .ok()
            .and_then(|i| labels.get_mut(i))
            .ok_or_else(|| HsrError::Parse {
                line,
                msg: format!("index {index} out of range for {n} samples"),
            })?;
        *slot = Some(label);
    }
    let raw: Vec<i64> = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| HsrError::Dataset(format!("no label for sample {i}"))))
        .collect::<Result<_>>()?;
    Ok(PseudoLabels::compact(&raw))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { common } => {
            let cfg = load_config(&common)?;
            let data = generate(&SynthConfig {
                seed: cfg.seed,
                ..cfg.synth
            })?;
            save_dataset(out_dir(&common)?, &data.dataset, Some(&data.split))?;
            println!(
                "samples={},ids={},cameras={},twin_pairs={}",
                data.dataset.len(),
                cfg.synth.num_ids,
                data.dataset.num_cameras(),
                data.twin_pairs.len()
            );
        }
        Command::Cluster { common, input } => {
            let cfg = load_config(&common)?;
            let (set, _) = load_dataset(&input.data)?;
            let feats = features(&set, input.checkpoint.as_deref())?;
            let (labels, eps) = cluster_labels(&feats.global, &cfg)?;
            write_labels(&out_dir(&common)?.join("labels.csv"), &labels)?;
            println!(
                "eps={eps},clusters={},noise={}",
                labels.num_clusters(),
                labels.num_noise()
            );
        }
        Command::Icm { common, input } => {
            let cfg = load_config(&common)?;
            let (set, _) = load_dataset(&input.data)?;
            let feats = features(&set, input.checkpoint.as_deref())?;
            let sim = pairwise_similarity(&feats.global)?;
            let rank = build_rank_lists(&sim, set.cameras(), cfg.train.icm_k)?;
            let pairs = mutual_pairs(&rank);
            let mut w = csv_writer(create(&out_dir(&common)?.join("pairs.csv"))?);
            w.write_record(["anchor", "partner"])?;
            for (a, b) in pairs.iter() {
                w.write_record([a.to_string(), b.to_string()])?;
            }
            w.flush()?;
            println!(
                "pairs={},mean_list_length={}",
                pairs.len(),
                rank.mean_length()
            );
        }
        Command::Pbh {
            common,
            input,
            labels,
        } => {
            let cfg = load_config(&common)?;
            let (set, _) = load_dataset(&input.data)?;
            let feats = features(&set, input.checkpoint.as_deref())?;
            let before = match &labels {
                Some(path) => read_labels(path, set.len())?,
                None => cluster_labels(&feats.global, &cfg)?.0,
            };
            let seed = derive_seed(cfg.seed, &[tag::PBH_SPLIT]);
            let (outcome, _) = rectify_hard_negatives(
                &feats.global,
                &feats.upper,
                &feats.lower,
                &before,
                &cfg.train.pbh,
                seed,
            )?;
            let dir = out_dir(&common)?;
            write_labels(&dir.join("labels_before.csv"), &before)?;
            write_labels(&dir.join("labels_after.csv"), &outcome.labels)?;
            let mut w = csv_writer(create(&dir.join("pbh_report.csv"))?);
            w.write_record(["cluster", "size", "msil", "selected", "groups"])?;
            for r in &outcome.report {
                w.write_record([
                    r.cluster.to_string(),
                    r.size.to_string(),
                    r.msil.to_string(),
                    r.selected.to_string(),
                    r.groups.to_string(),
                ])?;
            }
            w.flush()?;
            println!(
                "lambda={},selected={},clusters_before={},clusters_after={}",
                fmt_opt(outcome.lambda),
                outcome.num_selected(),
                before.num_clusters(),
                outcome.labels.num_clusters()
            );
        }
        Command::Train {
            common,
            data,
            checkpoint,
        } => {
            let cfg = load_config(&common)?;
            let (set, split) = load_dataset(&data)?;
            let model = match &checkpoint {
                Some(path) => {
                    let m = load_checkpoint(path)?;
                    check_model(&m, &set)?;
                    m
                }
                None => initial_model(&set, &cfg.train, cfg.seed),
            };
            let run = run_hsr_from(model, &set, split.as_ref(), &cfg.train, cfg.seed)?;
            let dir = out_dir(&common)?;
            save_checkpoint(&dir.join("model.ckpt"), &run.model)?;
            write_history(&dir.join("history.csv"), &run)?;
            write_label_history(&dir.join("labels_history.csv"), &run)?;
            if let Some(last) = run.history.last() {
                println!(
                    "iterations={},clusters={},r1={},map={}",
                    run.history.len(),
                    last.num_clusters,
                    fmt_opt(last.r1),
                    fmt_opt(last.map)
                );
            }
        }
        Command::Eval { data, checkpoint } => {
            let path = checkpoint
                .ok_or_else(|| HsrError::Config("eval needs --checkpoint PATH".into()))?;
            let model = load_checkpoint(&path)?;
            let (set, split) = load_dataset(&data)?;
            check_model(&model, &set)?;
            let split =
                split.ok_or_else(|| HsrError::Dataset("dataset has no split.csv".into()))?;
            let gt = set
                .gt_ids()
                .ok_or_else(|| HsrError::Dataset("metadata has no gt_id values".into()))?;
            let result = evaluate(&embed(&model, &set)?, gt, set.cameras(), &split)?;
            println!("{}", result.csv_line());
        }
        Command::Ablate { common, seeds } => {
            if seeds == 0 {
                return Err(HsrError::Config("--seeds must be >= 1".into()));
            }
            let cfg = load_config(&common)?;
            let seed_list: Vec<u64> = (0..seeds).map(|s| cfg.seed + s).collect();
            let synth = SynthConfig {
                seed: 0,
                ..cfg.synth
            };
            let rows = run_ablation(&synth, &cfg.train, &seed_list)?;
            let mut w = csv_writer(create(&out_dir(&common)?.join("ablation.csv"))?);
            w.write_record(["config", "seed", "r1", "map"])?;
            for r in &rows {
                w.write_record([
                    r.variant.name().to_string(),
                    r.seed.to_string(),
                    format!("{:.6}", r.r1),
                    format!("{:.6}", r.map),
                ])?;
            }
            w.flush()?;
            for (variant, map) in mean_map(&rows) {
                println!("{},mean_map={map:.6}", variant.name());
            }
        }
    }
    Ok(())
}

fn write_history(path: &Path, run: &HsrRun) -> Result<()> {
    let mut w = csv_writer(create(path)?);
    w.write_record([
        "iter",
        "num_clusters",
        "mean_msil",
        "loss_ce",
        "loss_trip",
        "loss_icm",
        "r1",
        "map",
        "rank_precision",
    ])?;
    for h in &run.history {
        w.write_record([
            h.iter.to_string(),
            h.num_clusters.to_string(),
            fmt_opt(h.mean_msil),
            h.loss_ce.to_string(),
            h.loss_trip.to_string(),
            h.loss_icm.to_string(),
            fmt_opt(h.r1),
            fmt_opt(h.map),
            fmt_opt(h.rank_precision),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_label_history(path: &Path, run: &HsrRun) -> Result<()> {
    let mut w = csv_writer(create(path)?);
    w.write_record(["iter", "index", "label"])?;
    for (h, labels) in run.history.iter().zip(&run.labels) {
        for (i, l) in labels.as_slice().iter().enumerate() {
            w.write_record([h.iter.to_string(), i.to_string(), l.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
