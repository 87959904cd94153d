use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str =
    "num_ids = 8\ncams = 3\nD_part = 8\nD_out = 16\niterations = 2\nepochs_per_iter = 1\n";

fn hsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsr"))
        .args(args)
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config(dir: &Path) -> String {
    let cfg = dir.join("tiny.conf");
    fs::write(&cfg, TINY).unwrap();
    cfg.to_str().unwrap().to_string()
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = hsr(&["synth", "--config", &cfg, "--seed", "4", "--out", path(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("samples=72"));
    }
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    assert!(hsr(&["synth", "--config", &cfg, "--out", path(&data)])
        .status
        .success());

    let o = hsr(&[
        "train",
        "--config",
        &cfg,
        "--data",
        path(&data),
        "--out",
        path(&run),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let history = fs::read_to_string(run.join("history.csv")).unwrap();
    let mut lines = history.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iter,num_clusters,mean_msil,loss_ce,loss_trip,loss_icm,r1,map,rank_precision"
    );
    assert_eq!(lines.count(), 2);
    let ckpt = run.join("model.ckpt");
    assert!(ckpt.exists());

    let o = hsr(&["eval", "--data", path(&data), "--checkpoint", path(&ckpt)]);
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.trim().split(',').count(), 4, "{stdout}");

    for sub in ["cluster", "icm", "pbh"] {
        let out = dir.path().join(sub);
        let o = hsr(&[
            sub,
            "--config",
            &cfg,
            "--data",
            path(&data),
            "--checkpoint",
            path(&ckpt),
            "--out",
            path(&out),
        ]);
        assert!(
            o.status.success(),
            "{sub}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert!(dir.path().join("cluster/labels.csv").exists());
    assert!(dir.path().join("icm/pairs.csv").exists());
    assert!(dir.path().join("pbh/pbh_report.csv").exists());
}

#[test]
fn small_ablation_writes_every_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("ablate");
    let o = hsr(&[
        "ablate",
        "--config",
        &cfg,
        "--seeds",
        "2",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "config,seed,r1,map");
    assert_eq!(lines.count(), 5 * 2);
    let stdout = String::from_utf8(o.stdout).unwrap();
    for name in [
        "direct_transfer",
        "baseline",
        "baseline_pbh",
        "baseline_icm",
        "hsr",
    ] {
        assert!(stdout.contains(&format!("{name},mean_map=")), "{stdout}");
    }
}

#[test]
fn user_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cfg = tiny_config(dir.path());
    assert!(hsr(&["synth", "--config", &cfg, "--out", path(&data)])
        .status
        .success());

    let o = hsr(&["eval", "--data", path(&data)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    assert_eq!(hsr(&["frobnicate"]).status.code(), Some(1));

    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "K = banana\n").unwrap();
    let o = hsr(&[
        "synth",
        "--config",
        path(&bad),
        "--out",
        path(&dir.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(1));

    let o = hsr(&[
        "cluster",
        "--data",
        path(&dir.path().join("missing")),
        "--out",
        path(&dir.path().join("y")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    let o = hsr(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ablate"));
}
