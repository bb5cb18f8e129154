//! End-to-end runs of every subcommand on the toy samples.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn argrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_argrl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = argrl(args);
    assert!(
        out.status.success(),
        "argrl {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = argrl(args);
    assert!(!out.status.success(), "argrl {args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(p).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn help_exits_zero_everywhere() {
    ok(&["--help"]);
    for sub in [
        "simulate",
        "solve-tabular",
        "train",
        "evaluate",
        "select",
        "ensemble",
        "baseline",
        "compare",
        "export-dot",
    ] {
        let text = ok(&[sub, "--help"]);
        assert!(text.contains("Usage"), "{sub}");
    }
}

#[test]
fn solve_tabular_reports_toy_optima() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let a = data("toyA.txt");
    let stdout = ok(&["solve-tabular", "--sample", s(&a), "--event-logs", "--out", s(&out)]);
    assert!(stdout.starts_with("length=9 count=758"), "{stdout}");
    let logs = fs::read_dir(out.join("optimal/toyA")).unwrap().count();
    assert_eq!(logs, 758);
    let total: f64 = csv_rows(&out.join("optimal/toyA.csv"))
        .iter()
        .map(|r| r[1].parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert!(fs::read_to_string(out.join("run.manifest")).unwrap().contains("command=solve-tabular"));

    let b = data("toyB.txt");
    let out = dir.path().join("b");
    let stdout = ok(&["solve-tabular", "--sample", s(&b), "--out", s(&out)]);
    assert!(stdout.starts_with("length=9 count=414"), "{stdout}");
    let rows = csv_rows(&out.join("solve.csv"));
    assert_eq!(rows[0][..4], ["toyB", "-9", "9", "414"]);
}

#[test]
fn baseline_enumerates_eight_genealogies() {
    let dir = tempfile::tempdir().unwrap();
    for toy in ["toyA.txt", "toyB.txt"] {
        let out = dir.path().join(toy);
        let stdout = ok(&["baseline", "--sample", s(&data(toy)), "--tie-rule", "all", "--out", s(&out)]);
        assert!(stdout.contains("genealogies=8 length=9"), "{stdout}");
        let stem = toy.trim_end_matches(".txt");
        assert_eq!(fs::read_dir(out.join("baseline").join(stem)).unwrap().count(), 8);
    }
}

#[test]
fn export_dot_renders_nine_events() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dot");
    let stdout = ok(&["export-dot", "--sample", s(&data("toyA.txt")), "--baseline", "--out", s(&out)]);
    assert!(stdout.starts_with("events=9"), "{stdout}");
    let dot = fs::read_to_string(out.join("toyA.dot")).unwrap();
    assert!(dot.starts_with("digraph"));

    let logs = dir.path().join("logs");
    ok(&["solve-tabular", "--sample", s(&data("toyA.txt")), "--event-logs", "--out", s(&logs)]);
    let log = logs.join("optimal/toyA/arg_00000.log");
    let out = dir.path().join("dot2");
    let stdout = ok(&["export-dot", "--sample", s(&data("toyA.txt")), "--log", s(&log), "--name", "opt", "--out", s(&out)]);
    assert!(stdout.starts_with("events=9"), "{stdout}");
    assert!(out.join("opt.dot").is_file());
}

#[test]
fn fixed_training_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let a = data("toyA.txt");
    let run1 = dir.path().join("t1");
    let stdout = ok(&["train", "--mode", "fixed", "--sample", s(&a), "--episodes", "300", "--seed", "3", "--out", s(&run1)]);
    assert!(stdout.starts_with("greedy length="), "{stdout}");
    assert_eq!(csv_rows(&run1.join("episodes.csv")).len(), 300);
    assert_eq!(csv_rows(&run1.join("curve.csv")).len(), 201);
    assert!(run1.join("model.ckpt").is_file());

    // Same manifest, same outputs, apart from wall-clock columns.
    let run2 = dir.path().join("t2");
    ok(&["train", "--mode", "fixed", "--sample", s(&a), "--episodes", "300", "--seed", "3", "--out", s(&run2)]);
    assert_eq!(fs::read(run1.join("curve.csv")).unwrap(), fs::read(run2.join("curve.csv")).unwrap());
    assert_eq!(fs::read(run1.join("model.ckpt")).unwrap(), fs::read(run2.join("model.ckpt")).unwrap());
    let strip = |p: &Path| -> Vec<Vec<String>> { csv_rows(p).into_iter().map(|r| r[..3].to_vec()).collect() };
    assert_eq!(strip(&run1.join("episodes.csv")), strip(&run2.join("episodes.csv")));

    // Evaluate, compare and export the trained model.
    let model = run1.join("model.ckpt");
    let ev = dir.path().join("ev");
    ok(&["evaluate", "--model", s(&model), "--samples", s(&a), "--samples", s(&data("toyB.txt")), "--out", s(&ev)]);
    let rows = csv_rows(&ev.join("lengths.csv"));
    assert_eq!(rows.len(), 2);
    let cmp = dir.path().join("cmp");
    let stdout = ok(&["compare", "--model", s(&model), "--samples", s(&a), "--out", s(&cmp)]);
    assert!(stdout.contains("group=all"), "{stdout}");
    assert_eq!(csv_rows(&cmp.join("comparison.csv"))[0][3], "9");
    let bl = dir.path().join("bl");
    ok(&["baseline", "--sample", s(&a), "--model", s(&model), "--out", s(&bl)]);
    assert!(bl.join("comparison.csv").is_file());
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("mode=fixed\nsample={}\nepisodes=150\nwindow=50\n", s(&data("toyA.txt")))).unwrap();
    let out = dir.path().join("c1");
    ok(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(csv_rows(&out.join("episodes.csv")).len(), 150);
    assert_eq!(csv_rows(&out.join("curve.csv")).len(), 101);
    let out = dir.path().join("c2");
    ok(&["train", "--config", s(&cfg), "--episodes", "120", "--out", s(&out)]);
    assert_eq!(csv_rows(&out.join("episodes.csv")).len(), 120);
    let manifest = fs::read_to_string(out.join("run.manifest")).unwrap();
    assert!(manifest.contains("config.episodes=120"));
    assert!(manifest.contains("version="));

    fs::write(&cfg, "bogus=1\n").unwrap();
    let err = fails(&["train", "--config", s(&cfg), "--sample", s(&data("toyA.txt")), "--out", s(&out)]);
    assert!(err.contains("unknown config key"), "{err}");
}

#[test]
fn errors_are_reported_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e");
    let err = fails(&["solve-tabular", "--no-such-flag"]);
    assert!(err.contains("--no-such-flag"), "{err}");
    let err = fails(&["solve-tabular", "--sample", "/nonexistent/x.txt", "--out", s(&out)]);
    assert!(err.contains("does not exist"), "{err}");
    let err = fails(&["train", "--mode", "sideways", "--out", s(&out)]);
    assert!(err.contains("unknown training mode"), "{err}");
    let err = fails(&["train", "--sample", s(&data("toyA.txt")), "--epsilon", "2", "--out", s(&out)]);
    assert!(err.contains("epsilon"), "{err}");

    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".argrl.lock"), "pid=1\n").unwrap();
    let err = fails(&["baseline", "--sample", s(&data("toyA.txt")), "--out", s(&out)]);
    assert!(err.contains("owned by another run"), "{err}");
}

#[test]
fn simulate_generalize_select_and_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let pool_dir = dir.path().join("pool");
    let rates = ["--ne", "1e6", "--mu", "5e-7", "--rho", "5e-6", "--region-bp", "5", "--snps", "6"];
    let mut args = vec!["simulate", "--n", "60", "--seed", "11", "--out", s(&pool_dir)];
    args.extend(rates);
    ok(&args);
    let pool = pool_dir.join("sample_000.txt");
    assert!(pool_dir.join("sample_000.meta").is_file());

    // Same seed, same sample; another seed, another sample.
    let again = dir.path().join("pool2");
    let mut args = vec!["simulate", "--n", "60", "--seed", "11", "--out", s(&again)];
    args.extend(rates);
    ok(&args);
    assert_eq!(fs::read(&pool).unwrap(), fs::read(again.join("sample_000.txt")).unwrap());

    let val_dir = dir.path().join("val");
    let mut args = vec!["simulate", "--n", "8", "--count", "3", "--seed", "12", "--out", s(&val_dir)];
    args.extend(rates);
    ok(&args);

    let mut members = Vec::new();
    for k in 0..2 {
        let run = dir.path().join(format!("g{k}"));
        let seed = (20 + k).to_string();
        let stdout = ok(&[
            "train", "--mode", "generalize", "--pool", s(&pool), "--validation", s(&val_dir),
            "--episodes", "200", "--checkpoint-every", "100", "--n-tr", "4", "--seed", &seed,
            "--out", s(&run),
        ]);
        assert!(stdout.starts_with("best="), "{stdout}");
        assert!(run.join("best.ckpt").is_file());
        assert!(csv_rows(&run.join("checkpoints.csv")).len() >= 2);
        assert!(!csv_rows(&run.join("evaluation.csv")).is_empty());
        members.push(run);
    }

    let sel = dir.path().join("sel");
    let stdout = ok(&["select", "--checkpoints", s(&members[0].join("checkpoints")), "--validation", s(&val_dir), "--out", s(&sel)]);
    assert!(stdout.starts_with("best=ckpt_"), "{stdout}");
    assert!(sel.join("best.ckpt").is_file());

    let manifest = dir.path().join("members.txt");
    fs::write(&manifest, "g0/best.ckpt\ng1/best.ckpt\n").unwrap();
    let ens = dir.path().join("ens");
    let stdout = ok(&["ensemble", "--manifest", s(&manifest), "--samples", s(&val_dir), "--orderings", "5", "--out", s(&ens)]);
    for scheme in ["mean", "majority", "minimum"] {
        assert!(stdout.contains(&format!("scheme={scheme}")), "{stdout}");
    }
    assert_eq!(csv_rows(&ens.join("ensemble.csv")).len(), 9);
    assert_eq!(csv_rows(&ens.join("curve.csv")).len(), 10);
    assert_eq!(csv_rows(&ens.join("members.csv")).len(), 2);
}
