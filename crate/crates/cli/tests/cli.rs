use std::path::Path;
use std::process::{Command, Output};

use soel_cli::exit;

fn soelsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soelsim"))
        .args(args)
        .current_dir(dir)
        .env_remove("SOELSIM_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A small family and network so that the commands run in seconds.
const SMALL: &str = "\
data.classes = 32
data.samples = 6
data.grid = 16
data.steps = 40
data.parts = 10
data.parts_per_class = 3
model.hidden = 16
outer.iterations = 2
outer.meta_batch = 2
outer.val_every = 1
outer.val_episodes = 2
outer.val_queries = 2
";

#[test]
fn missing_inputs_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.txt"), "no.such.key = 1\n").unwrap();
    assert_eq!(soelsim(&["meta-test", "--config", "bad.txt"], d).status.code(), Some(exit::USAGE));
    assert_eq!(
        soelsim(&["meta-test", "--checkpoint", "nope.ckpt"], d).status.code(),
        Some(exit::MISSING_CHECKPOINT)
    );
    assert_eq!(
        soelsim(&["knn-baseline", "--dataset", "manifest:nope.txt"], d).status.code(),
        Some(exit::MISSING_MANIFEST)
    );
    assert_eq!(soelsim(&["no-such-command"], d).status.code(), Some(exit::USAGE));
    std::fs::write(d.join("junk.ckpt"), b"not a checkpoint").unwrap();
    assert_eq!(
        soelsim(&["meta-test", "--checkpoint", "junk.ckpt"], d).status.code(),
        Some(exit::BAD_INPUT)
    );
}

#[test]
fn printed_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let first = soelsim(&["demo", "--print-config", "--seed", "5"], d);
    assert!(first.status.success());
    std::fs::write(d.join("c.txt"), stdout(&first)).unwrap();
    let second = soelsim(&["demo", "--print-config", "--config", "c.txt"], d);
    assert_eq!(stdout(&first), stdout(&second));
    assert!(stdout(&first).contains("seed = 5\n"));
}

#[test]
fn environment_overrides_file_and_flags_override_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.txt"), "soel.theta = 2\nseed = 1\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_soelsim"))
        .args(["demo", "--print-config", "--config", "c.txt", "--seed", "7"])
        .env("SOELSIM_SOEL__THETA", "3")
        .env("SOELSIM_SEED", "4")
        .current_dir(d)
        .output()
        .unwrap();
    let text = stdout(&o);
    assert!(text.contains("soel.theta = 3\n"), "{text}");
    assert!(text.contains("seed = 7\n"), "{text}");
}

#[test]
fn train_export_import_test_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.txt"), SMALL).unwrap();
    let base = ["--config", "small.txt", "--trials", "6", "--queries", "2"];
    let run = |extra: &[&str]| {
        let mut args = extra.to_vec();
        args.extend(base);
        let o = soelsim(&args, d);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    run(&["meta-train", "--out", "run"]);
    let metrics = std::fs::read_to_string(d.join("run/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    run(&["export", "model.json", "--checkpoint", "run/model.ckpt"]);
    run(&["import", "back.ckpt", "--checkpoint", "model.json"]);
    let a = run(&["meta-test", "--checkpoint", "run/model.ckpt", "--out", "t1"]);
    let b = run(&["meta-test", "--checkpoint", "back.ckpt", "--out", "t2"]);
    assert!(a.starts_with("meta-test accuracy "), "{a}");
    assert_eq!(a, b);
    let k1 = run(&["knn-baseline"]);
    let k2 = run(&["knn-baseline"]);
    assert_eq!(k1, k2);
}

#[test]
fn resumed_training_matches_uninterrupted_training() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.txt"), SMALL).unwrap();
    let go = |args: &[&str]| {
        let o = soelsim(args, d);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    go(&["meta-train", "--config", "small.txt", "--out", "full"]);
    std::fs::write(d.join("half.txt"), SMALL.replace("outer.iterations = 2", "outer.iterations = 1")).unwrap();
    go(&["meta-train", "--config", "half.txt", "--out", "part"]);
    go(&[
        "meta-train",
        "--config",
        "small.txt",
        "--out",
        "part",
        "--checkpoint",
        "part/last.ckpt",
    ]);
    let read = |p: &str| std::fs::read(d.join(p)).unwrap();
    assert_eq!(read("full/last.ckpt"), read("part/last.ckpt"));
    assert_eq!(read("full/model.ckpt"), read("part/model.ckpt"));
    let strip = |s: Vec<u8>| -> Vec<String> {
        // wall time is the last column
        String::from_utf8(s)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').map_or(l, |(a, _)| a).to_string())
            .collect()
    };
    assert_eq!(strip(read("full/metrics.csv")), strip(read("part/metrics.csv")));
}

#[test]
fn demo_writes_a_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = soelsim(&["demo", "--out", "."], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("converged after "), "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("demo.csv")).unwrap();
    assert!(csv.starts_with("step,input_spikes,output_spike,weight,encoded_error\n"));
}

#[test]
fn grad_check_reports_both_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = soelsim(&["grad-check"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(
        text.contains("gradient max relative error") && text.contains("meta-gradient"),
        "{text}"
    );
}
