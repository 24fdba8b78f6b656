use std::path::Path;
use std::process::{Command, Output};

fn multigait(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multigait")).args(args).output().expect("spawn multigait")
}

fn train_small(out: &Path, seed: &str, amp: &str) -> Output {
    multigait(&["train", "--gait", "walking", "--seed", seed, "--amp", amp, "--iterations", "2", "--envs", "4", "--log-every", "1", "--out", out.to_str().unwrap()])
}

#[test]
fn train_eval_and_plot_a_small_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = train_small(tmp.path(), "3", "preset");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(out.status.success(), "{stderr}");
    assert!(stderr.contains("AMP enabled for walking (alpha = 0.3, beta = 0.8)"), "{stderr}");

    let run = tmp.path().join("walking").join("seed_3");
    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().filter(|l| !l.starts_with('#')).count(), 3);
    assert!(run.join("policy.mgpb").is_file());
    assert!(run.join("config.toml").is_file());

    let policy = run.join("policy.mgpb");
    let ev = multigait(&["eval", "--policy", policy.to_str().unwrap(), "--episodes", "2", "--max-steps", "20", "--out", run.to_str().unwrap()]);
    assert!(ev.status.success(), "{}", String::from_utf8_lossy(&ev.stderr));
    let text = String::from_utf8_lossy(&ev.stdout);
    assert!(text.starts_with("gait walking"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("success_rate ")), "{text}");
    assert_eq!(std::fs::read_to_string(run.join("eval.csv")).unwrap().lines().count(), 2);

    let svg = tmp.path().join("curves.svg");
    let pl = multigait(&["plot", run.to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert!(pl.status.success(), "{}", String::from_utf8_lossy(&pl.stderr));
    let body = std::fs::read_to_string(&svg).unwrap();
    assert!(body.contains("<svg") && body.contains("<polyline"), "no curves drawn");

    // the parent of a run directory is plotted as one averaged series per subdirectory
    let pl = multigait(&["plot", tmp.path().to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert!(pl.status.success(), "{}", String::from_utf8_lossy(&pl.stderr));

    let obs = multigait(&["obs-dump", "--policy", policy.to_str().unwrap(), "--steps", "3"]);
    assert!(obs.status.success());
    assert_eq!(String::from_utf8_lossy(&obs.stdout).lines().count(), 5);
}

#[test]
fn same_seed_gives_identical_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let first = train_small(&a, "7", "off");
    assert!(String::from_utf8_lossy(&first.stderr).contains("AMP disabled for walking (alpha = 0, beta = 1)"));
    assert!(first.status.success());
    assert!(train_small(&b, "7", "off").status.success());
    let read = |d: &Path| std::fs::read(d.join("walking/seed_7/metrics.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn bad_arguments_exit_with_usage_status() {
    let out = multigait(&["train", "--gait", "moonwalk"]);
    assert_eq!(out.status.code(), Some(2));
    let out = multigait(&["eval", "--policy", "nowhere.mgpb", "--episodes", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = multigait(&["train", "--desk", "--paper"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_gait_conflict_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "gait_name = \"running\"\n").unwrap();
    let out = multigait(&["ref-dump", "--gait", "walking", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = multigait(&["ref-dump", "--config", cfg.to_str().unwrap(), "--samples", "4"]);
    assert!(out.status.success());
}

#[test]
fn plot_rejects_empty_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("metrics.csv"), "").unwrap();
    let out = multigait(&["plot", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn ref_dump_covers_one_cycle() {
    let out = multigait(&["ref-dump", "--gait", "jumping", "--samples", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 11);
    assert!(lines[0].starts_with("phase,q_ref_l_"));
    assert_eq!(lines[0].split(',').count(), 1 + 12 + 4);
    assert!(lines[1].starts_with("0.000000,"));
}

#[test]
fn obs_dump_full_stack_has_every_channel() {
    let out = multigait(&["obs-dump", "--steps", "1", "--full"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let header = text.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 1 + 1050);
}
