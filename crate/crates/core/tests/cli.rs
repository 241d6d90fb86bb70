use std::fs;
use std::process::{Command, Output};

use popsan::config::RunConfig;
use popsan::drl::METRICS_HEADER;

fn popsan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popsan")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn zero_step_training_writes_empty_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = popsan(&["train", "--total-steps", "0", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("metrics.csv")).unwrap(), format!("{METRICS_HEADER}\n"));
    let saved = RunConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(saved.train.total_steps, 0);
}

#[test]
fn unknown_key_exits_two_and_names_it() {
    let o = popsan(&["train", "--total-stepz", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("total-stepz"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[train]\nbatchsize = 4\n").unwrap();
    let o = popsan(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("batchsize"), "{}", stderr(&o));
}

#[test]
fn gradcheck_passes_on_defaults() {
    let o = popsan(&["gradcheck", "--rounds", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("48 instances") && text.contains("pass"), "{text}");
}

#[test]
fn config_file_and_overrides_compose() {
    let dir = tempfile::tempdir().unwrap();
    let defaults = popsan(&["defaults"]);
    assert!(defaults.status.success());
    let cfg_path = dir.path().join("run.toml");
    fs::write(&cfg_path, stdout(&defaults)).unwrap();
    assert_eq!(RunConfig::load(&cfg_path).unwrap(), RunConfig::default());

    let out = dir.path().join("run");
    let o = popsan(&[
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--total-steps=0",
        "--popsan.pop_in",
        "3",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let saved = RunConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(saved.popsan.pop_in, 3);
}

#[test]
fn missing_checkpoint_fails() {
    let o = popsan(&["eval", "/nonexistent/final.psck"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_bit_width_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = popsan(&[
        "train",
        "--total-steps",
        "50",
        "--warmup-steps",
        "50",
        "--eval-episodes",
        "1",
        "--popsan.hidden",
        "[4]",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ck = out.join("checkpoints/final.psck");
    let q = dir.path().join("q.psck");
    let o = popsan(&["quantize", ck.to_str().unwrap(), "--bits", "2", "--out", q.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = popsan(&["quantize", ck.to_str().unwrap(), "--bits", "6", "--out", q.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = popsan(&["eval", q.to_str().unwrap(), "--episodes", "1"]);
    assert!(o.status.success() && stdout(&o).contains("over 1 episodes"), "{}", stderr(&o));
}
