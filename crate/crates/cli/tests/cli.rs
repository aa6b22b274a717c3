use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn absa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_absa"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = absa(dir, args);
    assert!(out.status.success(), "absa {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

const CONFIG: &str = r#"
seed = 3
vocab = "vocab.txt"
dataset = "reviews.jsonl"
max_seq_len = 32

[encoder]
layers = 1
hidden = 8
heads = 2

[train]
epochs = 1
learning_rate = 1e-3
batch_size = 16

[pretrain]
epochs = 1
steps_per_epoch = 3
batch_size = 4
max_seq_len = 32
"#;

/// Generated data plus a pretrained encoder in a fresh directory.
fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    ok(dir.path(), &["--config", "run.toml", "generate", "--n", "30", "--out", "reviews.jsonl", "--vocab-out", "vocab.txt"]);
    ok(dir.path(), &["--config", "run.toml", "pretrain", "--out", "enc"]);
    dir
}

#[test]
fn zero_epochs_reproduces_the_starting_checkpoint() {
    let dir = prepared();
    let p = dir.path();
    ok(p, &["--config", "run.toml", "train", "--init", "enc/encoder.ckpt", "--out", "first"]);
    ok(p, &["--config", "run.toml", "train", "--init", "first/model.ckpt", "--epochs", "0", "--out", "second"]);
    assert_eq!(fs::read(p.join("first/model.ckpt")).unwrap(), fs::read(p.join("second/model.ckpt")).unwrap());
}

#[test]
fn refuses_to_overwrite_the_init_checkpoint() {
    let dir = prepared();
    let p = dir.path();
    ok(p, &["--config", "run.toml", "train", "--init", "enc/encoder.ckpt", "--out", "run"]);
    let before = fs::read(p.join("run/model.ckpt")).unwrap();
    let out = absa(p, &["--config", "run.toml", "train", "--init", "run/model.ckpt", "--out", "run"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("refusing to overwrite"));
    assert_eq!(fs::read(p.join("run/model.ckpt")).unwrap(), before);
}

#[test]
fn reports_every_configuration_problem_at_once() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("bad.toml"), "vocab = \"missing.txt\"\n\n[train]\nlearning_rate = -1.0\nbatch_size = 0\n").unwrap();
    let out = absa(p, &["--config", "bad.toml", "train", "--init", "nope.ckpt", "--out", "x"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("invalid configuration"), "{stderr}");
    for needle in ["missing.txt", "nope.ckpt", "dataset"] {
        assert!(stderr.contains(needle), "{needle} not reported: {stderr}");
    }
    assert!(stderr.lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).count() >= 4, "{stderr}");
    assert!(!p.join("x").exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("typo.toml"), "[train]\nlearning_rat = 1e-3\n").unwrap();
    let out = absa(p, &["--config", "typo.toml", "generate", "--n", "3", "--out", "r.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));
    assert!(!p.join("r.jsonl").exists());
}

#[test]
fn tokenize_prints_pieces_and_oov_summary() {
    let dir = prepared();
    let out = absa(dir.path(), &["--config", "run.toml", "tokenize", "--text", "wifi cepat zzqx"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let first = stdout.lines().next().unwrap();
    assert!(first.starts_with("wifi cepat"), "{stdout}");
    assert!(stdout.contains("# words: 3"), "{stdout}");
}
