//! End-to-end runs of the `basts` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn basts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_basts"))
        .args(args)
        .env("BASTS_THREADS", "2")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn split_dumps_the_figure_method() {
    let out = stdout(&basts(&["split", "--input", p(&data("fig1.java"))]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v[0]["method"], "closeIdleConnections");
    assert_eq!(v[0]["splits"].as_array().unwrap().len(), 6);
    assert_eq!(v[0]["edges"], serde_json::json!([[0, 1], [0, 2], [0, 3], [3, 4], [3, 5]]));
}

#[test]
fn split_of_a_corpus_is_one_json_line_per_record() {
    let out = stdout(&basts(&["split", "--input", p(&data("sep_toy.jsonl"))]));
    let lines: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 8);
    assert_eq!(lines[3]["id"], "sep-3");
}

#[test]
fn graph_dumps_are_dot() {
    let cfg = stdout(&basts(&["cfg", "--input", p(&data("fig1.java"))]));
    assert!(cfg.starts_with("digraph"));
    let dom = stdout(&basts(&["dom", "--input", p(&data("fig1.java"))]));
    assert!(dom.starts_with("digraph"));
}

#[test]
fn eval_of_identical_files_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("comments.txt");
    std::fs::write(&f, "returns the count\nsets the name of the user\ncloses\n").unwrap();
    let out = stdout(&basts(&["eval", "--hyp", p(&f), "--ref", p(&f), "--json"]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    for key in ["s_bleu", "c_bleu", "meteor", "rouge1_f", "rouge2_f", "rougeL_f"] {
        assert_eq!(v[key], 100.0, "{key}");
    }
    let table = stdout(&basts(&["eval", "--hyp", p(&f), "--ref", p(&f)]));
    assert!(table.contains("S-BLEU    100.00"));
}

#[test]
fn train_needs_a_pretrained_encoder_or_explicit_opt_out() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.ckpt");
    let o = basts(&["train", "--input", p(&data("summarize_toy.jsonl")), "--output", p(&out)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--checkpoint"));
}

#[test]
fn malformed_corpus_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("bad.jsonl");
    std::fs::write(&corpus, "{\"id\":\"a\",\"code\":\"void f() {}\",\"comment\":\"x\"}\n{\"id\":\"b\"}\n").unwrap();
    let o = basts(&["pretrain", "--input", p(&corpus), "--output", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn pretrain_train_summarize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(
        &config,
        "dim = 16\nheads = 2\nencoder_layers = 1\ndecoder_layers = 1\nff_dim = 32\nepochs = 3\npretrain_epochs = 3\n",
    )
    .unwrap();
    let corpus = data("summarize_toy.jsonl");
    let pre = dir.path().join("pre.ckpt");
    let model = dir.path().join("model.ckpt");
    let common = ["--config", p(&config), "--input", p(&corpus)];
    stdout(&basts(&[&["pretrain"][..], &common, &["--output", p(&pre)]].concat()));
    let log = std::fs::read_to_string(dir.path().join("pre.ckpt.loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);
    stdout(&basts(&[&["train"][..], &common, &["--checkpoint", p(&pre), "--output", p(&model), "--seed", "5"]].concat()));
    stdout(&basts(&[&["train"][..], &common, &["--from-scratch", "--output", p(&dir.path().join("s.ckpt"))]].concat()));

    let out = stdout(&basts(&["summarize", "--input", p(&data("fig1.java")), "--checkpoint", p(&model)]));
    assert_eq!(out.lines().count(), 1);
    assert!(out.starts_with("closeIdleConnections\t"));
    let out = stdout(&basts(&["summarize", "--input", p(&corpus), "--checkpoint", p(&model)]));
    assert_eq!(out.lines().count(), 16);

    let o = basts(&["eval", "--input", p(&corpus), "--checkpoint", p(&model), "--train", p(&corpus), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    // every test record also occurs in training, so all are removed
    assert_eq!(v["count"], 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("16 removed as duplicates"));

    // a pretrained checkpoint is not a summarizer
    let o = basts(&["summarize", "--input", p(&corpus), "--checkpoint", p(&pre)]);
    assert!(!o.status.success());
}
