//! Drives the `digmol` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use digmol::synth::{balanced_oxygen_corpus, contains_oxygen};
use digmol::trainer::{Checkpoint, FineTunedModel};
use tempfile::TempDir;

fn digmol(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_digmol"))
        .args(args)
        .current_dir(dir)
        .env_remove("DIGMOL_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_dataset(dir: &Path, n: usize) {
    let mut text = String::from("smiles,has_oxygen\n");
    for s in balanced_oxygen_corpus(n, 5) {
        text.push_str(&format!("{s},{}\n", contains_oxygen(&s) as u8));
    }
    fs::write(dir.join("data.csv"), text).unwrap();
}

const TINY: &[&str] = &["--epochs", "2", "--batch", "8", "--num-layer", "2", "--emb-dim", "16"];

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(digmol(dir.path(), &["parse", "c1ccccc1O"]).status.code(), Some(0));
    assert_eq!(digmol(dir.path(), &["parse", "c1ccccc1O", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(digmol(dir.path(), &["parse", "C1CC"]).status.code(), Some(1));
    assert_eq!(digmol(dir.path(), &["eval", "missing.csv", "--model", "missing.digf"]).status.code(), Some(1));
    assert_eq!(digmol(dir.path(), &["--version"]).status.code(), Some(0));
    let bad = digmol(dir.path(), &["parse", "C1CC"]);
    assert!(!String::from_utf8_lossy(&bad.stderr).is_empty());
}

#[test]
fn parse_prints_feature_csv() {
    let dir = TempDir::new().unwrap();
    let o = digmol(dir.path(), &["parse", "CCO"]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    let width = lines[0].split(',').count();
    assert!(lines.iter().all(|l| l.split(',').count() == width));
    assert!(lines[3].starts_with("2:O,"));
}

#[test]
fn seed_env_matches_seed_flag() {
    let dir = TempDir::new().unwrap();
    let via_flag = stdout(&digmol(dir.path(), &["augment", "c1ccccc1CCO", "--seed", "9"]));
    let via_env = Command::new(env!("CARGO_BIN_EXE_digmol"))
        .args(["augment", "c1ccccc1CCO"])
        .env("DIGMOL_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(via_flag, stdout(&via_env));
    let other = stdout(&digmol(dir.path(), &["augment", "c1ccccc1CCO", "--seed", "10"]));
    assert_ne!(via_flag, other);
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    write_dataset(p, 60);

    let split = digmol(p, &["split", "data.csv", "--out", "split.csv"]);
    assert!(split.status.success(), "{}", String::from_utf8_lossy(&split.stderr));
    let rows = fs::read_to_string(p.join("split.csv")).unwrap();
    assert_eq!(rows.lines().count(), 61);
    assert!(rows.starts_with("line,smiles,split\n"));

    let mut args = vec!["pretrain", "data.csv", "--out", "ckpt.digm", "--metrics", "loss.csv", "--seed", "1"];
    args.extend_from_slice(TINY);
    let pre = digmol(p, &args);
    assert!(pre.status.success(), "{}", String::from_utf8_lossy(&pre.stderr));
    assert_eq!(Checkpoint::load(&p.join("ckpt.digm")).unwrap().epoch, 2);
    assert_eq!(fs::read_to_string(p.join("loss.csv")).unwrap().lines().count(), 3);

    // Resuming for more epochs continues the epoch count.
    let resumed = digmol(p, &["pretrain", "data.csv", "--resume", "ckpt.digm", "--epochs", "3", "--out", "ckpt3.digm"]);
    assert!(resumed.status.success(), "{}", String::from_utf8_lossy(&resumed.stderr));
    assert_eq!(Checkpoint::load(&p.join("ckpt3.digm")).unwrap().epoch, 3);

    let ft = digmol(
        p,
        &["finetune", "data.csv", "--checkpoint", "ckpt.digm", "--epochs", "20", "--out", "model.digf", "--seed", "1"],
    );
    assert!(ft.status.success(), "{}", String::from_utf8_lossy(&ft.stderr));
    assert_eq!(FineTunedModel::load(&p.join("model.digf")).unwrap().tasks.names.len(), 1);

    let ev = digmol(p, &["eval", "data.csv", "--model", "model.digf", "--subset", "test", "--csv", "report.csv"]);
    assert!(ev.status.success(), "{}", String::from_utf8_lossy(&ev.stderr));
    assert!(stdout(&ev).contains("roc_auc"));
    let report = fs::read_to_string(p.join("report.csv")).unwrap();
    assert!(report.starts_with("task,roc_auc\nhas_oxygen,"));

    let em = digmol(p, &["embed", "data.csv", "--checkpoint", "ckpt.digm", "--out", "emb.csv"]);
    assert!(em.status.success(), "{}", String::from_utf8_lossy(&em.stderr));
    let table = fs::read_to_string(p.join("emb.csv")).unwrap();
    let header = table.lines().next().unwrap();
    assert!(header.starts_with("index,smiles,h0,") && header.ends_with(",h15,pc1,pc2"));
    assert_eq!(table.lines().count(), 61);
}

#[test]
fn pretraining_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    write_dataset(p, 24);
    for out in ["a.digm", "b.digm"] {
        let mut args = vec!["pretrain", "data.csv", "--out", out, "--seed", "4"];
        args.extend_from_slice(TINY);
        assert!(digmol(p, &args).status.success());
    }
    assert_eq!(fs::read(p.join("a.digm")).unwrap(), fs::read(p.join("b.digm")).unwrap());
}
