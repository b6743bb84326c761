/*
Copyright 2026 The admm-prune Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use admm_prune::checkpoint::Checkpoint;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_admm-prune"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        common::write_synthetic_mnist(&dir.path().join("mnist"), 96, 40);
        Workspace { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, arch: &str, budgets: &str, out: &str) -> PathBuf {
        let text = format!(
            r#"{{
  "arch": "{arch}",
  "data_dir": "{data}",
  "output_dir": "{out}",
  "seed": 3,
  "baseline": {{"steps": 6, "batch_size": 16}},
  "retrain": {{"steps": 4, "batch_size": 16}},
  "admm": {{"budgets": {budgets}, "max_iters": 2, "w_update": {{"steps": 3, "batch_size": 16}}}},
  "retrain_log_every": 2
}}"#,
            data = self.path("mnist").display(),
            out = self.path(out).display(),
        );
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn lenet300(&self) -> PathBuf {
        self.config("lenet300.json", "lenet300", r#"{"fc1": 9408, "fc2": 2100, "fc3": 120}"#, "run300")
    }
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(o));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn prune_then_report_prints_table_percentage() {
    let ws = Workspace::new();
    let cfg = ws.lenet300();
    ok(&run(&["train", "--config", s(&cfg)]));
    ok(&run(&["prune", "--config", s(&cfg)]));
    let pruned = ws.path("run300/pruned.ckpt");
    let out = run(&["report", "--checkpoint", s(&pruned), "--output-dir", s(&ws.path("rep"))]);
    ok(&out);
    let text = stdout(&out);
    assert!(text.contains("4.37"), "{text}");
    assert!(text.contains("22.9x"), "{text}");
    let csv = fs::read_to_string(ws.path("rep/report.csv")).unwrap();
    assert!(csv.contains("total,266200,11628,4.37,22.9"), "{csv}");
    assert!(ws.path("run300/admm_log.jsonl").exists());
    let log = fs::read_to_string(ws.path("run300/admm_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["r"].as_array().unwrap().len(), 3);
        assert!(v["aug_loss"].is_number() && v["seconds"].is_number() && v["k"].is_number());
    }
}

#[test]
fn eval_prints_four_decimal_accuracy() {
    let ws = Workspace::new();
    let cfg = ws.lenet300();
    ok(&run(&["train", "--config", s(&cfg)]));
    let out = run(&[
        "eval",
        "--checkpoint",
        s(&ws.path("run300/baseline.ckpt")),
        "--data-dir",
        s(&ws.path("mnist")),
    ]);
    ok(&out);
    let line = stdout(&out);
    let value = line.trim().strip_prefix("accuracy ").expect("accuracy prefix");
    assert_eq!(value.len(), 6, "{line}");
    let acc: f64 = value.parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn retrain_keeps_mask_and_logs_counts() {
    let ws = Workspace::new();
    let cfg = ws.lenet300();
    ok(&run(&["train", "--config", s(&cfg)]));
    ok(&run(&["prune", "--config", s(&cfg)]));
    ok(&run(&["retrain", "--config", s(&cfg)]));
    let ck = Checkpoint::load(&ws.path("run300/retrained.ckpt")).unwrap();
    let counts: Vec<usize> = ck.prunable().unwrap().iter().map(|(_, t)| t.count_nonzero()).collect();
    assert_eq!(counts, vec![9408, 2100, 120]);
    let log = fs::read_to_string(ws.path("run300/retrain_log.jsonl")).unwrap();
    let steps: Vec<u64> = log
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["step"].as_u64().unwrap())
        .collect();
    assert_eq!(steps, vec![2, 4]);
}

#[test]
fn lenet5_pipeline_writes_all_artifacts() {
    let ws = Workspace::new();
    let cfg = ws.config(
        "lenet5.json",
        "lenet5",
        r#"{"conv1": 100, "conv2": 2250, "fc1": 8000, "fc2": 350}"#,
        "run5",
    );
    let out = run(&["pipeline", "--config", s(&cfg)]);
    ok(&out);
    for f in [
        "baseline.ckpt",
        "pruned.ckpt",
        "retrained.ckpt",
        "report.txt",
        "report.csv",
        "admm_log.jsonl",
        "retrain_log.jsonl",
        "config.json",
        "summary.json",
    ] {
        assert!(ws.path("run5").join(f).exists(), "missing {f}");
    }
    let ck = Checkpoint::load(&ws.path("run5/pruned.ckpt")).unwrap();
    let nz: usize = ck.prunable().unwrap().iter().map(|(_, t)| t.count_nonzero()).sum();
    assert_eq!(nz, 10_700);
    let text = fs::read_to_string(ws.path("run5/report.txt")).unwrap();
    assert!(text.contains("2.49") && text.contains("40.2x") && text.contains("conv total"));
}

#[test]
fn effective_config_reproduces_the_run() {
    let ws = Workspace::new();
    let cfg = ws.lenet300();
    ok(&run(&["pipeline", "--config", s(&cfg), "--deterministic"]));
    let first = fs::read(ws.path("run300/retrained.ckpt")).unwrap();
    let effective = ws.path("effective.json");
    fs::copy(ws.path("run300/config.json"), &effective).unwrap();
    ok(&run(&["pipeline", "--config", s(&effective), "--output-dir", s(&ws.path("again"))]));
    assert_eq!(fs::read(ws.path("again/retrained.ckpt")).unwrap(), first);
    ok(&run(&["pipeline", "--config", s(&cfg), "--seed", "4", "--output-dir", s(&ws.path("reseeded"))]));
    assert_ne!(fs::read(ws.path("reseeded/retrained.ckpt")).unwrap(), first);
}

#[test]
fn usage_errors_exit_with_two() {
    let ws = Workspace::new();
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr(&out).trim().lines().count(), 1);

    let out = run(&["train"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let bad = ws.config("bad.json", "lenet300", r#"{"fc1": 9408, "fc2": 2100}"#, "bad");
    let out = run(&["train", "--config", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("fc3"), "{}", stderr(&out));
    assert_eq!(stderr(&out).trim().lines().count(), 1);

    let out = run(&["train", "--config", s(&ws.path("missing.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_with_one() {
    let ws = Workspace::new();
    let cfg = ws.lenet300();
    ok(&run(&["train", "--config", s(&cfg)]));
    let ck = ws.path("run300/baseline.ckpt");
    let mut bytes = fs::read(&ck).unwrap();
    bytes[100] ^= 0xff;
    let corrupt = ws.path("corrupt.ckpt");
    fs::write(&corrupt, bytes).unwrap();
    let out = run(&["eval", "--checkpoint", s(&corrupt), "--data-dir", s(&ws.path("mnist"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("CRC"), "{}", stderr(&out));
    assert_eq!(stderr(&out).trim().lines().count(), 1);

    let out = run(&["eval", "--checkpoint", s(&ck), "--data-dir", s(&ws.path("nowhere"))]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["retrain", "--config", s(&cfg), "--checkpoint", s(&ck)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("mask"), "{}", stderr(&out));
}

#[test]
fn report_refuses_architecture_mismatch() {
    let ws = Workspace::new();
    let c300 = ws.lenet300();
    let c5 = ws.config(
        "lenet5.json",
        "lenet5",
        r#"{"conv1": 100, "conv2": 2250, "fc1": 8000, "fc2": 350}"#,
        "run5",
    );
    ok(&run(&["train", "--config", s(&c300)]));
    ok(&run(&["train", "--config", s(&c5)]));
    let out = run(&[
        "report",
        "--checkpoint",
        s(&ws.path("run300/baseline.ckpt")),
        "--baseline",
        s(&ws.path("run5/baseline.ckpt")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("mismatch"));
}
