//! End-to-end runs of the `cagpool` binary.

use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn cagpool(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_cagpool"))
        .args(args)
        .output()
        .expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn json_lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(cagpool(&[]).0, 1);
    assert_eq!(cagpool(&["no-such-command"]).0, 1);
    assert_eq!(cagpool(&["gen-ged", "--graphs", "many", "--out", "x"]).0, 1);
    assert_eq!(cagpool(&["train", "--task", "ged", "--mode", "cagpool", "--config", "/nonexistent.json"]).0, 1);
    assert_eq!(cagpool(&["replay", "--manifest", "/nonexistent.json"]).0, 1);
    assert_eq!(cagpool(&["--help"]).0, 0);
}

#[test]
fn validation_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"data": "missing-dir"}"#).unwrap();
    let (code, _) = cagpool(&["train", "--task", "ged", "--mode", "cagpool", "--config", p(&cfg)]);
    assert_eq!(code, 2);
    let bench_out = dir.path().join("bench.json");
    let (code, _) = cagpool(&["bench-interaction", "--nodes", "10", "--reps", "2", "--out", p(&bench_out)]);
    assert_eq!(code, 2);
}

#[test]
fn numerical_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // graphs larger than the exact-search node budget
    let ged = dir.path().join("ged");
    let (code, text) = cagpool(&["gen-ged", "--graphs", "4", "--max-nodes", "14", "--out", p(&ged)]);
    assert_eq!(code, 3, "{text}");
    let report = dir.path().join("gc.json");
    let (code, _) = cagpool(&["gradcheck", "--inject-fault", "--out", p(&report)]);
    assert_eq!(code, 3);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let failed: Vec<&str> = v["entries"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| !e["passed"].as_bool().unwrap())
        .map(|e| e["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["custom.faulty"]);
    assert!(dir.path().join("gc.manifest.json").exists());
}

#[test]
fn gradcheck_and_bench_write_reports_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let gc = dir.path().join("gc.json");
    assert_eq!(cagpool(&["gradcheck", "--seeds", "2", "--out", p(&gc)]).0, 0);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("gc.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "gradcheck");
    assert_eq!(m["seeds"], serde_json::json!([0, 1]));

    let bench = dir.path().join("bench.json");
    let args = ["bench-interaction", "--nodes", "10,20", "--dim", "8", "--reps", "5", "--warmup", "1"];
    assert_eq!(cagpool(&[&args[..], &["--out", p(&bench)]].concat()).0, 0);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&bench).unwrap()).unwrap();
    for key in ["config", "sizes", "node_level_exponent", "graph_level_exponent"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r["sizes"].as_array().unwrap().len(), 2);
}

#[test]
fn generate_train_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("motif");
    let gen = ["gen-motif", "--train", "40", "--val", "10", "--test", "10", "--seed", "2", "--out", p(&data)];
    assert_eq!(cagpool(&gen).0, 0);
    assert_eq!(json_lines(&data.join("train.jsonl")).len(), 40);

    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"data": "motif", "model": {"hidden_dim": 8}, "train": {"lr": 0.001, "epochs": 2,
            "batch_size": 8, "seed": 0, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}}"#,
    )
    .unwrap();
    let run = dir.path().join("run");
    let (code, text) = cagpool(&["train", "--task", "ddi", "--mode", "cagpool", "--config", p(&cfg), "--out", p(&run)]);
    assert_eq!(code, 0, "{text}");
    let log = json_lines(&run.join("seed-0/log.jsonl"));
    // train and val per epoch, then one test line for the selected epoch
    assert_eq!(log.len(), 2 * 2 + 1);
    assert_eq!(log.last().unwrap()["split"], "test");
    assert!(log.iter().all(|l| l["loss"].as_f64().unwrap().is_finite()));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert!(report["mean"]["auroc"].as_f64().is_some());

    let export = dir.path().join("attention.jsonl");
    let (checkpoint, test_pairs) = (run.join("seed-0/checkpoint.json"), data.join("test.jsonl"));
    let args = ["export-attention", "--checkpoint", p(&checkpoint), "--pairs", p(&test_pairs), "--out", p(&export)];
    assert_eq!(cagpool(&args).0, 0);
    let pairs = json_lines(&data.join("test.jsonl"));
    let lines = json_lines(&export);
    assert_eq!(lines.len(), pairs.len());
    for (i, line) in lines.iter().enumerate() {
        assert_eq!(line["pair_id"], i);
        for (z, idx) in [("za", "idx_a"), ("zb", "idx_b")] {
            let z: Vec<f64> = serde_json::from_value(line[z].clone()).unwrap();
            let idx: Vec<usize> = serde_json::from_value(line[idx].clone()).unwrap();
            assert_eq!(idx.len(), z.len().div_ceil(2));
            let mut order: Vec<usize> = (0..z.len()).collect();
            order.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
            assert_eq!(idx, order[..idx.len()]);
        }
    }
}

#[test]
fn ged_data_feeds_regression_training() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ged");
    assert_eq!(cagpool(&["gen-ged", "--graphs", "10", "--max-nodes", "6", "--seed", "1", "--out", p(&data)]).0, 0);
    let train = json_lines(&data.join("train.jsonl"));
    assert!(!train.is_empty());
    for pair in &train {
        let s = pair["target"].as_f64().unwrap();
        assert!(s > 0.0 && s <= 1.0);
    }
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"data": "ged", "model": {"hidden_dim": 8, "readout": "sum", "symmetric": true},
            "train": {"lr": 0.001, "epochs": 2, "batch_size": 8, "seed": 0, "beta1": 0.9, "beta2": 0.999,
            "eps": 1e-8}, "seeds": [0, 1]}"#,
    )
    .unwrap();
    let run = dir.path().join("run");
    let (code, text) = cagpool(&["train", "--task", "ged", "--mode", "cagpool", "--config", p(&cfg), "--out", p(&run)]);
    assert_eq!(code, 0, "{text}");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seeds"], serde_json::json!([0, 1]));
    assert!(report["mean"]["spearman_rho"].as_f64().is_some());
    assert!(report["mean"]["mse"].as_f64().is_some());
}
