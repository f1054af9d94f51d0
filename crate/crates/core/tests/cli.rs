use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vcka(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vcka"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn synth(dir: &Path) -> String {
    let ds = path(dir, "ds.jsonl");
    let out = vcka(&["synth", "--seed", "2", "--samples", "4", "--out", &ds]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    ds
}

#[test]
fn keywords_emit_one_json_object_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path());
    let out = vcka(&["keywords", "--in", &ds, "--tau", "0.2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    for l in &lines {
        let weights = l["weights"].as_array().unwrap();
        assert_eq!(weights.len(), l["words"].as_array().unwrap().len());
        assert!(weights
            .iter()
            .all(|w| (0.0..=1.0).contains(&w.as_f64().unwrap())));
    }
}

#[test]
fn cluster_honours_target() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path());
    let out = vcka(&["cluster", "--in", &ds, "--target-clusters", "3"]);
    assert!(out.status.success());
    for line in String::from_utf8(out.stdout).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["num_clusters"], 3);
        assert_eq!(v["assignment"].as_array().unwrap().len(), 32);
    }
}

#[test]
fn train_and_sweep_write_csv_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path());
    let curve = path(dir.path(), "curve.csv");
    assert!(
        vcka(&["train", "--in", &ds, "--steps", "20", "--out", &curve])
            .status
            .success()
    );
    let text = fs::read_to_string(&curve).unwrap();
    assert_eq!(text.lines().next().unwrap(), "step,l_ck,l_vk,l_kw,total");
    assert_eq!(text.lines().count(), 22);

    let sweep = path(dir.path(), "sweep.csv");
    let out = vcka(&[
        "sweep", "--in", &ds, "--steps", "10", "--values", "0.2,0.2", "--out", &sweep,
    ]);
    assert!(out.status.success());
    let rows: Vec<String> = fs::read_to_string(&sweep)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert!(rows[0].starts_with("lambda_kw,"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1], rows[2]);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path());
    let cfg = path(dir.path(), "run.toml");
    fs::write(&cfg, "steps = 5\n").unwrap();
    let curve = path(dir.path(), "a.csv");
    assert!(
        vcka(&["train", "--config", &cfg, "--in", &ds, "--out", &curve])
            .status
            .success()
    );
    assert_eq!(fs::read_to_string(&curve).unwrap().lines().count(), 7);
    assert!(
        vcka(&["train", "--config", &cfg, "--steps", "8", "--in", &ds, "--out", &curve])
            .status
            .success()
    );
    assert_eq!(fs::read_to_string(&curve).unwrap().lines().count(), 10);
}

#[test]
fn validation_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path());
    let out = vcka(&["keywords", "--in", &ds, "--tau", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let bad = path(dir.path(), "bad.jsonl");
    fs::write(&bad, "{\"video_id\": \"x\"}\n").unwrap();
    assert_eq!(
        vcka(&["infer", "--in", &bad, "--out", &path(dir.path(), "p")])
            .status
            .code(),
        Some(2)
    );

    let cfg = path(dir.path(), "typo.toml");
    fs::write(&cfg, "tua = 0.1\n").unwrap();
    assert_eq!(
        vcka(&["cluster", "--config", &cfg, "--in", &ds])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn gradcheck_passes_and_fails_by_tolerance() {
    let ok = vcka(&["gradcheck", "--configs", "2", "--coords", "50"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("video_keyword"));
    let strict = vcka(&[
        "gradcheck",
        "--configs",
        "1",
        "--coords",
        "50",
        "--tol",
        "1e-30",
    ]);
    assert_eq!(strict.status.code(), Some(3));
}

#[test]
fn eval_reports_metrics_csv() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path());
    let preds = path(dir.path(), "p.jsonl");
    assert!(vcka(&["infer", "--in", &ds, "--out", &preds])
        .status
        .success());
    let csv = path(dir.path(), "m.csv");
    assert!(
        vcka(&["eval", "--in", &preds, "--dataset", &ds, "--out", &csv])
            .status
            .success()
    );
    let text = fs::read_to_string(&csv).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        names,
        ["metric", "R1@0.5", "R1@0.7", "mAP@0.5", "mAP@0.75", "mAP@Avg", "HIT@1"]
    );
}
