use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cood(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cood"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn small_world(dir: &Path) {
    fs::write(
        dir.join("synth.json"),
        r#"{"classes": 3, "train_per_class": 6, "test_per_class": 8, "ood_per_class": 4, "seed": 7}"#,
    )
    .unwrap();
    let o = cood(&["synth", "--config", "synth.json", "--out", "world"], dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

const OODS: [&str; 4] = [
    "--ood",
    "world/component_shift.json",
    "--ood",
    "world/compositional.json",
];

#[test]
fn synth_benchmark_and_eval_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_world(d);
    let mut args = vec![
        "benchmark",
        "--vocab",
        "world/vocab.json",
        "--train",
        "world/id_train.json",
        "--test",
        "world/id_test.json",
        "--out",
        "bench",
    ];
    args.extend(OODS);
    let o = cood(&args, d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("bench/report.json")).unwrap()).unwrap();
    assert_eq!(report["orientation"], "higher_is_in_distribution");
    assert_eq!(report["config"]["k"], 4);

    let o = cood(
        &[
            "eval",
            "--id",
            "bench/scores/id_test.jsonl",
            "--ood",
            "bench/scores/component_shift.jsonl",
            "--ood",
            "bench/scores/compositional.jsonl",
        ],
        d,
    );
    assert!(o.status.success());
    let again: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(again["per_ood_set"], report["per_ood_set"]);
    assert_eq!(again["macro_auroc"], report["macro_auroc"]);
}

#[test]
fn coreset_then_score_matches_benchmark_scores() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_world(d);
    let o = cood(
        &[
            "coreset",
            "build",
            "--train",
            "world/id_train.json",
            "--vocab",
            "world/vocab.json",
            "--out",
            "c.coodt",
        ],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = cood(
        &[
            "score",
            "--vocab",
            "world/vocab.json",
            "--input",
            "world/id_test.coodt",
            "--coreset",
            "c.coodt",
            "--out",
            "s.jsonl",
            "--threads",
            "2",
        ],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = cood(
        &[
            "score",
            "--vocab",
            "world/vocab.json",
            "--input",
            "world/id_test.json",
            "--coreset",
            "c.coodt",
        ],
        d,
    );
    assert!(o.status.success());
    let file = fs::read_to_string(d.join("s.jsonl")).unwrap();
    assert_eq!(file, stdout(&o));
    assert_eq!(file.lines().count(), 24);

    let mut args = vec![
        "benchmark",
        "--vocab",
        "world/vocab.json",
        "--train",
        "world/id_train.json",
        "--test",
        "world/id_test.json",
        "--out",
        "bench",
        "--threads",
        "1",
    ];
    args.extend(OODS);
    assert!(cood(&args, d).status.success());
    assert_eq!(fs::read_to_string(d.join("bench/scores/id_test.jsonl")).unwrap(), file);
}

#[test]
fn theory_emits_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = cood(
        &[
            "theory",
            "fpr",
            "--n",
            "3",
            "--psi-in",
            "0.9",
            "--psi-out",
            "0.3",
            "--lambda",
            "0.95",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("n,psi_in,psi_out,lambda,T,fpr_exact,fpr_normal,delta")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[4], "2");
    assert!((row[5].parse::<f64>().unwrap() - 0.027).abs() < 1e-12);

    let o = cood(
        &[
            "theory",
            "sweep",
            "--n",
            "3,4,5",
            "--psi-in",
            "0.9",
            "--psi-out",
            "0.3,0.5",
            "--lambda",
            "0.9,0.95",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1 + 3 * 2 * 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Unknown flag and out-of-range parameter are configuration errors.
    assert_eq!(cood(&["score", "--bogus"], d).status.code(), Some(3));
    assert_eq!(
        cood(&["theory", "fpr", "--n", "3", "--psi-in", "1.5", "--psi-out", "0.3"], d)
            .status
            .code(),
        Some(3)
    );
    // Missing or malformed inputs are data errors.
    assert_eq!(
        cood(&["score", "--vocab", "missing.json", "--input", "x.coodt"], d)
            .status
            .code(),
        Some(2)
    );
    fs::write(d.join("bad.jsonl"), "not json\n").unwrap();
    assert_eq!(
        cood(&["eval", "--id", "bad.jsonl", "--ood", "bad.jsonl"], d)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(cood(&["--help"], d).status.code(), Some(0));
}

#[test]
fn validate_reports_findings() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_world(d);
    let o = cood(
        &[
            "validate",
            "--vocab",
            "world/vocab.json",
            "--input",
            "world/id_train.json",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(0));

    let path = d.join("world/id_train.json");
    let mut manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let labels = manifest["labels"].as_object_mut().unwrap();
    let first = labels.keys().next().unwrap().clone();
    labels.insert(first, serde_json::Value::from("no_such_class"));
    fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
    let o = cood(
        &[
            "validate",
            "--vocab",
            "world/vocab.json",
            "--input",
            "world/id_train.json",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("no_such_class"));
}
