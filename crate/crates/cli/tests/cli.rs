use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lsdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsdr"))
        .args(args)
        .env("LSDR_THREADS", "1")
        .output()
        .expect("lsdr runs")
}

fn ok(args: &[&str]) -> String {
    let out = lsdr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn header(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap();
    serde_json::from_str(text.lines().next().unwrap()).unwrap()
}

/// Small C=3 dataset: 300 labeled and 100 unlabeled per class, so every
/// propensity is 0.75.
fn flat_dataset(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("flat.jsonl");
    ok(&[
        "synth", "--classes", "3", "--dim", "2", "--shape", "uniform", "--n1", "300", "--m1", "100",
        "--gamma-l", "1", "--gamma-u", "1", "--out", p(&out),
    ]);
    out
}

#[test]
fn synth_counts_follow_the_longtail_rule() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.jsonl");
    ok(&["synth", "--shape", "uniform", "--n1", "50", "--m1", "40", "--out", p(&out)]);
    let h = header(&out);
    // n_c = round(50 · 100^(-c/9)), at least 1.
    let expected: Vec<u64> = (0..10)
        .map(|c| ((50.0 * 100f64.powf(-(c as f64) / 9.0)).round() as u64).max(1))
        .collect();
    let counts: Vec<u64> = h["truth"]["labeled_counts"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(counts, expected);
    for v in h["truth"]["unlabeled_prior"].as_array().unwrap() {
        assert!((v.as_f64().unwrap() - 0.1).abs() < 1e-12);
    }
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Value> = text.lines().skip(1).map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len() as u64, expected.iter().sum::<u64>() + 400);
    assert_eq!(rows.iter().filter(|r| r["a"] == 1).count() as u64, expected.iter().sum::<u64>());
    // Unlabeled rows keep their hidden class, labeled rows expose theirs.
    assert!(rows.iter().all(|r| (r["a"] == 1) == r["hidden_y"].is_null()));
}

#[test]
fn outputs_do_not_depend_on_paths_or_reruns() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let da = a.path().join("d.jsonl");
    let db = b.path().join("nested");
    std::fs::create_dir(&db).unwrap();
    let db = db.join("d.jsonl");
    ok(&["synth", "--seed", "4", "--n1", "40", "--m1", "40", "--out", p(&da)]);
    ok(&["synth", "--seed", "4", "--n1", "40", "--m1", "40", "--out", p(&db)]);
    assert_eq!(std::fs::read(&da).unwrap(), std::fs::read(&db).unwrap());

    for (d, dir) in [(&da, a.path()), (&db, b.path())] {
        ok(&["train", "--data", p(d), "--method", "em", "--epochs", "3", "--out", p(&dir.join("m.json"))]);
    }
    assert_eq!(
        std::fs::read(a.path().join("m.json")).unwrap(),
        std::fs::read(b.path().join("m.json")).unwrap()
    );
}

#[test]
fn train_writes_checkpoint_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let data = flat_dataset(dir.path());
    let model = dir.path().join("m.json");
    let hist = dir.path().join("h.json");
    ok(&[
        "train", "--data", p(&data), "--method", "simpro", "--epochs", "4", "--out", p(&model), "--history", p(&hist),
    ]);
    assert_eq!(json(&model)["format"], "lsdr-checkpoint/1");
    let h = json(&hist);
    assert_eq!(h["format"], "lsdr-history/1");
    assert_eq!(h["history"].as_array().unwrap().len(), 4);

    let eval = dir.path().join("e.json");
    ok(&["eval", "--model", p(&model), "--data", p(&data), "--n-test", "300", "--out", p(&eval)]);
    let acc = json(&eval)["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn mechanism_flag_is_checked_against_the_method() {
    let dir = tempfile::tempdir().unwrap();
    let data = flat_dataset(dir.path());
    let out = dir.path().join("m.json");
    let r = lsdr(&["train", "--data", p(&data), "--method", "dr-risk", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("mechanism"));

    ok(&["train", "--data", p(&data), "--method", "em", "--epochs", "2", "--out", p(&out)]);
    let src = format!("from:{}", p(&out));
    let r = lsdr(&["train", "--data", p(&data), "--method", "em", "--mechanism", &src, "--out", p(&dir.path().join("x.json"))]);
    assert_eq!(r.status.code(), Some(1));
    ok(&[
        "train", "--data", p(&data), "--method", "dr-risk", "--epochs", "2", "--mechanism", &src, "--out",
        p(&dir.path().join("dr.json")),
    ]);
}

#[test]
fn estimate_report_fields_and_clipping() {
    let dir = tempfile::tempdir().unwrap();
    let data = flat_dataset(dir.path());
    let run = |est: &str, clip: &str| {
        let out = dir.path().join(format!("{est}-{clip}.json"));
        ok(&[
            "estimate", "--data", p(&data), "--oracle", "--cross-fit", "0", "--estimator", est, "--clip", clip, "--out",
            p(&out),
        ]);
        json(&out)
    };
    let or = run("or", "0.5");
    assert_eq!(or["format"], "lsdr-estimate/1");
    assert!(or.get("influence_variance").is_none());
    assert!(or.get("confidence_intervals").is_none());

    let dr = run("dr", "0.5");
    assert_eq!(dr["clip_events"], 0);
    assert_eq!(dr["confidence_intervals"].as_array().unwrap().len(), 3);
    assert_eq!(dr["influence_variance"].as_array().unwrap().len(), 3);
    // Every labeled row sits below a floor of 0.9.
    assert_eq!(run("dr", "0.9")["clip_events"], 900);

    let r = lsdr(&["estimate", "--data", p(&data), "--oracle", "--out", p(&dir.path().join("k.json"))]);
    assert_eq!(r.status.code(), Some(1), "oracle nuisances reject the default cross-fitting");
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let r = lsdr(&["montecarlo", "coverage", "--reps", "1", "--n", "200", "--out", p(&out)]);
    assert_ne!(r.status.code(), Some(0));
    assert!(!out.exists());
    assert_eq!(lsdr(&["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(lsdr(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn coverage_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cov.json");
    ok(&["montecarlo", "coverage", "--n", "300,600", "--reps", "20", "--out", p(&out)]);
    let doc = json(&out);
    assert_eq!(doc["study"], "coverage");
    assert_eq!(doc["runs"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("cov.records.csv").exists());
    let summary = std::fs::read_to_string(dir.path().join("cov.summary.csv")).unwrap();
    // header plus 2 sizes × 3 estimators × 3 classes
    assert_eq!(summary.lines().count(), 1 + 18);

    let rep = dir.path().join("rep.json");
    ok(&["report", "--input", p(&out), "--out", p(&rep)]);
    assert_eq!(json(&rep)["format"], "lsdr-report/1");
}

#[test]
fn small_sweep_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.json");
    ok(&[
        "montecarlo", "sweep", "--classes", "3", "--dim", "2", "--n1", "60", "--m1", "80", "--shapes", "uniform,reversed",
        "--methods", "supervised,em", "--seeds", "2", "--epochs", "3", "--n-test", "300", "--out", p(&out),
    ]);
    let doc = json(&out);
    assert_eq!(doc["format"], "lsdr-sweep/1");
    // 2 shapes × 2 seeds × 2 methods × (own + OR + IPW + DR)
    assert_eq!(doc["records"].as_array().unwrap().len(), 32);
    assert_eq!(doc["baseline"].as_array().unwrap().len(), 2);
    let text = ok(&["report", "--input", p(&out)]);
    assert!(text.contains("| em + DR |"));
    assert!(text.contains("| baseline (labeled prior) |"));
}
