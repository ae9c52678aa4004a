use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_iri-edge"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("spawn iri-edge")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "iri-edge {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn mean_label(dir: &Path, name: &str) -> f64 {
    let text = read(dir, name);
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "iri_inmi").unwrap();
    let vals: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// Three short routes of increasing roughness with features extracted.
fn corpus(dir: &Path) -> Vec<String> {
    let mut args = Vec::new();
    for (i, gd) in ["3e-6", "15e-6", "40e-6"].iter().enumerate() {
        let tag = format!("r{i}");
        let seed = (i + 1).to_string();
        ok(
            dir,
            &[
                "--seed",
                &seed,
                "simulate",
                "--gd-n0",
                gd,
                "--route-mi",
                "1",
                "--tag",
                &tag,
            ],
        );
        ok(
            dir,
            &[
                "features",
                &format!("{tag}_stream.csv"),
                "--output",
                &format!("{tag}_features.csv"),
            ],
        );
        args.push(tag);
    }
    args
}

fn train_args<'a>(tags: &'a [String], buf: &'a mut Vec<String>) -> Vec<&'a str> {
    buf.clear();
    buf.push("--features".into());
    buf.extend(tags.iter().map(|t| format!("{t}_features.csv")));
    buf.push("--labels".into());
    buf.extend(tags.iter().map(|t| format!("{t}_labels.csv")));
    buf.iter().map(String::as_str).collect()
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [a.path(), b.path()] {
        ok(d, &["--seed", "11", "simulate", "--route-mi", "0.5", "--profile"]);
    }
    for f in ["stream.csv", "labels.csv", "profile.csv"] {
        assert_eq!(
            read(a.path(), f),
            read(b.path(), f),
            "{f} differs between identical runs"
        );
    }
    let c = tempfile::tempdir().unwrap();
    ok(c.path(), &["--seed", "12", "simulate", "--route-mi", "0.5"]);
    assert_ne!(read(a.path(), "stream.csv"), read(c.path(), "stream.csv"));
    assert!(a.path().join("simulate.manifest.json").exists());
}

#[test]
fn rougher_class_has_higher_labels() {
    let d = tempfile::tempdir().unwrap();
    ok(
        d.path(),
        &[
            "--seed",
            "3",
            "simulate",
            "--class",
            "A",
            "--route-mi",
            "1",
            "--tag",
            "a",
        ],
    );
    ok(
        d.path(),
        &[
            "--seed",
            "3",
            "simulate",
            "--class",
            "E",
            "--route-mi",
            "1",
            "--tag",
            "e",
        ],
    );
    let (a, e) = (
        mean_label(d.path(), "a_labels.csv"),
        mean_label(d.path(), "e_labels.csv"),
    );
    assert!(e > 4.0 * a, "class E mean {e} vs class A mean {a}");
}

#[test]
fn features_one_mile_gives_ten_rows_and_empty_input_fails() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["--seed", "5", "simulate", "--route-mi", "1"]);
    ok(d.path(), &["features", "stream.csv"]);
    assert_eq!(read(d.path(), "features.csv").lines().count(), 11);

    std::fs::write(d.path().join("empty.csv"), "").unwrap();
    let out = run(d.path(), &["features", &d.path().join("empty.csv").to_string_lossy()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no valid GPS fix"));
}

#[test]
fn train_is_deterministic_and_end_to_end_chain_runs() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    let tags = corpus(dir);
    let mut buf = Vec::new();
    let targs = train_args(&tags, &mut buf);
    let mut first = vec!["--seed", "4", "train", "--mode", "boosted", "--n-trees", "60"];
    first.extend(&targs);
    ok(dir, &first);
    let model_a = read(dir, "model-boosted.txt");
    ok(dir, &first);
    assert_eq!(model_a, read(dir, "model-boosted.txt"));
    assert!(model_a.starts_with("iri-edge-model v1"));

    ok(dir, &["predict", "--model", "model-boosted.txt", "r1_features.csv"]);
    let preds = read(dir, "predictions.csv");
    assert_eq!(preds.lines().next(), Some("index,iri,class"));
    assert_eq!(preds.lines().count(), 11);

    let out = ok(
        dir,
        &["evaluate", "--pred", "predictions.csv", "--truth", "r1_labels.csv"],
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("RMSE"));
    let json: serde_json::Value = serde_json::from_str(&read(dir, "evaluate-metrics.json")).unwrap();
    assert!(json["metrics"]["rmse"].as_f64().unwrap() < 15.0);

    ok(
        dir,
        &[
            "plot-data",
            "scatter",
            "--pred",
            "predictions.csv",
            "--truth",
            "r1_labels.csv",
        ],
    );
    assert_eq!(read(dir, "plot-scatter.csv").lines().count(), 11);

    let out = ok(
        dir,
        &["pipeline", "--model", "model-boosted.txt", "r1_stream.csv", "--stats"],
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    let recs: Vec<serde_json::Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 10);
    for (i, r) in recs.iter().enumerate() {
        assert_eq!(r["idx"].as_u64(), Some(i as u64));
        for k in [
            "lat0", "lon0", "lat1", "lon1", "len_mi", "iri", "class", "n", "speed", "lat_us", "partial",
        ] {
            assert!(r.get(k).is_some(), "record missing {k}");
        }
    }
    let stats: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().last().unwrap()).unwrap();
    assert_eq!(stats["segments"].as_u64(), Some(10));

    // batch predictions and streamed records agree
    for (line, r) in preds.lines().skip(1).zip(&recs) {
        let batch: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(batch, r["iri"].as_f64().unwrap());
    }
}

#[test]
fn evaluate_identical_series_is_exact() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["--seed", "9", "simulate", "--route-mi", "0.5"]);
    let out = ok(d.path(), &["evaluate", "--pred", "labels.csv", "--truth", "labels.csv"]);
    let csv = read(d.path(), "evaluate-metrics.csv");
    assert!(csv.lines().any(|l| l == "rmse,0"), "{csv}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("100.00 %"));
}

#[test]
fn evaluate_reports_join_mismatch() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("p.csv"), "index,iri\n0,50\n1,60\n").unwrap();
    std::fs::write(d.path().join("t.csv"), "index,iri\n0,50\n").unwrap();
    let p = d.path().join("p.csv");
    let t = d.path().join("t.csv");
    let out = run(
        d.path(),
        &[
            "evaluate",
            "--pred",
            &p.to_string_lossy(),
            "--truth",
            &t.to_string_lossy(),
        ],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("join mismatch"));
}

#[test]
fn too_few_training_rows_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["--seed", "2", "simulate", "--route-mi", "1"]);
    ok(d.path(), &["features", "stream.csv"]);
    let out = run(
        d.path(),
        &["train", "--features", "features.csv", "--labels", "labels.csv"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 20"));
}

#[test]
fn config_errors_name_the_offending_key() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.toml");
    std::fs::write(&cfg, "[synth]\nroute_len_mi = 1.0\nbogus = 3\n").unwrap();
    let out = run(d.path(), &["--config", &cfg.to_string_lossy(), "simulate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("synth.bogus"));

    std::fs::write(&cfg, "[synth\n").unwrap();
    let out = run(d.path(), &["--config", &cfg.to_string_lossy(), "simulate"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    std::fs::write(&cfg, "[nonsense]\na = 1\n").unwrap();
    let out = run(d.path(), &["--config", &cfg.to_string_lossy(), "simulate"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonsense"));
}

#[test]
fn config_file_overrides_defaults() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    std::fs::write(&cfg, "[synth]\nroute_len_mi = 0.3\n").unwrap();
    ok(
        d.path(),
        &["--config", &cfg.to_string_lossy(), "--seed", "1", "simulate"],
    );
    assert_eq!(read(d.path(), "labels.csv").lines().count(), 4);
}

#[test]
fn pipeline_writes_file_target_and_partial_on_request() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    let tags = corpus(dir);
    let mut buf = Vec::new();
    let mut args = vec!["train", "--mode", "single"];
    args.extend(train_args(&tags, &mut buf));
    ok(dir, &args);
    ok(
        dir,
        &["--seed", "21", "simulate", "--route-mi", "0.45", "--tag", "short"],
    );
    ok(
        dir,
        &[
            "pipeline",
            "--model",
            "model-single.txt",
            "short_stream.csv",
            "--emit",
            "file:out.ndjson",
        ],
    );
    assert_eq!(read(dir, "out.ndjson").lines().count(), 4);
    ok(
        dir,
        &[
            "pipeline",
            "--model",
            "model-single.txt",
            "short_stream.csv",
            "--emit",
            "file:p.ndjson",
            "--include-partial",
        ],
    );
    let text = read(dir, "p.ndjson");
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().last().unwrap().contains("\"partial\":true"));
    let stats: serde_json::Value = serde_json::from_str(&read(dir, "pipeline-stats.json")).unwrap();
    assert_eq!(stats["segments"].as_u64(), Some(5));
}

#[test]
fn repeatability_from_run_files() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    std::fs::write(dir.join("a.csv"), "index,iri\n0,90\n1,100\n").unwrap();
    std::fs::write(dir.join("b.csv"), "index,iri\n0,110\n1,100\n").unwrap();
    let (a, b) = (dir.join("a.csv"), dir.join("b.csv"));
    ok(
        dir,
        &["repeatability", "--runs", &a.to_string_lossy(), &b.to_string_lossy()],
    );
    let rep = read(dir, "repeatability.csv");
    assert_eq!(rep.lines().count(), 3);
    let json: serde_json::Value = serde_json::from_str(&read(dir, "repeatability.json")).unwrap();
    assert!((json["mean_cv"].as_f64().unwrap() - 5.0).abs() < 1e-9);
}
