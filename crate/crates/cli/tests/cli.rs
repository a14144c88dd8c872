//! Black-box tests against the compiled binary: exit codes, output
//! contracts, determinism, and a full synthetic pipeline.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adappeal"))
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "adappeal-cli-{tag}-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap()
            .as_nanos()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "`adappeal {}` exited {:?}\nstdout:\n{}\nstderr:\n{}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "stderr: {stderr}");
}

#[test]
fn help_and_version_exit_zero() {
    let help = run(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("adappeal"));

    let version = run(&["--version"]);
    assert_eq!(version.status.code(), Some(0));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["taxonomy", "dump", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_input_file_is_a_data_error() {
    let out = run(&["eval", "--gold", "/nonexistent/gold.jsonl", "--model", "/nonexistent/m.json"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error:"), "stderr: {stderr}");
}

#[test]
fn taxonomy_dump_lists_every_label() {
    let stdout = run_ok(&["taxonomy", "dump"]);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 21);
    assert!(lines[0].starts_with("(1)\tSpecial deals"));
    for line in &lines {
        assert_eq!(line.split('\t').count(), 5, "line: {line}");
    }
    assert!(stdout.contains("Limited offers"));
    assert!(stdout.contains("Largest/no. 1"));
}

#[test]
fn synth_is_deterministic_and_prep_ignores_thread_count() {
    let a = tempdir("synth-a");
    let b = tempdir("synth-b");
    for dir in [&a, &b] {
        run_ok(&[
            "synth",
            "--out-dir",
            dir.to_str().unwrap(),
            "--n-docs",
            "120",
            "--seed",
            "42",
        ]);
    }
    assert_eq!(
        read(&a.join("ads.jsonl")),
        read(&b.join("ads.jsonl")),
        "same seed must give identical ads"
    );
    assert_eq!(read(&a.join("gold.jsonl")), read(&b.join("gold.jsonl")));

    // The duplicate scan may fan out across threads, but the kept set and
    // its order must not change.
    for (dir, threads) in [(&a, "1"), (&b, "4")] {
        let out_dir = dir.join("prep");
        let out = bin()
            .args([
                "prep",
                "--in",
                dir.join("ads.jsonl").to_str().unwrap(),
                "--out-dir",
                out_dir.to_str().unwrap(),
                "--min-chars",
                "5",
                "--max-chars",
                "400",
                "--seed",
                "42",
            ])
            .env("ADAPPEAL_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "prep with {threads} thread(s)");
    }
    assert_eq!(
        read(&a.join("prep/corpus.jsonl")),
        read(&b.join("prep/corpus.jsonl")),
        "thread count changed prep output"
    );
}

#[test]
fn detection_pipeline_end_to_end() {
    let dir = tempdir("pipeline");
    let d = |name: &str| dir.join(name).to_str().unwrap().to_string();

    run_ok(&[
        "synth",
        "--out-dir",
        dir.to_str().unwrap(),
        "--n-docs",
        "300",
        "--seed",
        "21",
    ]);

    let prep = run_ok(&[
        "prep",
        "--in",
        &d("ads.jsonl"),
        "--out-dir",
        dir.to_str().unwrap(),
        "--min-chars",
        "5",
        "--max-chars",
        "400",
        "--split",
        "0.8,0.1,0.1",
        "--seed",
        "21",
    ]);
    assert!(prep.contains("dedup"), "prep stdout: {prep}");
    for artifact in ["corpus.jsonl", "train.jsonl", "dev.jsonl", "test.jsonl"] {
        assert!(dir.join(artifact).exists(), "{artifact} missing");
    }

    // Document-level model over the full gold file (ids match ads.jsonl).
    let train_out = run_ok(&[
        "train-doc",
        "--train",
        &d("gold.jsonl"),
        "--dev",
        &d("gold.jsonl"),
        "--out",
        &d("doc.json"),
        "--mode",
        "word",
        "--dim",
        "16",
        "--lr",
        "3.0",
        "--epochs",
        "4",
        "--seed",
        "3",
    ]);
    assert!(train_out.contains("best epoch"), "stdout: {train_out}");
    assert!(train_out.contains("saved doc model"));
    let envelope: serde_json::Value = serde_json::from_str(&read(&dir.join("doc.json"))).unwrap();
    assert_eq!(envelope["format_version"], 1);
    assert_eq!(envelope["kind"], "doc");

    run_ok(&["predict", "--model", &d("doc.json"), "--in", &d("ads.jsonl"), "--out", &d("doc-preds.jsonl")]);
    let first: serde_json::Value = serde_json::from_str(
        read(&dir.join("doc-preds.jsonl")).lines().next().unwrap(),
    )
    .unwrap();
    assert!(first.get("labels").is_some(), "doc prediction wire format");

    let eval_preds = run_ok(&["eval", "--gold", &d("gold.jsonl"), "--predictions", &d("doc-preds.jsonl")]);
    assert!(eval_preds.contains("micro F1"), "stdout: {eval_preds}");
    let eval_model = run_ok(&[
        "eval",
        "--gold",
        &d("gold.jsonl"),
        "--model",
        &d("doc.json"),
        "--out",
        &d("doc-report.json"),
    ]);
    assert!(eval_model.contains("doc labels"));
    assert!(dir.join("doc-report.json").exists());

    // Span-level model, decoded and oracle-boundary evaluation.
    run_ok(&[
        "train-span",
        "--train",
        &d("gold.jsonl"),
        "--dev",
        &d("gold.jsonl"),
        "--out",
        &d("span.json"),
        "--mode",
        "word",
        "--dim",
        "16",
        "--lr",
        "5.0",
        "--crf-weight",
        "0.05",
        "--epochs",
        "4",
        "--seed",
        "3",
    ]);
    run_ok(&["predict", "--model", &d("span.json"), "--in", &d("ads.jsonl"), "--out", &d("span-preds.jsonl")]);
    let first: serde_json::Value = serde_json::from_str(
        read(&dir.join("span-preds.jsonl")).lines().next().unwrap(),
    )
    .unwrap();
    assert!(first.get("spans").is_some(), "span prediction wire format");

    let eval_span = run_ok(&[
        "eval",
        "--gold",
        &d("gold.jsonl"),
        "--predictions",
        &d("span-preds.jsonl"),
        "--hierarchy-closure",
    ]);
    assert!(eval_span.contains("span detection"), "stdout: {eval_span}");
    let eval_oracle = run_ok(&[
        "eval",
        "--gold",
        &d("gold.jsonl"),
        "--model",
        &d("span.json"),
        "--oracle-spans",
    ]);
    assert!(eval_oracle.contains("Oracle"), "stdout: {eval_oracle}");

    // CTR with and without the aspect pathway.
    run_ok(&[
        "train-ctr",
        "--train",
        &d("train.jsonl"),
        "--dev",
        &d("dev.jsonl"),
        "--out",
        &d("ctr-none.json"),
        "--aspects",
        "none",
        "--dim",
        "8",
        "--ad-dim",
        "8",
        "--lr",
        "1.0",
        "--epochs",
        "3",
        "--seed",
        "3",
    ]);
    run_ok(&[
        "train-ctr",
        "--train",
        &d("train.jsonl"),
        "--dev",
        &d("dev.jsonl"),
        "--out",
        &d("ctr-doc.json"),
        "--aspects",
        &format!("doc:{}", d("doc.json")),
        "--dim",
        "8",
        "--ad-dim",
        "8",
        "--aspect-dim",
        "8",
        "--lr",
        "1.0",
        "--epochs",
        "3",
        "--seed",
        "3",
    ]);
    let base = run_ok(&["eval-ctr", "--model", &d("ctr-none.json"), "--test", &d("test.jsonl")]);
    assert!(base.contains("aspects none"), "stdout: {base}");
    assert!(base.contains("AUC"));
    let with = run_ok(&[
        "eval-ctr",
        "--model",
        &d("ctr-doc.json"),
        "--test",
        &d("test.jsonl"),
        "--auc-mode",
        "median-binarize",
    ]);
    assert!(with.contains("aspects doc"), "stdout: {with}");

    // Correlation over model predictions, plus the effective-aspect view.
    let corr = run_ok(&[
        "correlate",
        "--ads",
        &d("ads.jsonl"),
        "--predictions",
        &d("doc-preds.jsonl"),
        "--out",
        &d("corr.csv"),
        "--min-cases",
        "10",
        "--effective",
    ]);
    assert!(corr.contains("wrote"), "stdout: {corr}");
    let csv = read(&dir.join("corr.csv"));
    assert!(csv.starts_with("label,"));
    assert!(csv.contains("(1) Special deals"));
    assert!(dir.join("corr.json").exists());

    let exprs = run_ok(&["expressions", "--gold", &d("gold.jsonl"), "--label", "Features", "--top-k", "3"]);
    assert!(!exprs.trim().is_empty(), "expressions should list phrases");
    for line in exprs.lines() {
        assert_eq!(line.split('\t').count(), 2, "line: {line}");
    }
}

#[test]
fn imported_embeddings_override_the_builtin_encoder() {
    let dir = tempdir("embeddings");
    let d = |name: &str| dir.join(name).to_str().unwrap().to_string();

    std::fs::write(
        dir.join("ads.jsonl"),
        concat!(
            r#"{"id":"x1","advertiser_id":"a","campaign_id":"c","title":"free gift inside","description":"","lp_meta":null,"industry":"EC","keywords":[],"impressions":10,"clicks":1}"#,
            "\n",
            r#"{"id":"x2","advertiser_id":"a","campaign_id":"c","title":"same day delivery","description":"","lp_meta":null,"industry":"EC","keywords":[],"impressions":10,"clicks":1}"#,
            "\n",
        ),
    )
    .unwrap();
    std::fs::write(
        dir.join("gold.jsonl"),
        concat!(
            r#"{"doc_id":"x1","text":"free gift inside","spans":[{"start":0,"end":9,"labels":["Free"]}],"industry":"EC"}"#,
            "\n",
            r#"{"doc_id":"x2","text":"same day delivery","spans":[{"start":0,"end":8,"labels":["Speed"]}],"industry":"EC"}"#,
            "\n",
        ),
    )
    .unwrap();

    run_ok(&[
        "train-doc",
        "--train",
        &d("gold.jsonl"),
        "--dev",
        &d("gold.jsonl"),
        "--out",
        &d("doc.json"),
        "--mode",
        "word",
        "--dim",
        "4",
        "--epochs",
        "1",
        "--seed",
        "1",
    ]);

    run_ok(&["predict", "--model", &d("doc.json"), "--in", &d("ads.jsonl"), "--out", &d("plain.jsonl")]);
    // x1 gets imported vectors; x2 keeps the model's own encoding.
    std::fs::write(
        dir.join("emb.jsonl"),
        r#"{"doc_id":"x1","vectors":[[9.0,-9.0,9.0,-9.0],[1.0,1.0,1.0,1.0]]}
"#,
    )
    .unwrap();
    run_ok(&[
        "predict",
        "--model",
        &d("doc.json"),
        "--in",
        &d("ads.jsonl"),
        "--embeddings",
        &d("emb.jsonl"),
        "--out",
        &d("imported.jsonl"),
    ]);

    let parse = |text: String| -> Vec<serde_json::Value> {
        text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
    };
    let plain = parse(read(&dir.join("plain.jsonl")));
    let imported = parse(read(&dir.join("imported.jsonl")));
    assert_eq!(plain.len(), 2);
    assert_eq!(imported.len(), 2);
    assert_ne!(plain[0]["probs"], imported[0]["probs"], "x1 must use the imported vectors");
    assert_eq!(plain[1], imported[1], "x2 is untouched");

    // Span models require one vector per token.
    run_ok(&[
        "train-span",
        "--train",
        &d("gold.jsonl"),
        "--dev",
        &d("gold.jsonl"),
        "--out",
        &d("span.json"),
        "--mode",
        "word",
        "--dim",
        "4",
        "--epochs",
        "1",
        "--seed",
        "1",
    ]);
    let mismatch = run(&[
        "predict",
        "--model",
        &d("span.json"),
        "--in",
        &d("ads.jsonl"),
        "--embeddings",
        &d("emb.jsonl"),
        "--out",
        &d("span-imported.jsonl"),
    ]);
    assert_eq!(mismatch.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&mismatch.stderr);
    assert!(stderr.contains("vector(s)"), "stderr: {stderr}");
}

#[test]
fn adjudicate_then_agreement() {
    let dir = tempdir("adjudicate");
    let ads = dir.join("ads.jsonl");
    let ann = dir.join("annotations.jsonl");
    let gold = dir.join("gold.jsonl");

    std::fs::write(
        &ads,
        concat!(
            r#"{"id":"x1","advertiser_id":"a","campaign_id":"c","title":"free delivery today!","description":"order before midnight.","lp_meta":null,"industry":"EC","keywords":[],"impressions":100,"clicks":4}"#,
            "\n",
            r#"{"id":"x2","advertiser_id":"a","campaign_id":"c","title":"national no.1 service","description":"trusted for 20 years.","lp_meta":null,"industry":"Finance","keywords":[],"impressions":50,"clicks":1}"#,
            "\n",
        ),
    )
    .unwrap();

    // x1: two of three agree on span and label; the third marks the same
    // span with a different label and adds a span nobody else saw.
    // x2: all three agree.
    let mut lines = String::new();
    for (annotator, spans) in [
        ("a1", r#"[{"start":0,"end":13,"labels":["Free"]}]"#),
        ("a2", r#"[{"start":0,"end":13,"labels":["Free"]}]"#),
        (
            "a3",
            r#"[{"start":0,"end":13,"labels":["Quality"]},{"start":21,"end":33,"labels":["Limited time"]}]"#,
        ),
    ] {
        lines.push_str(&format!(
            r#"{{"doc_id":"x1","annotator_id":"{annotator}","spans":{spans}}}"#
        ));
        lines.push('\n');
    }
    for annotator in ["a1", "a2", "a3"] {
        lines.push_str(&format!(
            r#"{{"doc_id":"x2","annotator_id":"{annotator}","spans":[{{"start":9,"end":21,"labels":["Largest/no. 1"]}}]}}"#
        ));
        lines.push('\n');
    }
    std::fs::write(&ann, lines).unwrap();

    let adj = run_ok(&[
        "adjudicate",
        "--in",
        ann.to_str().unwrap(),
        "--texts",
        ads.to_str().unwrap(),
        "--out",
        gold.to_str().unwrap(),
    ]);
    assert!(adj.contains("wrote 2 gold document(s)"), "stdout: {adj}");
    let gold_text = read(&gold);
    assert!(gold_text.contains("\"Free\""), "majority label kept");
    assert!(!gold_text.contains("\"Quality\""), "outvoted label dropped");
    assert!(gold_text.contains("Largest/no. 1"));

    let agreement = run_ok(&[
        "agreement",
        "--in",
        ann.to_str().unwrap(),
        "--texts",
        ads.to_str().unwrap(),
        "--per-label",
    ]);
    assert!(agreement.contains("pair a1/a2"), "stdout: {agreement}");
    assert!(agreement.contains("pooled: token kappa"));
    assert!(agreement.contains("spans per annotator record"));
    assert!(agreement.contains("label (4) Free: token kappa"));
    // a1 and a2 tag identical tokens on every document.
    let a1a2 = agreement
        .lines()
        .find(|l| l.starts_with("pair a1/a2"))
        .unwrap();
    assert!(a1a2.contains("token kappa 1.000"), "line: {a1a2}");
}
