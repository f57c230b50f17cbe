mod common;

use std::path::Path;

use common::*;
use serde_json::Value;

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn full_matrix_self_consumes() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = write_inputs(tmp.path(), 600);
    let run = run_matrix(&inputs, tmp.path(), 40);

    let report = json(&run.join("report.json"));
    assert_eq!(report["format_version"], "dpta-report/1");
    for section in ["roc", "violations", "fidelity", "quality", "leakage"] {
        assert!(!report[section].is_null(), "{section} is null");
    }
    assert_eq!(report["violations"]["0.5"]["violated"], true);
    assert!(report["roc"]["roc"]["auc_mean"].as_f64().unwrap() > 0.9);
    assert!(report["fidelity"]["mauve"].as_f64().is_some());
    assert!(report["fidelity"]["entity_divergence"].as_f64().is_some());

    let overlay = std::fs::read_to_string(run.join("roc_overlay.csv")).unwrap();
    let header = overlay.lines().next().unwrap();
    assert_eq!(
        header,
        "fpr,tpr_mean,tpr_lo,tpr_hi,bound_eps_0.5,bound_eps_2"
    );
    assert_eq!(overlay.lines().count(), 102);

    let roc_csv = std::fs::read_to_string(run.join("roc.csv")).unwrap();
    assert!(roc_csv.starts_with("fpr,tpr_mean,tpr_lo,tpr_hi\n"));
    let bound = std::fs::read_to_string(run.join("bound_eps_0.5.csv")).unwrap();
    assert!(bound.starts_with("fpr,tpr_bound\n"));

    let syn =
        dpta_core::corpus::load_corpus(&run.join("simgen/synthetic/trial-000.jsonl")).unwrap();
    assert!(!syn.is_empty());
    let summary = json(&run.join("plan/plan_summary.json"));
    assert_eq!(summary["n_trials"], 40);
    assert_eq!(summary["config"]["seed"], 42);

    let utility = json(&run.join("utility.json"));
    let ri = utility["rows"][0]["relative_improvement"].as_f64().unwrap();
    assert!((ri - 0.667).abs() < 1e-3);
    let corr = json(&run.join("correlation.json"));
    assert_eq!(corr["correlations"]["mauve"]["n"], 4);
    let quality = json(&run.join("quality.json"));
    assert!(quality["ingested"]["coherence"]["count"].as_u64().unwrap() > 0);
    let leakage = json(&run.join("leakage.json"));
    assert_eq!(leakage["threshold_tokens"], 8);
}

#[test]
fn audit_only_directory_reports_nulls() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = write_inputs(tmp.path(), 400);
    let run = tmp.path().join("run");
    ok(&["outliers", "--corpus", s(&inputs.corpus), "--out", s(&run)]);
    ok(&[
        "plan",
        "--corpus",
        s(&inputs.corpus),
        "--outliers",
        s(&run.join("outliers.json")),
        "--trials",
        "20",
        "--out",
        s(&run.join("p")),
    ]);
    ok(&[
        "simgen",
        "--plan",
        s(&run.join("p")),
        "--corpus",
        s(&inputs.corpus),
        "--kind",
        "independent",
        "--out",
        s(&run.join("s")),
    ]);
    ok(&[
        "audit",
        "--plan",
        s(&run.join("p")),
        "--syn",
        s(&run.join("s/synthetic")),
        "--corpus",
        s(&inputs.corpus),
        "--out",
        s(&run),
    ]);
    ok(&[
        "report",
        "--dir",
        s(&run),
        "--out",
        s(&tmp.path().join("rep")),
    ]);
    let report = json(&tmp.path().join("rep/report.json"));
    assert!(!report["roc"].is_null());
    for section in ["violations", "fidelity", "quality", "leakage"] {
        assert!(report[section].is_null(), "{section} should be null");
    }
    let overlay = std::fs::read_to_string(tmp.path().join("rep/roc_overlay.csv")).unwrap();
    assert_eq!(
        overlay.lines().next().unwrap(),
        "fpr,tpr_mean,tpr_lo,tpr_hi"
    );
}

#[test]
fn conflicting_versions_are_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("quality.json"),
        r#"{"format_version": "dpta-report/0"}"#,
    )
    .unwrap();
    let out = dpta(&["report", "--dir", s(dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("format version"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dpta(&["audit", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    let out = dpta(&["nonsense"]);
    assert_eq!(out.status.code(), Some(1));

    let missing = tmp.path().join("missing.jsonl");
    let out = dpta(&["quality", "--corpus", s(&missing), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));

    let bad = tmp.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        "{\"id\": \"a\", \"text\": \"x\"}\n{\"id\": \"a\", \"text\": \"y\"}\n",
    )
    .unwrap();
    let out = dpta(&["quality", "--corpus", s(&bad), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));

    assert_eq!(dpta(&["--help"]).status.code(), Some(0));
}

#[test]
fn help_lists_every_default() {
    let cases: &[(&str, &[&str])] = &[
        (
            "outliers",
            &[
                "[default: 0.01]",
                "[default: 20]",
                "[default: 1.5]",
                "[default: 256]",
                "[default: cosine]",
            ],
        ),
        (
            "plan",
            &[
                "[default: 100]",
                "[default: 0.5]",
                "[default: 4]",
                "[default: 0.00001]",
            ],
        ),
        (
            "simgen",
            &["[default: 0]", "[default: 0.731]", "[default: 0.269]"],
        ),
        ("audit", &["[default: 2]", "[default: 1]", "[default: 50]"]),
        (
            "bounds-check",
            &["[default: 0.00001]", "[default: lower-ci]"],
        ),
        (
            "fidelity",
            &[
                "[default: 5]",
                "[default: 99]",
                "min(500, N/10)",
                "[default: 20]",
                "[default: kl]",
            ],
        ),
        ("quality", &["[default: 100]", "[default: 5000]"]),
        ("leakage", &["[default: 8]", "[default: records]"]),
    ];
    for (cmd, needles) in cases {
        let out = ok(&[cmd, "--help"]);
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(
            text.contains("[default: 42]"),
            "{cmd} --help lacks the seed default"
        );
        assert!(
            text.contains("DPTA_SEED"),
            "{cmd} --help lacks the seed variable"
        );
        for n in *needles {
            assert!(text.contains(n), "{cmd} --help lacks {n}:\n{text}");
        }
    }
}

#[test]
fn seed_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = write_inputs(tmp.path(), 200);
    let run = |seed: Option<&str>, out: &str| {
        let mut cmd = std::process::Command::new(bin());
        cmd.args([
            "quality",
            "--corpus",
            s(&inputs.syn),
            "--out",
            s(&tmp.path().join(out)),
        ]);
        cmd.env_remove("DPTA_SEED");
        if let Some(v) = seed {
            cmd.env("DPTA_SEED", v);
        }
        assert!(cmd.status().unwrap().success());
        json(&tmp.path().join(out).join("quality.json"))
    };
    assert_eq!(run(None, "a")["config"]["seed"], 42);
    assert_eq!(run(Some("7"), "b")["config"]["seed"], 7);
    assert_eq!(run(Some("7"), "b")["params"]["seed"], 7);
}

#[test]
fn quality_filter_writes_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = write_inputs(tmp.path(), 200);
    let out = tmp.path().join("q");
    ok(&[
        "quality",
        "--corpus",
        s(&inputs.syn),
        "--scores",
        &inputs.scores_glob,
        "--filter-by",
        "coherence",
        "--keep-top",
        "0.25",
        "--out",
        s(&out),
    ]);
    let kept = dpta_core::corpus::load_corpus(&out.join("filtered.jsonl")).unwrap();
    assert_eq!(kept.len(), 25);
}

#[test]
fn leakage_of_reference_against_itself_is_total() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = write_inputs(tmp.path(), 200);
    let out = tmp.path().join("l");
    ok(&[
        "leakage",
        "--corpus",
        s(&inputs.real),
        "--reference",
        s(&inputs.real),
        "--unit",
        "tokens",
        "--out",
        s(&out),
    ]);
    assert_eq!(json(&out.join("leakage.json"))["leaked_fraction"], 1.0);
    let csv = std::fs::read_to_string(out.join("leakage.csv")).unwrap();
    assert!(csv.starts_with("id,longest_match,leaked\n"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
}
