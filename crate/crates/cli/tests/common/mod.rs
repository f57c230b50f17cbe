#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dpta_core::corpus::{save_corpus, Corpus, Record};
use dpta_core::fixture::{generate_fixture, FixtureSpec};
use sha2::{Digest, Sha256};

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_dpta"))
}

pub fn dpta(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("DPTA_SEED")
        .output()
        .expect("spawn dpta")
}

/// Runs `dpta` and panics with its stderr unless it exits 0.
pub fn ok(args: &[&str]) -> Output {
    let out = dpta(args);
    assert!(
        out.status.success(),
        "dpta {:?} exited {:?}: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub struct Inputs {
    pub corpus: PathBuf,
    pub real: PathBuf,
    pub syn: PathBuf,
    pub reference: PathBuf,
    pub entities_real: PathBuf,
    pub entities_syn: PathBuf,
    pub scores_glob: String,
    pub leakage_csv: PathBuf,
    pub metric_csv: PathBuf,
    pub results_csv: PathBuf,
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

/// Writes every input file the subcommand matrix needs under `dir/inputs`.
pub fn write_inputs(dir: &Path, n_records: usize) -> Inputs {
    let d = dir.join("inputs");
    std::fs::create_dir_all(d.join("scores")).unwrap();
    let fixture = generate_fixture(&FixtureSpec {
        n_records,
        ..Default::default()
    })
    .unwrap();
    let corpus = d.join("corpus.jsonl");
    save_corpus(&fixture.corpus, &corpus).unwrap();

    let records = fixture.corpus.records();
    let half = records.len() / 2;
    let real = d.join("real.jsonl");
    save_corpus(
        &Corpus::new("real", records[..half].to_vec()).unwrap(),
        &real,
    )
    .unwrap();
    let syn = d.join("syn.jsonl");
    let syn_records: Vec<Record> = records[half..]
        .iter()
        .map(|r| Record::new(format!("s-{}", r.id), r.text.clone()))
        .collect();
    save_corpus(&Corpus::new("syn", syn_records.clone()).unwrap(), &syn).unwrap();

    let reference = d.join("reference.txt");
    let lines: Vec<&str> = records.iter().step_by(3).map(|r| r.text.as_str()).collect();
    write(&reference, &(lines.join("\n") + "\n"));

    let entity_line = |id: &str, labels: Vec<&str>| {
        let ents: Vec<String> = labels
            .iter()
            .map(|l| format!("{{\"type\": \"{l}\"}}"))
            .collect();
        format!(
            "{{\"id\": \"{id}\", \"entities\": [{}]}}\n",
            ents.join(", ")
        )
    };
    let entities_real = d.join("entities_real.jsonl");
    write(
        &entities_real,
        &records[..half]
            .iter()
            .map(|r| entity_line(&r.id, r.labels.iter().map(String::as_str).collect()))
            .collect::<String>(),
    );
    let entities_syn = d.join("entities_syn.jsonl");
    write(
        &entities_syn,
        &syn_records
            .iter()
            .zip(&records[half..])
            .map(|(s, r)| entity_line(&s.id, r.labels.iter().map(String::as_str).collect()))
            .collect::<String>(),
    );

    for (name, f) in [("coherence", 1.0), ("sentiment", -0.5)] {
        let text: String = syn_records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                format!(
                    "{{\"id\": \"{}\", \"score\": {}}}\n",
                    r.id,
                    f * (i % 7) as f64
                )
            })
            .collect();
        write(&d.join("scores").join(format!("{name}.jsonl")), &text);
    }

    let leakage_csv = d.join("leakage_by_dataset.csv");
    write(
        &leakage_csv,
        "dataset,leaked_fraction\nhoc,0.02\nn2c2,0.01\npsytar,0.10\nmimic,0.05\n",
    );
    let metric_csv = d.join("metric_by_dataset.csv");
    write(
        &metric_csv,
        "dataset,mauve,f1\nhoc,0.54,51.0\nn2c2,0.41,40.2\npsytar,0.80,66.0\nmimic,0.66,58.1\n",
    );
    let results_csv = d.join("results.csv");
    write(
        &results_csv,
        "dataset,classifier,method,epsilon,f1_syn,f1_real,f1_random,f1_majority\n\
         HoC,BERT-large,DP-Gen,inf,51.0,71.9,3.7,9.1\n\
         HoC,BERT-large,DP-Gen,4,40.0,71.9,3.7,9.1\n",
    );

    Inputs {
        corpus,
        real,
        syn,
        reference,
        entities_real,
        entities_syn,
        scores_glob: format!("{}/*.jsonl", s(&d.join("scores"))),
        leakage_csv,
        metric_csv,
        results_csv,
    }
}

/// Runs every subcommand once, writing into `dir/run`.
pub fn run_matrix(inputs: &Inputs, dir: &Path, trials: usize) -> PathBuf {
    let run = dir.join("run");
    let plan = run.join("plan");
    let syn = run.join("simgen");
    let trials = trials.to_string();
    ok(&["outliers", "--corpus", s(&inputs.corpus), "--out", s(&run)]);
    ok(&[
        "plan",
        "--corpus",
        s(&inputs.corpus),
        "--outliers",
        s(&run.join("outliers.json")),
        "--trials",
        &trials,
        "--epsilon",
        "0.5",
        "--out",
        s(&plan),
    ]);
    ok(&[
        "simgen",
        "--plan",
        s(&plan),
        "--corpus",
        s(&inputs.corpus),
        "--kind",
        "copier",
        "--out",
        s(&syn),
    ]);
    ok(&[
        "audit",
        "--plan",
        s(&plan),
        "--syn",
        s(&syn),
        "--aux",
        s(&inputs.corpus),
        "--repeats",
        "50",
        "--out",
        s(&run),
    ]);
    ok(&[
        "bounds-check",
        "--roc",
        s(&run.join("roc.json")),
        "--epsilon",
        "0.5",
        "--epsilon",
        "2",
        "--out",
        s(&run),
    ]);
    ok(&[
        "fidelity",
        "--real",
        s(&inputs.real),
        "--syn",
        s(&inputs.syn),
        "--hash-embed",
        "--entities-real",
        s(&inputs.entities_real),
        "--entities-syn",
        s(&inputs.entities_syn),
        "--out",
        s(&run),
    ]);
    ok(&[
        "quality",
        "--corpus",
        s(&inputs.syn),
        "--scores",
        &inputs.scores_glob,
        "--out",
        s(&run),
    ]);
    ok(&[
        "leakage",
        "--corpus",
        s(&inputs.real),
        "--reference",
        s(&inputs.reference),
        "--out",
        s(&run),
    ]);
    ok(&[
        "correlate",
        "--leakage",
        s(&inputs.leakage_csv),
        "--metric",
        s(&inputs.metric_csv),
        "--out",
        s(&run),
    ]);
    ok(&[
        "utility",
        "--table",
        s(&inputs.results_csv),
        "--out",
        s(&run),
    ]);
    ok(&["report", "--dir", s(&run)]);
    run
}

/// SHA-256 of every file under `dir`, keyed by relative path.
pub fn hash_tree(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                let digest = Sha256::digest(std::fs::read(&p).unwrap());
                out.insert(rel, format!("{digest:x}"));
            }
        }
    }
    out
}
