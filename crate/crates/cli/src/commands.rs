use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use dpta_core::attack::{roc_with_ci, AttackConfig, RocResult, ScoreTable};
use dpta_core::bounds::{check_violation, tpr_bound, DpBudget, Statistic, ViolationReport};
use dpta_core::corpus::{load_corpus, save_corpus, Corpus, Record};
use dpta_core::embed::{hash_embed, load_embeddings, EmbeddingMatrix, Metric};
use dpta_core::fidelity::{
    fidelity_report, load_entities, Divergence, EntityTags, FidelityParams, FidelitySide,
};
use dpta_core::leakage::{
    leakage_rate, load_reference, spearman, Correlation, LeakageUnit, MatchIndex, TokenMode,
};
use dpta_core::ngram::ScoreMode;
use dpta_core::outlier::{detect_outliers, OutlierReport};
use dpta_core::plan::{
    build_plan, export_manifests, import_plan, import_synthetic, write_synthetic, SYNTHETIC_DIR,
};
use dpta_core::quality::{
    filter_by_score, ingest_scores, quality_report, relative_improvement, FilterMode,
    QualityParams, ScoreFile, UtilityRow,
};
use dpta_core::simgen::{generate, SimGeneratorSpec, SimKind};
use dpta_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::output::{
    self, check_version, ensure_dir, eps_tag, read_csv, read_csv_table, read_report, write_csv,
    write_csv_records, write_report,
};
use crate::{
    AuditArgs, BoundsArgs, Cli, Command, CorrelateArgs, DivergenceArg, FidelityArgs, LeakageArgs,
    OutliersArgs, PlanArgs, QualityArgs, ReportArgs, SimKindArg, SimgenArgs, StatisticArg, UnitArg,
    UtilityArgs,
};

pub const OUTLIERS_FILE: &str = "outliers.json";
pub const PLAN_SUMMARY_FILE: &str = "plan_summary.json";
pub const SIMGEN_FILE: &str = "simgen.json";
pub const ROC_JSON: &str = "roc.json";
pub const ROC_CSV: &str = "roc.csv";
pub const FIDELITY_FILE: &str = "fidelity.json";
pub const QUALITY_FILE: &str = "quality.json";
pub const FILTERED_FILE: &str = "filtered.jsonl";
pub const LEAKAGE_JSON: &str = "leakage.json";
pub const LEAKAGE_CSV: &str = "leakage.csv";
pub const CORRELATION_JSON: &str = "correlation.json";
pub const CORRELATION_CSV: &str = "correlation.csv";
pub const UTILITY_JSON: &str = "utility.json";
pub const UTILITY_CSV: &str = "utility.csv";
pub const REPORT_FILE: &str = "report.json";
pub const OVERLAY_FILE: &str = "roc_overlay.csv";

#[derive(Serialize)]
struct Config<'a, A: Serialize> {
    seed: u64,
    #[serde(flatten)]
    args: &'a A,
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Outliers(a) => outliers(a, seed),
        Command::Plan(a) => plan(a, seed),
        Command::Simgen(a) => simgen(a, seed),
        Command::Audit(a) => audit(a, seed),
        Command::BoundsCheck(a) => bounds_check(a, seed),
        Command::Fidelity(a) => fidelity(a, seed),
        Command::Quality(a) => quality(a, seed),
        Command::Leakage(a) => leakage(a, seed),
        Command::Correlate(a) => correlate(a, seed),
        Command::Utility(a) => utility(a, seed),
        Command::Report(a) => report(a, seed),
    }
}

fn metric(name: &str) -> Result<Metric> {
    name.parse()
}

fn outliers(a: &OutliersArgs, seed: u64) -> Result<()> {
    let out = ensure_dir(&a.out)?;
    let corpus = load_corpus(&a.corpus)?;
    let m = match &a.embeddings {
        Some(path) => load_embeddings(path, &corpus, metric(&a.metric)?)?,
        None => {
            hash_embed(&corpus, a.dim, (a.ngram_min, a.ngram_max))?.with_metric(metric(&a.metric)?)
        }
    };
    let rep = detect_outliers(&m, a.top_fraction, a.k, a.lof_threshold)?;
    log::info!(
        "{} targets out of {} records",
        rep.targets.len(),
        corpus.len()
    );
    write_report(
        &out.join(OUTLIERS_FILE),
        "outliers",
        &Config { seed, args: a },
        &rep,
    )
}

#[derive(Serialize)]
struct PlanSummary {
    n_prv: usize,
    n_aux: usize,
    n_targets: usize,
    n_trials: usize,
    n_references: usize,
    claimed_budget: Option<DpBudget>,
}

fn plan(a: &PlanArgs, seed: u64) -> Result<()> {
    let out = ensure_dir(&a.out)?;
    let corpus = load_corpus(&a.corpus)?;
    let rep: OutlierReport = read_report(&a.outliers)?;
    let budget = a.epsilon.map(|e| DpBudget::new(e, a.delta)).transpose()?;
    let p = build_plan(
        &corpus,
        &rep,
        a.trials,
        a.subset_fraction,
        a.refs,
        seed,
        budget,
    )?;
    export_manifests(&p, &out)?;
    let summary = PlanSummary {
        n_prv: p.prv_ids.len(),
        n_aux: p.aux_ids.len(),
        n_targets: p.targets.len(),
        n_trials: p.trials.len(),
        n_references: p.references.len(),
        claimed_budget: p.claimed_budget,
    };
    write_report(
        &out.join(PLAN_SUMMARY_FILE),
        "plan",
        &Config { seed, args: a },
        &summary,
    )
}

#[derive(Serialize)]
struct SimgenSummary {
    generator: SimGeneratorSpec,
    n_trials: usize,
    records_written: usize,
}

fn simgen(a: &SimgenArgs, seed: u64) -> Result<()> {
    let out = ensure_dir(&a.out)?;
    let p = import_plan(&a.plan)?;
    let corpus = load_corpus(&a.corpus)?;
    let spec = match (a.kind, a.rr_epsilon) {
        (SimKindArg::Copier, _) => {
            SimGeneratorSpec::new(SimKind::Copier { dropout: a.dropout }, seed)?
        }
        (SimKindArg::Independent, _) => SimGeneratorSpec::new(SimKind::Independent, seed)?,
        (SimKindArg::Rr, Some(eps)) => SimGeneratorSpec::rr_for_epsilon(eps, seed)?,
        (SimKindArg::Rr, None) => {
            SimGeneratorSpec::new(SimKind::RandomizedResponse { p1: a.p1, p0: a.p0 }, seed)?
        }
    };
    let corpora = generate(&spec, &p, &corpus)?;
    write_synthetic(&out, &corpora)?;
    let summary = SimgenSummary {
        generator: spec,
        n_trials: corpora.len(),
        records_written: corpora.values().map(Corpus::len).sum(),
    };
    write_report(
        &out.join(SIMGEN_FILE),
        "simgen",
        &Config { seed, args: a },
        &summary,
    )
}

/// Accepts either a directory containing `synthetic/` or that directory itself.
fn synthetic_root(dir: &Path) -> PathBuf {
    if dir.join(SYNTHETIC_DIR).is_dir() {
        return dir.to_path_buf();
    }
    match (dir.file_name(), dir.parent()) {
        (Some(name), Some(parent)) if name == SYNTHETIC_DIR => parent.to_path_buf(),
        _ => dir.to_path_buf(),
    }
}

#[derive(Serialize)]
struct RocRow {
    fpr: f64,
    tpr_mean: f64,
    tpr_lo: f64,
    tpr_hi: f64,
}

#[derive(Serialize, Deserialize)]
struct RocOutput {
    attack: AttackConfig,
    n_trials: usize,
    n_targets: usize,
    ignored_files: Vec<String>,
    roc: RocResult,
}

fn audit(a: &AuditArgs, seed: u64) -> Result<()> {
    let out = ensure_dir(&a.out)?;
    let p = import_plan(&a.plan)?;
    let syn = import_synthetic(&p, &synthetic_root(&a.syn))?;
    let corpus = load_corpus(&a.corpus)?;
    let cfg = AttackConfig {
        n: a.n,
        alpha: a.alpha,
        mode: if a.raw_logprob {
            ScoreMode::Sum
        } else {
            ScoreMode::Mean
        },
    };
    let table = ScoreTable::from_synthetic(&p, &syn.corpora, &corpus, cfg)?;
    let roc = roc_with_ci(&table, a.repeats, seed)?;
    if a.format.csv() {
        let rows: Vec<RocRow> = (0..roc.grid.len())
            .map(|i| RocRow {
                fpr: roc.grid[i],
                tpr_mean: roc.tpr_mean[i],
                tpr_lo: roc.tpr_lo[i],
                tpr_hi: roc.tpr_hi[i],
            })
            .collect();
        write_csv(&out.join(ROC_CSV), &rows)?;
    }
    if a.format.json() {
        let result = RocOutput {
            attack: cfg,
            n_trials: p.trials.len(),
            n_targets: p.targets.len(),
            ignored_files: syn.ignored,
            roc,
        };
        write_report(
            &out.join(ROC_JSON),
            "audit",
            &Config { seed, args: a },
            &result,
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BoundRow {
    fpr: f64,
    tpr_bound: f64,
}

fn violation_file(eps: f64) -> String {
    format!("violation_eps_{}.json", eps_tag(eps))
}

fn bound_file(eps: f64) -> String {
    format!("bound_eps_{}.csv", eps_tag(eps))
}

fn bounds_check(a: &BoundsArgs, seed: u64) -> Result<()> {
    let out = ensure_dir(&a.out)?;
    let roc: RocOutput = read_report(&a.roc)?;
    let statistic = match a.statistic {
        StatisticArg::Mean => Statistic::Mean,
        StatisticArg::LowerCi => Statistic::LowerCi,
    };
    let mut seen = BTreeSet::new();
    for &eps in &a.epsilon {
        let b = DpBudget::new(eps, a.delta)?;
        if !seen.insert(eps_tag(eps)) {
            return Err(Error::validation(format!("epsilon {eps} given twice")));
        }
        let v = check_violation(&roc.roc, b, statistic);
        log::info!("epsilon {eps}: violated={}", v.violated);
        if a.format.json() {
            write_report(
                &out.join(violation_file(eps)),
                "bounds-check",
                &Config { seed, args: a },
                &v,
            )?;
        }
        if a.format.csv() {
            let rows: Vec<BoundRow> = roc
                .roc
                .grid
                .iter()
                .map(|&fpr| BoundRow {
                    fpr,
                    tpr_bound: tpr_bound(b, fpr),
                })
                .collect();
            write_csv(&out.join(bound_file(eps)), &rows)?;
        }
    }
    Ok(())
}

/// Hashed embeddings of several corpora fitted jointly so they share IDF weights.
fn joint_hash_embed(corpora: &[&Corpus], m: Metric) -> Result<Vec<EmbeddingMatrix>> {
    let mut pooled = Vec::new();
    for (side, c) in corpora.iter().enumerate() {
        for r in c.records() {
            pooled.push(Record::new(format!("{side}\u{1f}{}", r.id), r.text.clone()));
        }
    }
    let all = hash_embed(
        &Corpus::new("pooled", pooled)?,
        dpta_core::embed::DEFAULT_DIM,
        dpta_core::embed::DEFAULT_NGRAM_RANGE,
    )?;
    let mut out = Vec::new();
    let mut start = 0;
    for c in corpora {
        let rows = (start..start + c.len())
            .map(|i| all.row(i).to_vec())
            .collect();
        out.push(EmbeddingMatrix::new(
            c.ids().map(String::from).collect(),
            rows,
            m,
        )?);
        start += c.len();
    }
    Ok(out)
}

fn side<'a>(
    corpus: &'a Corpus,
    e: &'a Option<EmbeddingMatrix>,
    t: &'a Option<EntityTags>,
) -> FidelitySide<'a> {
    FidelitySide {
        corpus,
        embeddings: e.as_ref(),
        entities: t.as_ref(),
    }
}

fn fidelity(a: &FidelityArgs, seed: u64) -> Result<()> {
    let out = ensure_dir(&a.out)?;
    let m = metric(&a.metric)?;
    let real = load_corpus(&a.real)?;
    let syn = load_corpus(&a.syn)?;
    let heldout = a.heldout.as_deref().map(load_corpus).transpose()?;

    let load_emb = |p: &Option<PathBuf>, c: &Corpus| {
        p.as_deref().map(|p| load_embeddings(p, c, m)).transpose()
    };
    let (mut e_real, mut e_syn) = (load_emb(&a.real_emb, &real)?, load_emb(&a.syn_emb, &syn)?);
    let mut e_held = match &heldout {
        Some(h) => load_emb(&a.heldout_emb, h)?,
        None => None,
    };
    if a.hash_embed && e_real.is_none() && e_syn.is_none() {
        let mut sides = vec![&real, &syn];
        sides.extend(heldout.as_ref());
        let mut v = joint_hash_embed(&sides, m)?.into_iter();
        e_real = v.next();
        e_syn = v.next();
        e_held = v.next();
    }
    let ents = |p: &Option<PathBuf>| -> Result<Option<EntityTags>> {
        p.as_deref().map(load_entities).transpose()
    };
    let (t_real, t_syn, t_held) = (
        ents(&a.entities_real)?,
        ents(&a.entities_syn)?,
        ents(&a.entities_heldout)?,
    );

    let params = FidelityParams {
        mauve_c: a.mauve_c,
        mauve_lambdas: a.lambdas,
        mauve_clusters: a.clusters,
        entity_alpha: a.entity_alpha,
        length_bins: a.length_bins,
        divergence: match a.divergence {
            DivergenceArg::Kl => Divergence::Kl,
            DivergenceArg::Js => Divergence::Js,
        },
        seed,
        ..FidelityParams::default()
    };
    let rep = fidelity_report(
        side(&real, &e_real, &t_real),
        side(&syn, &e_syn, &t_syn),
        heldout.as_ref().map(|h| side(h, &e_held, &t_held)),
        params,
    )?;
    write_report(
        &out.join(FIDELITY_FILE),
        "fidelity",
        &Config { seed, args: a },
        &rep,
    )
}

fn score_files(pattern: &str, known: &BTreeSet<String>) -> Result<Vec<ScoreFile>> {
    let paths =
        glob::glob(pattern).map_err(|e| Error::validation(format!("bad glob {pattern:?}: {e}")))?;
    let mut files: Vec<PathBuf> = paths
        .map(|p| {
            p.map_err(|e| Error::io(e.path().to_path_buf(), std::io::Error::other(e.to_string())))
        })
        .collect::<Result<_>>()?;
    files.sort();
    if files.is_empty() {
        return Err(Error::validation(format!(
            "no score files match {pattern:?}"
        )));
    }
    files
        .iter()
        .map(|p| ingest_scores(p, Some(known)))
        .collect()
}

fn quality(a: &QualityArgs, seed: u64) -> Result<()> {
    let out = ensure_dir(&a.out)?;
    let corpus = load_corpus(&a.corpus)?;
    let known: BTreeSet<String> = corpus.ids().map(String::from).collect();
    let files = match &a.scores {
        Some(p) => score_files(p, &known)?,
        None => Vec::new(),
    };
    let params = QualityParams {
        max_refs: a.max_refs,
        zipf_top_k: a.zipf_top_k,
        seed,
    };
    let rep = quality_report(&corpus, params, &files)?;
    if let Some(name) = &a.filter_by {
        let file = files
            .iter()
            .find(|f| &f.name == name)
            .ok_or_else(|| Error::validation(format!("no ingested score file named {name:?}")))?;
        let mode = match (a.keep_threshold, a.keep_top) {
            (Some(t), None) => FilterMode::Threshold(t),
            (None, Some(f)) => FilterMode::TopFraction(f),
            _ => {
                return Err(Error::validation(
                    "--filter-by needs exactly one of --keep-threshold, --keep-top",
                ))
            }
        };
        let kept = filter_by_score(&corpus, &file.scores, mode)?;
        log::info!("kept {} of {} records", kept.len(), corpus.len());
        save_corpus(&kept, &out.join(FILTERED_FILE))?;
    }
    write_report(
        &out.join(QUALITY_FILE),
        "quality",
        &Config { seed, args: a },
        &rep,
    )
}

#[derive(Serialize)]
struct LeakageRow<'a> {
    id: &'a str,
    longest_match: usize,
    leaked: bool,
}

fn leakage(a: &LeakageArgs, seed: u64) -> Result<()> {
    let out = ensure_dir(&a.out)?;
    let corpus = load_corpus(&a.corpus)?;
    let reference = load_reference(&a.reference)?;
    let mode = if a.raw_bytes {
        TokenMode::RawBytes
    } else {
        TokenMode::Words
    };
    let idx = MatchIndex::build(&reference, mode)?;
    let unit = match a.unit {
        UnitArg::Records => LeakageUnit::Records,
        UnitArg::Tokens => LeakageUnit::Tokens,
    };
    let rep = leakage_rate(&idx, &corpus, a.threshold, unit)?;
    if a.format.csv() {
        let rows: Vec<LeakageRow> = corpus
            .ids()
            .map(|id| LeakageRow {
                id,
                longest_match: rep.per_record[id],
                leaked: rep.per_record[id] >= a.threshold,
            })
            .collect();
        write_csv(&out.join(LEAKAGE_CSV), &rows)?;
    }
    if a.format.json() {
        write_report(
            &out.join(LEAKAGE_JSON),
            "leakage",
            &Config { seed, args: a },
            &rep,
        )?;
    }
    Ok(())
}

fn dataset_column(path: &Path, header: &[String]) -> Result<usize> {
    header
        .iter()
        .position(|h| h == "dataset")
        .ok_or_else(|| Error::validation(format!("{}: no dataset column", path.display())))
}

/// `dataset → value` for each numeric column other than `dataset`.
fn numeric_columns(path: &Path) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    let (header, rows) = read_csv_table(path)?;
    let d = dataset_column(path, &header)?;
    let mut cols: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (line, row) in rows.iter().enumerate() {
        let name = row[d].clone();
        for (j, h) in header.iter().enumerate().filter(|&(j, _)| j != d) {
            let v: f64 = row[j].parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line + 2,
                message: format!("column {h:?}: {:?} is not a number", row[j]),
            })?;
            if cols
                .entry(h.clone())
                .or_default()
                .insert(name.clone(), v)
                .is_some()
            {
                return Err(Error::validation(format!(
                    "{}: dataset {name:?} appears twice",
                    path.display()
                )));
            }
        }
    }
    if cols.is_empty() {
        return Err(Error::validation(format!(
            "{}: no value columns",
            path.display()
        )));
    }
    Ok(cols)
}

#[derive(Serialize)]
struct CorrelationOutput {
    leakage_column: String,
    datasets: Vec<String>,
    correlations: BTreeMap<String, Correlation>,
}

#[derive(Serialize)]
struct CorrelationRow<'a> {
    metric: &'a str,
    rho: f64,
    p_value: f64,
    n: usize,
}

fn correlate(a: &CorrelateArgs, seed: u64) -> Result<()> {
    let out = ensure_dir(&a.out)?;
    let leak_cols = numeric_columns(&a.leakage)?;
    let (leakage_column, leak) = if let Some(v) = leak_cols.get("leaked_fraction") {
        ("leaked_fraction".to_string(), v.clone())
    } else if leak_cols.len() == 1 {
        leak_cols.into_iter().next().unwrap()
    } else {
        return Err(Error::validation(format!(
            "{}: several value columns and none named leaked_fraction",
            a.leakage.display()
        )));
    };
    let metrics = numeric_columns(&a.metric)?;
    let mut datasets: BTreeSet<String> = leak.keys().cloned().collect();
    for col in metrics.values() {
        datasets.retain(|d| col.contains_key(d));
    }
    let datasets: Vec<String> = datasets.into_iter().collect();
    let x: Vec<f64> = datasets.iter().map(|d| leak[d]).collect();
    let mut correlations = BTreeMap::new();
    for (name, col) in &metrics {
        let y: Vec<f64> = datasets.iter().map(|d| col[d]).collect();
        correlations.insert(name.clone(), spearman(&x, &y)?);
    }
    if a.format.csv() {
        let rows: Vec<CorrelationRow> = correlations
            .iter()
            .map(|(m, c)| CorrelationRow {
                metric: m,
                rho: c.rho,
                p_value: c.p_value,
                n: c.n,
            })
            .collect();
        write_csv(&out.join(CORRELATION_CSV), &rows)?;
    }
    if a.format.json() {
        let result = CorrelationOutput {
            leakage_column,
            datasets,
            correlations,
        };
        write_report(
            &out.join(CORRELATION_JSON),
            "correlate",
            &Config { seed, args: a },
            &result,
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct UtilityOut {
    #[serde(flatten)]
    row: UtilityRow,
    relative_improvement: f64,
}

#[derive(Serialize)]
struct UtilityOutput {
    rows: Vec<UtilityOut>,
}

fn utility(a: &UtilityArgs, seed: u64) -> Result<()> {
    let out = ensure_dir(&a.out)?;
    let rows: Vec<UtilityRow> = read_csv(&a.table)?;
    if rows.is_empty() {
        return Err(Error::validation(format!(
            "{} has no rows",
            a.table.display()
        )));
    }
    let rows = rows
        .into_iter()
        .map(|row| {
            let ri = relative_improvement(row.triple()).map_err(|e| {
                Error::validation(format!(
                    "{}/{}/{}/{}: {e}",
                    row.dataset, row.classifier, row.method, row.epsilon
                ))
            })?;
            Ok(UtilityOut {
                row,
                relative_improvement: ri,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if a.format.csv() {
        let header: Vec<String> = [
            "dataset",
            "classifier",
            "method",
            "epsilon",
            "f1_syn",
            "f1_real",
            "f1_random",
            "f1_majority",
            "relative_improvement",
        ]
        .map(String::from)
        .to_vec();
        let records: Vec<Vec<String>> = rows
            .iter()
            .map(|u| {
                let r = &u.row;
                vec![
                    r.dataset.clone(),
                    r.classifier.clone(),
                    r.method.clone(),
                    r.epsilon.clone(),
                    r.f1_syn.to_string(),
                    r.f1_real.to_string(),
                    r.f1_random.to_string(),
                    r.f1_majority.to_string(),
                    u.relative_improvement.to_string(),
                ]
            })
            .collect();
        write_csv_records(&out.join(UTILITY_CSV), &header, &records)?;
    }
    if a.format.json() {
        write_report(
            &out.join(UTILITY_JSON),
            "utility",
            &Config { seed, args: a },
            &UtilityOutput { rows },
        )?;
    }
    Ok(())
}

fn read_section(path: &Path) -> Result<Option<Value>> {
    if !path.is_file() {
        return Ok(None);
    }
    let v: Value = dpta_core::jsonl::read_json(path)?;
    check_version(path, &v)?;
    Ok(Some(v))
}

fn violation_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if name.starts_with("violation_eps_") && name.ends_with(".json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Serialize)]
struct Sections {
    roc: Option<Value>,
    violations: Option<BTreeMap<String, Value>>,
    fidelity: Option<Value>,
    quality: Option<Value>,
    leakage: Option<Value>,
}

fn report(a: &ReportArgs, seed: u64) -> Result<()> {
    if !a.dir.is_dir() {
        return Err(Error::io(
            &a.dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    let out = ensure_dir(a.out.as_deref().unwrap_or(&a.dir))?;
    let roc = read_section(&a.dir.join(ROC_JSON))?;
    let mut violations = BTreeMap::new();
    let mut budgets: Vec<(String, DpBudget)> = Vec::new();
    for path in violation_files(&a.dir)? {
        let v = read_section(&path)?.expect("listed file exists");
        let parsed: ViolationReport =
            serde_json::from_value(v.clone()).map_err(|e| Error::Parse {
                path: path.clone(),
                line: 0,
                message: e.to_string(),
            })?;
        let tag = eps_tag(parsed.budget.epsilon);
        budgets.push((tag.clone(), parsed.budget));
        violations.insert(tag, v);
    }
    let sections = Sections {
        roc: roc.clone(),
        violations: (!violations.is_empty()).then_some(violations),
        fidelity: read_section(&a.dir.join(FIDELITY_FILE))?,
        quality: read_section(&a.dir.join(QUALITY_FILE))?,
        leakage: read_section(&a.dir.join(LEAKAGE_JSON))?,
    };
    if let Some(roc) = roc {
        let parsed: RocOutput = serde_json::from_value(roc).map_err(|e| Error::Parse {
            path: a.dir.join(ROC_JSON),
            line: 0,
            message: e.to_string(),
        })?;
        let r = &parsed.roc;
        let mut header: Vec<String> = ["fpr", "tpr_mean", "tpr_lo", "tpr_hi"]
            .map(String::from)
            .to_vec();
        header.extend(budgets.iter().map(|(tag, _)| format!("bound_eps_{tag}")));
        let rows: Vec<Vec<String>> = (0..r.grid.len())
            .map(|i| {
                let mut row = vec![
                    r.grid[i].to_string(),
                    r.tpr_mean[i].to_string(),
                    r.tpr_lo[i].to_string(),
                    r.tpr_hi[i].to_string(),
                ];
                row.extend(
                    budgets
                        .iter()
                        .map(|(_, b)| tpr_bound(*b, r.grid[i]).to_string()),
                );
                row
            })
            .collect();
        output::write_csv_records(&out.join(OVERLAY_FILE), &header, &rows)?;
    }
    write_report(
        &out.join(REPORT_FILE),
        "report",
        &Config { seed, args: a },
        &sections,
    )
}
