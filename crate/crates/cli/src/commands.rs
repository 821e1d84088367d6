use std::path::{Path, PathBuf};

use typecascade::annotation::ANNOTATION_LOG_KIND;
use typecascade::artifact::{read_records, render_records, write_records};
use typecascade::baseline::{run_baseline, BaselineVariant, BASELINE_LOG_KIND};
use typecascade::cascade::{
    residual_annotation, run_cascade, RunManifest, Session, MANIFEST_KIND, RESIDUAL_LOG_KIND,
    STAGE_REPORTS_KIND,
};
use typecascade::clustering::{ColumnVectors, VectorParams, CLUSTERS_KIND};
use typecascade::config::RunConfig;
use typecascade::discovery::DISCOVERY_LOG_KIND;
use typecascade::evaluation::{
    self, cost_report, hit_rate, judge_loop, load_ground_truth, load_pairs, manual_prf, match_metrics,
    precision_judge, save_judgments, Denominator, MetricsReport, METRICS_KIND,
};
use typecascade::ingest::{load_collection, profile_report, DatasetCollection, PROFILE_KIND};
use typecascade::llmgate::{LlmGate, ModelRole, TokenUsage, LEDGER_KIND};
use typecascade::store::AnnotationStore;
use typecascade::typeindex::TypeIndex;
use typecascade::Vectors;

use crate::settings::{embedding_provider, ensure_dir, gate_for, save_cache, ConfigArgs};
use crate::{CliError, DenominatorArg, EvalMode};

pub const CATALOG_KIND: &str = "catalog";
pub const MALFORMED_KIND: &str = "malformed-tables";

fn load(dir: &Path, cfg: &RunConfig) -> Result<(DatasetCollection, Vec<typecascade::ingest::MalformedTable>), CliError> {
    let report = load_collection(dir, &cfg.ingest()).map_err(CliError::data)?;
    for m in &report.malformed {
        eprintln!("skipped {}: {}", m.file, m.reason);
    }
    Ok((report.collection, report.malformed))
}

fn vectors(collection: &DatasetCollection, cfg: &RunConfig) -> Result<Vectors, CliError> {
    let provider = embedding_provider(cfg)?;
    let v = ColumnVectors::compute(collection, &provider, VectorParams::from(cfg)).map_err(CliError::backend)?;
    save_cache(cfg, &provider)?;
    Ok(v)
}

fn write<T: serde::Serialize>(dir: &Path, file: &str, kind: &str, records: &[T]) -> Result<(), CliError> {
    write_records(&dir.join(file), kind, records).map_err(CliError::data)
}

fn write_index(dir: &Path, index: &TypeIndex) -> Result<(), CliError> {
    index.save(&dir.join("type-index.jsonl")).map_err(CliError::data)?;
    write(dir, "catalog.jsonl", CATALOG_KIND, index.catalog())
}

/// Exit code 3 when calls were attempted and none got through.
fn check_backend(gate: &LlmGate, attempted: usize) -> Result<(), CliError> {
    if attempted > 0 && gate.ledger().is_empty() {
        return Err(CliError::backend(anyhow::anyhow!(
            "all {attempted} model call(s) failed in the backend"
        )));
    }
    Ok(())
}

pub fn profile(dir: &Path, out: Option<&Path>, args: &ConfigArgs) -> Result<(), CliError> {
    let cfg = args.load()?;
    let (collection, _) = load(dir, &cfg)?;
    let records = profile_report(&collection);
    match out {
        Some(p) => write_records(p, PROFILE_KIND, &records).map_err(CliError::data)?,
        None => print!("{}", render_records(PROFILE_KIND, &records).map_err(CliError::data)?),
    }
    Ok(())
}

pub fn discover(dir: &Path, out: &Path, args: &ConfigArgs) -> Result<(), CliError> {
    let cfg = args.load()?;
    let gate = gate_for(&cfg, &[ModelRole::Discovery, ModelRole::Annotation])?;
    let (collection, malformed) = load(dir, &cfg)?;
    let vectors = vectors(&collection, &cfg)?;

    let mut session = Session::new(&collection, &cfg, &gate, &vectors);
    let outcome = run_cascade(&mut session, &cfg.schedule);
    let manifest = session.manifest(&outcome);
    let mut clusters = Vec::new();
    for tau in &cfg.schedule {
        clusters.extend(session.clusters_at(*tau).records());
    }

    ensure_dir(out)?;
    session.store.save(&out.join("annotations.jsonl")).map_err(CliError::data)?;
    write_index(out, &session.index)?;
    write(out, "ledger.jsonl", LEDGER_KIND, &gate.ledger())?;
    write(out, "clusters.jsonl", CLUSTERS_KIND, &clusters)?;
    write(out, "stages.jsonl", STAGE_REPORTS_KIND, &outcome.stages)?;
    write(out, "discovery-log.jsonl", DISCOVERY_LOG_KIND, &session.discovery_log)?;
    write(out, "annotation-log.jsonl", ANNOTATION_LOG_KIND, &session.annotation_log)?;
    write(out, "residual-log.jsonl", RESIDUAL_LOG_KIND, &outcome.residual.attempts)?;
    write(out, "malformed.jsonl", MALFORMED_KIND, &malformed)?;
    write(out, "manifest.jsonl", MANIFEST_KIND, std::slice::from_ref(&manifest))?;
    print_manifest(&manifest);

    let attempted = session.discovery_log.len() + session.annotation_log.len();
    check_backend(&gate, attempted)
}

pub fn annotate(dir: &Path, run: &Path, out: Option<&Path>, args: &ConfigArgs) -> Result<(), CliError> {
    let cfg = args.load()?;
    let gate = gate_for(&cfg, &[ModelRole::Annotation])?;
    let store = AnnotationStore::load(&run.join("annotations.jsonl")).map_err(CliError::data)?;
    let index = TypeIndex::load(&run.join("type-index.jsonl"), &cfg.banned_generics).map_err(CliError::data)?;
    let (collection, _) = load(dir, &cfg)?;
    let vectors = vectors(&collection, &cfg)?;

    let mut session = Session::new(&collection, &cfg, &gate, &vectors);
    session.store = store;
    session.index = index;
    let report = residual_annotation(&mut session, &cfg.schedule);

    let out = out.unwrap_or(run);
    ensure_dir(out)?;
    session.store.save(&out.join("annotations.jsonl")).map_err(CliError::data)?;
    write(out, "residual-log.jsonl", RESIDUAL_LOG_KIND, &report.attempts)?;
    write(out, "annotation-log.jsonl", ANNOTATION_LOG_KIND, &session.annotation_log)?;
    write(out, "ledger-residual.jsonl", LEDGER_KIND, &gate.ledger())?;
    println!(
        "residual annotation: {} of {} open column(s) annotated, {} annotated in total",
        report.annotated, report.unannotated_before, report.annotated_after
    );
    check_backend(&gate, session.annotation_log.len())
}

pub fn baseline(dir: &Path, variant: BaselineVariant, out: &Path, args: &ConfigArgs) -> Result<(), CliError> {
    let cfg = args.load()?;
    let gate = gate_for(&cfg, &[ModelRole::Discovery])?;
    let (collection, _) = load(dir, &cfg)?;
    let outcome = run_baseline(&collection, &cfg, &gate, variant);

    ensure_dir(out)?;
    outcome.store.save(&out.join("annotations.jsonl")).map_err(CliError::data)?;
    write_index(out, &outcome.index)?;
    write(out, "ledger.jsonl", LEDGER_KIND, &gate.ledger())?;
    write(out, "baseline-log.jsonl", BASELINE_LOG_KIND, &outcome.log)?;
    let t = typecascade::llmgate::totals(&gate.ledger());
    println!(
        "baseline {variant}: {} table(s), {} column(s) annotated, {} type(s), {} call(s), {} in / {} out tokens",
        collection.tables.len(),
        outcome.store.len(),
        outcome.index.len(),
        t.calls,
        t.input_tokens,
        t.output_tokens
    );
    check_backend(&gate, outcome.log.len())
}

fn load_stores(paths: &[PathBuf]) -> Result<Vec<AnnotationStore>, CliError> {
    paths
        .iter()
        .map(|p| AnnotationStore::load(p).map_err(CliError::data))
        .collect()
}

fn method_name(p: &Path) -> String {
    p.display().to_string()
}

fn finish(reports: &[MetricsReport], out: Option<&Path>) -> Result<(), CliError> {
    for r in reports {
        println!("{}", summary_line(r));
    }
    if let Some(p) = out {
        write_records(p, METRICS_KIND, reports).map_err(CliError::data)?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

fn summary_line(r: &MetricsReport) -> String {
    let mut parts = vec![r.method.clone()];
    if r.coverage.is_some() {
        parts.push(format!("coverage={}", fmt_opt(r.coverage)));
    }
    if r.hits.is_some() || r.precision_judge.is_some() {
        parts.push(format!("hits={}", fmt_opt(r.hits)));
        parts.push(format!("precision={}", fmt_opt(r.precision_judge)));
    }
    if let Some(m) = &r.manual {
        parts.push(format!(
            "P={:.4} R={:.4} F1={:.4} (tp={} fp={} fn={})",
            m.precision, m.recall, m.f1, m.tp, m.fp, m.fn_
        ));
    }
    if let Some(m) = &r.matching {
        parts.push(format!(
            "pairs={} emb_sim={:.4} shared={:.4} same={:.4}",
            m.pairs_evaluated, m.avg_emb_sim, m.pct_shared, m.pct_same
        ));
    }
    if let Some(c) = &r.cost {
        parts.push(format!(
            "cost={:.6} per_1000_columns={:.6} in={} out={}",
            c.total.cost, c.total.per_1000_columns, c.total.input_tokens, c.total.output_tokens
        ));
    }
    parts.join("  ")
}

pub fn evaluate(mode: EvalMode) -> Result<(), CliError> {
    match mode {
        EvalMode::Judge {
            collection,
            annotations,
            denominator,
            judgments_out,
            out,
            cfg,
        } => {
            let cfg = cfg.load()?;
            let gate = gate_for(&cfg, &[ModelRole::Judge])?;
            let stores = load_stores(&annotations)?;
            let (coll, _) = load(&collection, &cfg)?;
            let refs: Vec<&AnnotationStore> = stores.iter().collect();
            let judged = judge_loop(&refs, &coll, &cfg, &gate);
            for entry in judged.log.iter().filter(|e| !e.judged) {
                let why = entry.failure.as_ref().map(|f| f.message.as_str()).unwrap_or("");
                eprintln!("not judged {}: {why}", entry.column);
            }
            if let Some(p) = &judgments_out {
                save_judgments(p, &judged.judgments).map_err(CliError::data)?;
            }
            let denom = match denominator {
                DenominatorArg::Annotated => Denominator::Annotated,
                DenominatorArg::All => Denominator::AllColumns(coll.column_count()),
            };
            let reports: Vec<MetricsReport> = annotations
                .iter()
                .zip(&stores)
                .map(|(p, s)| {
                    let mut r = MetricsReport::new(method_name(p));
                    r.coverage = Some(evaluation::coverage(s, &coll));
                    r.hits = hit_rate(s, &judged.judgments, denom).ok();
                    r.hits_denominator = Some(denom);
                    r.precision_judge = precision_judge(s, &judged.judgments).ok();
                    r
                })
                .collect();
            finish(&reports, out.as_deref())?;
            check_backend(&gate, judged.log.len())
        }
        EvalMode::Manual {
            annotations,
            ground_truth,
            out,
        } => {
            let stores = load_stores(&annotations)?;
            let gts = load_ground_truth(&ground_truth).map_err(CliError::data)?;
            let mut reports = Vec::new();
            for (p, s) in annotations.iter().zip(&stores) {
                let mut r = MetricsReport::new(method_name(p));
                r.manual = Some(manual_prf(s, &gts).map_err(CliError::data)?);
                reports.push(r);
            }
            finish(&reports, out.as_deref())
        }
        EvalMode::Match {
            annotations,
            pairs,
            out,
            cfg,
        } => {
            let cfg = cfg.load()?;
            let stores = load_stores(&annotations)?;
            let pairs = load_pairs(&pairs).map_err(CliError::data)?;
            let provider = embedding_provider(&cfg)?;
            let mut reports = Vec::new();
            for (p, s) in annotations.iter().zip(&stores) {
                let mut r = MetricsReport::new(method_name(p));
                r.matching = Some(match_metrics(&pairs, s, &provider).map_err(CliError::data)?);
                reports.push(r);
            }
            save_cache(&cfg, &provider)?;
            finish(&reports, out.as_deref())
        }
        EvalMode::Cost {
            annotations,
            ledger,
            out,
            cfg,
        } => {
            if annotations.len() != ledger.len() {
                return Err(CliError::usage(anyhow::anyhow!(
                    "{} annotation file(s) but {} ledger file(s)",
                    annotations.len(),
                    ledger.len()
                )));
            }
            let cfg = cfg.load()?;
            let stores = load_stores(&annotations)?;
            let mut reports = Vec::new();
            for ((p, s), l) in annotations.iter().zip(&stores).zip(&ledger) {
                let usage: Vec<TokenUsage> = read_records(l, LEDGER_KIND).map_err(CliError::data)?;
                let mut r = MetricsReport::new(method_name(p));
                r.cost = Some(cost_report(&usage, &cfg.pricing, s.len()).map_err(CliError::data)?);
                reports.push(r);
            }
            finish(&reports, out.as_deref())
        }
    }
}

pub fn report(run: &Path) -> Result<(), CliError> {
    let mut m: Vec<RunManifest> = read_records(&run.join("manifest.jsonl"), MANIFEST_KIND).map_err(CliError::data)?;
    let m = m
        .pop()
        .ok_or_else(|| CliError::data(anyhow::anyhow!("manifest has no record")))?;
    print_manifest(&m);
    Ok(())
}

fn print_manifest(m: &RunManifest) {
    println!(
        "{} table(s), {} column(s), schedule {:?}, config {}",
        m.tables,
        m.columns,
        m.schedule,
        &m.config_hash[..12]
    );
    for s in &m.stages {
        println!(
            "  {:<12} seeds={:<4} propagated={:<4} discovered={:<4} units={:<4} failures={:<3} annotated={}",
            s.stage.as_str(),
            s.seeds_formed,
            s.columns_propagated,
            s.columns_discovered,
            s.discovery_units.len(),
            s.discovery_failures,
            s.annotated_after
        );
    }
    println!("  residual     annotated={}", m.residual_annotated);
    println!(
        "coverage {:.4} ({}/{}), {} type(s), {} indexed value(s)",
        m.coverage, m.annotated, m.columns, m.catalog_size, m.index_entries
    );
    for (role, t) in &m.ledger {
        println!(
            "  {role:<10} calls={:<5} in={:<8} out={}",
            t.calls, t.input_tokens, t.output_tokens
        );
    }
    let f = &m.failures;
    let failed = f.discovery_backend + f.discovery_malformed + f.discovery_rejected + f.annotation_backend + f.annotation_malformed;
    if failed > 0 {
        println!(
            "failures: discovery backend={} malformed={} rejected={}; annotation backend={} malformed={}",
            f.discovery_backend, f.discovery_malformed, f.discovery_rejected, f.annotation_backend, f.annotation_malformed
        );
    }
}
