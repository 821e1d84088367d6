//! Effectiveness, coverage, cost and similarity metrics, the judge loop, and
//! manual ground-truth bookkeeping.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact::{self, ArtifactError};
use crate::config::{Pricing, RunConfig};
use crate::discovery::Failure;
use crate::embedding::{cosine_sim, EmbeddingError, EmbeddingProvider};
use crate::ingest::{table_context, ColumnId, DatasetCollection};
use crate::llmgate::{build_judge_prompt, parse_verdicts, JudgePromptInput, LlmGate, ModelRole, TokenUsage, Verdict};
use crate::sampling::length_stratified_sample;
use crate::stage::StageId;
use crate::store::AnnotationStore;
use crate::typeindex::canonical_label;
use crate::Real;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no column to evaluate")]
    EmptyEvaluationSet,
    #[error("no annotated type to evaluate")]
    ZeroAnnotations,
    #[error("no pair has both columns annotated")]
    NoEligiblePairs,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Key under which two labels count as the same.
pub fn label_key(label: &str) -> String {
    canonical_label(label).to_lowercase()
}

fn keys<'a>(labels: impl IntoIterator<Item = &'a String>) -> BTreeSet<String> {
    labels.into_iter().map(|l| label_key(l)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub column: ColumnId,
    pub verdicts: BTreeMap<String, Verdict>,
}

impl Judgment {
    pub fn verdict(&self, label: &str) -> Option<Verdict> {
        let k = label_key(label);
        self.verdicts
            .iter()
            .find(|(l, _)| label_key(l) == k)
            .map(|(_, v)| *v)
    }

    /// Keys of the labels judged correct.
    pub fn valid(&self) -> BTreeSet<String> {
        self.verdicts
            .iter()
            .filter(|(_, v)| **v == Verdict::Correct)
            .map(|(l, _)| label_key(l))
            .collect()
    }
}

pub const JUDGMENTS_KIND: &str = "judgments";

pub fn save_judgments(path: &Path, judgments: &[Judgment]) -> Result<(), ArtifactError> {
    artifact::write_records(path, JUDGMENTS_KIND, judgments)
}

pub fn load_judgments(path: &Path) -> Result<Vec<Judgment>, ArtifactError> {
    artifact::read_records(path, JUDGMENTS_KIND)
}

/// Which columns form the hit-rate denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "columns")]
pub enum Denominator {
    /// Annotated columns that were judged.
    Annotated,
    /// A fixed column count, usually the whole collection.
    AllColumns(usize),
}

fn judged<'a>(
    store: &'a AnnotationStore,
    judgments: &'a [Judgment],
) -> impl Iterator<Item = (BTreeSet<String>, BTreeSet<String>)> + 'a {
    let by_col: BTreeMap<&ColumnId, &Judgment> = judgments.iter().map(|j| (&j.column, j)).collect();
    store.iter().filter_map(move |a| {
        by_col
            .get(&a.column)
            .map(|j| (keys(&a.types), j.valid()))
    })
}

/// Fraction of columns with at least one correct label.
pub fn hit_rate(
    store: &AnnotationStore,
    judgments: &[Judgment],
    denominator: Denominator,
) -> Result<f64, EvalError> {
    let mut evaluated = 0usize;
    let mut hits = 0usize;
    for (ann, valid) in judged(store, judgments) {
        evaluated += 1;
        if ann.intersection(&valid).next().is_some() {
            hits += 1;
        }
    }
    let n = match denominator {
        Denominator::Annotated => evaluated,
        Denominator::AllColumns(n) => n,
    };
    if n == 0 {
        return Err(EvalError::EmptyEvaluationSet);
    }
    Ok(hits as f64 / n as f64)
}

/// Correct labels over all labels of the judged columns.
pub fn precision_judge(store: &AnnotationStore, judgments: &[Judgment]) -> Result<f64, EvalError> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (ann, valid) in judged(store, judgments) {
        correct += ann.intersection(&valid).count();
        total += ann.len();
    }
    if total == 0 {
        return Err(EvalError::ZeroAnnotations);
    }
    Ok(correct as f64 / total as f64)
}

/// Hand-built reference types of one column. Types the annotator found
/// missing are kept as anonymous `Other_k` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticGroundTruth {
    pub column: ColumnId,
    pub valid_labels: BTreeSet<String>,
    pub missed_placeholders: usize,
}

pub fn is_placeholder(label: &str) -> bool {
    label
        .strip_prefix("Other_")
        .is_some_and(|k| !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()))
}

impl SyntheticGroundTruth {
    /// Splits `Other_k` tokens from real labels. Repeated placeholders count once.
    pub fn from_labels<S: AsRef<str>>(column: ColumnId, labels: &[S]) -> Self {
        let mut valid = BTreeSet::new();
        let mut placeholders = BTreeSet::new();
        for l in labels {
            let l = l.as_ref().trim();
            if is_placeholder(l) {
                placeholders.insert(l.to_string());
            } else if !l.is_empty() {
                valid.insert(l.to_string());
            }
        }
        SyntheticGroundTruth {
            column,
            valid_labels: valid,
            missed_placeholders: placeholders.len(),
        }
    }
}

/// One line of a ground-truth file; placeholders appear verbatim in `labels`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub table: String,
    pub column: String,
    pub ordinal: usize,
    pub labels: Vec<String>,
}

pub const GROUND_TRUTH_KIND: &str = "ground-truth";

pub fn load_ground_truth(path: &Path) -> Result<Vec<SyntheticGroundTruth>, ArtifactError> {
    let recs: Vec<GroundTruthRecord> = artifact::read_records(path, GROUND_TRUTH_KIND)?;
    Ok(recs
        .into_iter()
        .map(|r| SyntheticGroundTruth::from_labels(ColumnId::new(r.table, r.ordinal, r.column), &r.labels))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub zero_denominator: bool,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let mut zero = false;
        let mut ratio = |num: usize, den: usize| {
            if den == 0 {
                zero = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
            zero_denominator: zero,
        }
    }
}

/// Precision, recall and F1 against hand-built ground truth. Unannotated
/// columns contribute only false negatives.
pub fn manual_prf(store: &AnnotationStore, gts: &[SyntheticGroundTruth]) -> Result<Prf, EvalError> {
    if gts.is_empty() {
        return Err(EvalError::EmptyEvaluationSet);
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for gt in gts {
        let ann = store.types_of(&gt.column).map(keys).unwrap_or_default();
        let valid = keys(&gt.valid_labels);
        tp += ann.intersection(&valid).count();
        fp += ann.difference(&valid).count();
        fn_ += valid.difference(&ann).count() + gt.missed_placeholders;
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}

/// Annotated columns over all columns; 0 for an empty collection.
pub fn coverage(store: &AnnotationStore, collection: &DatasetCollection) -> f64 {
    let total = collection.column_count();
    if total == 0 {
        return 0.0;
    }
    let annotated = collection.columns().filter(|c| store.is_annotated(&c.id)).count();
    annotated as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeLogEntry {
    pub column: ColumnId,
    pub labels: Vec<String>,
    pub judged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JudgeOutcome {
    pub judgments: Vec<Judgment>,
    pub log: Vec<JudgeLogEntry>,
}

/// Labels of a column across stores, one per key, first spelling wins.
pub fn pooled_labels(stores: &[&AnnotationStore], column: &ColumnId) -> Vec<String> {
    let mut seen: BTreeMap<String, String> = BTreeMap::new();
    for s in stores {
        for l in s.types_of(column).into_iter().flatten() {
            seen.entry(label_key(l)).or_insert_with(|| l.clone());
        }
    }
    seen.into_values().collect()
}

/// Values shown to the judge: a sample of `2k` values outside the `k`-value
/// annotation sample, or the annotation sample itself when nothing is left.
pub fn judge_values(collection: &DatasetCollection, column: &ColumnId, k: usize) -> Vec<String> {
    let Some(profile) = collection.column(column) else {
        return Vec::new();
    };
    let first = length_stratified_sample(profile.value_multiset(), k).unwrap_or_default();
    let rest: Vec<(&str, usize)> = profile
        .value_multiset()
        .filter(|(v, _)| !first.iter().any(|f| f == v))
        .collect();
    match length_stratified_sample(rest, 2 * k) {
        Ok(extra) if !extra.is_empty() => extra,
        _ => first,
    }
}

/// One judge call per column annotated by any store, with labels pooled so
/// identical labels get one verdict. Malformed replies drop the column.
pub fn judge_loop(
    stores: &[&AnnotationStore],
    collection: &DatasetCollection,
    cfg: &RunConfig,
    gate: &LlmGate,
) -> JudgeOutcome {
    let columns: BTreeSet<&ColumnId> = stores.iter().flat_map(|s| s.iter().map(|a| &a.column)).collect();
    let stage = StageId::judge();
    let mut out = JudgeOutcome::default();
    for id in columns {
        let labels = pooled_labels(stores, id);
        let ctx = match table_context(collection, id, cfg.table_context_rows) {
            Ok(c) => c,
            Err(e) => {
                out.log.push(JudgeLogEntry {
                    column: id.clone(),
                    labels,
                    judged: false,
                    failure: Some(Failure {
                        kind: crate::discovery::FailureKind::NoValues,
                        message: e.to_string(),
                    }),
                });
                continue;
            }
        };
        let values = judge_values(collection, id, cfg.value_samples);
        let prompt = build_judge_prompt(&JudgePromptInput {
            column_name: &id.column,
            context: &ctx,
            values: &values,
            labels: &labels,
        });
        let (res, _) = gate.complete_parsed(ModelRole::Judge, &stage, &prompt, |t| parse_verdicts(t, &labels));
        match res {
            Ok(verdicts) => {
                out.judgments.push(Judgment {
                    column: id.clone(),
                    verdicts,
                });
                out.log.push(JudgeLogEntry {
                    column: id.clone(),
                    labels,
                    judged: true,
                    failure: None,
                });
            }
            Err(e) => out.log.push(JudgeLogEntry {
                column: id.clone(),
                labels,
                judged: false,
                failure: Some(Failure::from_llm(&e)),
            }),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchTask {
    JoinDiscovery,
    SchemaMatching,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPair {
    pub left: ColumnId,
    pub right: ColumnId,
    pub task: MatchTask,
}

pub const MATCH_PAIRS_KIND: &str = "match-pairs";

pub fn load_pairs(path: &Path) -> Result<Vec<MatchPair>, ArtifactError> {
    artifact::read_records(path, MATCH_PAIRS_KIND)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub pairs_evaluated: usize,
    pub excluded: Vec<MatchPair>,
    pub avg_emb_sim: f64,
    /// Fraction of pairs sharing at least one label.
    pub pct_shared: f64,
    /// Fraction of pairs with equal label sets.
    pub pct_same: f64,
}

/// Label-level agreement between the two sides of ground-truth pairs. Pairs
/// with an unannotated side are excluded and listed.
pub fn match_metrics<P: EmbeddingProvider<Real> + ?Sized>(
    pairs: &[MatchPair],
    store: &AnnotationStore,
    provider: &P,
) -> Result<MatchReport, EvalError> {
    let mut eligible = Vec::new();
    let mut excluded = Vec::new();
    for p in pairs {
        match (store.types_of(&p.left), store.types_of(&p.right)) {
            (Some(l), Some(r)) if p.left != p.right => eligible.push((l, r)),
            _ => excluded.push(p.clone()),
        }
    }
    if eligible.is_empty() {
        return Err(EvalError::NoEligiblePairs);
    }
    let labels: Vec<String> = eligible
        .iter()
        .flat_map(|(l, r)| l.iter().chain(r.iter()).cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let vectors = provider.embed_batch(&labels)?;
    let emb: BTreeMap<&str, &[Real]> = labels
        .iter()
        .map(String::as_str)
        .zip(vectors.iter().map(|v| v.components()))
        .collect();

    let (mut sim, mut shared, mut same) = (0.0, 0usize, 0usize);
    for (l, r) in &eligible {
        let mut s = 0.0;
        for a in l.iter() {
            for b in r.iter() {
                s += cosine_sim(emb[a.as_str()], emb[b.as_str()])?;
            }
        }
        sim += s / (l.len() * r.len()) as f64;
        let (kl, kr) = (keys(l.iter()), keys(r.iter()));
        if kl.intersection(&kr).next().is_some() {
            shared += 1;
        }
        if kl == kr {
            same += 1;
        }
    }
    let n = eligible.len() as f64;
    Ok(MatchReport {
        pairs_evaluated: eligible.len(),
        excluded,
        avg_emb_sim: sim / n,
        pct_shared: shared as f64 / n,
        pct_same: same as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLine {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: f64,
    /// Cost per 1000 annotated columns.
    pub per_1000_columns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub annotated_columns: usize,
    pub total: CostLine,
    pub by_role: BTreeMap<ModelRole, CostLine>,
    pub by_stage: BTreeMap<StageId, CostLine>,
}

/// Priced ledger, normalized per 1000 annotated columns.
pub fn cost_report(
    ledger: &[TokenUsage],
    pricing: &Pricing,
    annotated_columns: usize,
) -> Result<CostReport, EvalError> {
    if annotated_columns == 0 {
        return Err(EvalError::ZeroAnnotations);
    }
    let scale = 1000.0 / annotated_columns as f64;
    let add = |line: &mut CostLine, u: &TokenUsage| {
        let rate = pricing.rate(u.role);
        let c = (u.input_tokens as f64 * rate.input_per_million
            + u.output_tokens as f64 * rate.output_per_million)
            / 1e6;
        line.calls += 1;
        line.input_tokens += u.input_tokens;
        line.output_tokens += u.output_tokens;
        line.cost += c;
        line.per_1000_columns = line.cost * scale;
    };
    let mut total = CostLine::default();
    let mut by_role: BTreeMap<ModelRole, CostLine> = BTreeMap::new();
    let mut by_stage: BTreeMap<StageId, CostLine> = BTreeMap::new();
    for u in ledger {
        add(&mut total, u);
        add(by_role.entry(u.role).or_default(), u);
        add(by_stage.entry(u.stage.clone()).or_default(), u);
    }
    Ok(CostReport {
        annotated_columns,
        total,
        by_role,
        by_stage,
    })
}

/// Metrics of one method, any of which may be absent depending on the mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hits: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hits_denominator: Option<Denominator>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision_judge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manual: Option<Prf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matching: Option<MatchReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostReport>,
}

impl MetricsReport {
    pub fn new(method: impl Into<String>) -> Self {
        MetricsReport {
            method: method.into(),
            coverage: None,
            hits: None,
            hits_denominator: None,
            precision_judge: None,
            manual: None,
            matching: None,
            cost: None,
        }
    }
}

pub const METRICS_KIND: &str = "metrics";
