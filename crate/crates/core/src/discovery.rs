//! Batched open-type discovery for one group of similar columns.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::ingest::{ColumnId, DataKind, DatasetCollection};
pub use crate::llmgate::CooccurrenceEntry;
use crate::llmgate::{
    build_discovery_prompt, parse_type_answer, totals, DiscoveryPromptInput, LlmError, LlmGate,
    ModelRole, UsageTotals,
};
use crate::sampling::length_stratified_sample;
use crate::stage::StageId;
use crate::store::{Annotation, AnnotationStore, Provenance, Source};
use crate::typeindex::{RejectedLabel, TypeIndex, TypeIndexError};

/// Most frequent other headers of the members' host tables. A member's own
/// table counts once per member; member names themselves are excluded.
pub fn cooccurrence_profile(
    collection: &DatasetCollection,
    members: &[ColumnId],
    n: usize,
) -> Vec<CooccurrenceEntry> {
    let own: BTreeSet<&str> = members.iter().map(|m| m.column.as_str()).collect();
    let mut hits: BTreeMap<&str, usize> = BTreeMap::new();
    for m in members {
        let Some(t) = collection.table(&m.table) else {
            continue;
        };
        let names: BTreeSet<&str> = t
            .headers
            .iter()
            .map(String::as_str)
            .filter(|h| !own.contains(h))
            .collect();
        for h in names {
            *hits.entry(h).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = hits.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked
        .into_iter()
        .take(n)
        .map(|(name, h)| CooccurrenceEntry {
            name: name.to_string(),
            hits: h,
            cluster_size: members.len(),
        })
        .collect()
}

/// A group of columns sent to discovery together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryUnit {
    pub id: String,
    /// Sorted.
    pub members: Vec<ColumnId>,
    pub kind: DataKind,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// The backend stayed unavailable through every retry.
    Backend,
    /// The answer could not be parsed, even after the reminder retry.
    Malformed,
    /// Every proposed label was empty or generic.
    Rejected,
    /// Nothing to sample.
    NoValues,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

impl Failure {
    pub fn from_llm(e: &LlmError) -> Self {
        let kind = match e {
            LlmError::MalformedAnswer(_) => FailureKind::Malformed,
            _ => FailureKind::Backend,
        };
        Failure {
            kind,
            message: e.to_string(),
        }
    }
}

/// Stage-log line for one discovery unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryRecord {
    pub unit: String,
    pub stage: StageId,
    pub members: Vec<ColumnId>,
    pub kind: DataKind,
    pub samples: Vec<String>,
    pub candidates: Vec<String>,
    pub types: Vec<String>,
    pub rejected: Vec<RejectedLabel>,
    pub usage: UsageTotals,
    pub status: Status,
    pub annotated: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
}

pub const DISCOVERY_LOG_KIND: &str = "discovery-log";

/// Merged (value, count) pairs of the members, sorted by value.
pub fn pooled_values(collection: &DatasetCollection, members: &[ColumnId]) -> Vec<(String, usize)> {
    let mut pool: BTreeMap<&str, usize> = BTreeMap::new();
    for m in members {
        if let Some(c) = collection.column(m) {
            for (v, n) in c.value_multiset() {
                *pool.entry(v).or_default() += n;
            }
        }
    }
    pool.into_iter().map(|(v, n)| (v.to_string(), n)).collect()
}

/// Candidate labels for a unit: index hits of its values when there are any,
/// otherwise the most recently used catalog types of its kind. Both are
/// capped at `cap` by recency.
pub fn discovery_candidates(
    index: &TypeIndex,
    values: &[&str],
    kind: DataKind,
    cap: usize,
) -> Vec<String> {
    let hits: Vec<_> = index
        .index_retrieve(values)
        .into_iter()
        .filter(|t| t.kind == kind)
        .collect();
    let chosen = if hits.is_empty() {
        index.fallback_candidates(kind, cap)
    } else {
        index.most_recent(hits, cap)
    };
    chosen.into_iter().map(|t| t.label).collect()
}

/// Samples, prompts, registers and propagates types for one unit. Members
/// are annotated only when the unit succeeds.
#[allow(clippy::too_many_arguments)]
pub fn discover_cluster(
    collection: &DatasetCollection,
    cfg: &RunConfig,
    gate: &LlmGate,
    index: &mut TypeIndex,
    store: &mut AnnotationStore,
    unit: &DiscoveryUnit,
    stage: &StageId,
) -> DiscoveryRecord {
    let mut record = DiscoveryRecord {
        unit: unit.id.clone(),
        stage: stage.clone(),
        members: unit.members.clone(),
        kind: unit.kind,
        samples: Vec::new(),
        candidates: Vec::new(),
        types: Vec::new(),
        rejected: Vec::new(),
        usage: UsageTotals::default(),
        status: Status::Failed,
        annotated: 0,
        failure: None,
    };
    let pool = pooled_values(collection, &unit.members);
    let samples = match length_stratified_sample(
        pool.iter().map(|(v, n)| (v.as_str(), *n)),
        cfg.value_samples,
    ) {
        Ok(s) => s,
        Err(e) => {
            record.failure = Some(Failure {
                kind: FailureKind::NoValues,
                message: e.to_string(),
            });
            return record;
        }
    };
    let values: Vec<&str> = pool.iter().map(|(v, _)| v.as_str()).collect();
    let candidates = discovery_candidates(index, &values, unit.kind, cfg.fallback_cap);

    let mut names: Vec<String> = Vec::new();
    for m in &unit.members {
        if !names.contains(&m.column) {
            names.push(m.column.clone());
        }
    }
    let context = cooccurrence_profile(collection, &unit.members, cfg.context_columns);
    let prompt = build_discovery_prompt(&DiscoveryPromptInput {
        names: &names,
        samples: &samples,
        context: &context,
        candidates: &candidates,
    });
    record.samples = samples;
    record.candidates = candidates;

    let (answer, usages) = gate.complete_parsed(ModelRole::Discovery, stage, &prompt, parse_type_answer);
    record.usage = totals(&usages);
    let labels = match answer {
        Ok(l) => l,
        Err(e) => {
            record.failure = Some(Failure::from_llm(&e));
            return record;
        }
    };
    let reg = match index.register_types(&labels, unit.kind, stage) {
        Ok(r) => r,
        Err(TypeIndexError::AllLabelsRejected(rejected)) => {
            record.rejected = rejected;
            record.failure = Some(Failure {
                kind: FailureKind::Rejected,
                message: "no usable label in the answer".into(),
            });
            return record;
        }
        Err(e) => unreachable!("registration only rejects labels: {e}"),
    };
    index
        .index_update(&values, &reg.types)
        .expect("types were just registered");
    record.rejected = reg.rejected;
    record.types = reg.types.iter().map(|t| t.label.clone()).collect();
    let types: BTreeSet<String> = record.types.iter().cloned().collect();
    for m in &unit.members {
        if store.is_annotated(m) {
            continue;
        }
        store
            .insert(Annotation {
                column: m.clone(),
                kind: unit.kind,
                types: types.clone(),
                provenance: vec![Provenance {
                    stage: stage.clone(),
                    source: Source::Discovery,
                }],
            })
            .expect("checked unannotated");
        record.annotated += 1;
    }
    record.status = Status::Ok;
    record
}
