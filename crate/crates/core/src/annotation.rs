//! Closed-set annotation of a column against candidate types drawn from its
//! cluster siblings and from the value index.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::clustering::{Cluster, ClusterSet};
use crate::config::RunConfig;
use crate::discovery::{Failure, Status};
use crate::ingest::{table_context, ColumnId, ColumnProfile, DataKind, DatasetCollection};
use crate::llmgate::{
    build_annotation_prompt, parse_type_answer, totals, AnnotationPromptInput, LlmGate, ModelRole,
    UsageTotals,
};
use crate::sampling::length_stratified_sample;
use crate::stage::StageId;
use crate::store::{Annotation, AnnotationStore, Provenance, Source};
use crate::typeindex::{canonical_label, TypeIndex};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateBundle {
    pub source: Source,
    /// Sorted, non-empty.
    pub types: Vec<String>,
}

fn sibling_types(
    column: &ColumnProfile,
    cluster: Option<&Cluster>,
    snapshot: &AnnotationStore,
) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for m in cluster.map(|c| c.members.as_slice()).unwrap_or_default() {
        if *m == column.id {
            continue;
        }
        if let Some(a) = snapshot.get(m) {
            if a.kind == column.kind {
                out.extend(a.types.iter().cloned());
            }
        }
    }
    out
}

/// Candidate bundles of an unannotated column, in the fixed order name
/// cluster, value cluster, index. Numerical columns only get the name
/// cluster bundle. Empty bundles are omitted; the index bundle keeps at most
/// `index_cap` types, most recently used first.
pub fn gather_candidates(
    column: &ColumnProfile,
    clusters: &ClusterSet,
    snapshot: &AnnotationStore,
    index: &TypeIndex,
    index_cap: usize,
) -> Vec<CandidateBundle> {
    let mut bundles = Vec::new();
    let mut push = |source, types: BTreeSet<String>| {
        if !types.is_empty() {
            bundles.push(CandidateBundle {
                source,
                types: types.into_iter().collect(),
            });
        }
    };
    push(
        Source::NameCluster,
        sibling_types(column, clusters.name_cluster_of(&column.id), snapshot),
    );
    if column.kind == DataKind::Numerical {
        return bundles;
    }
    push(
        Source::ValueCluster,
        sibling_types(column, clusters.value_cluster_of(&column.id), snapshot),
    );
    let hits: Vec<_> = index
        .index_retrieve(&column.unique_values)
        .into_iter()
        .filter(|t| t.kind == column.kind)
        .collect();
    push(
        Source::IndexLookup,
        index
            .most_recent(hits, index_cap)
            .into_iter()
            .map(|t| t.label)
            .collect(),
    );
    bundles
}

/// Log line for one closed-set prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationLogEntry {
    pub column: ColumnId,
    pub stage: StageId,
    pub source: Source,
    pub offered: Vec<String>,
    pub kept: Vec<String>,
    /// Answer labels outside the offered set.
    pub discarded: Vec<String>,
    pub usage: UsageTotals,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
}

pub const ANNOTATION_LOG_KIND: &str = "annotation-log";

/// Asks the annotation model which offered types fit; anything it names
/// outside the offer is discarded. An empty result means abstention.
#[allow(clippy::too_many_arguments)]
pub fn closed_set_annotate(
    collection: &DatasetCollection,
    cfg: &RunConfig,
    gate: &LlmGate,
    column: &ColumnProfile,
    bundle: &CandidateBundle,
    stage: &StageId,
) -> AnnotationLogEntry {
    let mut entry = AnnotationLogEntry {
        column: column.id.clone(),
        stage: stage.clone(),
        source: bundle.source,
        offered: bundle.types.clone(),
        kept: Vec::new(),
        discarded: Vec::new(),
        usage: UsageTotals::default(),
        status: Status::Failed,
        failure: None,
    };
    let context = table_context(collection, &column.id, cfg.table_context_rows)
        .expect("column belongs to the collection");
    let samples =
        length_stratified_sample(column.value_multiset(), cfg.value_samples).unwrap_or_default();
    let prompt = match build_annotation_prompt(&AnnotationPromptInput {
        column_name: &column.id.column,
        kind: column.kind,
        context: &context,
        samples: &samples,
        candidates: &bundle.types,
    }) {
        Ok(p) => p,
        Err(e) => {
            entry.failure = Some(Failure::from_llm(&e));
            return entry;
        }
    };
    let (answer, usages) =
        gate.complete_parsed(ModelRole::Annotation, stage, &prompt, parse_type_answer);
    entry.usage = totals(&usages);
    let labels = match answer {
        Ok(l) => l,
        Err(e) => {
            entry.failure = Some(Failure::from_llm(&e));
            return entry;
        }
    };
    let offered: BTreeMap<String, &String> = bundle
        .types
        .iter()
        .map(|t| (canonical_label(t).to_lowercase(), t))
        .collect();
    let mut kept = BTreeSet::new();
    for l in labels {
        match offered.get(&canonical_label(&l).to_lowercase()) {
            Some(t) => {
                kept.insert((*t).clone());
            }
            None => entry.discarded.push(l),
        }
    }
    entry.kept = kept.into_iter().collect();
    entry.status = Status::Ok;
    entry
}

/// Result of annotating one column from its bundles.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnOutcome {
    pub annotation: Option<Annotation>,
    pub log: Vec<AnnotationLogEntry>,
}

/// Textual columns: union over independent prompts per bundle. Numerical
/// columns: only the name-cluster bundle is used.
pub fn annotate_column(
    collection: &DatasetCollection,
    cfg: &RunConfig,
    gate: &LlmGate,
    column: &ColumnProfile,
    bundles: &[CandidateBundle],
    stage: &StageId,
) -> ColumnOutcome {
    let mut types = BTreeSet::new();
    let mut provenance = Vec::new();
    let mut log = Vec::new();
    for b in bundles {
        if column.kind == DataKind::Numerical && b.source != Source::NameCluster {
            continue;
        }
        let entry = closed_set_annotate(collection, cfg, gate, column, b, stage);
        if !entry.kept.is_empty() {
            types.extend(entry.kept.iter().cloned());
            provenance.push(Provenance {
                stage: stage.clone(),
                source: b.source,
            });
        }
        log.push(entry);
    }
    let annotation = (!types.is_empty()).then(|| Annotation {
        column: column.id.clone(),
        kind: column.kind,
        types,
        provenance,
    });
    ColumnOutcome { annotation, log }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{ColumnVectors, VectorParams};
    use crate::config::default_banned_generics;
    use crate::embedding::HashingProvider;
    use crate::ingest::{IngestConfig, Table};
    use crate::llmgate::FnBackend;
    use std::sync::Arc;
    use std::time::Duration;

    fn table(name: &str, headers: &[&str], rows: &[&[&str]]) -> Table {
        Table::from_rows(
            name,
            headers.iter().map(|h| h.to_string()).collect(),
            rows.iter()
                .map(|r| r.iter().map(|c| c.to_string()).collect())
                .collect(),
            &IngestConfig::default(),
        )
    }

    fn collection() -> DatasetCollection {
        DatasetCollection::from_tables(
            "mem",
            vec![
                table("a", &["borough", "score"], &[&["Bronx", "1"], &["Queens", "3"]]),
                table("b", &["borough", "score"], &[&["Kings", "2"], &["Richmond", "6"]]),
                table("c", &["place"], &[&["Bronx"], &["Harlem"]]),
            ],
        )
    }

    fn clusters(c: &DatasetCollection) -> ClusterSet {
        let p = HashingProvider::new(256, 5);
        let v = ColumnVectors::<f64>::compute(
            c,
            &p,
            VectorParams {
                max_embed_values: 50,
                bins: 10,
                z_clip: 4.0,
            },
        )
        .unwrap();
        ClusterSet::build(&v, 0.99, 0.99, 2)
    }

    fn ann(id: ColumnId, kind: DataKind, labels: &[&str]) -> Annotation {
        Annotation {
            column: id,
            kind,
            types: labels.iter().map(|s| s.to_string()).collect(),
            provenance: vec![],
        }
    }

    #[test]
    fn textual_bundles_from_name_sibling_and_index() {
        let c = collection();
        let cs = clusters(&c);
        let mut snap = AnnotationStore::new();
        snap.insert(ann(ColumnId::new("a", 0, "borough"), DataKind::Textual, &["A"])).unwrap();
        let mut ix = TypeIndex::new(default_banned_generics());
        let t = ix
            .register_types(&["B"], DataKind::Textual, &StageId::threshold(0.99))
            .unwrap()
            .types;
        ix.index_update(&["Kings"], &t).unwrap();
        let col = c.column(&ColumnId::new("b", 0, "borough")).unwrap();
        let b = gather_candidates(col, &cs, &snap, &ix, 40);
        assert_eq!(
            b,
            vec![
                CandidateBundle {
                    source: Source::NameCluster,
                    types: vec!["A".into()]
                },
                CandidateBundle {
                    source: Source::IndexLookup,
                    types: vec!["B".into()]
                },
            ]
        );
    }

    #[test]
    fn numerical_column_ignores_value_siblings() {
        let c = collection();
        let cs = clusters(&c);
        let a_score = ColumnId::new("a", 1, "score");
        let b_score = ColumnId::new("b", 1, "score");
        // same header, so they share a name cluster
        assert!(cs.name_cluster_of(&a_score).is_some());
        let mut snap = AnnotationStore::new();
        snap.insert(ann(a_score, DataKind::Numerical, &["Score"])).unwrap();
        let col = c.column(&b_score).unwrap();
        let ix = TypeIndex::new(default_banned_generics());
        let b = gather_candidates(col, &cs, &snap, &ix, 40);
        assert!(b.iter().all(|x| x.source == Source::NameCluster));
        assert_eq!(b.len(), 1);
    }

    fn gate(answer: &'static str) -> LlmGate {
        let mut g = LlmGate::new(1, Duration::ZERO);
        g.bind(
            ModelRole::Annotation,
            Arc::new(FnBackend(move |_: ModelRole, _: &str, _: &str| Ok(answer.to_string()))),
            0.0,
        );
        g
    }

    #[test]
    fn closed_set_clamps_and_abstains() {
        let c = collection();
        let cfg = RunConfig::default();
        let col = c.column(&ColumnId::new("c", 0, "place")).unwrap();
        let bundle = CandidateBundle {
            source: Source::ValueCluster,
            types: vec!["A".into(), "B".into()],
        };
        let st = StageId::residual(0.9);
        let e = closed_set_annotate(&c, &cfg, &gate(r#"{"answer":["a","Z"]}"#), col, &bundle, &st);
        assert_eq!(e.kept, vec!["A"]);
        assert_eq!(e.discarded, vec!["Z"]);
        let e = closed_set_annotate(&c, &cfg, &gate(r#"{"answer":[]}"#), col, &bundle, &st);
        assert!(e.kept.is_empty() && e.status == Status::Ok);
    }

    #[test]
    fn union_over_bundles() {
        let c = collection();
        let cfg = RunConfig::default();
        let col = c.column(&ColumnId::new("c", 0, "place")).unwrap();
        let bundles = vec![
            CandidateBundle {
                source: Source::NameCluster,
                types: vec!["DBN".into()],
            },
            CandidateBundle {
                source: Source::IndexLookup,
                types: vec!["Borough".into()],
            },
        ];
        let g = gate(r#"{"answer":["DBN","Borough"]}"#);
        let out = annotate_column(&c, &cfg, &g, col, &bundles, &StageId::residual(0.9));
        let a = out.annotation.unwrap();
        assert_eq!(a.types.into_iter().collect::<Vec<_>>(), vec!["Borough", "DBN"]);
        assert_eq!(a.provenance.len(), 2);
        assert_eq!(out.log.len(), 2);

        let none = annotate_column(&c, &cfg, &gate(r#"{"answer":[]}"#), col, &bundles, &StageId::residual(0.9));
        assert!(none.annotation.is_none());
    }
}
