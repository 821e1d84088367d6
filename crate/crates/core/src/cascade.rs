//! Stage orchestration over a descending threshold schedule, followed by
//! residual annotation of whatever is still unannotated.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::annotation::{annotate_column, closed_set_annotate, gather_candidates, AnnotationLogEntry, CandidateBundle};
use crate::clustering::{ClusterSet, ColumnVectors};
use crate::config::RunConfig;
use crate::discovery::{discover_cluster, DiscoveryRecord, DiscoveryUnit, FailureKind, Status};
use crate::ingest::{ColumnId, DatasetCollection};
use crate::llmgate::{totals_by_role, totals_by_stage, LlmGate, ModelRole, UsageTotals};
use crate::stage::StageId;
use crate::store::{Annotation, AnnotationStore, Provenance, Source};
use crate::typeindex::TypeIndex;
use crate::Real;

/// Mutable state of one pipeline run.
pub struct Session<'a> {
    pub collection: &'a DatasetCollection,
    pub config: &'a RunConfig,
    pub gate: &'a LlmGate,
    pub vectors: &'a ColumnVectors<Real>,
    pub index: TypeIndex,
    pub store: AnnotationStore,
    pub discovery_log: Vec<DiscoveryRecord>,
    pub annotation_log: Vec<AnnotationLogEntry>,
    clusters: BTreeMap<(u64, u64), ClusterSet>,
}

impl<'a> Session<'a> {
    pub fn new(
        collection: &'a DatasetCollection,
        config: &'a RunConfig,
        gate: &'a LlmGate,
        vectors: &'a ColumnVectors<Real>,
    ) -> Self {
        Session {
            collection,
            config,
            gate,
            vectors,
            index: TypeIndex::new(&config.banned_generics),
            store: AnnotationStore::new(),
            discovery_log: Vec::new(),
            annotation_log: Vec::new(),
            clusters: BTreeMap::new(),
        }
    }

    /// Cluster set for a stage threshold, computed once.
    pub fn clusters_at(&mut self, tau: f64) -> &ClusterSet {
        let nt = self.config.name_threshold(tau);
        let vt = self.config.value_threshold(tau);
        let (v, min) = (self.vectors, self.config.min_cluster_size);
        self.clusters
            .entry((nt.to_bits(), vt.to_bits()))
            .or_insert_with(|| ClusterSet::build(v, nt, vt, min))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: StageId,
    pub threshold: f64,
    pub name_clusters: usize,
    pub value_clusters: usize,
    pub seeds_formed: usize,
    /// Columns annotated from already annotated seed siblings.
    pub columns_propagated: usize,
    /// Columns annotated by discovery.
    pub columns_discovered: usize,
    /// Sibling checks that ended with no type.
    pub abstentions: usize,
    /// Units sent to discovery, in processing order.
    pub discovery_units: Vec<String>,
    pub discovery_failures: usize,
    pub usage: BTreeMap<ModelRole, UsageTotals>,
    pub annotated_after: usize,
}

fn usage_since(gate: &LlmGate, mark: usize) -> BTreeMap<ModelRole, UsageTotals> {
    totals_by_role(&gate.ledger()[mark..])
}

/// One cascade stage: seeds at `tau`, closed-set checks against annotated
/// siblings, then discovery on what remains, largest unit first.
pub fn run_stage(session: &mut Session<'_>, tau: f64) -> StageReport {
    let stage = StageId::threshold(tau);
    let mark = session.gate.ledger().len();
    let (collection, cfg, gate) = (session.collection, session.config, session.gate);
    let cs = session.clusters_at(tau).clone();
    let before = session.store.len();

    let mut units: Vec<DiscoveryUnit> = Vec::new();
    let mut propagated = 0;
    let mut abstentions = 0;
    for seed in &cs.seeds {
        let kind = collection.column(&seed.members[0]).expect("member exists").kind;
        let (done, open): (Vec<&ColumnId>, Vec<&ColumnId>) =
            seed.members.iter().partition(|m| session.store.is_annotated(m));
        if open.is_empty() {
            continue;
        }
        let sibling_types: BTreeSet<String> = done
            .iter()
            .filter_map(|m| session.store.get(m))
            .filter(|a| a.kind == kind)
            .flat_map(|a| a.types.iter().cloned())
            .collect();
        if sibling_types.is_empty() {
            units.push(DiscoveryUnit {
                id: seed.id.clone(),
                members: seed.members.clone(),
                kind,
                threshold: tau,
            });
            continue;
        }
        let bundle = CandidateBundle {
            source: Source::SeedSiblings,
            types: sibling_types.into_iter().collect(),
        };
        let mut residual = Vec::new();
        for m in open {
            let col = collection.column(m).expect("member exists");
            let entry = closed_set_annotate(collection, cfg, gate, col, &bundle, &stage);
            if entry.kept.is_empty() {
                abstentions += 1;
                residual.push(m.clone());
            } else {
                session
                    .store
                    .insert(Annotation {
                        column: m.clone(),
                        kind,
                        types: entry.kept.iter().cloned().collect(),
                        provenance: vec![Provenance {
                            stage: stage.clone(),
                            source: Source::SeedSiblings,
                        }],
                    })
                    .expect("member was unannotated");
                propagated += 1;
            }
            session.annotation_log.push(entry);
        }
        let floor = if cfg.singleton_discovery { 1 } else { cfg.min_cluster_size };
        if residual.len() >= floor.max(1) {
            units.push(DiscoveryUnit {
                id: format!("{}/residual", seed.id),
                members: residual,
                kind,
                threshold: tau,
            });
        }
    }

    units.sort_by(|a, b| {
        b.members
            .len()
            .cmp(&a.members.len())
            .then_with(|| a.members[0].cmp(&b.members[0]))
    });
    let mut discovered = 0;
    let mut failures = 0;
    for u in &units {
        let rec = discover_cluster(
            collection,
            cfg,
            gate,
            &mut session.index,
            &mut session.store,
            u,
            &stage,
        );
        discovered += rec.annotated;
        if rec.status == Status::Failed {
            failures += 1;
        }
        session.discovery_log.push(rec);
    }
    debug_assert_eq!(session.store.len() - before, propagated + discovered);

    StageReport {
        stage,
        threshold: tau,
        name_clusters: cs.name.len(),
        value_clusters: cs.value.len(),
        seeds_formed: cs.seeds.len(),
        columns_propagated: propagated,
        columns_discovered: discovered,
        abstentions,
        discovery_units: units.into_iter().map(|u| u.id).collect(),
        discovery_failures: failures,
        usage: usage_since(gate, mark),
        annotated_after: session.store.len(),
    }
}

/// Thresholds tried for one residual column, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualAttempt {
    pub column: ColumnId,
    pub threshold: f64,
    pub bundles: Vec<CandidateBundle>,
    pub annotated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub unannotated_before: usize,
    pub annotated: usize,
    pub attempts: Vec<ResidualAttempt>,
    pub usage: BTreeMap<ModelRole, UsageTotals>,
    pub annotated_after: usize,
}

/// For every unannotated column, tries thresholds from strictest to loosest
/// and stops at the first that yields an annotation. Candidates come from
/// the annotations present when the pass starts.
pub fn residual_annotation(session: &mut Session<'_>, schedule: &[f64]) -> ResidualReport {
    let mark = session.gate.ledger().len();
    let (collection, cfg, gate) = (session.collection, session.config, session.gate);
    let snapshot = session.store.clone();
    let mut order: Vec<f64> = schedule.to_vec();
    order.sort_by(|a, b| b.total_cmp(a));
    let sets: Vec<ClusterSet> = order.iter().map(|t| session.clusters_at(*t).clone()).collect();

    let open: Vec<ColumnId> = collection
        .columns()
        .filter(|c| !snapshot.is_annotated(&c.id))
        .map(|c| c.id.clone())
        .collect();
    let mut attempts = Vec::new();
    let mut annotated = 0;
    for id in &open {
        let col = collection.column(id).expect("listed column");
        for (tau, cs) in order.iter().zip(&sets) {
            let bundles = gather_candidates(col, cs, &snapshot, &session.index, cfg.fallback_cap);
            if bundles.is_empty() {
                continue;
            }
            let out = annotate_column(collection, cfg, gate, col, &bundles, &StageId::residual(*tau));
            session.annotation_log.extend(out.log);
            let ok = out.annotation.is_some();
            attempts.push(ResidualAttempt {
                column: id.clone(),
                threshold: *tau,
                bundles,
                annotated: ok,
            });
            if let Some(a) = out.annotation {
                session.store.insert(a).expect("column was unannotated");
                annotated += 1;
                break;
            }
        }
    }
    ResidualReport {
        unannotated_before: open.len(),
        annotated,
        attempts,
        usage: usage_since(gate, mark),
        annotated_after: session.store.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeOutcome {
    pub stages: Vec<StageReport>,
    pub residual: ResidualReport,
}

/// Stages in schedule order, then residual annotation.
pub fn run_cascade(session: &mut Session<'_>, schedule: &[f64]) -> CascadeOutcome {
    let stages = schedule.iter().map(|t| run_stage(session, *t)).collect();
    let residual = residual_annotation(session, schedule);
    CascadeOutcome { stages, residual }
}

/// The pipeline at one threshold without the cascade machinery: every seed
/// is discovered (largest first), then every other column is annotated from
/// its cluster siblings and the index.
pub fn run_single_pass(session: &mut Session<'_>, tau: f64) -> AnnotationStore {
    let stage = StageId::threshold(tau);
    let residual_stage = StageId::residual(tau);
    let (collection, cfg, gate) = (session.collection, session.config, session.gate);
    let cs = session.clusters_at(tau).clone();
    for seed in &cs.seeds {
        if seed.members.iter().any(|m| session.store.is_annotated(m)) {
            continue;
        }
        let unit = DiscoveryUnit {
            id: seed.id.clone(),
            members: seed.members.clone(),
            kind: collection.column(&seed.members[0]).expect("member exists").kind,
            threshold: tau,
        };
        let rec = discover_cluster(collection, cfg, gate, &mut session.index, &mut session.store, &unit, &stage);
        session.discovery_log.push(rec);
    }
    let snapshot = session.store.clone();
    for col in collection.columns() {
        if snapshot.is_annotated(&col.id) {
            continue;
        }
        let bundles = gather_candidates(col, &cs, &snapshot, &session.index, cfg.fallback_cap);
        if bundles.is_empty() {
            continue;
        }
        let out = annotate_column(collection, cfg, gate, col, &bundles, &residual_stage);
        session.annotation_log.extend(out.log);
        if let Some(a) = out.annotation {
            session.store.insert(a).expect("column was unannotated");
        }
    }
    session.store.clone()
}

/// Failure counts of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureCounts {
    pub discovery_backend: usize,
    pub discovery_malformed: usize,
    pub discovery_rejected: usize,
    pub discovery_no_values: usize,
    pub annotation_backend: usize,
    pub annotation_malformed: usize,
    pub discarded_labels: usize,
}

impl FailureCounts {
    pub fn collect(discovery: &[DiscoveryRecord], annotation: &[AnnotationLogEntry]) -> Self {
        let mut f = FailureCounts::default();
        for d in discovery {
            match d.failure.as_ref().map(|x| x.kind) {
                Some(FailureKind::Backend) => f.discovery_backend += 1,
                Some(FailureKind::Malformed) => f.discovery_malformed += 1,
                Some(FailureKind::Rejected) => f.discovery_rejected += 1,
                Some(FailureKind::NoValues) => f.discovery_no_values += 1,
                None => {}
            }
        }
        for a in annotation {
            match a.failure.as_ref().map(|x| x.kind) {
                Some(FailureKind::Malformed) => f.annotation_malformed += 1,
                Some(_) => f.annotation_backend += 1,
                None => {}
            }
            f.discarded_labels += a.discarded.len();
        }
        f
    }

    /// True when calls were attempted and every one of them died in the backend.
    pub fn backend_exhausted(&self, discovery_calls: usize, annotation_calls: usize) -> bool {
        let backend = self.discovery_backend + self.annotation_backend;
        backend > 0 && discovery_calls + annotation_calls == 0
    }
}

pub const MANIFEST_KIND: &str = "manifest";
pub const STAGE_REPORTS_KIND: &str = "stage-reports";
pub const RESIDUAL_LOG_KIND: &str = "residual-log";

/// Summary written next to the run artifacts. Contains no timestamps or
/// absolute paths, so identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub schedule: Vec<f64>,
    pub config_hash: String,
    pub fallback_cap: usize,
    pub tables: usize,
    pub columns: usize,
    pub excluded_from_clustering: usize,
    pub stages: Vec<StageReport>,
    pub residual_annotated: usize,
    pub annotated: usize,
    pub coverage: f64,
    pub catalog_size: usize,
    pub index_entries: usize,
    pub ledger: BTreeMap<ModelRole, UsageTotals>,
    pub ledger_by_stage: BTreeMap<StageId, UsageTotals>,
    pub failures: FailureCounts,
}

impl Session<'_> {
    pub fn manifest(&self, outcome: &CascadeOutcome) -> RunManifest {
        let ledger = self.gate.ledger();
        let columns = self.collection.column_count();
        let mut excluded: Vec<&ColumnId> = self.vectors.excluded.iter().map(|(c, _)| c).collect();
        excluded.dedup();
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            schedule: outcome.stages.iter().map(|s| s.threshold).collect(),
            config_hash: self.config.config_hash(),
            fallback_cap: self.config.fallback_cap,
            tables: self.collection.tables.len(),
            columns,
            excluded_from_clustering: excluded.len(),
            stages: outcome.stages.clone(),
            residual_annotated: outcome.residual.annotated,
            annotated: self.store.len(),
            coverage: crate::evaluation::coverage(&self.store, self.collection),
            catalog_size: self.index.len(),
            index_entries: self.index.entry_count(),
            ledger: totals_by_role(&ledger),
            ledger_by_stage: totals_by_stage(&ledger),
            failures: FailureCounts::collect(&self.discovery_log, &self.annotation_log),
        }
    }
}
