//! Append-only column annotations with provenance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact::{self, ArtifactError};
use crate::ingest::{ColumnId, DataKind};
use crate::stage::StageId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Open discovery on a cluster the column belongs to.
    Discovery,
    /// Closed-set check against types of already annotated seed siblings.
    SeedSiblings,
    NameCluster,
    ValueCluster,
    IndexLookup,
    /// Whole-table prompting.
    Baseline,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Discovery => "discovery",
            Source::SeedSiblings => "seed_siblings",
            Source::NameCluster => "name_cluster",
            Source::ValueCluster => "value_cluster",
            Source::IndexLookup => "index_lookup",
            Source::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: StageId,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub column: ColumnId,
    pub kind: DataKind,
    /// Catalog labels. Never empty.
    pub types: BTreeSet<String>,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("column {0} is already annotated")]
    AlreadyAnnotated(ColumnId),
    #[error("annotation of {0} has no types")]
    EmptyAnnotation(ColumnId),
}

/// Column -> annotation. Entries are never modified or removed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationStore {
    map: BTreeMap<ColumnId, Annotation>,
}

impl AnnotationStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: Annotation) -> Result<(), StoreError> {
        if a.types.is_empty() {
            return Err(StoreError::EmptyAnnotation(a.column));
        }
        if self.map.contains_key(&a.column) {
            return Err(StoreError::AlreadyAnnotated(a.column));
        }
        self.map.insert(a.column.clone(), a);
        Ok(())
    }

    pub fn get(&self, id: &ColumnId) -> Option<&Annotation> {
        self.map.get(id)
    }

    pub fn types_of(&self, id: &ColumnId) -> Option<&BTreeSet<String>> {
        self.map.get(id).map(|a| &a.types)
    }

    pub fn is_annotated(&self, id: &ColumnId) -> bool {
        self.map.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Annotations in column order.
    pub fn iter(&self) -> impl Iterator<Item = &Annotation> + '_ {
        self.map.values()
    }

    pub fn records(&self) -> Vec<AnnotationRecord> {
        self.iter()
            .map(|a| AnnotationRecord {
                table: a.column.table.clone(),
                column: a.column.column.clone(),
                ordinal: a.column.ordinal,
                kind: a.kind,
                labels: a.types.iter().cloned().collect(),
                provenance: a.provenance.clone(),
            })
            .collect()
    }

    pub fn from_records(records: Vec<AnnotationRecord>) -> Result<Self, StoreError> {
        let mut s = AnnotationStore::new();
        for r in records {
            s.insert(Annotation {
                column: ColumnId::new(r.table, r.ordinal, r.column),
                kind: r.kind,
                types: r.labels.into_iter().collect(),
                provenance: r.provenance,
            })?;
        }
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
        artifact::write_records(path, ANNOTATIONS_KIND, &self.records())
    }

    pub fn render(&self) -> Result<String, ArtifactError> {
        artifact::render_records(ANNOTATIONS_KIND, &self.records())
    }

    pub fn load(path: &Path) -> Result<Self, LoadStoreError> {
        let records = artifact::read_records(path, ANNOTATIONS_KIND)?;
        Ok(AnnotationStore::from_records(records)?)
    }
}

pub const ANNOTATIONS_KIND: &str = "annotations";

#[derive(Debug, thiserror::Error)]
pub enum LoadStoreError {
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// One line of the annotation file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub table: String,
    pub column: String,
    pub ordinal: usize,
    pub kind: DataKind,
    pub labels: Vec<String>,
    pub provenance: Vec<Provenance>,
}
