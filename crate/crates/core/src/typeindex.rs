//! Semantic type catalog and the value -> type inverted index.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact::{self, ArtifactError};
use crate::ingest::DataKind;
use crate::stage::StageId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Discovered,
    Reused,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SemanticType {
    pub label: String,
    pub kind: DataKind,
    pub origin: Origin,
    pub first_seen_stage: StageId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedLabel {
    pub label: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registration {
    /// Resolved types in answer order, without duplicates.
    pub types: Vec<SemanticType>,
    pub rejected: Vec<RejectedLabel>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum TypeIndexError {
    #[error("every proposed label was rejected: {0:?}")]
    AllLabelsRejected(Vec<RejectedLabel>),
    #[error("unknown type `{label}` ({kind})")]
    UnknownType { label: String, kind: DataKind },
}

/// Trims and collapses internal whitespace.
pub fn canonical_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn label_key(label: &str) -> String {
    canonical_label(label).to_lowercase()
}

/// Type catalog plus inverted index. Types are addressed internally by their
/// catalog position; identity is (case-insensitive canonical label, kind).
#[derive(Debug, Clone, PartialEq)]
pub struct TypeIndex {
    catalog: Vec<SemanticType>,
    keys: HashMap<(String, DataKind), usize>,
    entries: BTreeMap<String, BTreeSet<usize>>,
    last_used: Vec<u64>,
    clock: u64,
    banned: BTreeSet<String>,
}

impl TypeIndex {
    pub fn new<I, B>(banned: I) -> Self
    where
        I: IntoIterator<Item = B>,
        B: AsRef<str>,
    {
        TypeIndex {
            catalog: Vec::new(),
            keys: HashMap::new(),
            entries: BTreeMap::new(),
            last_used: Vec::new(),
            clock: 0,
            banned: banned.into_iter().map(|b| label_key(b.as_ref())).collect(),
        }
    }

    pub fn catalog(&self) -> &[SemanticType] {
        &self.catalog
    }

    pub fn len(&self) -> usize {
        self.catalog.len()
    }

    pub fn is_empty(&self) -> bool {
        self.catalog.is_empty()
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    pub fn is_banned(&self, label: &str) -> bool {
        self.banned.contains(&label_key(label))
    }

    /// Catalog entry for `label` of `kind`, if registered.
    pub fn lookup(&self, label: &str, kind: DataKind) -> Option<&SemanticType> {
        self.keys
            .get(&(label_key(label), kind))
            .map(|i| &self.catalog[*i])
    }

    fn touch(&mut self, i: usize) {
        self.clock += 1;
        self.last_used[i] = self.clock;
    }

    /// Resolves answer labels against the catalog, adding new ones.
    pub fn register_types<S: AsRef<str>>(
        &mut self,
        labels: &[S],
        kind: DataKind,
        stage: &StageId,
    ) -> Result<Registration, TypeIndexError> {
        let mut types: Vec<SemanticType> = Vec::new();
        let mut seen = BTreeSet::new();
        let mut rejected = Vec::new();
        for raw in labels {
            let raw = raw.as_ref();
            let label = canonical_label(raw);
            if label.is_empty() {
                rejected.push(RejectedLabel {
                    label: raw.to_string(),
                    reason: "empty label".into(),
                });
                continue;
            }
            if self.is_banned(&label) {
                rejected.push(RejectedLabel {
                    label,
                    reason: "generic data type".into(),
                });
                continue;
            }
            let key = (label.to_lowercase(), kind);
            if !seen.insert(key.clone()) {
                continue;
            }
            let t = match self.keys.get(&key) {
                Some(&i) => {
                    self.touch(i);
                    SemanticType {
                        origin: Origin::Reused,
                        ..self.catalog[i].clone()
                    }
                }
                None => {
                    let t = SemanticType {
                        label,
                        kind,
                        origin: Origin::Discovered,
                        first_seen_stage: stage.clone(),
                    };
                    self.keys.insert(key, self.catalog.len());
                    self.catalog.push(t.clone());
                    self.last_used.push(0);
                    self.touch(self.catalog.len() - 1);
                    t
                }
            };
            types.push(t);
        }
        if types.is_empty() {
            return Err(TypeIndexError::AllLabelsRejected(rejected));
        }
        Ok(Registration { types, rejected })
    }

    fn position(&self, t: &SemanticType) -> Result<usize, TypeIndexError> {
        self.keys
            .get(&(label_key(&t.label), t.kind))
            .copied()
            .ok_or_else(|| TypeIndexError::UnknownType {
                label: t.label.clone(),
                kind: t.kind,
            })
    }

    /// Adds every type to every value's entry. Returns how many entries
    /// gained at least one label.
    pub fn index_update<V: AsRef<str>>(
        &mut self,
        values: &[V],
        types: &[SemanticType],
    ) -> Result<usize, TypeIndexError> {
        let ids: Vec<usize> = types
            .iter()
            .map(|t| self.position(t))
            .collect::<Result<_, _>>()?;
        if ids.is_empty() {
            return Ok(0);
        }
        for &i in &ids {
            self.touch(i);
        }
        let mut touched = 0;
        for v in values {
            let entry = self.entries.entry(v.as_ref().to_string()).or_default();
            let before = entry.len();
            entry.extend(ids.iter().copied());
            if entry.len() > before {
                touched += 1;
            }
        }
        Ok(touched)
    }

    /// Union of the types recorded for `values`, in catalog order.
    pub fn index_retrieve<V: AsRef<str>>(&self, values: &[V]) -> Vec<SemanticType> {
        let mut ids = BTreeSet::new();
        for v in values {
            if let Some(e) = self.entries.get(v.as_ref()) {
                ids.extend(e.iter().copied());
            }
        }
        ids.into_iter().map(|i| self.catalog[i].clone()).collect()
    }

    /// Labels recorded for one value.
    pub fn labels_of(&self, value: &str) -> Vec<&str> {
        self.entries
            .get(value)
            .map(|e| e.iter().map(|i| self.catalog[*i].label.as_str()).collect())
            .unwrap_or_default()
    }

    /// Catalog types of `kind`, most recently used first, at most `cap`.
    pub fn fallback_candidates(&self, kind: DataKind, cap: usize) -> Vec<SemanticType> {
        let all: Vec<SemanticType> = self
            .catalog
            .iter()
            .filter(|t| t.kind == kind)
            .cloned()
            .collect();
        self.most_recent(all, cap)
    }

    /// Orders `types` by recency of use (ties by catalog order) and keeps `cap`.
    pub fn most_recent(&self, types: Vec<SemanticType>, cap: usize) -> Vec<SemanticType> {
        let mut ranked: Vec<(u64, usize, SemanticType)> = types
            .into_iter()
            .filter_map(|t| {
                let i = self.position(&t).ok()?;
                Some((self.last_used[i], i, t))
            })
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        ranked.into_iter().take(cap).map(|(_, _, t)| t).collect()
    }

    pub fn records(&self) -> Vec<IndexRecord> {
        let types = self.catalog.iter().enumerate().map(|(i, t)| IndexRecord::Type {
            label: t.label.clone(),
            kind: t.kind,
            origin: t.origin,
            stage: t.first_seen_stage.clone(),
            last_used: self.last_used[i],
        });
        let values = self.entries.iter().map(|(v, ids)| IndexRecord::Value {
            value: v.clone(),
            types: ids
                .iter()
                .map(|i| TypeRef {
                    label: self.catalog[*i].label.clone(),
                    kind: self.catalog[*i].kind,
                })
                .collect(),
        });
        types.chain(values).collect()
    }

    pub fn from_records<I, B>(records: Vec<IndexRecord>, banned: I) -> Result<Self, TypeIndexError>
    where
        I: IntoIterator<Item = B>,
        B: AsRef<str>,
    {
        let mut idx = TypeIndex::new(banned);
        for r in records {
            match r {
                IndexRecord::Type {
                    label,
                    kind,
                    origin,
                    stage,
                    last_used,
                } => {
                    idx.keys.insert((label_key(&label), kind), idx.catalog.len());
                    idx.catalog.push(SemanticType {
                        label,
                        kind,
                        origin,
                        first_seen_stage: stage,
                    });
                    idx.last_used.push(last_used);
                    idx.clock = idx.clock.max(last_used);
                }
                IndexRecord::Value { value, types } => {
                    let mut ids = BTreeSet::new();
                    for t in types {
                        let i = idx.keys.get(&(label_key(&t.label), t.kind)).copied().ok_or(
                            TypeIndexError::UnknownType {
                                label: t.label,
                                kind: t.kind,
                            },
                        )?;
                        ids.insert(i);
                    }
                    if !ids.is_empty() {
                        idx.entries.insert(value, ids);
                    }
                }
            }
        }
        Ok(idx)
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
        artifact::write_records(path, INDEX_KIND, &self.records())
    }

    pub fn load<I, B>(path: &Path, banned: I) -> Result<Self, LoadIndexError>
    where
        I: IntoIterator<Item = B>,
        B: AsRef<str>,
    {
        let records = artifact::read_records(path, INDEX_KIND)?;
        Ok(TypeIndex::from_records(records, banned)?)
    }
}

pub const INDEX_KIND: &str = "type-index";

#[derive(Debug, thiserror::Error)]
pub enum LoadIndexError {
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Index(#[from] TypeIndexError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeRef {
    pub label: String,
    pub kind: DataKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum IndexRecord {
    Type {
        label: String,
        kind: DataKind,
        origin: Origin,
        stage: StageId,
        last_used: u64,
    },
    Value {
        value: String,
        types: Vec<TypeRef>,
    },
}
