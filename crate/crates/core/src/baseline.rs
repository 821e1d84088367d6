//! Whole-table prompting: one discovery-role call per table over a random
//! row sample. Produces the same annotation format as the cascade.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::discovery::Failure;
use crate::ingest::{DatasetCollection, Table, TableContext};
use crate::llmgate::{build_baseline_prompt, parse_table_answer, totals, BaselineStyle, LlmGate, ModelRole, UsageTotals};
use crate::stage::StageId;
use crate::store::{Annotation, AnnotationStore, Provenance, Source};
use crate::typeindex::{RejectedLabel, TypeIndex, TypeIndexError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineVariant {
    Naive,
    NaiveReuse,
    Llm,
    LlmReuse,
}

impl BaselineVariant {
    pub const ALL: [BaselineVariant; 4] = [
        BaselineVariant::Naive,
        BaselineVariant::NaiveReuse,
        BaselineVariant::Llm,
        BaselineVariant::LlmReuse,
    ];

    pub fn style(self) -> BaselineStyle {
        match self {
            BaselineVariant::Naive | BaselineVariant::NaiveReuse => BaselineStyle::Naive,
            BaselineVariant::Llm | BaselineVariant::LlmReuse => BaselineStyle::Guided,
        }
    }

    /// Whether earlier tables' types are offered to later prompts.
    pub fn reuse(self) -> bool {
        matches!(self, BaselineVariant::NaiveReuse | BaselineVariant::LlmReuse)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineVariant::Naive => "naive",
            BaselineVariant::NaiveReuse => "naive_reuse",
            BaselineVariant::Llm => "llm",
            BaselineVariant::LlmReuse => "llm_reuse",
        }
    }
}

impl fmt::Display for BaselineVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BaselineVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown baseline variant `{s}`"))
    }
}

/// Indices of up to `n` rows drawn uniformly without replacement, in table order.
pub fn sample_rows(row_count: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, row_count, n.min(row_count)).into_vec();
    picked.sort_unstable();
    picked
}

fn table_sample(table: &Table, n: usize, seed: u64) -> TableContext {
    TableContext {
        column_names: table.headers.clone(),
        sample_rows: sample_rows(table.rows.len(), n, seed)
            .into_iter()
            .map(|i| table.rows[i].clone())
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub table: String,
    pub rows: usize,
    pub usage: UsageTotals,
    pub annotated: usize,
    /// Answer keys that match no header.
    pub unknown_columns: Vec<String>,
    pub rejected: Vec<RejectedLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
}

pub const BASELINE_LOG_KIND: &str = "baseline-log";

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub store: AnnotationStore,
    pub index: TypeIndex,
    pub log: Vec<BaselineRecord>,
}

/// Runs a baseline variant over every table in collection order. Table `i`
/// samples its rows with seed `baseline_seed + i`.
pub fn run_baseline(
    collection: &DatasetCollection,
    cfg: &RunConfig,
    gate: &LlmGate,
    variant: BaselineVariant,
) -> BaselineOutcome {
    let stage = StageId::baseline(variant.as_str());
    let mut index = TypeIndex::new(&cfg.banned_generics);
    let mut store = AnnotationStore::new();
    let mut log = Vec::new();

    for (i, table) in collection.tables.iter().enumerate() {
        let ctx = table_sample(table, cfg.baseline_rows, cfg.baseline_seed.wrapping_add(i as u64));
        let known: Vec<String> = index.catalog().iter().map(|t| t.label.clone()).collect();
        let prompt = build_baseline_prompt(
            variant.style(),
            &table.name,
            &ctx,
            variant.reuse().then_some(known.as_slice()),
        );
        let (answer, usages) = gate.complete_parsed(ModelRole::Discovery, &stage, &prompt, parse_table_answer);
        let mut rec = BaselineRecord {
            table: table.name.clone(),
            rows: ctx.sample_rows.len(),
            usage: totals(&usages),
            annotated: 0,
            unknown_columns: Vec::new(),
            rejected: Vec::new(),
            failure: None,
        };
        let answer: BTreeMap<String, Vec<String>> = match answer {
            Ok(a) => a,
            Err(e) => {
                rec.failure = Some(Failure::from_llm(&e));
                log.push(rec);
                continue;
            }
        };
        for (name, labels) in &answer {
            let cols: Vec<_> = table.columns.iter().filter(|c| c.id.column == *name).collect();
            if cols.is_empty() {
                rec.unknown_columns.push(name.clone());
                continue;
            }
            for col in cols {
                let reg = match index.register_types(labels, col.kind, &stage) {
                    Ok(r) => r,
                    Err(TypeIndexError::AllLabelsRejected(r)) => {
                        rec.rejected.extend(r);
                        continue;
                    }
                    Err(e) => unreachable!("registration only rejects labels: {e}"),
                };
                rec.rejected.extend(reg.rejected);
                let values: Vec<&str> = col.unique_values.iter().map(String::as_str).collect();
                index
                    .index_update(&values, &reg.types)
                    .expect("types were just registered");
                store
                    .insert(Annotation {
                        column: col.id.clone(),
                        kind: col.kind,
                        types: reg.types.iter().map(|t| t.label.clone()).collect(),
                        provenance: vec![Provenance {
                            stage: stage.clone(),
                            source: Source::Baseline,
                        }],
                    })
                    .expect("each column is answered once");
                rec.annotated += 1;
            }
        }
        log.push(rec);
    }
    BaselineOutcome { store, index, log }
}
