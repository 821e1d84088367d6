//! Fixtures shared by the integration suites.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;
use std::time::Duration;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use typecascade::cascade::Session;
use typecascade::embedding::{EmbeddingError, EmbeddingProvider, EmbeddingVector};
use typecascade::ingest::{DatasetCollection, IngestConfig, Table};
use typecascade::llmgate::{FixtureMode, FixtureRule, FnBackend, LlmGate, MockBackend, ModelRole};
use typecascade::store::Source;
use typecascade::typeindex::IndexRecord;

pub fn table(name: &str, headers: &[&str], rows: &[Vec<String>]) -> Table {
    Table::from_rows(
        name,
        headers.iter().map(|h| h.to_string()).collect(),
        rows.to_vec(),
        &IngestConfig::default(),
    )
}

/// Rows from equal-length columns.
pub fn rows(columns: &[&[&str]]) -> Vec<Vec<String>> {
    let n = columns[0].len();
    (0..n)
        .map(|i| columns.iter().map(|c| c[i].to_string()).collect())
        .collect()
}

pub fn stable_hash(parts: &[&str]) -> u64 {
    let mut h = DefaultHasher::new();
    for p in parts {
        p.hash(&mut h);
    }
    h.finish()
}

/// Embedding provider with hand-placed vectors. Unknown texts are an error so
/// a fixture cannot silently depend on anything else.
pub struct LookupProvider {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl LookupProvider {
    pub fn new(dim: usize) -> Self {
        LookupProvider {
            dim,
            table: HashMap::new(),
        }
    }

    pub fn set(&mut self, text: &str, v: Vec<f64>) {
        assert_eq!(v.len(), self.dim);
        self.table.insert(text.to_string(), v);
    }
}

impl EmbeddingProvider<f64> for LookupProvider {
    fn name(&self) -> &str {
        "lookup"
    }
    fn dimension(&self) -> usize {
        self.dim
    }
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<f64>>, EmbeddingError> {
        texts
            .iter()
            .map(|t| {
                self.table
                    .get(t)
                    .map(|v| EmbeddingVector::raw(v.clone()))
                    .ok_or_else(|| EmbeddingError::provider(Some(t), "not in lookup table"))
            })
            .collect()
    }
}

pub const DIM: usize = 16;

pub fn axis(i: usize) -> Vec<f64> {
    let mut v = vec![0.0; DIM];
    v[i] = 1.0;
    v
}

/// `c` times axis `base` plus the orthogonal remainder on axis `other`.
pub fn tilt(base: usize, other: usize, c: f64) -> Vec<f64> {
    let mut v = vec![0.0; DIM];
    v[base] = c;
    v[other] = (1.0 - c * c).sqrt();
    v
}

/// Twelve columns around one location concept, arranged so that:
/// * "Location" (three tables) and "Borough" (three tables) are exact seeds at 0.99;
/// * two "LOC" columns join the Location seed at 0.9 (names 0.95, values 0.95);
/// * "Location Address" and "Loc" join it at 0.75 (names and values 0.76 to 0.8);
///   "Loc" holds coordinates, a concept none of its siblings has;
/// * "notes" and "remarks" never cluster with anything.
pub fn location_fixture() -> (DatasetCollection, LookupProvider) {
    let mut p = LookupProvider::new(DIM);
    p.set("Location", axis(0));
    p.set("LOC", tilt(0, 1, 0.95));
    p.set("Location Address", tilt(0, 2, 0.8));
    p.set("Loc", tilt(0, 3, 0.8));
    p.set("Borough", axis(10));
    p.set("notes", axis(12));
    p.set("remarks", axis(14));

    let addresses: [&[&str]; 3] = [
        &["12 Main St", "40 Elm Ave", "7 Oak Rd"],
        &["99 Pine St", "12 Main St", "5 Lake Dr"],
        &["40 Elm Ave", "7 Oak Rd", "18 Hill Ct"],
    ];
    let loc1: &[&str] = &["3 Birch Ln", "21 Cedar Way", "8 Ash Pl"];
    let loc2: &[&str] = &["64 Maple Sq", "2 Spruce Row", "30 Fir Blvd"];
    let loc_addr: &[&str] = &["Apt 4B, 11 Bay St", "Unit 2, 9 Cove Rd", "Suite 7, 1 Port Ave"];
    let coords: &[&str] = &["40.7128,-74.0060", "40.6782,-73.9442", "40.7831,-73.9712"];
    let boroughs: [&[&str]; 3] = [
        &["Bronx", "Queens", "Brooklyn"],
        &["Manhattan", "Queens", "Bronx"],
        &["Brooklyn", "Staten Island", "Manhattan"],
    ];
    let notes: &[&str] = &["call back", "ok", "pending"];
    let remarks: &[&str] = &["late", "paid", "waived"];

    for v in addresses.iter().flat_map(|c| c.iter()) {
        p.set(v, axis(5));
    }
    for v in loc1 {
        p.set(v, tilt(5, 6, 0.95));
    }
    for v in loc2 {
        p.set(v, tilt(5, 7, 0.95));
    }
    for v in loc_addr {
        p.set(v, tilt(5, 8, 0.8));
    }
    for v in coords {
        p.set(v, tilt(5, 9, 0.78));
    }
    for v in boroughs.iter().flat_map(|c| c.iter()) {
        p.set(v, axis(11));
    }
    for v in notes {
        p.set(v, axis(13));
    }
    for v in remarks {
        p.set(v, axis(15));
    }

    let tables = vec![
        table("t1", &["Location", "Borough", "notes"], &rows(&[addresses[0], boroughs[0], notes])),
        table("t2", &["Location", "Borough"], &rows(&[addresses[1], boroughs[1]])),
        table("t3", &["Location", "Borough"], &rows(&[addresses[2], boroughs[2]])),
        table("t4", &["LOC", "remarks"], &rows(&[loc1, remarks])),
        table("t5", &["LOC"], &rows(&[loc2])),
        table("t6", &["Location Address"], &rows(&[loc_addr])),
        table("t7", &["Loc"], &rows(&[coords])),
    ];
    (DatasetCollection::from_tables("locations", tables), p)
}

fn rule(mode: FixtureMode, key: &str, role: ModelRole, answer: &str) -> FixtureRule {
    FixtureRule {
        mode,
        key: key.to_string(),
        role: Some(role),
        answer: answer.to_string(),
        in_tokens: None,
        out_tokens: None,
    }
}

/// Canned answers for [`location_fixture`]. The annotation model abstains on
/// "Loc" and confirms the address type everywhere else.
pub fn location_mock() -> MockBackend {
    use FixtureMode::*;
    use ModelRole::*;
    MockBackend::new(vec![
        rule(Contains, "Column names in cluster: [Location]\n", Discovery, r#"{"answer": ["Street Address"]}"#),
        rule(Contains, "Column names in cluster: [Borough]\n", Discovery, r#"{"answer": ["NYC Borough"]}"#),
        rule(Contains, "Column names in cluster: [Loc]\n", Discovery, r#"{"answer": ["Geo Coordinates"]}"#),
        rule(
            Contains,
            "Column names in cluster: [Location, LOC, Location Address, Loc]\n",
            Discovery,
            r#"{"answer": ["Geo Coordinates"]}"#,
        ),
        rule(Regex, r"(?m)^Column name: Loc$", Annotation, r#"{"answer": []}"#),
        rule(Any, "", Annotation, r#"{"answer": ["Street Address"]}"#),
    ])
    .expect("fixture rules compile")
}

pub fn gate_with(backend: Arc<dyn typecascade::llmgate::ChatBackend>) -> LlmGate {
    let mut g = LlmGate::new(2, Duration::ZERO);
    for role in ModelRole::ALL {
        g.bind(role, backend.clone(), if role == ModelRole::Discovery { 0.3 } else { 0.0 });
    }
    g
}

pub fn location_gate() -> LlmGate {
    gate_with(Arc::new(location_mock()))
}

const TEXT_FAMILIES: [(&[&str], &[&str]); 5] = [
    (&["city", "City", "town"], &["Paris", "Rome", "Oslo", "Lima", "Cairo", "Delhi", "Quito"]),
    (&["borough", "boro"], &["Bronx", "Queens", "Brooklyn", "Manhattan", "Staten Island"]),
    (&["zip", "zip code"], &["10001", "10453", "11201", "10314", "11368", "10027"]),
    (&["name", "full name"], &["Ada Lovelace", "Alan Turing", "Grace Hopper", "Edsger Dijkstra", "Barbara Liskov"]),
    (&["street", "street name"], &["Main St", "Elm Ave", "Oak Rd", "Pine St", "Lake Dr", "Hill Ct"]),
];

const NUMERIC_HEADERS: [&str; 2] = ["amount", "total"];

/// A random collection of up to `max_columns` columns built from a few value
/// families. Headers usually match the family and sometimes do not, so
/// clusters of every shape occur, including name and value clusters that
/// disagree.
pub fn random_collection<R: Rng>(rng: &mut R, max_columns: usize) -> DatasetCollection {
    let all_headers: Vec<&str> = TEXT_FAMILIES
        .iter()
        .flat_map(|f| f.0.iter().copied())
        .chain(NUMERIC_HEADERS)
        .collect();
    let mut tables = Vec::new();
    let mut left = rng.random_range(2..=max_columns);
    let mut t = 0;
    while left > 0 {
        let width = rng.random_range(1..=left.min(5));
        left -= width;
        let n_rows = rng.random_range(3..=8);
        let mut headers = Vec::new();
        let mut cols: Vec<Vec<String>> = Vec::new();
        for _ in 0..width {
            let (header, col): (&str, Vec<String>) = if rng.random_bool(0.25) {
                let scale = rng.random_range(1.0..500.0);
                let shift = rng.random_range(-50.0..50.0);
                let values = (0..n_rows)
                    .map(|_| format!("{:.2}", shift + scale * rng.random::<f64>().powi(rng.random_range(1..3))))
                    .collect();
                (*NUMERIC_HEADERS.choose(rng).unwrap(), values)
            } else {
                let (names, fam) = TEXT_FAMILIES.choose(rng).unwrap();
                let mut fam: Vec<&str> = fam.to_vec();
                if rng.random_bool(0.3) {
                    let (_, other) = TEXT_FAMILIES.choose(rng).unwrap();
                    fam.extend(other.iter().take(2));
                }
                fam.shuffle(rng);
                let values = (0..n_rows).map(|i| fam[i % fam.len()].to_string()).collect();
                (*names.choose(rng).unwrap(), values)
            };
            let header = if rng.random_bool(0.15) { *all_headers.choose(rng).unwrap() } else { header };
            headers.push(header.to_string());
            cols.push(col);
        }
        let refs: Vec<&str> = headers.iter().map(String::as_str).collect();
        let data: Vec<Vec<String>> = (0..n_rows).map(|r| cols.iter().map(|c| c[r].clone()).collect()).collect();
        tables.push(table(&format!("r{t}"), &refs, &data));
        t += 1;
    }
    DatasetCollection::from_tables("random", tables)
}

const LABEL_POOL: [&str; 9] = [
    "City Name",
    "NYC Borough",
    "Postal Code",
    "Person Name",
    "Street Name",
    "Dollar Amount",
    "Quantity",
    "string",
    "Location",
];

fn candidates_in(user: &str) -> Vec<String> {
    for prefix in ["Candidate Semantic Types: ", "Possible Semantic Types: "] {
        if let Some(line) = user.lines().find(|l| l.starts_with(prefix)) {
            return serde_json::from_str(&line[prefix.len()..]).unwrap_or_default();
        }
    }
    Vec::new()
}

/// Deterministic stand-in for every role, driven by a hash of the prompt.
/// Discovery mixes reused and new labels (sometimes a banned one); annotation
/// keeps a hash-chosen subset of the offer and sometimes invents a label
/// outside it; the judge grades by hash.
pub fn hash_backend(user: &str, role: ModelRole) -> String {
    let h = stable_hash(&[user]);
    match role {
        ModelRole::Discovery => {
            let mut labels: Vec<String> = Vec::new();
            let cands = candidates_in(user);
            if !cands.is_empty() && h.is_multiple_of(3) {
                labels.push(cands[(h as usize / 3) % cands.len()].clone());
            }
            let n = 1 + (h as usize >> 8) % 2;
            for i in 0..n {
                labels.push(LABEL_POOL[(h as usize >> (12 + 4 * i)) % LABEL_POOL.len()].to_string());
            }
            serde_json::json!({ "answer": labels }).to_string()
        }
        ModelRole::Annotation => {
            let mut kept: Vec<String> = candidates_in(user)
                .into_iter()
                .filter(|c| !stable_hash(&[user, c]).is_multiple_of(3))
                .collect();
            if h.is_multiple_of(7) {
                kept.push("Invented Type".into());
            }
            serde_json::json!({ "answer": kept }).to_string()
        }
        ModelRole::Judge => {
            let line = user.lines().find(|l| l.starts_with("Annotations: ")).unwrap_or("Annotations: []");
            let labels: Vec<String> = serde_json::from_str(&line["Annotations: ".len()..]).unwrap_or_default();
            let verdicts: serde_json::Map<String, serde_json::Value> = labels
                .iter()
                .map(|l| {
                    let ok = stable_hash(&[user, l]).is_multiple_of(2);
                    (l.clone(), serde_json::Value::Bool(ok))
                })
                .collect();
            serde_json::json!({ "verdicts": verdicts }).to_string()
        }
    }
}

pub fn hash_gate() -> LlmGate {
    gate_with(Arc::new(FnBackend(|role: ModelRole, _: &str, user: &str| Ok(hash_backend(user, role)))))
}

/// Catalog, index and closed-set laws over a finished session.
pub fn check_laws(s: &Session<'_>) -> Result<(), String> {
    for t in s.index.catalog() {
        if s.index.is_banned(&t.label) {
            return Err(format!("banned label {:?} in catalog", t.label));
        }
    }
    let catalog: BTreeSet<(String, _)> = s.index.catalog().iter().map(|t| (t.label.clone(), t.kind)).collect();
    for rec in s.index.records() {
        if let IndexRecord::Value { value, types } = rec {
            if types.is_empty() {
                return Err(format!("index entry {value:?} is empty"));
            }
            for t in types {
                if !catalog.contains(&(t.label.clone(), t.kind)) {
                    return Err(format!("index label {:?} not in catalog", t.label));
                }
            }
        }
    }
    for e in &s.annotation_log {
        if let Some(k) = e.kept.iter().find(|k| !e.offered.contains(k)) {
            return Err(format!("{} kept {k:?} outside the offer {:?}", e.column, e.offered));
        }
    }
    for a in s.store.iter() {
        if a.types.is_empty() {
            return Err(format!("{} has an empty annotation", a.column));
        }
        let discovered = a.provenance.iter().any(|p| p.source == Source::Discovery);
        if discovered {
            continue;
        }
        let offered: BTreeSet<&String> = s
            .annotation_log
            .iter()
            .filter(|e| e.column == a.column)
            .flat_map(|e| e.offered.iter())
            .collect();
        if let Some(t) = a.types.iter().find(|t| !offered.contains(t)) {
            return Err(format!("{} annotated with {t:?}, never offered", a.column));
        }
        let known: BTreeSet<&str> = s.index.catalog().iter().map(|t| t.label.as_str()).collect();
        if let Some(t) = a.types.iter().find(|t| !known.contains(t.as_str())) {
            return Err(format!("{} annotated with {t:?}, not in catalog", a.column));
        }
    }
    Ok(())
}
