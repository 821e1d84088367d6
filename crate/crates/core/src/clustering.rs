//! Threshold community detection over column vectors, and seed clusters.
//!
//! Columns are grouped twice per threshold: by header embedding and by
//! content vector (textual columns and numerical columns in separate passes).
//! Seeds are the non-trivial intersections of the two groupings.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{
    column_signature, cosine_unchecked, mean_direction, text_embedding_values, EmbeddingError,
    EmbeddingProvider, EmbeddingVector, NumericSignature,
};
use crate::ingest::{ColumnId, DataKind, DatasetCollection};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Name,
    Value,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Name => "name",
            Basis::Value => "value",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: String,
    /// Sorted.
    pub members: Vec<ColumnId>,
    pub basis: Basis,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedCluster {
    pub id: String,
    /// Sorted.
    pub members: Vec<ColumnId>,
    pub threshold: f64,
    pub name_cluster: String,
    pub value_cluster: String,
}

pub const CLUSTERS_KIND: &str = "clusters";

/// Disjoint communities of items whose vectors reach cosine `tau`.
///
/// Every item proposes the set of items within `tau` of it (itself always
/// included). Proposals smaller than `min_size` are dropped, the rest are
/// ranked by size (descending), then by their sorted member list, and
/// accepted greedily: members already taken are removed, and a proposal that
/// falls below `min_size` is discarded. Members of each community are sorted.
pub fn community_detect<S, V>(items: &[(ColumnId, V)], tau: S, min_size: usize) -> Vec<Vec<ColumnId>>
where
    S: Scalar,
    V: AsRef<[S]> + Sync,
{
    let min_size = min_size.max(1);
    let mut candidates: Vec<Vec<usize>> = (0..items.len())
        .into_par_iter()
        .map(|i| {
            let a = items[i].1.as_ref();
            (0..items.len())
                .filter(|&j| j == i || cosine_unchecked(a, items[j].1.as_ref()) >= tau)
                .collect::<Vec<usize>>()
        })
        .filter(|c| c.len() >= min_size)
        .map(|mut c| {
            c.sort_by(|a, b| items[*a].0.cmp(&items[*b].0));
            c
        })
        .collect();

    candidates.sort_by(|a, b| {
        b.len().cmp(&a.len()).then_with(|| {
            a.iter()
                .map(|i| &items[*i].0)
                .cmp(b.iter().map(|i| &items[*i].0))
        })
    });

    let mut taken = vec![false; items.len()];
    let mut out = Vec::new();
    for cand in candidates {
        let free: Vec<usize> = cand.into_iter().filter(|i| !taken[*i]).collect();
        if free.len() < min_size {
            continue;
        }
        for i in &free {
            taken[*i] = true;
        }
        out.push(free.into_iter().map(|i| items[i].0.clone()).collect());
    }
    out
}

fn wrap(communities: Vec<Vec<ColumnId>>, basis: Basis, tau: f64, offset: usize) -> Vec<Cluster> {
    communities
        .into_iter()
        .enumerate()
        .map(|(i, members)| Cluster {
            id: format!("{basis}@{tau}#{}", i + offset),
            members,
            basis,
            threshold: tau,
        })
        .collect()
}

/// Intersections of name and value clusters with at least `min_size`
/// members, largest first (ties by smallest member).
pub fn seed_clusters(name_cs: &[Cluster], value_cs: &[Cluster], min_size: usize) -> Vec<SeedCluster> {
    let mut value_of: HashMap<&ColumnId, usize> = HashMap::new();
    for (vi, c) in value_cs.iter().enumerate() {
        for m in &c.members {
            value_of.insert(m, vi);
        }
    }
    let mut seeds: Vec<(Vec<ColumnId>, usize, usize)> = Vec::new();
    for (ni, nc) in name_cs.iter().enumerate() {
        let mut split: BTreeMap<usize, Vec<ColumnId>> = BTreeMap::new();
        for m in &nc.members {
            if let Some(vi) = value_of.get(m) {
                split.entry(*vi).or_default().push(m.clone());
            }
        }
        for (vi, members) in split {
            if members.len() >= min_size.max(1) {
                seeds.push((members, ni, vi));
            }
        }
    }
    seeds.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0[0].cmp(&b.0[0])));
    let tau = name_cs.first().map(|c| c.threshold).unwrap_or(0.0);
    seeds
        .into_iter()
        .enumerate()
        .map(|(i, (members, ni, vi))| SeedCluster {
            id: format!("seed@{tau}#{i}"),
            members,
            threshold: tau,
            name_cluster: name_cs[ni].id.clone(),
            value_cluster: value_cs[vi].id.clone(),
        })
        .collect()
}

/// Settings that shape the column vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorParams {
    pub max_embed_values: usize,
    pub bins: usize,
    pub z_clip: f64,
}

impl From<&crate::config::RunConfig> for VectorParams {
    fn from(c: &crate::config::RunConfig) -> Self {
        VectorParams {
            max_embed_values: c.max_embed_values,
            bins: c.histogram_bins,
            z_clip: c.z_clip,
        }
    }
}

/// Name and content vectors of every clusterable column, computed once and
/// reused at every threshold. Columns with a degenerate vector are listed in
/// `excluded` instead.
#[derive(Debug, Clone)]
pub struct ColumnVectors<S> {
    pub names: Vec<(ColumnId, EmbeddingVector<S>)>,
    pub textual: Vec<(ColumnId, EmbeddingVector<S>)>,
    pub numerical: Vec<(ColumnId, NumericSignature<S>)>,
    pub excluded: Vec<(ColumnId, Basis)>,
}

impl<S: Scalar> ColumnVectors<S> {
    pub fn compute<P: EmbeddingProvider<S> + ?Sized>(
        collection: &DatasetCollection,
        provider: &P,
        params: VectorParams,
    ) -> Result<Self, EmbeddingError> {
        let mut excluded = Vec::new();

        let mut distinct_names: Vec<String> =
            collection.columns().map(|c| c.id.column.clone()).collect();
        distinct_names.sort();
        distinct_names.dedup();
        let name_vecs = embed_all(provider, &distinct_names)?;
        let mut names = Vec::new();
        for c in collection.columns() {
            let i = distinct_names.binary_search(&c.id.column).expect("name listed");
            let v = EmbeddingVector::normalized(name_vecs[i].components().to_vec());
            if v.is_zero() {
                excluded.push((c.id.clone(), Basis::Name));
            } else {
                names.push((c.id.clone(), v));
            }
        }

        let mut per_column: Vec<(ColumnId, Vec<String>)> = Vec::new();
        let mut numerical = Vec::new();
        for c in collection.columns() {
            match c.kind {
                DataKind::Textual => match text_embedding_values(c, params.max_embed_values) {
                    Ok(vals) => per_column.push((c.id.clone(), vals)),
                    Err(EmbeddingError::EmptyColumn(_)) => {
                        excluded.push((c.id.clone(), Basis::Value))
                    }
                    Err(e) => return Err(e),
                },
                DataKind::Numerical => match column_signature::<S>(c, params.bins, params.z_clip) {
                    Ok(sig) if !sig.is_zero() => numerical.push((c.id.clone(), sig)),
                    Ok(_) | Err(EmbeddingError::EmptyColumn(_)) => {
                        excluded.push((c.id.clone(), Basis::Value))
                    }
                    Err(e) => return Err(e),
                },
            }
        }

        let mut distinct_values: Vec<String> = per_column
            .iter()
            .flat_map(|(_, v)| v.iter().cloned())
            .collect();
        distinct_values.sort();
        distinct_values.dedup();
        let value_vecs = embed_all(provider, &distinct_values)?;
        let mut textual = Vec::new();
        for (id, vals) in per_column {
            let refs: Vec<&EmbeddingVector<S>> = vals
                .iter()
                .map(|v| &value_vecs[distinct_values.binary_search(v).expect("value listed")])
                .collect();
            let mean = mean_direction(&refs);
            if mean.is_zero() {
                excluded.push((id, Basis::Value));
            } else {
                textual.push((id, mean));
            }
        }
        excluded.sort();

        Ok(ColumnVectors {
            names,
            textual,
            numerical,
            excluded,
        })
    }
}

fn embed_all<S: Scalar, P: EmbeddingProvider<S> + ?Sized>(
    provider: &P,
    texts: &[String],
) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let out = provider.embed_batch(texts)?;
    if out.len() != texts.len() {
        return Err(EmbeddingError::provider(None, "batch size mismatch"));
    }
    let dim = provider.dimension();
    if let Some(bad) = out.iter().find(|v| v.dimension() != dim) {
        return Err(EmbeddingError::DimensionMismatch {
            left: dim,
            right: bad.dimension(),
        });
    }
    Ok(out)
}

/// Name clusters of a collection at `tau`.
pub fn name_clusters<S: Scalar>(vectors: &ColumnVectors<S>, tau: f64, min_size: usize) -> Vec<Cluster> {
    wrap(
        community_detect(&vectors.names, S::of(tau), min_size),
        Basis::Name,
        tau,
        0,
    )
}

/// Content clusters at `tau`: textual columns first, then numerical ones.
/// No cluster mixes kinds.
pub fn value_clusters<S: Scalar>(vectors: &ColumnVectors<S>, tau: f64, min_size: usize) -> Vec<Cluster> {
    let mut out = wrap(
        community_detect(&vectors.textual, S::of(tau), min_size),
        Basis::Value,
        tau,
        0,
    );
    let n = out.len();
    out.extend(wrap(
        community_detect(&vectors.numerical, S::of(tau), min_size),
        Basis::Value,
        tau,
        n,
    ));
    out
}

/// All groupings at one threshold, with membership lookups.
#[derive(Debug, Clone)]
pub struct ClusterSet {
    pub name_tau: f64,
    pub value_tau: f64,
    pub name: Vec<Cluster>,
    pub value: Vec<Cluster>,
    pub seeds: Vec<SeedCluster>,
    name_of: HashMap<ColumnId, usize>,
    value_of: HashMap<ColumnId, usize>,
}

impl ClusterSet {
    pub fn build<S: Scalar>(
        vectors: &ColumnVectors<S>,
        name_tau: f64,
        value_tau: f64,
        min_size: usize,
    ) -> Self {
        let name = name_clusters(vectors, name_tau, min_size);
        let value = value_clusters(vectors, value_tau, min_size);
        let mut seeds = seed_clusters(&name, &value, min_size);
        let seed_tau = name_tau.min(value_tau);
        for (i, s) in seeds.iter_mut().enumerate() {
            s.threshold = seed_tau;
            s.id = format!("seed@{seed_tau}#{i}");
        }
        let index = |cs: &[Cluster]| {
            cs.iter()
                .enumerate()
                .flat_map(|(i, c)| c.members.iter().map(move |m| (m.clone(), i)))
                .collect::<HashMap<_, _>>()
        };
        ClusterSet {
            name_tau,
            value_tau,
            name_of: index(&name),
            value_of: index(&value),
            name,
            value,
            seeds,
        }
    }

    pub fn name_cluster_of(&self, id: &ColumnId) -> Option<&Cluster> {
        self.name_of.get(id).map(|i| &self.name[*i])
    }

    pub fn value_cluster_of(&self, id: &ColumnId) -> Option<&Cluster> {
        self.value_of.get(id).map(|i| &self.value[*i])
    }

    /// One dump record per cluster: name clusters, value clusters, seeds.
    pub fn records(&self) -> Vec<ClusterRecord> {
        let plain = self.name.iter().chain(&self.value).map(|c| ClusterRecord {
            id: c.id.clone(),
            basis: c.basis.to_string(),
            threshold: c.threshold,
            members: c.members.clone(),
        });
        let seeds = self.seeds.iter().map(|s| ClusterRecord {
            id: s.id.clone(),
            basis: "seed".into(),
            threshold: s.threshold,
            members: s.members.clone(),
        });
        plain.chain(seeds).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub id: String,
    pub basis: String,
    pub threshold: f64,
    pub members: Vec<ColumnId>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashingProvider;
    use crate::ingest::{IngestConfig, Table};

    fn id(t: &str, o: usize) -> ColumnId {
        ColumnId::new(t, o, format!("c{o}"))
    }

    #[test]
    fn identical_vectors_form_one_cluster() {
        let items: Vec<(ColumnId, Vec<f64>)> =
            (0..3).map(|i| (id("t", i), vec![0.6, 0.8])).collect();
        let cs = community_detect(&items, 0.99, 2);
        assert_eq!(cs, vec![vec![id("t", 0), id("t", 1), id("t", 2)]]);
    }

    #[test]
    fn orthogonal_pairs_stay_apart() {
        let items = vec![
            (id("a", 0), vec![1.0, 0.0]),
            (id("a", 1), vec![0.0, 1.0]),
            (id("b", 0), vec![1.0, 0.0]),
            (id("b", 1), vec![0.0, 1.0]),
        ];
        let cs = community_detect(&items, 0.9, 2);
        assert_eq!(
            cs,
            vec![vec![id("a", 0), id("b", 0)], vec![id("a", 1), id("b", 1)]]
        );
    }

    #[test]
    fn largest_proposal_absorbs_overlapping_pairs() {
        // chain x - y - z: y proposes {x,y,z}, x and z propose pairs
        let s = 0.5f64.sqrt();
        let items = vec![
            (id("t", 0), vec![1.0, 0.0]),
            (id("t", 1), vec![s, s]),
            (id("t", 2), vec![0.0, 1.0]),
            (id("t", 3), vec![-1.0, 0.0]),
        ];
        let cs = community_detect(&items, 0.7, 2);
        assert_eq!(cs, vec![vec![id("t", 0), id("t", 1), id("t", 2)]]);
    }

    #[test]
    fn seed_intersection() {
        let c = |basis, ms: &[ColumnId], n: usize| Cluster {
            id: format!("{basis}{n}"),
            members: ms.to_vec(),
            basis,
            threshold: 0.9,
        };
        let (a, b, cc, d) = (id("t", 0), id("t", 1), id("t", 2), id("t", 3));
        let names = vec![c(Basis::Name, &[a.clone(), b.clone(), cc.clone()], 0)];
        let values = vec![
            c(Basis::Value, &[a.clone(), b.clone()], 0),
            c(Basis::Value, &[cc.clone(), d.clone()], 1),
        ];
        let seeds = seed_clusters(&names, &values, 2);
        assert_eq!(seeds.len(), 1);
        assert_eq!(seeds[0].members, vec![a, b]);
        assert_eq!(seeds[0].name_cluster, "name0");
        assert_eq!(seeds[0].value_cluster, "value0");

        let disjoint = vec![c(Basis::Value, &[d.clone(), id("t", 4)], 0)];
        assert!(seed_clusters(&names, &disjoint, 2).is_empty());
    }

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

    #[test]
    fn kinds_never_mix_and_affine_columns_cluster() {
        let coll = DatasetCollection::from_tables(
            "mem",
            vec![
                table("a", &["score", "boro"], &[&["1", "Bronx"], &["2", "Queens"], &["4", "Bronx"]]),
                table("b", &["pct", "borough"], &[&["10", "Queens"], &["20", "Bronx"], &["40", "Bronx"]]),
            ],
        );
        let p = HashingProvider::new(128, 9);
        let params = VectorParams {
            max_embed_values: 200,
            bins: 20,
            z_clip: 4.0,
        };
        let v = ColumnVectors::<f64>::compute(&coll, &p, params).unwrap();
        let cs = value_clusters(&v, 0.99, 2);
        assert_eq!(cs.len(), 2);
        for c in &cs {
            let kinds: Vec<DataKind> = c
                .members
                .iter()
                .map(|m| coll.column(m).unwrap().kind)
                .collect();
            assert!(kinds.windows(2).all(|w| w[0] == w[1]));
        }
        // names "score"/"pct" and "boro"/"borough" share no tokens
        assert!(name_clusters(&v, 0.99, 2).is_empty());
    }

    #[test]
    fn same_header_in_two_tables_always_clusters() {
        let coll = DatasetCollection::from_tables(
            "mem",
            vec![
                table("a", &["LOC"], &[&["x"]]),
                table("b", &["LOC"], &[&["y"]]),
            ],
        );
        let p = HashingProvider::new(64, 1);
        let params = VectorParams {
            max_embed_values: 10,
            bins: 10,
            z_clip: 4.0,
        };
        let v = ColumnVectors::<f64>::compute(&coll, &p, params).unwrap();
        assert_eq!(name_clusters(&v, 1.0, 2).len(), 1);
    }
}
