//! Length-stratified value sampling.
//!
//! Distinct values are grouped by character length; groups are ranked by how
//! many distinct values they hold (shorter length wins ties). A budget smaller
//! than the number of groups takes one value from each of the top groups, a
//! larger budget is spread across all groups proportionally to their size.
//! Inside a group values are taken by frequency, then lexicographically.

use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SamplingError {
    #[error("no values to sample from")]
    EmptyInput,
    #[error("sample budget must be at least 1")]
    ZeroBudget,
}

/// Distinct values of one string length, best representative first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthGroup {
    pub length: usize,
    pub values: Vec<String>,
}

/// Partitions a value multiset into ranked length groups.
pub fn length_groups<'a, I>(values: I) -> Vec<LengthGroup>
where
    I: IntoIterator<Item = (&'a str, usize)>,
{
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (v, c) in values {
        *counts.entry(v).or_default() += c;
    }
    let mut by_len: BTreeMap<usize, Vec<(&str, usize)>> = BTreeMap::new();
    for (v, c) in counts {
        by_len.entry(v.chars().count()).or_default().push((v, c));
    }
    let mut groups: Vec<LengthGroup> = by_len
        .into_iter()
        .map(|(length, mut vs)| {
            vs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            LengthGroup {
                length,
                values: vs.into_iter().map(|(v, _)| v.to_string()).collect(),
            }
        })
        .collect();
    groups.sort_by(|a, b| {
        b.values
            .len()
            .cmp(&a.values.len())
            .then(a.length.cmp(&b.length))
    });
    groups
}

/// Per-group quotas for a budget that exceeds the group count but not the
/// number of distinct values.
fn allocate(sizes: &[usize], k: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let mut alloc: Vec<usize> = sizes.iter().map(|s| (k * s / total).max(1)).collect();
    let remainder: Vec<usize> = sizes.iter().map(|s| (k * s) % total).collect();
    let mut assigned: usize = alloc.iter().sum();

    // Forcing every group to one slot can overshoot; take back from the
    // largest quotas, latest group first among equals.
    while assigned > k {
        let (i, _) = alloc
            .iter()
            .enumerate()
            .filter(|(_, a)| **a > 1)
            .max_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0)))
            .expect("k exceeds the group count");
        alloc[i] -= 1;
        assigned -= 1;
    }

    // Leftover slots go by largest remainder, larger (earlier) group first.
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| remainder[b].cmp(&remainder[a]).then(a.cmp(&b)));
    while assigned < k {
        let before = assigned;
        for &i in &order {
            if assigned == k {
                break;
            }
            if alloc[i] < sizes[i] {
                alloc[i] += 1;
                assigned += 1;
            }
        }
        assert!(assigned > before, "budget exceeds available values");
    }
    alloc
}

/// Representative sample `V_rep` of at most `k` values from a multiset of
/// (value, count) pairs.
pub fn length_stratified_sample<'a, I>(values: I, k: usize) -> Result<Vec<String>, SamplingError>
where
    I: IntoIterator<Item = (&'a str, usize)>,
{
    if k == 0 {
        return Err(SamplingError::ZeroBudget);
    }
    let groups = length_groups(values);
    if groups.is_empty() {
        return Err(SamplingError::EmptyInput);
    }
    let distinct: usize = groups.iter().map(|g| g.values.len()).sum();
    if k >= distinct {
        return Ok(groups.into_iter().flat_map(|g| g.values).collect());
    }
    if groups.len() >= k {
        return Ok(groups
            .into_iter()
            .take(k)
            .map(|g| g.values.into_iter().next().expect("groups are non-empty"))
            .collect());
    }
    let sizes: Vec<usize> = groups.iter().map(|g| g.values.len()).collect();
    let quota = allocate(&sizes, k);
    Ok(groups
        .into_iter()
        .zip(quota)
        .flat_map(|(g, q)| g.values.into_iter().take(q))
        .collect())
}

/// Same as [`length_stratified_sample`] over a plain list where repeats count
/// as frequency.
pub fn sample_strings<'a, I>(values: I, k: usize) -> Result<Vec<String>, SamplingError>
where
    I: IntoIterator<Item = &'a str>,
{
    length_stratified_sample(values.into_iter().map(|v| (v, 1)), k)
}
