//! Column-name and column-content vectors.
//!
//! Names and textual contents are embedded through an [`EmbeddingProvider`];
//! numerical contents become z-score histogram densities. Everything compares
//! through [`cosine_sim`].

mod cache;
mod hashing;
mod http;

pub use cache::{CacheRecord, CachedProvider};
pub use hashing::{tokenize, HashingProvider};
pub use http::HttpProvider;

use crate::ingest::{ColumnProfile, DataKind};
use crate::sampling::length_stratified_sample;
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding provider failed on {text:?}: {reason}")]
    ProviderFailure { text: Option<String>, reason: String },
    #[error("column {0} has no values to embed")]
    EmptyColumn(String),
    #[error("column {column} is {kind}, expected {expected}")]
    WrongKind {
        column: String,
        kind: DataKind,
        expected: DataKind,
    },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

impl EmbeddingError {
    pub fn provider(text: Option<&str>, reason: impl Into<String>) -> Self {
        EmbeddingError::ProviderFailure {
            text: text.map(str::to_string),
            reason: reason.into(),
        }
    }
}

/// A provider output vector. Stored vectors are unit length unless all-zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<S> {
    components: Vec<S>,
}

impl<S: Scalar> EmbeddingVector<S> {
    /// Wraps components without rescaling.
    pub fn raw(components: Vec<S>) -> Self {
        EmbeddingVector { components }
    }

    /// Scales to unit L2 norm; the zero vector stays zero.
    pub fn normalized(mut components: Vec<S>) -> Self {
        let n = l2_norm(&components);
        if n > S::zero() {
            components.iter_mut().for_each(|c| *c /= n);
        }
        EmbeddingVector { components }
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[S] {
        &self.components
    }

    pub fn norm(&self) -> S {
        l2_norm(&self.components)
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.is_zero())
    }
}

impl<S> AsRef<[S]> for EmbeddingVector<S> {
    fn as_ref(&self) -> &[S] {
        &self.components
    }
}

/// Z-score histogram densities of a numerical column.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericSignature<S> {
    densities: Vec<S>,
}

impl<S: Scalar> NumericSignature<S> {
    pub fn densities(&self) -> &[S] {
        &self.densities
    }

    pub fn bin_count(&self) -> usize {
        self.densities.len()
    }

    pub fn is_zero(&self) -> bool {
        self.densities.iter().all(|c| c.is_zero())
    }
}

impl<S> AsRef<[S]> for NumericSignature<S> {
    fn as_ref(&self) -> &[S] {
        &self.densities
    }
}

fn l2_norm<S: Scalar>(v: &[S]) -> S {
    v.iter().map(|x| *x * *x).sum::<S>().sqrt()
}

/// Cosine similarity, clamped to [-1, 1]; zero when either side is all-zero.
///
/// Computed as `dot / sqrt(|a|^2 |b|^2)` so identical vectors score exactly 1.
pub fn cosine_sim<S: Scalar, V: AsRef<[S]> + ?Sized>(a: &V, b: &V) -> Result<S, EmbeddingError> {
    let (a, b) = (a.as_ref(), b.as_ref());
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(cosine_unchecked(a, b))
}

pub(crate) fn cosine_unchecked<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut dot = S::zero();
    let mut na = S::zero();
    let mut nb = S::zero();
    for (x, y) in a.iter().zip(b) {
        dot += *x * *y;
        na += *x * *x;
        nb += *y * *y;
    }
    if na.is_zero() || nb.is_zero() {
        return S::zero();
    }
    let c = dot / (na * nb).sqrt();
    c.max(-S::one()).min(S::one())
}

/// Source of fixed-dimension text embeddings.
///
/// Implementations are deterministic for a fixed configuration and return
/// vectors in input order.
pub trait EmbeddingProvider<S: Scalar>: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError>;
}

impl<S: Scalar, P: EmbeddingProvider<S> + ?Sized> EmbeddingProvider<S> for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError> {
        (**self).embed_batch(texts)
    }
}

impl<S: Scalar, P: EmbeddingProvider<S> + ?Sized> EmbeddingProvider<S> for std::sync::Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError> {
        (**self).embed_batch(texts)
    }
}

/// Unit embedding of a column header.
pub fn embed_name<S: Scalar, P: EmbeddingProvider<S> + ?Sized>(
    provider: &P,
    column_name: &str,
) -> Result<EmbeddingVector<S>, EmbeddingError> {
    if column_name.trim().is_empty() {
        return Err(EmbeddingError::provider(
            Some(column_name),
            "column name must be non-empty",
        ));
    }
    let mut out = provider.embed_batch(&[column_name.to_string()])?;
    let v = out
        .pop()
        .ok_or_else(|| EmbeddingError::provider(Some(column_name), "empty batch result"))?;
    Ok(EmbeddingVector::normalized(v.components))
}

/// The values of a textual column that enter its content embedding, sorted
/// so the result does not depend on value order.
pub fn text_embedding_values(
    profile: &ColumnProfile,
    max_values: usize,
) -> Result<Vec<String>, EmbeddingError> {
    if profile.kind != DataKind::Textual {
        return Err(EmbeddingError::WrongKind {
            column: profile.id.to_string(),
            kind: profile.kind,
            expected: DataKind::Textual,
        });
    }
    if profile.unique_values.is_empty() {
        return Err(EmbeddingError::EmptyColumn(profile.id.to_string()));
    }
    let mut values = if profile.unique_values.len() > max_values {
        length_stratified_sample(profile.value_multiset(), max_values)
            .expect("non-empty column with positive budget")
    } else {
        profile.unique_values.clone()
    };
    values.sort();
    Ok(values)
}

/// Re-normalized component-wise mean. `vectors` must be non-empty and share
/// one dimension.
pub fn mean_direction<S: Scalar>(vectors: &[&EmbeddingVector<S>]) -> EmbeddingVector<S> {
    let dim = vectors[0].dimension();
    let mut acc = vec![S::zero(); dim];
    for v in vectors {
        for (a, c) in acc.iter_mut().zip(v.components()) {
            *a += *c;
        }
    }
    let n = S::of(vectors.len() as f64);
    acc.iter_mut().for_each(|a| *a /= n);
    EmbeddingVector::normalized(acc)
}

/// Mean unique-value embedding of a textual column, re-normalized.
pub fn embed_text_column<S: Scalar, P: EmbeddingProvider<S> + ?Sized>(
    provider: &P,
    profile: &ColumnProfile,
    max_values: usize,
) -> Result<EmbeddingVector<S>, EmbeddingError> {
    let values = text_embedding_values(profile, max_values)?;
    let vectors = provider.embed_batch(&values)?;
    if vectors.len() != values.len() {
        return Err(EmbeddingError::provider(None, "batch size mismatch"));
    }
    let refs: Vec<&EmbeddingVector<S>> = vectors.iter().collect();
    Ok(mean_direction(&refs))
}

/// Z-score histogram over the fixed range `[-z_clip, z_clip]` with `bins`
/// equal-width bins; out-of-range scores land in the edge bins. A constant
/// column scores every value 0.
pub fn numeric_signature<S: Scalar>(
    values: &[S],
    bins: usize,
    z_clip: S,
) -> Result<NumericSignature<S>, EmbeddingError> {
    if values.is_empty() {
        return Err(EmbeddingError::EmptyColumn("numeric values".into()));
    }
    assert!(bins >= 1, "bin count must be positive");
    let n = S::of(values.len() as f64);
    let mean = values.iter().copied().sum::<S>() / n;
    let var = values
        .iter()
        .map(|x| (*x - mean) * (*x - mean))
        .sum::<S>()
        / n;
    let std = var.sqrt();
    let width = (z_clip + z_clip) / S::of(bins as f64);
    let mut counts = vec![0usize; bins];
    for x in values {
        let z = if std > S::zero() {
            (*x - mean) / std
        } else {
            S::zero()
        };
        let pos = ((z + z_clip) / width).floor();
        let idx = if pos < S::zero() {
            0
        } else {
            pos.to_usize().unwrap_or(bins - 1).min(bins - 1)
        };
        counts[idx] += 1;
    }
    Ok(NumericSignature {
        densities: counts.into_iter().map(|c| S::of(c as f64) / n).collect(),
    })
}

/// Signature of a numerical column profile.
pub fn column_signature<S: Scalar>(
    profile: &ColumnProfile,
    bins: usize,
    z_clip: f64,
) -> Result<NumericSignature<S>, EmbeddingError> {
    if profile.kind != DataKind::Numerical {
        return Err(EmbeddingError::WrongKind {
            column: profile.id.to_string(),
            kind: profile.kind,
            expected: DataKind::Numerical,
        });
    }
    let values: Vec<S> = profile.numeric_values.iter().map(|v| S::of(*v)).collect();
    numeric_signature(&values, bins, S::of(z_clip))
        .map_err(|_| EmbeddingError::EmptyColumn(profile.id.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cosine_basics() {
        let v = EmbeddingVector::<f64>::raw(vec![0.3, -1.2, 4.0]);
        assert_eq!(cosine_sim(&v, &v).unwrap(), 1.0);
        let e0 = EmbeddingVector::<f64>::raw(vec![1.0, 0.0]);
        let e1 = EmbeddingVector::<f64>::raw(vec![0.0, 1.0]);
        assert_eq!(cosine_sim(&e0, &e1).unwrap(), 0.0);
        let d = EmbeddingVector::<f64>::raw(vec![1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()]);
        assert_abs_diff_eq!(cosine_sim(&d, &e0).unwrap(), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-8);
        let z = EmbeddingVector::<f64>::raw(vec![0.0, 0.0]);
        assert_eq!(cosine_sim(&z, &e0).unwrap(), 0.0);
        let short = EmbeddingVector::<f64>::raw(vec![1.0]);
        assert!(matches!(
            cosine_sim(&short, &e0),
            Err(EmbeddingError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn cosine_works_for_f32() {
        let a = EmbeddingVector::<f32>::raw(vec![1.0, 2.0, 3.0]);
        assert_eq!(cosine_sim(&a, &a).unwrap(), 1.0f32);
    }

    #[test]
    fn signature_constant_column() {
        let s = numeric_signature(&[5.0f64, 5.0, 5.0], 4, 4.0).unwrap();
        // z = 0 sits on the lower edge of bin 2 of [-4,-2,0,2,4]
        assert_eq!(s.densities(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn signature_two_point_column() {
        let s = numeric_signature(&[-1.0f64, 1.0], 2, 4.0).unwrap();
        assert_eq!(s.densities(), &[0.5, 0.5]);
    }

    #[test]
    fn signature_single_value_and_clamping() {
        for b in [1, 3, 100] {
            let s = numeric_signature(&[42.0f64], b, 4.0).unwrap();
            assert_eq!(s.densities().iter().filter(|d| **d == 1.0).count(), 1);
        }
        // an extreme outlier clamps into the last bin
        let mut vals = vec![0.0f64; 99];
        vals.push(1e6);
        let s = numeric_signature(&vals, 10, 4.0).unwrap();
        assert_abs_diff_eq!(s.densities()[9], 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(s.densities().iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn signature_of_empty_column_fails() {
        assert!(matches!(
            numeric_signature::<f64>(&[], 4, 4.0),
            Err(EmbeddingError::EmptyColumn(_))
        ));
    }
}
