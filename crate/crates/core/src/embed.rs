//! Deterministic text embeddings and cosine similarity.
//!
//! Text is case-folded and split into alphanumeric words. Every word and every
//! boundary-padded character n-gram of every word is hashed (seeded FNV-1a)
//! into a signed bucket; the accumulated vector is L2-normalized. Whole words
//! carry most of the weight, so instructions sharing an operator but naming
//! different multi-word entities stay apart while short keyword arguments
//! (`Lookup[...]`) pull together.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

const WORD_WEIGHT: f64 = 1.0;
const NGRAM_WEIGHT: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector<F> {
    pub values: Vec<F>,
    /// False only for the zero vector produced by empty text.
    pub valid: bool,
}

impl<F: Scalar> EmbeddingVector<F> {
    pub fn zeros(dimension: usize) -> Self {
        Self { values: vec![F::zero(); dimension], valid: false }
    }

    /// Wraps raw values; validity is "has non-zero norm".
    pub fn from_values(values: Vec<F>) -> Self {
        let valid = values.iter().any(|v| !v.is_zero());
        Self { values, valid }
    }

    /// Scales to unit length. Zero vectors stay zero and invalid.
    pub fn normalized(values: Vec<F>) -> Self {
        let n = dot(&values, &values).sqrt();
        if n.is_zero() || !n.is_finite() {
            return Self { valid: false, ..Self::from_values(vec![F::zero(); values.len()]) };
        }
        Self { values: values.into_iter().map(|v| v / n).collect(), valid: true }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> F {
        dot(&self.values, &self.values).sqrt()
    }

    pub fn neg(&self) -> Self {
        Self { values: self.values.iter().map(|&v| -v).collect(), valid: self.valid }
    }

    pub fn cast<G: Scalar>(&self) -> EmbeddingVector<G> {
        EmbeddingVector { values: self.values.iter().map(|v| G::of(v.as_f64())).collect(), valid: self.valid }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub dimension: usize,
    pub seed: u64,
    /// Inclusive character n-gram lengths.
    pub ngram_range: (usize, usize),
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self { dimension: 256, seed: 0x1f2e_3d4c_5b6a_7988, ngram_range: (3, 5) }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension < 8 {
            return Err(Error::Config(format!("embedding dimension must be >= 8, got {}", self.dimension)));
        }
        let (lo, hi) = self.ngram_range;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("invalid n-gram range ({lo}, {hi})")));
        }
        Ok(())
    }
}

/// Something that maps text to a fixed-length vector. The hashing embedder is
/// the only implementation shipped; a learned model can sit behind the same
/// trait.
pub trait TextEmbedder {
    fn dimension(&self) -> usize;
    fn embed<F: Scalar>(&self, text: &str) -> EmbeddingVector<F>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HashingEmbedder {
    pub config: EmbedderConfig,
}

impl HashingEmbedder {
    pub fn new(config: EmbedderConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

impl TextEmbedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed<F: Scalar>(&self, text: &str) -> EmbeddingVector<F> {
        embed_text(text, &self.config)
    }
}

pub fn embed_text<F: Scalar>(text: &str, config: &EmbedderConfig) -> EmbeddingVector<F> {
    let dim = config.dimension;
    let mut acc = vec![0.0f64; dim];
    let (lo, hi) = config.ngram_range;
    let mut any = false;

    for word in words(text) {
        any = true;
        let (i, sign) = bucket(config.seed, b'w', word.as_bytes(), dim);
        acc[i] += sign * WORD_WEIGHT;

        let padded: Vec<char> = std::iter::once('<').chain(word.chars()).chain(std::iter::once('>')).collect();
        let mut gram = String::new();
        for n in lo..=hi {
            if n > padded.len() {
                break;
            }
            for window in padded.windows(n) {
                gram.clear();
                gram.extend(window);
                let (i, sign) = bucket(config.seed, b'c', gram.as_bytes(), dim);
                acc[i] += sign * NGRAM_WEIGHT;
            }
        }
    }

    if !any {
        return EmbeddingVector::zeros(dim);
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    EmbeddingVector { values: acc.into_iter().map(|v| F::of(v / norm)).collect(), valid: true }
}

/// Lower-cased alphanumeric runs of `text`.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(|w| w.to_lowercase())
}

fn bucket(seed: u64, kind: u8, bytes: &[u8], dim: usize) -> (usize, f64) {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in seed.to_le_bytes().iter().chain(std::iter::once(&kind)).chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    // fold the high bits in; FNV's low bits are weak for short keys
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    (((h ^ (h >> 29)) % dim as u64) as usize, sign)
}

/// Cosine similarity. Returns 0 when either side is invalid and exactly 1 for
/// bit-identical valid inputs.
pub fn cosine<F: Scalar>(a: &EmbeddingVector<F>, b: &EmbeddingVector<F>) -> Result<F> {
    if a.dimension() != b.dimension() {
        return Err(Error::Config(format!(
            "cosine of vectors with different dimensions ({} vs {})",
            a.dimension(),
            b.dimension()
        )));
    }
    Ok(cosine_unchecked(a, b))
}

pub(crate) fn cosine_unchecked<F: Scalar>(a: &EmbeddingVector<F>, b: &EmbeddingVector<F>) -> F {
    if !a.valid || !b.valid {
        return F::zero();
    }
    if a.values == b.values {
        return F::one();
    }
    let na = a.norm();
    let nb = b.norm();
    if na.is_zero() || nb.is_zero() {
        return F::zero();
    }
    let c = dot(&a.values, &b.values) / (na * nb);
    c.max(-F::one()).min(F::one())
}

/// Arithmetic mean of question embeddings; deliberately not re-normalized.
pub fn task_centroid<F: Scalar>(vectors: &[&EmbeddingVector<F>]) -> Result<EmbeddingVector<F>> {
    let first = vectors.first().ok_or_else(|| Error::Precondition("centroid of an empty list".into()))?;
    let dim = first.dimension();
    let mut acc = vec![F::zero(); dim];
    for v in vectors {
        if v.dimension() != dim {
            return Err(Error::Config("centroid over mixed dimensions".into()));
        }
        for (a, &x) in acc.iter_mut().zip(&v.values) {
            *a = *a + x;
        }
    }
    let n = F::of(vectors.len() as f64);
    Ok(EmbeddingVector::from_values(acc.into_iter().map(|a| a / n).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> EmbedderConfig {
        EmbedderConfig::default()
    }

    fn e(text: &str) -> EmbeddingVector<f64> {
        embed_text(text, &cfg())
    }

    #[test]
    fn deterministic() {
        let a: EmbeddingVector<f32> = embed_text("abc", &cfg());
        let b: EmbeddingVector<f32> = embed_text("abc", &cfg());
        assert_eq!(a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn empty_text_is_invalid_zero() {
        let v = e("");
        assert!(!v.valid);
        assert!(v.values.iter().all(|x| *x == 0.0));
        let w = e("  \t ");
        assert!(!w.valid);
        assert_eq!(cosine(&v, &e("abc")).unwrap(), 0.0);
    }

    #[test]
    fn case_and_whitespace_folded() {
        assert_eq!(e("Search[Ed   Wood]"), e("search[ed wood]"));
    }

    #[test]
    fn unit_norm() {
        for t in ["a", "Search[Ed Wood]", "What is the nationality of Scott Derrickson?"] {
            assert!((e(t).norm() - 1.0).abs() < 1e-6);
            let v32: EmbeddingVector<f32> = embed_text(t, &cfg());
            assert!((v32.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn search_instructions_cluster_apart_from_lookups() {
        let ed = e("Search[Ed Wood]");
        let scott = e("Search[Scott Derrickson]");
        let lookup = e("Lookup[nationality]");
        let same_op = cosine(&ed, &scott).unwrap();
        let other_op = cosine(&ed, &lookup).unwrap();
        assert!(same_op > other_op, "{same_op} vs {other_op}");
    }

    #[test]
    fn cosine_analytic_cases() {
        let v = e("Lookup[nationality]");
        assert_eq!(cosine(&v, &v).unwrap(), 1.0);
        assert!((cosine(&v, &v.neg()).unwrap() + 1.0).abs() < 1e-12);
        let a = EmbeddingVector::from_values(vec![1.0f64, 0.0, 0.0]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let b = EmbeddingVector::from_values(vec![s, s, 0.0]);
        assert!((cosine(&a, &b).unwrap() - 0.70710678).abs() < 1e-8);
    }

    #[test]
    fn cosine_dimension_mismatch_is_config_error() {
        let a = EmbeddingVector::from_values(vec![1.0f64, 0.0]);
        let b = EmbeddingVector::from_values(vec![1.0f64, 0.0, 0.0]);
        assert!(matches!(cosine(&a, &b), Err(Error::Config(_))));
    }

    #[test]
    fn centroid_cases() {
        let v = e("Search[Ed Wood]");
        assert_eq!(task_centroid(&[&v]).unwrap().values, v.values);
        let z = task_centroid(&[&v, &v.neg()]).unwrap();
        assert!(z.values.iter().all(|x| *x == 0.0));
        assert!(!z.valid);

        let a = EmbeddingVector::from_values(vec![1.0f64, 2.0, 3.0]);
        let b = EmbeddingVector::from_values(vec![4.0f64, 0.0, -3.0]);
        let c = EmbeddingVector::from_values(vec![1.0f64, 1.0, 3.0]);
        let m = task_centroid(&[&a, &b, &c]).unwrap();
        assert_eq!(m.values, vec![2.0, 1.0, 1.0]);
        assert!(matches!(task_centroid::<f64>(&[]), Err(Error::Precondition(_))));
    }

    #[test]
    fn config_validation() {
        assert!(EmbedderConfig { dimension: 4, ..cfg() }.validate().is_err());
        assert!(EmbedderConfig { ngram_range: (5, 3), ..cfg() }.validate().is_err());
        assert!(cfg().validate().is_ok());
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_bounded(a in "[a-zA-Z \\[\\]]{0,40}", b in "[a-zA-Z \\[\\]]{0,40}") {
            let (va, vb) = (e(&a), e(&b));
            let ab = cosine(&va, &vb).unwrap();
            let ba = cosine(&vb, &va).unwrap();
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }
}
