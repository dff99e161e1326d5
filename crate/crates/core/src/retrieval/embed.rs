use std::time::Duration;

use thiserror::Error;

pub const DEFAULT_DIMENSION: usize = 256;

/// A fixed-length vector. Non-zero vectors built through [`EmbeddingVector::normalized`]
/// have unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    components: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Self {
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        EmbeddingVector { components, norm }
    }

    /// Scales to unit norm; the zero vector stays zero.
    pub fn normalized(components: Vec<f64>) -> Self {
        let v = Self::new(components);
        if v.norm == 0.0 {
            return v;
        }
        Self::new(v.components.iter().map(|c| c / v.norm).collect())
    }

    pub fn zeros(dimension: usize) -> Self {
        Self::new(vec![0.0; dimension])
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_zero(&self) -> bool {
        self.norm == 0.0
    }
}

/// Cosine similarity, clamped to [-1, 1]. Zero if either side is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("embedding provider {provider} failed after {attempts} attempt(s): {message}")]
pub struct ProviderError {
    pub provider: String,
    pub message: String,
    pub attempts: u32,
    /// Whether another attempt could succeed.
    pub retryable: bool,
    /// Server-suggested wait before the next attempt, if any.
    pub retry_after: Option<Duration>,
}

impl ProviderError {
    pub fn fatal(provider: &str, message: impl Into<String>) -> Self {
        ProviderError { provider: provider.to_string(), message: message.into(), attempts: 1, retryable: false, retry_after: None }
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError>;
}

/// Lowercased runs of alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Feature hashing: each token adds 1 to bucket `fnv1a64(token) mod D`,
/// then the counts are L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        HashingEmbedder { dimension }
    }

    pub fn embed_text(&self, text: &str) -> EmbeddingVector {
        let mut counts = vec![0.0; self.dimension];
        for token in tokenize(text) {
            counts[(fnv1a64(token.as_bytes()) % self.dimension as u64) as usize] += 1.0;
        }
        EmbeddingVector::normalized(counts)
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn name(&self) -> &str {
        "hashing-fnv1a"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        Ok(self.embed_text(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn bucket_assignments() {
        let bucket = |t: &str| fnv1a64(t.as_bytes()) % 256;
        assert_eq!(
            ["hdl", "cholesterol", "level", "growth", "hormone", "children"].map(bucket),
            [63, 151, 157, 102, 211, 178]
        );
    }

    /// Buckets are pairwise distinct, so the cosines are 2/sqrt(2*3) and 0.
    #[test]
    fn related_text_scores_higher() {
        let e = HashingEmbedder::default();
        let q = e.embed_text("HDL cholesterol");
        let near = cosine(q.components(), e.embed_text("HDL cholesterol level").components());
        let far = cosine(q.components(), e.embed_text("growth hormone children").components());
        assert!((near - 2.0 / 6f64.sqrt()).abs() < 1e-12);
        assert!((near - 0.816496580927726).abs() < 1e-12);
        assert_eq!(far, 0.0);
        assert!(near > far);
    }

    #[test]
    fn empty_text_is_zero() {
        let v = HashingEmbedder::default().embed_text(" ,; ");
        assert!(v.is_zero());
        assert_eq!(v.dimension(), 256);
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("HDL-C, <40 mg/dL").collect::<Vec<_>>(), ["hdl", "c", "40", "mg", "dl"]);
    }

    proptest! {
        #[test]
        fn unit_norm_and_deterministic(text in "\\PC{0,80}") {
            let e = HashingEmbedder::default();
            let a = e.embed_text(&text);
            prop_assert_eq!(&a, &e.embed_text(&text));
            if tokenize(&text).next().is_some() {
                prop_assert!((a.norm() - 1.0).abs() < 1e-9);
            } else {
                prop_assert!(a.is_zero());
            }
        }

        #[test]
        fn cosine_symmetric_and_bounded(a in "[a-z ]{0,40}", b in "[a-z ]{0,40}") {
            let e = HashingEmbedder::new(16);
            let (x, y) = (e.embed_text(&a), e.embed_text(&b));
            let s = cosine(x.components(), y.components());
            prop_assert_eq!(s, cosine(y.components(), x.components()));
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }
}
