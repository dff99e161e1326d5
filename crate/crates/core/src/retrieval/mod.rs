mod embed;
mod index;
mod persist;

pub use embed::{
    cosine, fnv1a64, tokenize, EmbeddingProvider, EmbeddingVector, HashingEmbedder, ProviderError, DEFAULT_DIMENSION,
};
pub use index::{IndexError, IndexedChunk, SearchHit, VectorIndex};
pub use persist::MAGIC;

pub const DEFAULT_TOP_K: usize = 8;
