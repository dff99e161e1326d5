mod attributes;
mod entity;
mod fuse;
mod priority;

pub use attributes::{
    equivalent, integrate_attributes, resolve_conflict, standardize, to_attribute_value, winning_value, IncomingAttribute,
    Integration,
};
pub use entity::{clean_mention, entity_id, fold_mention, normalize_mention, AliasTable, CanonicalEntity};
pub use fuse::{
    dedupe, fuse, fuse_into_store, normalize_item, Disposition, EntityMerge, FusionContext, FusionItem, FusionResources, FusionReport,
    NormalizedTriple, SourceCatalog, UNKNOWN_ORG,
};
pub use priority::SourcePriority;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FusionError {
    #[error("line {line}: {message}")]
    Table { line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}
