pub mod corpus;
pub mod decimal;
pub mod extraction;
pub mod fusion;
pub mod graph;
pub mod ontology;
pub mod pipeline;
pub mod qa;
pub mod range;
pub mod retrieval;
pub mod review;
pub mod tsv;

/// Book chapters, compiled so their snippets stay current.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/ranges.md")]
    mod ranges {}
    #[doc = include_str!("../../../book/src/ontology.md")]
    mod ontology {}
    #[doc = include_str!("../../../book/src/retrieval.md")]
    mod retrieval {}
    #[doc = include_str!("../../../book/src/extraction.md")]
    mod extraction {}
    #[doc = include_str!("../../../book/src/fusion.md")]
    mod fusion {}
    #[doc = include_str!("../../../book/src/graph.md")]
    mod graph {}
    #[doc = include_str!("../../../book/src/review.md")]
    mod review {}
    #[doc = include_str!("../../../book/src/qa.md")]
    mod qa {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
