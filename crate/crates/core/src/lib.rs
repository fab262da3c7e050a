//! Visual-context caption relatedness toolkit.
//!
//! Builds caption/visual-context relatedness datasets, trains a small
//! convolutional relatedness head, re-ranks beam-search captions by visual
//! relatedness, computes caption quality, diversity and gender-bias
//! statistics, and runs exact cosine search from visual context to captions.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the common `f64` instantiation. Bias ratios are generic
//! over [`bias::CountRatio`] and can be computed as exact fractions.

pub mod bias;
pub mod capmetrics;
pub mod corpus;
pub mod dataset_builder;
pub mod error;
pub mod relatedness_model;
pub mod reranker;
pub mod scalar;
pub mod scorer;
pub mod textnorm;
pub mod toy_embedder;
pub mod vcsearch;

pub use corpus::{
    CandidateCaption, CandidateSet, Detection, EmbeddingTable, ImageRecord, RelatednessRecord,
    Source,
};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use textnorm::{tokenize, GenderLexicon, TokenSeq};

pub type Embeddings = EmbeddingTable<f64>;
pub type Embeddings32 = EmbeddingTable<f32>;
pub type CnnParams64 = relatedness_model::CnnParams<f64>;
pub type CnnParams32 = relatedness_model::CnnParams<f32>;
pub type SequenceInput64 = relatedness_model::SequenceInput<f64>;
pub type SearchIndex64 = vcsearch::SearchIndex<f64>;
pub type SearchIndex32 = vcsearch::SearchIndex<f32>;
pub type Score64 = scorer::RelatednessScore<f64>;
/// Exact ratio type for bias statistics.
pub type ExactRatio = num_rational::Ratio<u64>;
