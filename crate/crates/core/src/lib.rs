//! Static word vectors distilled from contextualised mention vectors.
//!
//! A [`MentionStore`] holds one vector per sampled mention of each target
//! word. [`aggregate`] turns it into a [`StaticEmbedding`], either by plain
//! averaging or after discarding idiosyncratic mentions: those whose `k`
//! nearest neighbours (cosine, over the mentions of every word) all belong
//! to the same word. The [`lexclass`] and [`similarity`] modules evaluate
//! the result.

pub mod aggregate;
pub mod embedding;
pub mod error;
pub mod knn;
pub mod lexclass;
pub mod similarity;
pub mod store;

pub use aggregate::{
    aggregate, aggregate_many, concat_normalized, nearest_words, Aggregation, AggregationMethod,
};
pub use embedding::{load_text_embedding, write_text_embedding, StaticEmbedding};
pub use error::{Error, Result};
pub use knn::{
    cosine, filter_idiosyncratic, filter_idiosyncratic_multi, filter_outliers, knn_all,
    FilterReport, NeighborResult,
};
pub use store::{read_store, write_store, MentionId, MentionStore, WordEntry};
