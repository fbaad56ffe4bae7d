//! The co-trained ranker: pointwise initial MLP, top-K selection, encoder
//! over the selected embeddings, and the re-ranking MLP.

mod config;
mod data;
pub(crate) mod network;

pub use config::LtcsConfig;
pub use data::{Item, QueryGroup};
pub use network::{
    final_ranking, select_top_k, InitialOutput, InitialRanker, LtcsModel, RankerOutputs, RerankOutput, Reranker,
};
