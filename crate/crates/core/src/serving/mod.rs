//! Leaf/master serving simulation: leaves own shards of the candidates and
//! run the initial ranker; the master only merges and re-ranks.

mod cluster;
mod wire;

pub use cluster::{Cluster, ClusterStats, FailurePolicy, LeafCounters, MasterCounters, Partitioning, ServeOutcome};
pub use wire::{
    RankedRecord, RerankResult, ScoreRequest, ScoreResponse, ScoredRecord, TailRecord, WireMessage, WIRE_VERSION,
};
