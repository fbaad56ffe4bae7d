//! Synthetic comparison-shopping data and the exact-enumeration check of the
//! pointwise/contextual factorization.

mod discrete;
mod generator;
mod io;

pub use discrete::{bayes_factorization_check, bundled_worlds, DiscreteWorld, EventTable, FactorizationReport, QueryTables};
pub use generator::{
    generate_dataset, generate_dataset_with, oracle_optimal_ndcg, simulate_query, ComparisonOperator, QueryTruth,
    WorldConfig,
};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, DatasetHeader, DATASET_FORMAT, DATASET_VERSION};
