use serde::{Deserialize, Serialize};

use crate::error::{LtcsError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: u64,
    pub features: Vec<f64>,
}

/// One query with its candidates and binary booking labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryGroup {
    pub query_id: u64,
    pub query_features: Vec<f64>,
    pub items: Vec<Item>,
    pub labels: Vec<u8>,
}

impl QueryGroup {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().enumerate().filter(|(_, &y)| y == 1).map(|(i, _)| i)
    }

    /// Checks shape and label invariants. Training groups additionally need
    /// exactly one positive label.
    pub fn validate(&self, query_dim: usize, item_dim: usize, single_positive: bool) -> Result<()> {
        let q = self.query_id;
        if self.items.is_empty() {
            return Err(LtcsError::Data(format!("query {q} has no items")));
        }
        if self.labels.len() != self.items.len() {
            return Err(LtcsError::Data(format!(
                "query {q}: {} labels for {} items",
                self.labels.len(),
                self.items.len()
            )));
        }
        if let Some(y) = self.labels.iter().find(|&&y| y > 1) {
            return Err(LtcsError::Data(format!("query {q}: label {y} is not binary")));
        }
        if self.query_features.len() != query_dim {
            return Err(LtcsError::Config(format!(
                "query {q}: query feature length {} does not match configured {query_dim}",
                self.query_features.len()
            )));
        }
        if let Some(it) = self.items.iter().find(|it| it.features.len() != item_dim) {
            return Err(LtcsError::Config(format!(
                "query {q}, item {}: feature length {} does not match configured {item_dim}",
                it.item_id,
                it.features.len()
            )));
        }
        if single_positive && self.positives().count() != 1 {
            return Err(LtcsError::Data(format!(
                "query {q}: expected exactly one positive label, found {}",
                self.positives().count()
            )));
        }
        Ok(())
    }
}
