//! Reaction data: ingestion, splits, client partitioning, synthetic corpora,
//! and contamination.

mod contaminate;
mod io;
mod partition;
mod synthetic;

pub use contaminate::contaminate;
pub use io::{load_reactions, load_reactions_from_str, save_reactions, LoadSummary};
pub use partition::{partition_clients, split_dataset, PartitionSpec};
pub use synthetic::{generate_synthetic, ReactionFamily};

use std::collections::HashSet;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("file error: {0}")]
    File(#[from] std::io::Error),
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("split fractions must be non-negative and sum to 1")]
    BadFractions,
    #[error("partitioning by class requires class labels on every record")]
    MissingClassLabels,
    #[error("class `{0}` is not mapped to any client")]
    UnmappedClass(String),
    #[error("bad partition: {0}")]
    BadPartition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One single-product reaction. Both SMILES strings are canonical under this
/// repository's canonicalizer; `reactants` may be dot-joined fragments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReactionRecord {
    pub id: String,
    pub class: Option<String>,
    pub reactants: String,
    pub product: String,
}

/// Records plus a per-record split tag. Record order is stable: operations
/// tag or select records but never reorder them.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionDataset {
    records: Vec<ReactionRecord>,
    splits: Vec<Split>,
}

impl ReactionDataset {
    /// Build a dataset with every record tagged `Train`. Fails on duplicate
    /// record ids.
    pub fn new(records: Vec<ReactionRecord>) -> Result<ReactionDataset, DataError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(DataError::DuplicateId(r.id.clone()));
            }
        }
        let splits = vec![Split::Train; records.len()];
        Ok(ReactionDataset { records, splits })
    }

    pub(crate) fn with_splits(records: Vec<ReactionRecord>, splits: Vec<Split>) -> ReactionDataset {
        debug_assert_eq!(records.len(), splits.len());
        ReactionDataset { records, splits }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ReactionRecord] {
        &self.records
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn split_of(&self, index: usize) -> Split {
        self.splits[index]
    }

    pub fn of_split(&self, split: Split) -> impl Iterator<Item = &ReactionRecord> {
        self.records
            .iter()
            .zip(&self.splits)
            .filter(move |(_, &s)| s == split)
            .map(|(r, _)| r)
    }

    pub fn count_split(&self, split: Split) -> usize {
        self.splits.iter().filter(|&&s| s == split).count()
    }

    /// Distinct class labels in sorted order; `None` tracks unlabeled records.
    pub fn classes(&self) -> Vec<Option<String>> {
        let mut set: Vec<Option<String>> =
            self.records.iter().map(|r| r.class.clone()).collect();
        set.sort();
        set.dedup();
        set
    }
}
