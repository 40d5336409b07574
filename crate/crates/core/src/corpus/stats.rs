use std::collections::HashSet;
use std::fmt::Write as _;

use super::{CorpusError, InteractionLog};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_actions: usize,
    /// `1 − actions / (users × items)`.
    pub sparsity: f64,
}

impl DatasetStats {
    pub fn from_counts(n_users: usize, n_items: usize, n_actions: usize) -> Result<Self, CorpusError> {
        if n_users == 0 || n_items == 0 {
            return Err(CorpusError::UndefinedSparsity);
        }
        let cells = n_users as f64 * n_items as f64;
        Ok(Self {
            n_users,
            n_items,
            n_actions,
            sparsity: 1.0 - n_actions as f64 / cells,
        })
    }

    /// Sparsity as a percentage string with two decimals, e.g. `99.93`.
    pub fn sparsity_percent(&self) -> String {
        format!("{:.2}", self.sparsity * 100.0)
    }

    /// `key<TAB>value` lines.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n_users\t{}", self.n_users);
        let _ = writeln!(s, "n_items\t{}", self.n_items);
        let _ = writeln!(s, "n_actions\t{}", self.n_actions);
        let _ = writeln!(s, "sparsity\t{:?}", self.sparsity);
        let _ = writeln!(s, "sparsity_percent\t{}", self.sparsity_percent());
        s
    }
}

/// Distinct users, distinct items and total events of `log`.
pub fn dataset_stats(log: &InteractionLog) -> Result<DatasetStats, CorpusError> {
    let users: HashSet<&str> = log.events.iter().map(|e| e.user_id.as_str()).collect();
    let items: HashSet<&str> = log.events.iter().map(|e| e.item_id.as_str()).collect();
    DatasetStats::from_counts(users.len(), items.len(), log.len())
}
