use serde::{Deserialize, Serialize};

use super::{AuctionError, Result};

/// Bids `b[i][s]` of user `i` for task `s`, with optional private costs of the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BidMatrix {
    pub bids: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<Vec<f64>>>,
}

fn check_matrix(name: &str, m: &[Vec<f64>]) -> Result<usize> {
    let n_tasks = m.first().map_or(0, Vec::len);
    for (i, row) in m.iter().enumerate() {
        if row.len() != n_tasks {
            return Err(AuctionError::InvalidBids(format!(
                "{name} row {i} has {} entries, expected {n_tasks}",
                row.len()
            )));
        }
        for (s, &v) in row.iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(AuctionError::InvalidBids(format!(
                    "{name}[{i}][{s}] must be finite and non-negative, got {v}"
                )));
            }
        }
    }
    Ok(n_tasks)
}

impl BidMatrix {
    pub fn new(bids: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self { bids, costs: None };
        m.validate()?;
        Ok(m)
    }

    /// Bids equal to the costs.
    pub fn truthful(costs: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self {
            bids: costs.clone(),
            costs: Some(costs),
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds a matrix from per-task bid columns of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n_users = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_users) {
            return Err(AuctionError::InvalidBids(
                "every task column needs one bid per user".into(),
            ));
        }
        Self::new(
            (0..n_users)
                .map(|i| columns.iter().map(|c| c[i]).collect())
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n_tasks = check_matrix("bids", &self.bids)?;
        if let Some(costs) = &self.costs {
            if costs.len() != self.bids.len() {
                return Err(AuctionError::InvalidBids(
                    "costs must have one row per user".into(),
                ));
            }
            let ct = check_matrix("costs", costs)?;
            if !costs.is_empty() && ct != n_tasks {
                return Err(AuctionError::InvalidBids(
                    "costs and bids differ in task count".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn n_users(&self) -> usize {
        self.bids.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.bids.first().map_or(0, Vec::len)
    }

    pub fn bid(&self, user: usize, task: usize) -> f64 {
        self.bids[user][task]
    }

    pub fn column(&self, task: usize) -> Vec<f64> {
        self.bids.iter().map(|row| row[task]).collect()
    }

    pub fn is_truthful(&self) -> bool {
        self.costs.as_ref().is_some_and(|c| *c == self.bids)
    }

    /// Users of `task` sorted by ascending bid, ties by ascending user id.
    pub fn ascending(&self, task: usize) -> Vec<usize> {
        ascending_order(&self.column(task))
    }

    /// Copy with one bid replaced.
    pub fn with_bid(&self, user: usize, task: usize, bid: f64) -> Self {
        let mut m = self.clone();
        m.bids[user][task] = bid;
        m
    }
}

pub(crate) fn ascending_order(bids: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..bids.len()).collect();
    order.sort_by(|&a, &b| bids[a].total_cmp(&bids[b]).then(a.cmp(&b)));
    order
}
