//! Budget-feasible recruitment auctions.
//!
//! Users bid `b[i][s]` to train task `s`; the server has a total budget `B`. Three
//! mechanisms are provided:
//!
//! * [`budget_fair_auction`]: a proportional-share auction per task with budget `B / S`.
//! * [`gmmfair`]: the greedy max-min optimum that pays winners their bids (not truthful).
//! * [`maxmin_fair_auction`]: rounds of proportional-share admissions with budget moved
//!   between tasks when one runs short, ending with an optional fractional admission.
//!
//! [`deviation`] evaluates single-bid deviations and [`takeup`] estimates how likely a
//! bidder is to be recruited.

mod bids;
pub mod deviation;
mod gmmfair;
mod maxmin;
mod proportional;
pub mod takeup;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bids::BidMatrix;
pub use deviation::{deviation_harness, DeviationReport, DeviationRoundType};
pub use gmmfair::gmmfair;
pub use maxmin::maxmin_fair_auction;
pub use proportional::{budget_fair_auction, proportional_share, ShareOutcome};
pub use takeup::{join_probability, no_user_probability_exp, BidDistribution, JoinEstimate};

/// Slack used for every budget comparison.
pub const BUDGET_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuctionError {
    #[error("invalid bids: {0}")]
    InvalidBids(String),
    #[error("budget must be finite and non-negative, got {0}")]
    InvalidBudget(f64),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, AuctionError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    #[serde(rename = "budget-fair")]
    BudgetFair,
    #[serde(rename = "gmmfair")]
    GmmFair,
    #[serde(rename = "maxmin")]
    MaxMin,
}

impl Mechanism {
    pub fn run(self, bids: &BidMatrix, budget: f64) -> Result<AuctionOutcome> {
        match self {
            Mechanism::BudgetFair => budget_fair_auction(bids, budget),
            Mechanism::GmmFair => gmmfair(bids, budget),
            Mechanism::MaxMin => maxmin_fair_auction(bids, budget),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::BudgetFair => "budget-fair",
            Mechanism::GmmFair => "gmmfair",
            Mechanism::MaxMin => "maxmin",
        }
    }
}

impl std::str::FromStr for Mechanism {
    type Err = AuctionError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "budget-fair" => Ok(Mechanism::BudgetFair),
            "gmmfair" => Ok(Mechanism::GmmFair),
            "maxmin" => Ok(Mechanism::MaxMin),
            other => Err(AuctionError::InvalidInput(format!(
                "unknown mechanism `{other}` (expected budget-fair, gmmfair or maxmin)"
            ))),
        }
    }
}

/// How a mechanism round was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundKind {
    /// Every live task admitted its next bidder from its own budget.
    Normal,
    /// Budget moved from tasks with surplus to tasks that fell short.
    Reallocation,
    /// Short tasks received a partial admission and the auction ended.
    Fractional,
    /// Short tasks could not be helped and the auction ended.
    Shortfall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Admit {
        round: usize,
        task: usize,
        user: usize,
        bid: f64,
        threshold: f64,
    },
    Reject {
        round: usize,
        task: usize,
        user: usize,
        bid: f64,
        threshold: f64,
    },
    Reallocate {
        round: usize,
        shortfall: f64,
        surplus: f64,
        /// `(task, change in budget)`, negative for donors.
        transfers: Vec<(usize, f64)>,
    },
    Fractional {
        round: usize,
        task: usize,
        user: usize,
        payment: f64,
        fraction: f64,
    },
    Exhausted {
        round: usize,
        task: usize,
    },
    End {
        round: usize,
        reason: String,
    },
}

/// Result of running a mechanism. Matrices are indexed `[user][task]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub mechanism: Mechanism,
    pub budget: f64,
    /// 1 for full winners, a value in (0, 1) for a fractional winner, 0 otherwise.
    pub participation: Vec<Vec<f64>>,
    pub payments: Vec<Vec<f64>>,
    /// Budget each task ended with (payments it made, including fractional ones).
    pub task_budgets: Vec<f64>,
    pub spent: f64,
    /// Kind of each round, `rounds[t - 1]` for round `t`.
    pub rounds: Vec<RoundKind>,
    /// Round at which each user was admitted to each task.
    pub admitted_round: Vec<Vec<Option<usize>>>,
    pub trace: Vec<TraceEvent>,
}

impl AuctionOutcome {
    pub(crate) fn empty(mechanism: Mechanism, budget: f64, n_users: usize, n_tasks: usize) -> Self {
        Self {
            mechanism,
            budget,
            participation: vec![vec![0.0; n_tasks]; n_users],
            payments: vec![vec![0.0; n_tasks]; n_users],
            task_budgets: vec![0.0; n_tasks],
            spent: 0.0,
            rounds: Vec::new(),
            admitted_round: vec![vec![None; n_tasks]; n_users],
            trace: Vec::new(),
        }
    }

    pub fn n_users(&self) -> usize {
        self.participation.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.task_budgets.len()
    }

    /// Take-up per task: `sum_i x[i][s]`.
    pub fn takeup(&self) -> Vec<f64> {
        (0..self.n_tasks())
            .map(|s| self.participation.iter().map(|row| row[s]).sum())
            .collect()
    }

    /// Number of full winners per task.
    pub fn full_winners(&self) -> Vec<usize> {
        (0..self.n_tasks())
            .map(|s| {
                self.participation
                    .iter()
                    .filter(|row| row[s] >= 1.0)
                    .count()
            })
            .collect()
    }

    /// `min_s sum_i x[i][s]`.
    pub fn maxmin(&self) -> f64 {
        self.takeup().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn total_payments(&self) -> f64 {
        self.payments.iter().flatten().sum()
    }

    /// Total paid to participating users never exceeds the budget.
    pub fn is_budget_feasible(&self) -> bool {
        let paid: f64 = self
            .payments
            .iter()
            .zip(&self.participation)
            .flat_map(|(p, x)| {
                p.iter()
                    .zip(x)
                    .map(|(p, x)| if *x > 0.0 { *p } else { 0.0 })
            })
            .sum();
        paid <= self.budget + BUDGET_TOL
    }

    /// Every participating user is paid at least its bid scaled by its participation.
    pub fn is_individually_rational(&self, bids: &BidMatrix) -> bool {
        self.participation.iter().enumerate().all(|(i, row)| {
            row.iter()
                .enumerate()
                .all(|(s, &x)| self.payments[i][s] >= bids.bid(i, s) * x - 1e-12)
        })
    }

    /// At most one fractional entry per task.
    pub fn fractional_entries_ok(&self) -> bool {
        (0..self.n_tasks()).all(|s| {
            self.participation
                .iter()
                .filter(|row| row[s] > 0.0 && row[s] < 1.0)
                .count()
                <= 1
        })
    }
}
