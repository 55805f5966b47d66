//! Single-bid deviation checks: rerun a mechanism with one user's bid changed and
//! compare that user's utility for the task with its truthful utility.

use serde::{Deserialize, Serialize};

use super::{AuctionError, AuctionOutcome, BidMatrix, Mechanism, Result, RoundKind};

/// Gains below this are treated as ties.
pub const UTILITY_TOL: f64 = 1e-12;

/// How the deviating bid was resolved in the deviated run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviationRoundType {
    Normal,
    Reallocation,
    Fractional,
    NotWinning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub truthful_utility: f64,
    pub deviated_utility: f64,
    pub profitable: bool,
    pub round_type: DeviationRoundType,
    /// Truthful max-min objective minus the deviated one.
    pub maxmin_gap: f64,
}

/// `p - x c` for user `i` on task `s`; the payment already reflects any fractional share.
pub fn utility(outcome: &AuctionOutcome, costs: &[Vec<f64>], user: usize, task: usize) -> f64 {
    let x = outcome.participation[user][task];
    if x > 0.0 {
        outcome.payments[user][task] - x * costs[user][task]
    } else {
        0.0
    }
}

pub fn round_type(outcome: &AuctionOutcome, user: usize, task: usize) -> DeviationRoundType {
    let x = outcome.participation[user][task];
    if x <= 0.0 {
        return DeviationRoundType::NotWinning;
    }
    if x < 1.0 {
        return DeviationRoundType::Fractional;
    }
    match outcome.admitted_round[user][task].and_then(|t| outcome.rounds.get(t - 1)) {
        Some(RoundKind::Reallocation) => DeviationRoundType::Reallocation,
        // A shortfall round is the terminal fractional branch with no surplus to share.
        Some(RoundKind::Fractional | RoundKind::Shortfall) => DeviationRoundType::Fractional,
        _ => DeviationRoundType::Normal,
    }
}

fn compare(
    truthful: &AuctionOutcome,
    deviated: &AuctionOutcome,
    costs: &[Vec<f64>],
    user: usize,
    task: usize,
) -> DeviationReport {
    let tu = utility(truthful, costs, user, task);
    let du = utility(deviated, costs, user, task);
    DeviationReport {
        truthful_utility: tu,
        deviated_utility: du,
        profitable: du > tu + UTILITY_TOL,
        round_type: round_type(deviated, user, task),
        maxmin_gap: truthful.maxmin() - deviated.maxmin(),
    }
}

/// Runs `mechanism` on the truthful bids (`b = c`) and again with `user`'s bid for `task`
/// replaced by `deviated_bid`.
pub fn deviation_harness(
    mechanism: Mechanism,
    matrix: &BidMatrix,
    budget: f64,
    user: usize,
    task: usize,
    deviated_bid: f64,
) -> Result<DeviationReport> {
    let costs = matrix
        .costs
        .as_ref()
        .ok_or_else(|| AuctionError::InvalidInput("deviation checks need private costs".into()))?;
    if user >= matrix.n_users() || task >= matrix.n_tasks() {
        return Err(AuctionError::InvalidInput(format!(
            "user {user} / task {task} out of range"
        )));
    }
    if !(deviated_bid.is_finite() && deviated_bid >= 0.0) {
        return Err(AuctionError::InvalidInput(format!(
            "deviated bid must be finite and non-negative, got {deviated_bid}"
        )));
    }
    let truthful_bids = BidMatrix {
        bids: costs.clone(),
        costs: Some(costs.clone()),
    };
    let truthful = mechanism.run(&truthful_bids, budget)?;
    let deviated = mechanism.run(&truthful_bids.with_bid(user, task, deviated_bid), budget)?;
    Ok(compare(&truthful, &deviated, costs, user, task))
}

/// Every deviation of `user` on `task` to a bid in `grid`, reusing one truthful run.
pub fn deviation_sweep(
    mechanism: Mechanism,
    costs: &[Vec<f64>],
    budget: f64,
    user: usize,
    task: usize,
    grid: &[f64],
) -> Result<Vec<(f64, DeviationReport)>> {
    let truthful_bids = BidMatrix::truthful(costs.to_vec())?;
    let truthful = mechanism.run(&truthful_bids, budget)?;
    grid.iter()
        .map(|&b| {
            let deviated = mechanism.run(&truthful_bids.with_bid(user, task, b), budget)?;
            Ok((b, compare(&truthful, &deviated, costs, user, task)))
        })
        .collect()
}
