use super::bids::ascending_order;
use super::{
    AuctionError, AuctionOutcome, BidMatrix, Mechanism, Result, RoundKind, TraceEvent, BUDGET_TOL,
};

/// Winners of a single-task proportional-share auction.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareOutcome {
    /// Winning indices in ascending bid order.
    pub winners: Vec<usize>,
    /// Common payment to every winner.
    pub payment: f64,
    /// Index of the first losing bid, if any bid lost.
    pub first_loser: Option<usize>,
}

/// Proportional share for one task.
///
/// With bids sorted ascending, the first loser is the smallest position `k` (1-based)
/// with `b_k > budget / k`. Everyone before it wins and is paid
/// `min(budget / (k - 1), b_k)`, the highest bid a winner could have made and still won.
/// When no bid loses, all `n` bidders win and are paid `budget / n`.
pub fn proportional_share(bids: &[f64], budget: f64) -> ShareOutcome {
    let none = ShareOutcome {
        winners: Vec::new(),
        payment: 0.0,
        first_loser: None,
    };
    if bids.is_empty() || budget.is_nan() || budget <= 0.0 {
        return ShareOutcome {
            first_loser: ascending_order(bids).first().copied(),
            ..none
        };
    }
    let order = ascending_order(bids);
    let loser_pos = order
        .iter()
        .enumerate()
        .position(|(pos, &i)| bids[i] * (pos + 1) as f64 > budget + BUDGET_TOL);
    let n_win = loser_pos.unwrap_or(order.len());
    let cap = loser_pos.map_or(f64::INFINITY, |p| bids[order[p]]);
    ShareOutcome {
        winners: order[..n_win].to_vec(),
        payment: if n_win == 0 {
            0.0
        } else {
            (budget / n_win as f64).min(cap)
        },
        first_loser: loser_pos.map(|p| order[p]),
    }
}

fn check_budget(budget: f64) -> Result<()> {
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(AuctionError::InvalidBudget(budget));
    }
    Ok(())
}

pub(crate) fn prepare(bids: &BidMatrix, budget: f64) -> Result<()> {
    bids.validate()?;
    check_budget(budget)?;
    if bids.n_users() > 0 && bids.n_tasks() == 0 {
        return Err(AuctionError::InvalidBids("bid matrix has no tasks".into()));
    }
    Ok(())
}

/// Runs [`proportional_share`] independently for every task with budget `B / S`.
pub fn budget_fair_auction(bids: &BidMatrix, budget: f64) -> Result<AuctionOutcome> {
    prepare(bids, budget)?;
    let (n, s_count) = (bids.n_users(), bids.n_tasks());
    let mut out = AuctionOutcome::empty(Mechanism::BudgetFair, budget, n, s_count);
    if budget == 0.0 || n == 0 {
        return Ok(out);
    }
    let share = budget / s_count as f64;
    let mut max_rounds = 0;
    for s in 0..s_count {
        let col = bids.column(s);
        let res = proportional_share(&col, share);
        for (pos, &i) in res.winners.iter().enumerate() {
            out.participation[i][s] = 1.0;
            out.payments[i][s] = res.payment;
            out.admitted_round[i][s] = Some(pos + 1);
            out.trace.push(TraceEvent::Admit {
                round: pos + 1,
                task: s,
                user: i,
                bid: col[i],
                threshold: share / (pos + 1) as f64,
            });
        }
        if let Some(i) = res.first_loser {
            let round = res.winners.len() + 1;
            out.trace.push(TraceEvent::Reject {
                round,
                task: s,
                user: i,
                bid: col[i],
                threshold: share / round as f64,
            });
        }
        if !res.winners.is_empty() {
            out.task_budgets[s] = res.payment * res.winners.len() as f64;
        }
        max_rounds = max_rounds.max(res.winners.len() + usize::from(res.first_loser.is_some()));
    }
    out.rounds = vec![RoundKind::Normal; max_rounds];
    out.spent = out.task_budgets.iter().sum();
    out.trace.push(TraceEvent::End {
        round: max_rounds,
        reason: "every task resolved independently".into(),
    });
    Ok(out)
}
