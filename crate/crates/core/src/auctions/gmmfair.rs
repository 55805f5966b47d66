use super::proportional::prepare;
use super::{AuctionOutcome, BidMatrix, Mechanism, Result, RoundKind, TraceEvent, BUDGET_TOL};

/// Greedy max-min allocation: in round `t` every task admits its `t`-th cheapest bidder
/// if the sum of those bids fits in the remaining budget. Winners are paid their bids.
/// The loop stops at the first round that does not fit or when any task runs out of
/// bidders.
pub fn gmmfair(bids: &BidMatrix, budget: f64) -> Result<AuctionOutcome> {
    prepare(bids, budget)?;
    let (n, s_count) = (bids.n_users(), bids.n_tasks());
    let mut out = AuctionOutcome::empty(Mechanism::GmmFair, budget, n, s_count);
    if budget == 0.0 || n == 0 {
        return Ok(out);
    }
    let orders: Vec<Vec<usize>> = (0..s_count).map(|s| bids.ascending(s)).collect();
    let mut spent = 0.0;
    let mut t = 1;
    let reason = loop {
        if t > n {
            break "bidders exhausted".to_string();
        }
        let cost: f64 = (0..s_count).map(|s| bids.bid(orders[s][t - 1], s)).sum();
        if spent + cost > budget + BUDGET_TOL {
            break format!(
                "round cost {cost} exceeds remaining budget {}",
                budget - spent
            );
        }
        for (s, order) in orders.iter().enumerate() {
            let i = order[t - 1];
            let b = bids.bid(i, s);
            out.participation[i][s] = 1.0;
            out.payments[i][s] = b;
            out.admitted_round[i][s] = Some(t);
            out.task_budgets[s] += b;
            out.trace.push(TraceEvent::Admit {
                round: t,
                task: s,
                user: i,
                bid: b,
                threshold: budget - spent,
            });
        }
        spent += cost;
        out.rounds.push(RoundKind::Normal);
        t += 1;
    };
    out.spent = spent;
    out.trace.push(TraceEvent::End { round: t, reason });
    Ok(out)
}
