use super::proportional::prepare;
use super::{AuctionOutcome, BidMatrix, Mechanism, Result, RoundKind, TraceEvent, BUDGET_TOL};

/// Amount to take from each donor so that `amount` is removed in total, lowering the
/// largest surpluses first until they meet at a common level.
fn waterfill(surplus: &[f64], amount: f64) -> Vec<f64> {
    let total: f64 = surplus.iter().sum();
    if amount >= total {
        return surplus.to_vec();
    }
    let mut sorted: Vec<f64> = surplus.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut level = 0.0;
    for j in 0..sorted.len() {
        prefix += sorted[j];
        let candidate = (prefix - amount) / (j + 1) as f64;
        if j + 1 == sorted.len() || candidate >= sorted[j + 1] {
            level = candidate.max(0.0);
            break;
        }
    }
    surplus.iter().map(|&c| (c - level).max(0.0)).collect()
}

/// Max-min fair auction.
///
/// Each task starts with budget `B / S`. In round `t` every task looks at its `t`-th
/// cheapest bid `b` and admits it when `b <= B_s / t`. If some tasks fall short, the
/// missing amount `A = sum (b t - B_s)` over the short tasks is compared with the surplus
/// `C = sum (B_s - b t)` of the others. When `A < C` the surplus is moved over (largest
/// surpluses first) and everyone is admitted. Otherwise each short task's `t`-th bidder
/// gets a fractional admission `x = min(1, C / (|short| b))` paid `min(C / |short|, b)`,
/// and the auction ends.
///
/// Full winners of a task are all paid `min(B_s / n_s, b_next)` using the task's final
/// budget, where `b_next` is the task's next bid in line. A later donation lowers earlier
/// winners' payments too.
pub fn maxmin_fair_auction(bids: &BidMatrix, budget: f64) -> Result<AuctionOutcome> {
    prepare(bids, budget)?;
    let (n, s_count) = (bids.n_users(), bids.n_tasks());
    let mut out = AuctionOutcome::empty(Mechanism::MaxMin, budget, n, s_count);
    if budget == 0.0 || n == 0 {
        return Ok(out);
    }
    let orders: Vec<Vec<usize>> = (0..s_count).map(|s| bids.ascending(s)).collect();
    let mut task_budget = vec![budget / s_count as f64; s_count];
    let mut n_full = vec![0usize; s_count];
    let mut fractional: Vec<(usize, usize, f64, f64)> = Vec::new();

    let mut t = 0;
    let reason = loop {
        t += 1;
        if t > n {
            break "bidders exhausted".to_string();
        }
        let tf = t as f64;
        let mut pass = Vec::new();
        let mut fail = Vec::new();
        for s in 0..s_count {
            let i = orders[s][t - 1];
            let b = bids.bid(i, s);
            let threshold = task_budget[s] / tf;
            if b * tf <= task_budget[s] + BUDGET_TOL {
                pass.push(s);
            } else {
                fail.push(s);
                out.trace.push(TraceEvent::Reject {
                    round: t,
                    task: s,
                    user: i,
                    bid: b,
                    threshold,
                });
            }
        }
        let need = |s: usize| bids.bid(orders[s][t - 1], s) * tf;

        let mut admit = |s: usize, out: &mut AuctionOutcome, budget_now: f64| {
            let i = orders[s][t - 1];
            out.participation[i][s] = 1.0;
            out.admitted_round[i][s] = Some(t);
            out.trace.push(TraceEvent::Admit {
                round: t,
                task: s,
                user: i,
                bid: bids.bid(i, s),
                threshold: budget_now / tf,
            });
            n_full[s] += 1;
        };

        if fail.is_empty() {
            for &s in &pass {
                admit(s, &mut out, task_budget[s]);
            }
            out.rounds.push(RoundKind::Normal);
            continue;
        }

        let shortfall: f64 = fail.iter().map(|&s| need(s) - task_budget[s]).sum();
        let surplus: Vec<f64> = pass
            .iter()
            .map(|&s| (task_budget[s] - need(s)).max(0.0))
            .collect();
        let available: f64 = surplus.iter().sum();

        if shortfall < available {
            let taken = waterfill(&surplus, shortfall);
            let mut transfers = Vec::with_capacity(s_count);
            for (&s, &d) in pass.iter().zip(&taken) {
                task_budget[s] -= d;
                transfers.push((s, -d));
            }
            for &s in &fail {
                let d = need(s) - task_budget[s];
                task_budget[s] = need(s);
                transfers.push((s, d));
            }
            transfers.sort_by_key(|&(s, _)| s);
            out.trace.push(TraceEvent::Reallocate {
                round: t,
                shortfall,
                surplus: available,
                transfers,
            });
            let mut all: Vec<usize> = pass.iter().chain(&fail).copied().collect();
            all.sort_unstable();
            for s in all {
                admit(s, &mut out, task_budget[s]);
            }
            out.rounds.push(RoundKind::Reallocation);
            continue;
        }

        // Terminal round: tasks that can pay admit their bidder, short tasks share the
        // surplus fractionally.
        if available > BUDGET_TOL {
            let share = available / fail.len() as f64;
            let mut used = 0.0;
            for &s in &fail {
                let i = orders[s][t - 1];
                let b = bids.bid(i, s);
                let (payment, x) = if share < b {
                    (share, share / b)
                } else {
                    (b, 1.0)
                };
                used += payment;
                fractional.push((s, i, x, payment));
            }
            let taken = waterfill(&surplus, used);
            for (&s, &d) in pass.iter().zip(&taken) {
                task_budget[s] -= d;
            }
            for &s in &pass {
                admit(s, &mut out, task_budget[s]);
            }
            for &(s, i, x, payment) in &fractional {
                out.participation[i][s] = x;
                out.payments[i][s] = payment;
                out.admitted_round[i][s] = Some(t);
                out.trace.push(TraceEvent::Fractional {
                    round: t,
                    task: s,
                    user: i,
                    payment,
                    fraction: x,
                });
            }
            out.rounds.push(RoundKind::Fractional);
            break format!("fractional round, shortfall {shortfall} >= surplus {available}");
        }
        for &s in &pass {
            admit(s, &mut out, task_budget[s]);
        }
        out.rounds.push(RoundKind::Shortfall);
        break format!("shortfall {shortfall} with no surplus to share");
    };

    for s in 0..s_count {
        let frac_paid: f64 = fractional.iter().filter(|f| f.0 == s).map(|f| f.3).sum();
        let mut full_spend = 0.0;
        if n_full[s] > 0 {
            let next = orders[s]
                .get(n_full[s])
                .map_or(f64::INFINITY, |&i| bids.bid(i, s));
            let pay = (task_budget[s] / n_full[s] as f64).min(next);
            full_spend = pay * n_full[s] as f64;
            for &i in &orders[s] {
                if out.participation[i][s] >= 1.0
                    && !fractional.iter().any(|f| f.0 == s && f.1 == i)
                {
                    out.payments[i][s] = pay;
                }
            }
        }
        out.task_budgets[s] = full_spend + frac_paid;
    }
    out.spent = out.task_budgets.iter().sum();
    debug_assert!(out.spent <= budget + 1e-6);
    out.trace.push(TraceEvent::End { round: t, reason });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auctions::budget_fair_auction;

    #[test]
    fn waterfill_levels() {
        let taken = waterfill(&[0.5, 0.1, 0.3], 0.3);
        // Level 0.25: take 0.25 from the first and 0.05 from the third.
        assert!((taken[0] - 0.25).abs() < 1e-12);
        assert_eq!(taken[1], 0.0);
        assert!((taken[2] - 0.05).abs() < 1e-12);
        assert_eq!(waterfill(&[0.2, 0.1], 1.0), vec![0.2, 0.1]);
    }

    #[test]
    fn hand_trace_fractional() {
        let m = BidMatrix::from_columns(&[vec![0.2, 0.3, 0.9], vec![0.6, 1.4, 5.0]]).unwrap();
        let out = maxmin_fair_auction(&m, 2.0).unwrap();
        assert_eq!(out.participation[0][0], 1.0);
        assert_eq!(out.participation[1][0], 1.0);
        assert_eq!(out.participation[2][0], 0.0);
        assert_eq!(out.participation[0][1], 1.0);
        assert!((out.participation[1][1] - 0.4 / 1.4).abs() < 1e-12);
        assert!((out.payments[1][1] - 0.4).abs() < 1e-12);
        assert!((out.maxmin() - (1.0 + 0.4 / 1.4)).abs() < 1e-12);
        assert!((out.payments[0][0] - 0.3).abs() < 1e-12);
        assert!((out.spent - 2.0).abs() < 1e-12);
        assert_eq!(out.rounds, vec![RoundKind::Normal, RoundKind::Fractional]);
        assert!(out.is_budget_feasible());
        assert!(out.is_individually_rational(&m));
    }

    #[test]
    fn reallocation_keeps_everyone_in() {
        // Round 2: task 1 needs 0.45 * 2 - 0.75 = 0.15, task 0 has 0.75 - 0.2 = 0.55 spare.
        let m = BidMatrix::from_columns(&[vec![0.05, 0.1], vec![0.3, 0.45]]).unwrap();
        let out = maxmin_fair_auction(&m, 1.5).unwrap();
        assert_eq!(out.rounds, vec![RoundKind::Normal, RoundKind::Reallocation]);
        assert_eq!(out.full_winners(), vec![2, 2]);
        assert!((out.task_budgets[1] - 0.9).abs() < 1e-12);
        assert!((out.task_budgets[0] - 0.6).abs() < 1e-12);
        assert!((out.payments[0][1] - 0.45).abs() < 1e-12);
        assert!(out.is_individually_rational(&m));
    }

    #[test]
    fn matches_budget_fair_when_budget_never_binds() {
        let m = BidMatrix::from_columns(&[vec![0.1, 0.2, 0.3], vec![0.05, 0.15, 0.25]]).unwrap();
        let a = maxmin_fair_auction(&m, 10.0).unwrap();
        let b = budget_fair_auction(&m, 10.0).unwrap();
        assert_eq!(a.participation, b.participation);
        assert_eq!(a.payments, b.payments);
    }

    #[test]
    fn short_tasks_without_surplus_end_cleanly() {
        let m = BidMatrix::from_columns(&[vec![5.0], vec![6.0]]).unwrap();
        let out = maxmin_fair_auction(&m, 2.0).unwrap();
        assert_eq!(out.maxmin(), 0.0);
        assert_eq!(out.rounds, vec![RoundKind::Shortfall]);
        assert_eq!(out.spent, 0.0);
    }
}
