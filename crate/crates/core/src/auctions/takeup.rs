//! Recruitment probabilities: Monte-Carlo estimates of how often a bidder joins a task,
//! and the two-task closed forms for the chance that some task recruits nobody when bids
//! are exponential.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::{AuctionError, BidMatrix, Mechanism, Result};

pub const MIN_MC_SAMPLES: usize = 1000;

/// Distribution of one task's bids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BidDistribution {
    Exponential {
        lambda: f64,
    },
    /// Normal(mean, std) conditioned on [0, 1].
    TruncatedGaussian {
        mean: f64,
        std: f64,
    },
    /// Density `2x` on [0, 1].
    IncreasingLinear,
    Uniform {
        low: f64,
        high: f64,
    },
    Discrete {
        values: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl BidDistribution {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AuctionError::InvalidInput(msg));
        match self {
            BidDistribution::Exponential { lambda } if !(*lambda > 0.0 && lambda.is_finite()) => {
                bad(format!("exponential rate must be positive, got {lambda}"))
            }
            BidDistribution::TruncatedGaussian { mean, std }
                if !(mean.is_finite() && *std > 0.0 && std.is_finite()) =>
            {
                bad(format!(
                    "truncated gaussian needs finite mean and std > 0, got {mean}, {std}"
                ))
            }
            BidDistribution::Uniform { low, high }
                if !(0.0 <= *low && low < high && high.is_finite()) =>
            {
                bad(format!(
                    "uniform needs 0 <= low < high, got [{low}, {high}]"
                ))
            }
            BidDistribution::Discrete { values, weights } => {
                if values.is_empty() || values.len() != weights.len() {
                    return bad(
                        "discrete distribution needs matching non-empty values and weights".into(),
                    );
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0))
                    || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
                    || weights.iter().sum::<f64>() <= 0.0
                {
                    return bad(
                        "discrete values and weights must be finite and non-negative".into(),
                    );
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            BidDistribution::Exponential { lambda } => {
                Exp::new(*lambda).expect("validated rate").sample(rng)
            }
            BidDistribution::TruncatedGaussian { mean, std } => {
                let normal = Normal::new(*mean, *std).expect("validated std");
                for _ in 0..10_000 {
                    let v = normal.sample(rng);
                    if (0.0..=1.0).contains(&v) {
                        return v;
                    }
                }
                mean.clamp(0.0, 1.0)
            }
            BidDistribution::IncreasingLinear => rng.random::<f64>().sqrt(),
            BidDistribution::Uniform { low, high } => rng.random_range(*low..*high),
            BidDistribution::Discrete { values, weights } => {
                let total: f64 = weights.iter().sum();
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                for (v, w) in values.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("validated non-empty")
            }
        }
    }
}

/// Draws an `n_users x S` bid matrix with column `s` from `dists[s]`.
pub fn sample_bids<R: Rng + ?Sized>(
    dists: &[BidDistribution],
    n_users: usize,
    rng: &mut R,
) -> BidMatrix {
    let bids = (0..n_users)
        .map(|_| dists.iter().map(|d| d.sample(rng)).collect())
        .collect();
    BidMatrix { bids, costs: None }
}

/// Probability estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JoinEstimate {
    pub full: f64,
    pub full_stderr: f64,
    /// Fractional participation (0 < x < 1); always zero for mechanisms without it.
    pub partial: f64,
    pub partial_stderr: f64,
    pub samples: usize,
}

fn bernoulli_stderr(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Chance that user 0, bidding `bid` on `task`, is recruited for it when the other
/// `n_users - 1` users (and user 0's bids on other tasks) are drawn from `dists`.
#[allow(clippy::too_many_arguments)]
pub fn join_probability<R: Rng + ?Sized>(
    dists: &[BidDistribution],
    n_users: usize,
    task: usize,
    bid: f64,
    budget: f64,
    mechanism: Mechanism,
    n_mc: usize,
    rng: &mut R,
) -> Result<JoinEstimate> {
    if n_mc < MIN_MC_SAMPLES {
        return Err(AuctionError::InvalidInput(format!(
            "need at least {MIN_MC_SAMPLES} Monte-Carlo samples, got {n_mc}"
        )));
    }
    if task >= dists.len() || n_users == 0 {
        return Err(AuctionError::InvalidInput(
            "task out of range or no users".into(),
        ));
    }
    for d in dists {
        d.validate()?;
    }
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(AuctionError::InvalidBudget(budget));
    }
    if budget == 0.0 {
        return Ok(JoinEstimate {
            full: 0.0,
            full_stderr: 0.0,
            partial: 0.0,
            partial_stderr: 0.0,
            samples: n_mc,
        });
    }
    let (mut full, mut partial) = (0usize, 0usize);
    for _ in 0..n_mc {
        let mut m = sample_bids(dists, n_users, rng);
        m.bids[0][task] = bid;
        let out = mechanism.run(&m, budget)?;
        let x = out.participation[0][task];
        if x >= 1.0 {
            full += 1;
        } else if x > 0.0 {
            partial += 1;
        }
    }
    let pf = full as f64 / n_mc as f64;
    let pp = partial as f64 / n_mc as f64;
    Ok(JoinEstimate {
        full: pf,
        full_stderr: bernoulli_stderr(pf, n_mc),
        partial: pp,
        partial_stderr: bernoulli_stderr(pp, n_mc),
        samples: n_mc,
    })
}

/// Two-task chance that at least one task recruits no user when every task's cheapest
/// bid is Exponential(`lambda`).
///
/// Max-min style mechanisms leave a task empty when the two cheapest bids together exceed
/// the budget: `exp(-B lambda) (1 + B lambda)`. Budget-fair leaves a task empty when its
/// cheapest bid exceeds `B / 2`: `exp(-B lambda) (2 exp(B lambda / 2) - 1)`.
pub fn no_user_probability_exp(
    lambda: f64,
    budget: f64,
    n_tasks: usize,
    mechanism: Mechanism,
) -> Result<f64> {
    if n_tasks != 2 {
        return Err(AuctionError::Unsupported(format!(
            "closed form only covers two tasks, got {n_tasks}"
        )));
    }
    if !(lambda > 0.0 && budget > 0.0 && lambda.is_finite() && budget.is_finite()) {
        return Err(AuctionError::InvalidInput(format!(
            "lambda and budget must be positive, got {lambda}, {budget}"
        )));
    }
    let bl = budget * lambda;
    Ok(match mechanism {
        Mechanism::MaxMin | Mechanism::GmmFair => (-bl).exp() * (1.0 + bl),
        Mechanism::BudgetFair => (-bl).exp() * (2.0 * (bl / 2.0).exp() - 1.0),
    })
}

/// Monte-Carlo estimate of the event behind [`no_user_probability_exp`], drawing the two
/// cheapest bids directly.
pub fn no_user_event_mc<R: Rng + ?Sized>(
    lambda: f64,
    budget: f64,
    mechanism: Mechanism,
    n_mc: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    no_user_probability_exp(lambda, budget, 2, mechanism)?;
    let exp = Exp::new(lambda).expect("checked rate");
    let mut hits = 0usize;
    for _ in 0..n_mc {
        let (x1, x2): (f64, f64) = (exp.sample(rng), exp.sample(rng));
        let empty = match mechanism {
            Mechanism::MaxMin | Mechanism::GmmFair => x1 + x2 > budget,
            Mechanism::BudgetFair => x1.max(x2) > budget / 2.0,
        };
        hits += usize::from(empty);
    }
    let p = hits as f64 / n_mc as f64;
    Ok((p, bernoulli_stderr(p, n_mc)))
}

/// Monte-Carlo estimate of how often the mechanism leaves some task without a full winner.
pub fn no_user_mechanism_mc<R: Rng + ?Sized>(
    dists: &[BidDistribution],
    n_users: usize,
    budget: f64,
    mechanism: Mechanism,
    n_mc: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    for d in dists {
        d.validate()?;
    }
    let mut hits = 0usize;
    for _ in 0..n_mc {
        let m = sample_bids(dists, n_users, rng);
        let out = mechanism.run(&m, budget)?;
        hits += usize::from(out.full_winners().contains(&0));
    }
    let p = hits as f64 / n_mc as f64;
    Ok((p, bernoulli_stderr(p, n_mc)))
}
