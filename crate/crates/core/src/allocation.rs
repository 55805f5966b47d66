//! Client sampling and client-to-task assignment.
//!
//! Each round a fraction `C` of the `K` clients is active, and every active client trains
//! exactly one task. The alpha-fair rule sends a client to task `s` with probability
//! proportional to `f_s^(alpha - 1)`, where `f_s` is the task's current signal (higher
//! means the task is doing worse). The baselines are uniform random assignment, a
//! round-robin rotation, and a q-Fel style variant that allocates uniformly but rescales
//! each task's aggregated update.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Signals below this are raised to it before exponentiation.
pub const SIGNAL_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocationError {
    #[error("signal for task {task} must be positive and finite, got {value}")]
    Domain { task: usize, value: f64 },
    #[error("no signals supplied")]
    NoTasks,
    #[error("round would have no active clients (K = {k}, C = {c})")]
    EmptyRound { k: usize, c: f64 },
    #[error("invalid policy: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, AllocationError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    AlphaFair { alpha: f64 },
    Random,
    RoundRobin,
    QFelAdapted { q: f64 },
}

/// What the server measures to decide which task is doing worse.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    Loss,
    /// `1 - test accuracy`.
    #[default]
    ErrorRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationPolicy {
    pub kind: PolicyKind,
    pub signal: SignalMode,
}

impl AllocationPolicy {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            signal: SignalMode::default(),
        }
    }

    pub fn alpha_fair(alpha: f64) -> Self {
        Self::new(PolicyKind::AlphaFair { alpha })
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            PolicyKind::AlphaFair { alpha } if !(alpha.is_finite() && alpha >= 1.0) => Err(
                AllocationError::Config(format!("alpha must be finite and >= 1, got {alpha}")),
            ),
            PolicyKind::QFelAdapted { q } if !(q.is_finite() && q >= 0.0) => Err(
                AllocationError::Config(format!("q must be finite and >= 0, got {q}")),
            ),
            _ => Ok(()),
        }
    }

    /// Short stable name used for output directories.
    pub fn label(&self) -> String {
        let base = match self.kind {
            PolicyKind::AlphaFair { alpha } => format!("alpha_fair_a{}", fmt_param(alpha)),
            PolicyKind::Random => "random".to_string(),
            PolicyKind::RoundRobin => "round_robin".to_string(),
            PolicyKind::QFelAdapted { q } => format!("qfel_q{}", fmt_param(q)),
        };
        match self.signal {
            SignalMode::ErrorRate => base,
            SignalMode::Loss => format!("{base}_loss"),
        }
    }
}

fn fmt_param(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}").replace('.', "p")
    }
}

/// A per-task probability vector summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProbabilities(Vec<f64>);

impl AllocationProbabilities {
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Draws one task index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = i;
                if u < acc {
                    return i;
                }
            }
        }
        // Rounding can leave `acc` a hair below one.
        last
    }
}

fn check_signals(f: &[f64]) -> Result<()> {
    if f.is_empty() {
        return Err(AllocationError::NoTasks);
    }
    for (task, &value) in f.iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(AllocationError::Domain { task, value });
        }
    }
    Ok(())
}

/// `p_s = f_s^(alpha-1) / sum_s' f_s'^(alpha-1)`.
///
/// Powers are taken of `f_s / max f` so large `alpha` cannot underflow every entry to zero.
pub fn alpha_fair_probabilities(f: &[f64], alpha: f64) -> Result<AllocationProbabilities> {
    check_signals(f)?;
    if !(alpha.is_finite() && alpha >= 1.0) {
        return Err(AllocationError::Config(format!(
            "alpha must be >= 1, got {alpha}"
        )));
    }
    let max = f.iter().copied().fold(f64::MIN, f64::max);
    let powered: Vec<f64> = f.iter().map(|v| (v / max).powf(alpha - 1.0)).collect();
    let total: f64 = powered.iter().sum();
    Ok(AllocationProbabilities(
        powered.into_iter().map(|v| v / total).collect(),
    ))
}

/// Uniformly random active set of size `round(C * K)`, sorted by client id.
pub fn sample_active<R: Rng + ?Sized>(k: usize, c: f64, rng: &mut R) -> Result<Vec<usize>> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(AllocationError::Config(format!(
            "participation must lie in (0, 1], got {c}"
        )));
    }
    let m = (c * k as f64).round() as usize;
    if m == 0 {
        return Err(AllocationError::EmptyRound { k, c });
    }
    let mut active = rand::seq::index::sample(rng, k, m.min(k)).into_vec();
    active.sort_unstable();
    Ok(active)
}

/// Client ids per task for one round. `sel[s]` is sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundAssignment {
    pub active: Vec<usize>,
    pub sel: Vec<Vec<usize>>,
}

impl RoundAssignment {
    pub fn n_selected(&self, task: usize) -> usize {
        self.sel[task].len()
    }

    /// Task each active client was assigned, in the order of `active`.
    pub fn task_of(&self, client: usize) -> Option<usize> {
        self.sel
            .iter()
            .position(|s| s.binary_search(&client).is_ok())
    }
}

/// Per-client probabilities the policy would use, before any eligibility restriction.
fn policy_probabilities(
    policy: &AllocationPolicy,
    signals: &[f64],
) -> Result<AllocationProbabilities> {
    match policy.kind {
        PolicyKind::AlphaFair { alpha } => {
            let clamped: Vec<f64> = signals.iter().map(|v| v.max(SIGNAL_FLOOR)).collect();
            alpha_fair_probabilities(&clamped, alpha)
        }
        _ => Ok(AllocationProbabilities::uniform(signals.len())),
    }
}

/// Assigns every active client to one task.
///
/// `signals` is indexed by task. Signals are floored at [`SIGNAL_FLOOR`] before use so a
/// task that reaches zero error keeps a well-defined probability.
pub fn assign_tasks<R: Rng + ?Sized>(
    policy: &AllocationPolicy,
    signals: &[f64],
    active: &[usize],
    round: usize,
    rng: &mut R,
) -> Result<RoundAssignment> {
    assign_tasks_restricted(policy, signals, active, None, round, rng)
}

/// Like [`assign_tasks`], but client `k` may only train tasks with `eligible[k][s] == true`.
///
/// Alpha-fair probabilities are renormalized over each client's eligible tasks; round-robin
/// moves forward to the next eligible task. Active clients with no eligible task are left
/// out of the returned `active` list.
pub fn assign_tasks_restricted<R: Rng + ?Sized>(
    policy: &AllocationPolicy,
    signals: &[f64],
    active: &[usize],
    eligible: Option<&[Vec<bool>]>,
    round: usize,
    rng: &mut R,
) -> Result<RoundAssignment> {
    policy.validate()?;
    let n_tasks = signals.len();
    if n_tasks == 0 {
        return Err(AllocationError::NoTasks);
    }
    if let PolicyKind::AlphaFair { .. } = policy.kind {
        for (task, &value) in signals.iter().enumerate() {
            if value.is_nan() || value < 0.0 {
                return Err(AllocationError::Domain { task, value });
            }
        }
    }
    let base = policy_probabilities(policy, signals)?;

    let mut sorted = active.to_vec();
    sorted.sort_unstable();
    let mut kept = Vec::with_capacity(sorted.len());
    let mut sel = vec![Vec::new(); n_tasks];
    for (pos, &client) in sorted.iter().enumerate() {
        let mask = eligible.map(|e| e[client].as_slice());
        let allowed = |s: usize| mask.is_none_or(|m| m[s]);
        if !(0..n_tasks).any(allowed) {
            continue;
        }
        let task = match policy.kind {
            PolicyKind::RoundRobin => {
                let start = (pos + round) % n_tasks;
                (0..n_tasks)
                    .map(|off| (start + off) % n_tasks)
                    .find(|&s| allowed(s))
                    .expect("at least one eligible task")
            }
            _ => match mask {
                None => base.sample(rng),
                Some(m) if m.iter().all(|&ok| ok) => base.sample(rng),
                Some(m) => {
                    let masked: Vec<f64> = base
                        .as_slice()
                        .iter()
                        .zip(m)
                        .map(|(&p, &ok)| if ok { p } else { 0.0 })
                        .collect();
                    let total: f64 = masked.iter().sum();
                    AllocationProbabilities(masked.into_iter().map(|p| p / total).collect())
                        .sample(rng)
                }
            },
        };
        kept.push(client);
        sel[task].push(client);
    }
    Ok(RoundAssignment { active: kept, sel })
}

/// Aggregation weights `p_ks / sum_{k' in Sel} p_k's` for the selected clients, in the
/// order given. `None` means the task has nobody selected and skips aggregation.
pub fn aggregation_weights(sel: &[usize], p: &[f64]) -> Option<Vec<f64>> {
    if sel.is_empty() {
        return None;
    }
    let total: f64 = sel.iter().map(|&k| p[k]).sum();
    if total > 0.0 {
        Some(sel.iter().map(|&k| p[k] / total).collect())
    } else {
        // All selected shards carry zero weight; fall back to a plain average.
        Some(vec![1.0 / sel.len() as f64; sel.len()])
    }
}

/// Per-task update scales `S * f_s^q / sum f^q` (mean one).
pub fn qfel_update_scale(f: &[f64], q: f64) -> Result<Vec<f64>> {
    check_signals(f)?;
    if !(q.is_finite() && q >= 0.0) {
        return Err(AllocationError::Config(format!("q must be >= 0, got {q}")));
    }
    let max = f.iter().copied().fold(f64::MIN, f64::max);
    let powered: Vec<f64> = f.iter().map(|v| (v / max).powf(q)).collect();
    let total: f64 = powered.iter().sum();
    let s = f.len() as f64;
    Ok(powered.into_iter().map(|v| s * v / total).collect())
}
