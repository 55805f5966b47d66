//! Fairness metrics, convergence-bound ingredients, and exhaustive oracles.
//!
//! The selection model used throughout: with loss fractions `q_s = f_s^a / sum f^a`, each
//! of the `K` clients independently lands on task `s` with probability `q_s`, so a given
//! client set `Sel` is chosen with probability `q^|Sel| (1 - q)^(K - |Sel|)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, ClientDataset, LossKind, ModelError, ParamVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("optimizer stopped after {iterations} iterations with gradient norm {grad_norm:e}")]
    NotConverged { iterations: usize, grad_norm: f64 },
    #[error("selection skew undefined: the all-client gap is {0:e}")]
    UndefinedSkew(f64),
    #[error("invalid constants: {0}")]
    Domain(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// Largest client count for which selection sets are enumerated.
pub const MAX_ENUM_CLIENTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population variance `sum f^2 / S - (sum f / S)^2`.
    pub variance: f64,
    /// `sum f / sqrt(sum f^2)`, in `[1, sqrt(S)]` for positive values.
    pub cosine_ratio: f64,
}

fn sum_and_squares(values: &[f64]) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sq = 0.0;
    for &v in values {
        sum += v;
        sq += v * v;
    }
    (sum, sq)
}

/// Variance and cosine ratio are computed from the same left-to-right sums that the
/// brute-force objective uses, so orderings between optima carry over exactly.
pub fn fairness_metrics(values: &[f64]) -> FairnessReport {
    let s = values.len() as f64;
    let (sum, sq) = sum_and_squares(values);
    let all_equal = values.windows(2).all(|w| w[0] == w[1]);
    let mean = sum / s;
    let variance = if all_equal {
        0.0
    } else {
        (sq / s - mean * mean).max(0.0)
    };
    let cosine_ratio = if all_equal { s.sqrt() } else { sum / sq.sqrt() };
    FairnessReport {
        values: values.to_vec(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        variance,
        cosine_ratio,
    }
}

/// `q_s = f_s^alpha / sum f^alpha`.
pub fn loss_fractions(f: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if f.is_empty() || f.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(AnalysisError::InvalidInput(
            "losses must be positive and finite".into(),
        ));
    }
    let max = f.iter().copied().fold(f64::MIN, f64::max);
    let p: Vec<f64> = f.iter().map(|v| (v / max).powf(alpha)).collect();
    let total: f64 = p.iter().sum();
    Ok(p.into_iter().map(|v| v / total).collect())
}

/// Probability that one specific set of `sel_size` clients out of `k` is selected.
pub fn selection_set_probability(q: f64, k: usize, sel_size: usize) -> f64 {
    q.powi(sel_size as i32) * (1.0 - q).powi((k - sel_size) as i32)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `sum_{j=1..K} (1/j) C(K, j) q^j (1-q)^(K-j)`, the expected inverse size of a
/// selection with equal client weights, summed without the empty selection.
pub fn expected_inverse_size(q: f64, k: usize) -> f64 {
    (1..=k)
        .map(|j| binomial(k, j) * selection_set_probability(q, k, j) / j as f64)
        .sum()
}

/// Expected `1 / |Sel|` for the task at `task`, conditional on the task receiving at least
/// one client. `f` are the per-task losses and every client has weight `1 / K`.
pub fn inverse_selection_size(f: &[f64], alpha: f64, k: usize, task: usize) -> Result<f64> {
    if k == 0 || task >= f.len() {
        return Err(AnalysisError::InvalidInput(
            "need K >= 1 and a valid task".into(),
        ));
    }
    let q = loss_fractions(f, alpha)?[task];
    let nonempty = 1.0 - (1.0 - q).powi(k as i32);
    if nonempty <= 0.0 {
        return Err(AnalysisError::InvalidInput("task is never selected".into()));
    }
    Ok(expected_inverse_size(q, k) / nonempty)
}

fn check_enum(k: usize) -> Result<()> {
    if k == 0 || k > MAX_ENUM_CLIENTS {
        return Err(AnalysisError::InvalidInput(format!(
            "selection enumeration supports 1..={MAX_ENUM_CLIENTS} clients, got {k}"
        )));
    }
    Ok(())
}

fn members(mask: usize, k: usize) -> impl Iterator<Item = usize> {
    (0..k).filter(move |i| mask >> i & 1 == 1)
}

/// `sum_Sel B_Sel sum_{k in Sel} (p_k / sum_{Sel} p)^2` over non-empty selections, by
/// enumeration.
pub fn selection_square_weight_sum(q: f64, p: &[f64]) -> Result<f64> {
    let k = p.len();
    check_enum(k)?;
    let mut total = 0.0;
    for mask in 1usize..(1 << k) {
        let size = mask.count_ones() as usize;
        let denom: f64 = members(mask, k).map(|i| p[i]).sum();
        let inner: f64 = members(mask, k).map(|i| (p[i] / denom).powi(2)).sum();
        total += selection_set_probability(q, k, size) * inner;
    }
    Ok(total)
}

/// `sum_Sel B_Sel sum_{k != k' in Sel} p_k p_k' / (sum_Sel p)^2`.
pub fn selection_pair_weight_sum(q: f64, p: &[f64]) -> Result<f64> {
    let k = p.len();
    check_enum(k)?;
    let mut total = 0.0;
    for mask in 1usize..(1 << k) {
        let size = mask.count_ones() as usize;
        let denom: f64 = members(mask, k).map(|i| p[i]).sum();
        let mut pairs = 0.0;
        for a in members(mask, k) {
            for b in members(mask, k) {
                if a != b {
                    pairs += p[a] * p[b];
                }
            }
        }
        total += selection_set_probability(q, k, size) * pairs / (denom * denom);
    }
    Ok(total)
}

/// Right-hand side of the local/global discrepancy bound:
/// `16 eta^2 tau^2 G^2 sum_Sel B_Sel P_Sel`.
pub fn discrepancy_bound(eta: f64, tau: usize, g2: f64, q: f64, p: &[f64]) -> Result<f64> {
    let t = tau as f64;
    Ok(16.0 * eta * eta * t * t * g2 * selection_pair_weight_sum(q, p)?)
}

/// Measured counterpart: `E[sum_{k in Sel} p_{k,Sel} ||w_bar - w_k||^2]` where `w_bar` is
/// the weighted average of the selected local models, enumerated over non-empty selections.
pub fn measured_discrepancy(q: f64, p: &[f64], local: &[ParamVector]) -> Result<f64> {
    let k = p.len();
    check_enum(k)?;
    if local.len() != k {
        return Err(AnalysisError::InvalidInput(
            "one local model per client".into(),
        ));
    }
    let dim = local[0].len();
    let mut total = 0.0;
    for mask in 1usize..(1 << k) {
        let size = mask.count_ones() as usize;
        let denom: f64 = members(mask, k).map(|i| p[i]).sum();
        let mut avg = vec![0.0; dim];
        for i in members(mask, k) {
            for (a, v) in avg.iter_mut().zip(&local[i].values) {
                *a += p[i] / denom * v;
            }
        }
        let bar = ParamVector {
            task_id: local[0].task_id,
            values: avg,
        };
        let inner: f64 = members(mask, k)
            .map(|i| p[i] / denom * bar.squared_distance(&local[i]))
            .sum();
        total += selection_set_probability(q, k, size) * inner;
    }
    Ok(total)
}

/// Minimizer of a weighted sum of client losses.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub params: ParamVector,
    pub value: f64,
    pub grad_norm: f64,
}

pub const OPT_TOL: f64 = 1e-8;

fn weighted_value_grad(
    clients: &[ClientDataset],
    weights: &[f64],
    w: &ParamVector,
) -> Result<(f64, Vec<f64>)> {
    let mut value = 0.0;
    let mut grad = vec![0.0; w.len()];
    for (c, &a) in clients.iter().zip(weights) {
        value += a * model::local_loss(c, w)?;
        for (g, gi) in grad.iter_mut().zip(model::local_gradient(c, w)?) {
            *g += a * gi;
        }
    }
    Ok((value, grad))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Second-moment matrix `sum_i a_i x~ x~^T` of augmented features (`x~ = [x, 1]`), with
/// per-point weights `a_i = weight_k / n_k`.
fn augmented_moment(clients: &[ClientDataset], weights: &[f64]) -> DMatrix<f64> {
    let d = clients[0].input_dim() + 1;
    let mut m = DMatrix::zeros(d, d);
    for (c, &a) in clients.iter().zip(weights) {
        let scale = a / c.len() as f64;
        for p in &c.points {
            let x = DVector::from_iterator(d, p.features.iter().copied().chain([1.0]));
            m += scale * &x * x.transpose();
        }
    }
    m
}

fn solve_least_squares(clients: &[ClientDataset], weights: &[f64]) -> Result<ParamVector> {
    let d = clients[0].input_dim() + 1;
    let n_classes = clients[0].n_classes;
    let m = augmented_moment(clients, weights);
    let svd = m.svd(true, true);
    let mut values = Vec::with_capacity(n_classes * d);
    for class in 0..n_classes {
        let mut rhs = DVector::zeros(d);
        for (c, &a) in clients.iter().zip(weights) {
            let scale = a / c.len() as f64;
            for p in c.points.iter().filter(|p| p.label == class) {
                for (j, v) in p.features.iter().chain([&1.0]).enumerate() {
                    rhs[j] += scale * v;
                }
            }
        }
        let sol = svd
            .solve(&rhs, 1e-13)
            .map_err(|e| AnalysisError::InvalidInput(e.to_string()))?;
        values.extend(sol.iter());
    }
    Ok(ParamVector {
        task_id: clients[0].task_id,
        values,
    })
}

/// Hessian of the weighted softmax cross-entropy: `sum_i a_i (diag(p) - p p^T) (x) x~ x~^T`.
fn logistic_hessian(clients: &[ClientDataset], weights: &[f64], w: &[f64]) -> DMatrix<f64> {
    let n = w.len();
    let mut h = DMatrix::zeros(n, n);
    let mut z = Vec::new();
    let mut xt = Vec::new();
    for (c, &a) in clients.iter().zip(weights) {
        if c.points.is_empty() {
            continue;
        }
        let scale = a / c.len() as f64;
        let nc = c.n_classes;
        for p in &c.points {
            model::scores(w, &p.features, nc, &mut z);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            z.iter_mut().for_each(|v| *v = (*v - max).exp());
            let total: f64 = z.iter().sum();
            z.iter_mut().for_each(|v| *v /= total);
            xt.clear();
            xt.extend(p.features.iter().copied().chain([1.0]));
            let stride = xt.len();
            for c1 in 0..nc {
                for c2 in 0..nc {
                    let d = if c1 == c2 { z[c1] } else { 0.0 } - z[c1] * z[c2];
                    if d == 0.0 {
                        continue;
                    }
                    for (j1, x1) in xt.iter().enumerate() {
                        for (j2, x2) in xt.iter().enumerate() {
                            h[(c1 * stride + j1, c2 * stride + j2)] += scale * d * x1 * x2;
                        }
                    }
                }
            }
        }
    }
    h
}

/// Damped Newton with a pseudo-inverse (softmax scores are invariant to a common shift, so
/// the Hessian is singular) and Armijo backtracking. Falls back to the gradient direction
/// when the Newton step is not a descent direction.
fn newton(clients: &[ClientDataset], weights: &[f64], max_iter: usize) -> Result<ParamVector> {
    let mut w = ParamVector::zeros(clients[0].task_id, clients[0].param_len());
    let (mut value, mut grad) = weighted_value_grad(clients, weights, &w)?;
    for iter in 0..max_iter {
        let gn = norm(&grad);
        if gn < OPT_TOL {
            return Ok(w);
        }
        let h = logistic_hessian(clients, weights, &w.values);
        let g = DVector::from_column_slice(&grad);
        let mut dir: Vec<f64> = h
            .svd(true, true)
            .solve(&g, 1e-12)
            .map(|d| d.iter().map(|v| -v).collect())
            .unwrap_or_else(|_| grad.iter().map(|v| -v).collect());
        let mut slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        if slope.is_nan() || slope >= 0.0 {
            dir = grad.iter().map(|v| -v).collect();
            slope = -gn * gn;
        }
        let mut step = 1.0;
        loop {
            let trial = ParamVector {
                task_id: w.task_id,
                values: w
                    .values
                    .iter()
                    .zip(&dir)
                    .map(|(a, d)| a + step * d)
                    .collect(),
            };
            let (tv, tg) = weighted_value_grad(clients, weights, &trial)?;
            // Near the optimum the value stalls at rounding level, so accept any step that
            // shrinks the gradient instead.
            if tv <= value + 1e-4 * step * slope || (tv <= value && norm(&tg) < gn) {
                w = trial;
                value = tv;
                grad = tg;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                return Err(AnalysisError::NotConverged {
                    iterations: iter,
                    grad_norm: gn,
                });
            }
        }
    }
    Err(AnalysisError::NotConverged {
        iterations: max_iter,
        grad_norm: norm(&grad),
    })
}

/// Minimizes `sum_k weight_k F_k(w)`. Least-squares tasks are solved in closed form;
/// logistic tasks by damped Newton. Either way the returned point has
/// gradient norm below [`OPT_TOL`].
pub fn minimize(clients: &[ClientDataset], weights: &[f64]) -> Result<Optimum> {
    if clients.is_empty() || clients.len() != weights.len() {
        return Err(AnalysisError::InvalidInput(
            "need one weight per client".into(),
        ));
    }
    let params = match clients[0].loss_kind {
        LossKind::LeastSquares => solve_least_squares(clients, weights)?,
        LossKind::Logistic => newton(clients, weights, 200)?,
    };
    let (value, grad) = weighted_value_grad(clients, weights, &params)?;
    let grad_norm = norm(&grad);
    if grad_norm >= OPT_TOL {
        return Err(AnalysisError::NotConverged {
            iterations: 0,
            grad_norm,
        });
    }
    Ok(Optimum {
        params,
        value,
        grad_norm,
    })
}

fn normalized_weights(clients: &[ClientDataset]) -> Result<Vec<f64>> {
    let total: f64 = clients.iter().map(|c| c.weight).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(AnalysisError::InvalidInput(
            "client weights sum to zero".into(),
        ));
    }
    Ok(clients.iter().map(|c| c.weight / total).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaReport {
    /// `f* - sum_k p_k F_k*`.
    pub gamma: f64,
    pub global: Optimum,
    /// Each client's own minimum `F_k*`.
    pub local_optima: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Heterogeneity gap of one task. Client weights are renormalized to sum to one.
pub fn gamma_s(clients: &[ClientDataset]) -> Result<GammaReport> {
    let weights = normalized_weights(clients)?;
    let global = minimize(clients, &weights)?;
    let mut local_optima = Vec::with_capacity(clients.len());
    for c in clients {
        local_optima.push(minimize(std::slice::from_ref(c), &[1.0])?.value);
    }
    let local_sum: f64 = weights.iter().zip(&local_optima).map(|(p, f)| p * f).sum();
    Ok(GammaReport {
        gamma: global.value - local_sum,
        global,
        local_optima,
        weights,
    })
}

/// Selection skew at `w_eval`: expected weighted gap of the selected clients, over
/// non-empty selections with probabilities `B_Sel(q)`, divided by the all-client gap.
///
/// Conditioning on a non-empty selection makes the skew exactly one when every client has
/// the same gap.
pub fn selection_skew(
    clients: &[ClientDataset],
    local_optima: &[f64],
    w_eval: &ParamVector,
    q: f64,
) -> Result<f64> {
    let k = clients.len();
    check_enum(k)?;
    if local_optima.len() != k {
        return Err(AnalysisError::InvalidInput(
            "one local optimum per client".into(),
        ));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(AnalysisError::InvalidInput(format!(
            "q must lie in (0, 1], got {q}"
        )));
    }
    let p = normalized_weights(clients)?;
    let mut gaps = Vec::with_capacity(k);
    for (c, fstar) in clients.iter().zip(local_optima) {
        gaps.push(model::local_loss(c, w_eval)? - fstar);
    }
    let denom: f64 = p.iter().zip(&gaps).map(|(a, g)| a * g).sum();
    if denom.abs() < 1e-15 {
        return Err(AnalysisError::UndefinedSkew(denom));
    }
    let mut num = 0.0;
    for mask in 1usize..(1 << k) {
        let size = mask.count_ones() as usize;
        let psum: f64 = members(mask, k).map(|i| p[i]).sum();
        let inner: f64 = members(mask, k).map(|i| p[i] * gaps[i]).sum::<f64>() / psum;
        num += selection_set_probability(q, k, size) * inner;
    }
    let nonempty = 1.0 - (1.0 - q).powi(k as i32);
    Ok(num / nonempty / denom)
}

/// Smoothness and strong-convexity constants of least-squares client losses: the extreme
/// eigenvalues of each client's augmented feature second-moment matrix.
pub fn least_squares_curvature(clients: &[ClientDataset]) -> Result<(f64, f64)> {
    if clients.is_empty()
        || clients
            .iter()
            .any(|c| c.loss_kind != LossKind::LeastSquares)
    {
        return Err(AnalysisError::InvalidInput(
            "curvature constants need least-squares clients".into(),
        ));
    }
    let mut l = 0.0f64;
    let mut mu = f64::INFINITY;
    for c in clients {
        let eig = SymmetricEigen::new(augmented_moment(std::slice::from_ref(c), &[1.0]));
        l = l.max(eig.eigenvalues.max());
        mu = mu.min(eig.eigenvalues.min());
    }
    Ok((l, mu))
}

/// Exact minibatch gradient moments for one client at `w`, for batches of `batch` points
/// drawn with replacement: `(sigma^2, G^2)` with `sigma^2 = tr Cov / batch` and
/// `G^2 = ||grad F||^2 + sigma^2`.
pub fn minibatch_moments(
    client: &ClientDataset,
    w: &ParamVector,
    batch: usize,
) -> Result<(f64, f64)> {
    let full = model::local_gradient(client, w)?;
    let mut spread = 0.0;
    for i in 0..client.len() {
        let g = model::point_gradient(client, i, w);
        spread += g
            .iter()
            .zip(&full)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    let sigma2 = spread / client.len() as f64 / batch as f64;
    let g2 = full.iter().map(|v| v * v).sum::<f64>() + sigma2;
    Ok((sigma2, g2))
}

/// Largest `(sigma^2, G^2)` over every client and every point in `points`, inflated by
/// `margin` (e.g. 1.1).
pub fn measured_gradient_bounds(
    clients: &[ClientDataset],
    points: &[ParamVector],
    batch: usize,
    margin: f64,
) -> Result<(f64, f64)> {
    let mut s2 = 0.0f64;
    let mut g2 = 0.0f64;
    for w in points {
        for c in clients {
            let (a, b) = minibatch_moments(c, w, batch)?;
            s2 = s2.max(a);
            g2 = g2.max(b);
        }
    }
    Ok((s2 * margin, g2 * margin))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConstants {
    pub l: f64,
    pub mu: f64,
    pub sigma2: f64,
    pub g2: f64,
    pub gamma_s: f64,
    pub rho_lower: f64,
    pub rho_upper: f64,
}

impl ConvergenceConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.l,
            self.mu,
            self.sigma2,
            self.g2,
            self.gamma_s,
            self.rho_lower,
            self.rho_upper,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(AnalysisError::Domain("constants must be finite".into()));
        }
        if !(self.l > 0.0 && self.mu > 0.0 && self.mu <= self.l) {
            return Err(AnalysisError::Domain(format!(
                "need 0 < mu <= L, got mu={}, L={}",
                self.mu, self.l
            )));
        }
        if self.sigma2 < 0.0 || self.g2 < 0.0 {
            return Err(AnalysisError::Domain(
                "variance bounds must be non-negative".into(),
            ));
        }
        if !(self.rho_lower > 0.0 && self.rho_lower <= self.rho_upper) {
            return Err(AnalysisError::Domain(format!(
                "need 0 < rho_lower <= rho_upper, got {} and {}",
                self.rho_lower, self.rho_upper
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// One-round progress of `E||w_{t+1} - w*||^2`.
    OneRound,
    /// Final optimality gap `E[f(w_T)] - f*` under alpha-fair allocation.
    FinalGap,
    /// Final optimality gap when clients come from an auction.
    AuctionFinalGap,
}

/// Round- and schedule-dependent inputs to [`bound_rhs`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundInputs {
    pub tau: usize,
    /// Offset `gamma` of the schedule `eta_t = 1 / (mu (t + gamma))`.
    pub lr_gamma: f64,
    /// Round `t` for the one-round bound, horizon `T` otherwise.
    pub t: usize,
    /// `||w_0 - w*||^2`.
    pub init_dist2: f64,
    /// `E||w_t - w*||^2`, used by the one-round bound.
    pub current_dist2: f64,
    /// `sum_Sel B_Sel sum_k (p_k / sum_Sel p)^2`, used by the one-round bound.
    pub square_weight_sum: f64,
    /// Total probability of every non-empty winner set, used by the auction bound.
    pub join_weight: f64,
}

/// Evaluates the right-hand side of the chosen bound.
pub fn bound_rhs(kind: BoundKind, c: &ConvergenceConstants, x: &BoundInputs) -> Result<f64> {
    c.validate()?;
    if x.lr_gamma.is_nan() || x.lr_gamma <= 0.0 {
        return Err(AnalysisError::Domain(
            "schedule offset gamma must be positive".into(),
        ));
    }
    let tau2 = (x.tau as f64).powi(2);
    let horizon = x.t as f64 + x.lr_gamma;
    let tail = 8.0 * c.l * c.gamma_s / (3.0 * c.mu) * (c.rho_upper / c.rho_lower - 1.0);
    let shared =
        8.0 * c.l * c.l * c.gamma_s / (c.mu * c.mu) + c.l * x.lr_gamma * x.init_dist2 / 2.0;
    Ok(match kind {
        BoundKind::OneRound => {
            let eta = 1.0 / (c.mu * horizon);
            (1.0 - eta * c.mu * (1.0 + 3.0 * c.rho_lower / 8.0)) * x.current_dist2
                + 2.0 * eta * c.gamma_s * (c.rho_upper - c.rho_lower)
                + eta * eta * c.sigma2 * x.square_weight_sum
                + eta * eta * (32.0 * tau2 * c.g2 + 6.0 * c.rho_lower * c.l * c.gamma_s)
        }
        BoundKind::FinalGap => {
            let lead = 4.0 * (16.0 * tau2 * c.g2 + c.sigma2) / (3.0 * c.rho_lower * c.mu * c.mu);
            (lead + shared) / horizon + tail
        }
        BoundKind::AuctionFinalGap => {
            if !(0.0..=1.0).contains(&x.join_weight) {
                return Err(AnalysisError::Domain(
                    "join weight must lie in [0, 1]".into(),
                ));
            }
            let lead = (64.0 * tau2 * c.g2 * x.join_weight + 4.0 * c.sigma2)
                / (3.0 * c.rho_lower * c.mu * c.mu);
            (lead + shared) / horizon + tail
        }
    })
}

/// Sum over every non-empty winner set `W` of `prod_{i in W} p_i prod_{j not in W} (1 - p_j)`.
pub fn join_weight_sum(p_join: &[f64]) -> f64 {
    1.0 - p_join.iter().map(|p| 1.0 - p).product::<f64>()
}

/// Optimum of the discrete allocation problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceOptimum {
    pub counts: Vec<usize>,
    pub losses: Vec<f64>,
    pub objective: f64,
    pub variance: f64,
    pub cosine_ratio: f64,
}

fn alpha_objective(losses: &[f64], alpha: f64) -> f64 {
    if alpha == 1.0 {
        losses.iter().sum()
    } else if alpha == 2.0 {
        losses.iter().map(|v| v * v).sum()
    } else {
        losses.iter().map(|v| v.powf(alpha)).sum()
    }
}

/// Minimizes `sum_s f_s(n_s)^alpha` over integer counts with `sum_s n_s <= K`, where
/// `curves[s][n]` is task `s`'s loss with `n` clients. Ties keep the first allocation in
/// lexicographic order.
pub fn brute_force_alpha_fair_optimum(
    curves: &[Vec<f64>],
    k: usize,
    alpha: f64,
) -> Result<BruteForceOptimum> {
    if curves.is_empty() || curves.iter().any(|c| c.len() < k + 1) {
        return Err(AnalysisError::InvalidInput(
            "every curve needs values for 0..=K clients".into(),
        ));
    }
    if curves
        .iter()
        .flatten()
        .any(|v| !(v.is_finite() && *v >= 0.0))
    {
        return Err(AnalysisError::InvalidInput(
            "curve values must be non-negative".into(),
        ));
    }
    let s = curves.len();
    let mut counts = vec![0usize; s];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut losses = vec![0.0; s];
    loop {
        if counts.iter().sum::<usize>() <= k {
            for (l, (c, &n)) in losses.iter_mut().zip(curves.iter().zip(&counts)) {
                *l = c[n];
            }
            let obj = alpha_objective(&losses, alpha);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, counts.clone()));
            }
        }
        // Odometer increment over 0..=K per task.
        let mut i = s;
        loop {
            if i == 0 {
                let (objective, counts) = best.expect("the all-zero allocation is feasible");
                let losses: Vec<f64> = counts.iter().zip(curves).map(|(&n, c)| c[n]).collect();
                let report = fairness_metrics(&losses);
                return Ok(BruteForceOptimum {
                    counts,
                    losses,
                    objective,
                    variance: report.variance,
                    cosine_ratio: report.cosine_ratio,
                });
            }
            i -= 1;
            if counts[i] < k {
                counts[i] += 1;
                break;
            }
            counts[i] = 0;
        }
    }
}
