//! Acceptance gate. Every test checks one criterion at its stated tolerance and writes a
//! single `criterion N: PASS|FAIL` line straight to stdout, so the lines show up even when
//! libtest captures output.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use mmfl_core::allocation::alpha_fair_probabilities;
use mmfl_core::analysis::{
    self, brute_force_alpha_fair_optimum, inverse_selection_size, BoundInputs, BoundKind,
    ConvergenceConstants,
};
use mmfl_core::auctions::deviation::{deviation_sweep, DeviationRoundType, UTILITY_TOL};
use mmfl_core::auctions::takeup::no_user_event_mc;
use mmfl_core::auctions::{gmmfair, no_user_probability_exp, proportional_share, BUDGET_TOL};
use mmfl_core::fedtrain::{run_training_with, RunOptions};
use mmfl_core::harness::{self, preset, LabelSummary, RunSummary, SeedSummary, PRESET_NAMES};
use mmfl_core::model::generate_scenario;
use mmfl_core::{
    AllocationPolicy, BidMatrix, LossKind, LrSchedule, Mechanism, ScenarioShape, TaskSpec,
    TrainingConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, pass: bool, limit_secs: Option<f64>, started: Instant, detail: impl Display) {
    let elapsed = started.elapsed().as_secs_f64();
    let in_time = limit_secs.is_none_or(|l| elapsed < l);
    let ok = pass && in_time;
    let limit = limit_secs.map_or(String::new(), |l| format!(", limit {l}s"));
    let line = format!(
        "criterion {n}: {} {detail} ({elapsed:.2}s{limit})\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(ok, "{}", line.trim_end());
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn criterion_01_allocation_exactness() {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut check = |f: &[f64], alpha: f64, expected: &[f64]| {
        let p = alpha_fair_probabilities(f, alpha).unwrap();
        for (a, b) in p.as_slice().iter().zip(expected) {
            worst = worst.max((a - b).abs());
        }
    };
    let r2 = 2f64.sqrt();
    check(&[0.5, 0.5, 0.5], 3.0, &[1.0 / 3.0; 3]);
    check(&[0.9, 0.3], 3.0, &[0.9, 0.1]);
    check(&[0.9, 0.3], 2.0, &[0.75, 0.25]);
    check(&[0.2, 0.4, 0.8], 2.0, &[1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0]);
    check(
        &[0.2, 0.4, 0.8],
        3.0,
        &[1.0 / 21.0, 4.0 / 21.0, 16.0 / 21.0],
    );
    check(&[1.0, 2.0], 1.5, &[1.0 / (1.0 + r2), r2 / (1.0 + r2)]);
    let tiny = 2f64.powi(-63);
    check(
        &[1.0, 2.0],
        64.0,
        &[tiny / (1.0 + tiny), 1.0 / (1.0 + tiny)],
    );
    check(&[3.0], 5.0, &[1.0]);

    let mut r = rng(1);
    let mut uniform_err = 0.0f64;
    let mut scale_err = 0.0f64;
    for _ in 0..500 {
        let s = r.random_range(1..=8);
        let f: Vec<f64> = (0..s).map(|_| r.random_range(1e-3..10.0)).collect();
        let p1 = alpha_fair_probabilities(&f, 1.0).unwrap();
        for v in p1.as_slice() {
            uniform_err = uniform_err.max((v - 1.0 / s as f64).abs());
        }
        let c = 10f64.powf(r.random_range(-3.0..3.0));
        let scaled: Vec<f64> = f.iter().map(|v| v * c).collect();
        for alpha in [1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 64.0] {
            let a = alpha_fair_probabilities(&f, alpha).unwrap();
            let b = alpha_fair_probabilities(&scaled, alpha).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                scale_err = scale_err.max((x - y).abs());
            }
        }
    }
    let pass = worst <= 1e-12 && uniform_err <= 1e-12 && scale_err <= 1e-12;
    report(
        1,
        pass,
        Some(1.0),
        started,
        format_args!("hand examples max err {worst:.1e}, alpha=1 uniform err {uniform_err:.1e}, scale err {scale_err:.1e}"),
    );
}

#[test]
fn criterion_02_inverse_size_monotone_in_alpha() {
    let started = Instant::now();
    let mut r = rng(2);
    let (mut cases, mut ok) = (0usize, 0usize);
    for k in [2usize, 4, 8] {
        for _ in 0..100 {
            let f: Vec<f64> = (0..3).map(|_| r.random_range(0.01..5.0)).collect();
            let top = (0..3).max_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap();
            let terms: Vec<f64> = (1..=5)
                .map(|a| inverse_selection_size(&f, a as f64, k, top).unwrap())
                .collect();
            cases += 1;
            if terms.windows(2).all(|w| w[1] <= w[0]) {
                ok += 1;
            }
        }
    }
    report(
        2,
        ok == cases,
        Some(10.0),
        started,
        format_args!("{ok}/{cases} loss vectors non-increasing over alpha 1..5"),
    );
}

/// Decreasing loss-vs-clients curve `floor + scale / (1 + n)^power`.
fn random_curve(r: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let floor = r.random_range(0.0..0.5);
    let scale = r.random_range(0.5..5.0);
    let power = r.random_range(0.3..2.0);
    (0..=k)
        .map(|n| floor + scale / (1.0 + n as f64).powf(power))
        .collect()
}

#[test]
fn criterion_03_variance_and_cosine_orderings() {
    let started = Instant::now();
    let mut r = rng(3);
    let (mut var_ok, mut cos_ok) = (0usize, 0usize);
    let n = 200;
    for _ in 0..n {
        let curves = vec![random_curve(&mut r, 10), random_curve(&mut r, 10)];
        let utilitarian = brute_force_alpha_fair_optimum(&curves, 10, 1.0).unwrap();
        let squared = brute_force_alpha_fair_optimum(&curves, 10, 2.0).unwrap();
        var_ok += usize::from(squared.variance <= utilitarian.variance);
        cos_ok += usize::from(squared.cosine_ratio >= utilitarian.cosine_ratio);
    }
    report(
        3,
        var_ok == n && cos_ok == n,
        Some(30.0),
        started,
        format_args!("variance ordering {var_ok}/{n}, cosine ordering {cos_ok}/{n}"),
    );
}

const GRID_STEPS: usize = 10;

fn grid_value(i: usize) -> f64 {
    i as f64 / GRID_STEPS as f64
}

/// Every non-decreasing sequence of `len` grid indices in `0..=GRID_STEPS`.
fn sorted_profiles(len: usize) -> Vec<Vec<usize>> {
    fn go(len: usize, lo: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for v in lo..=GRID_STEPS {
            cur.push(v);
            go(len, v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(len, 0, &mut Vec::with_capacity(len), &mut out);
    out
}

/// Cheapest subset of each exact size, by enumerating every subset of one task's bids.
fn min_cost_by_size(bids: &[f64]) -> Vec<f64> {
    let n = bids.len();
    let mut best = vec![f64::INFINITY; n + 1];
    for mask in 0usize..(1 << n) {
        let cost: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| bids[i]).sum();
        let size = mask.count_ones() as usize;
        best[size] = best[size].min(cost);
    }
    best
}

/// Max-min objective over two tasks. Extra winners never lower the objective and bids are
/// non-negative, so a feasible allocation with minimum `m` exists iff the cheapest size-`m`
/// subsets of both tasks fit together.
fn maxmin_oracle_by_size(a: &[f64], b: &[f64], budget: f64) -> usize {
    let (ca, cb) = (min_cost_by_size(a), min_cost_by_size(b));
    (0..=a.len())
        .rev()
        .find(|&m| ca[m] + cb[m] <= budget + BUDGET_TOL)
        .unwrap_or(0)
}

/// Same objective from the joint enumeration of winner sets on both tasks.
fn maxmin_oracle_joint(a: &[f64], b: &[f64], budget: f64) -> usize {
    let n = a.len();
    let mut best = 0;
    for ma in 0usize..(1 << n) {
        let ca: f64 = (0..n).filter(|i| ma >> i & 1 == 1).map(|i| a[i]).sum();
        for mb in 0usize..(1 << n) {
            let cb: f64 = (0..n).filter(|i| mb >> i & 1 == 1).map(|i| b[i]).sum();
            if ca + cb <= budget + BUDGET_TOL {
                best = best.max(ma.count_ones().min(mb.count_ones()) as usize);
            }
        }
    }
    best
}

fn gmmfair_objective(a: &[f64], b: &[f64], budget: f64) -> usize {
    let m = BidMatrix::from_columns(&[a.to_vec(), b.to_vec()]).unwrap();
    let out = gmmfair(&m, budget).unwrap();
    out.full_winners().into_iter().min().unwrap()
}

#[test]
fn criterion_04_gmmfair_matches_brute_force() {
    let started = Instant::now();
    let budgets = [0.3, 0.8, 1.5, 2.4, 4.0];
    let (mut total, mut agree) = (0usize, 0usize);
    // Exhaustive up to four users: every pair of sorted bid profiles. GMMFair only sees
    // each task's sorted bids, so this covers every instance up to relabeling.
    for n in 1..=4 {
        let profiles: Vec<Vec<f64>> = sorted_profiles(n)
            .into_iter()
            .map(|p| p.into_iter().map(grid_value).collect())
            .collect();
        for a in &profiles {
            for b in &profiles {
                for &budget in &budgets {
                    let got = gmmfair_objective(a, b, budget);
                    let want = if n <= 3 {
                        maxmin_oracle_joint(a, b, budget)
                    } else {
                        maxmin_oracle_by_size(a, b, budget)
                    };
                    total += 1;
                    agree += usize::from(got == want);
                }
            }
        }
    }
    let exhaustive = total;
    // Five and six users: random grid instances, unsorted so GMMFair does its own sorting.
    let mut r = rng(4);
    for n in [5usize, 6] {
        for _ in 0..20_000 {
            let a: Vec<f64> = (0..n)
                .map(|_| grid_value(r.random_range(0..=GRID_STEPS)))
                .collect();
            let b: Vec<f64> = (0..n)
                .map(|_| grid_value(r.random_range(0..=GRID_STEPS)))
                .collect();
            let budget = r.random_range(1..=60) as f64 / 10.0;
            let got = gmmfair_objective(&a, &b, budget);
            let by_size = maxmin_oracle_by_size(&a, &b, budget);
            let joint = maxmin_oracle_joint(&a, &b, budget);
            total += 1;
            agree += usize::from(got == by_size && by_size == joint);
        }
    }
    report(
        4,
        agree == total,
        Some(120.0),
        started,
        format_args!(
            "{agree}/{total} instances optimal ({exhaustive} exhaustive with <= 4 users, {} sampled with 5-6 users)",
            total - exhaustive
        ),
    );
}

/// Every length-`n` vector over the grid, in odometer order.
fn for_each_profile(n: usize, mut visit: impl FnMut(&[f64])) {
    let mut idx = vec![0usize; n];
    let mut costs = vec![0.0; n];
    loop {
        for (c, &i) in costs.iter_mut().zip(&idx) {
            *c = grid_value(i);
        }
        visit(&costs);
        let mut j = n;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            if idx[j] < GRID_STEPS {
                idx[j] += 1;
                break;
            }
            idx[j] = 0;
        }
    }
}

fn share_utility(bids: &[f64], budget: f64, user: usize, cost: f64) -> f64 {
    let out = proportional_share(bids, budget);
    if out.winners.contains(&user) {
        out.payment - cost
    } else {
        0.0
    }
}

#[test]
fn criterion_05_truthfulness_and_maxmin_deviations() {
    let started = Instant::now();

    // Proportional share: every cost profile of up to 5 bidders on the 0.1 grid, every
    // bidder, every deviation on the 0.1 grid up to 2.0.
    let deviations: Vec<f64> = (0..=20).map(grid_value).collect();
    let budgets = [0.5, 1.0, 2.0, 3.0];
    let (mut share_checks, mut share_profitable) = (0usize, 0usize);
    let mut bids = Vec::with_capacity(5);
    for n in 1..=5 {
        for_each_profile(n, |costs| {
            for &budget in &budgets {
                for user in 0..n {
                    let truthful = share_utility(costs, budget, user, costs[user]);
                    bids.clear();
                    bids.extend_from_slice(costs);
                    for &d in &deviations {
                        bids[user] = d;
                        let deviated = share_utility(&bids, budget, user, costs[user]);
                        share_checks += 1;
                        share_profitable += usize::from(deviated > truthful + UTILITY_TOL);
                    }
                }
            }
        });
    }

    // Max-min auction fuzzing: random instances on a 0.05 grid, every upward deviation.
    let mut r = rng(5);
    let (mut mm_checks, mut mm_profitable, mut mm_bad_round) = (0usize, 0usize, 0usize);
    let mut max_gap = f64::NEG_INFINITY;
    let mut by_round: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..10_000 {
        let n = r.random_range(2..=6);
        let s = r.random_range(2..=3);
        let costs: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..s)
                    .map(|_| r.random_range(1..=20) as f64 * 0.05)
                    .collect()
            })
            .collect();
        let budget = r.random_range(1..=40) as f64 / 10.0;
        for user in 0..n {
            for task in 0..s {
                let c = costs[user][task];
                let grid: Vec<f64> = (1..=30)
                    .map(|i| i as f64 * 0.05)
                    .filter(|&b| b > c + 1e-12)
                    .collect();
                let reports =
                    deviation_sweep(Mechanism::MaxMin, &costs, budget, user, task, &grid).unwrap();
                for (_, rep) in reports {
                    mm_checks += 1;
                    max_gap = max_gap.max(rep.maxmin_gap);
                    if rep.profitable {
                        mm_profitable += 1;
                        *by_round.entry(format!("{:?}", rep.round_type)).or_default() += 1;
                        if !matches!(
                            rep.round_type,
                            DeviationRoundType::Reallocation | DeviationRoundType::Fractional
                        ) {
                            mm_bad_round += 1;
                        }
                    }
                }
            }
        }
    }
    let pass = share_profitable == 0 && mm_bad_round == 0 && max_gap <= 2.0;
    report(
        5,
        pass,
        Some(300.0),
        started,
        format_args!(
            "proportional share {share_profitable} profitable of {share_checks}; max-min {mm_profitable} profitable of {mm_checks} ({by_round:?}), {mm_bad_round} outside reallocation/fractional rounds, max gap {max_gap:.3}"
        ),
    );
}

#[test]
fn criterion_06_no_user_probabilities() {
    let started = Instant::now();
    let mm = no_user_probability_exp(1.0, 2.0, 2, Mechanism::MaxMin).unwrap();
    let bf = no_user_probability_exp(1.0, 2.0, 2, Mechanism::BudgetFair).unwrap();
    // Independent evaluation of the two expressions.
    let mm_expr = (-2f64).exp() * 3.0;
    let bf_expr = (-2f64).exp() * (2.0 * 1f64.exp() - 1.0);
    let closed_ok = (mm - 0.40601).abs() <= 1e-4
        && (bf - 0.60042).abs() <= 1e-4
        && (mm - mm_expr).abs() <= 1e-12
        && (bf - bf_expr).abs() <= 1e-12;

    let mut r = rng(6);
    let (mm_mc, mm_se) = no_user_event_mc(1.0, 2.0, Mechanism::MaxMin, 100_000, &mut r).unwrap();
    let (bf_mc, bf_se) =
        no_user_event_mc(1.0, 2.0, Mechanism::BudgetFair, 100_000, &mut r).unwrap();
    let mc_ok = (mm_mc - mm).abs() <= 3.0 * mm_se && (bf_mc - bf).abs() <= 3.0 * bf_se;

    let mut grid_ok = 0;
    for lambda in [0.25, 0.5, 1.0, 2.0, 4.0] {
        for budget in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let a = no_user_probability_exp(lambda, budget, 2, Mechanism::MaxMin).unwrap();
            let b = no_user_probability_exp(lambda, budget, 2, Mechanism::BudgetFair).unwrap();
            grid_ok += usize::from(a <= b);
        }
    }
    report(
        6,
        closed_ok && mc_ok && grid_ok == 25,
        Some(60.0),
        started,
        format_args!(
            "closed forms {mm:.5} / {bf:.5}; MC {mm_mc:.5}±{mm_se:.5} / {bf_mc:.5}±{bf_se:.5}; max-min <= budget-fair at {grid_ok}/25 grid points"
        ),
    );
}

fn read_summary(dir: &Path) -> RunSummary {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn read_seed(dir: &Path, label: &str, seed: u64) -> SeedSummary {
    let path = dir.join(label).join(format!("seed_{seed}.json"));
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn label<'a>(summary: &'a RunSummary, name: &str) -> &'a LabelSummary {
    summary.labels.iter().find(|l| l.label == name).unwrap()
}

#[test]
fn criterion_07_fair_allocation_vs_random() {
    let started = Instant::now();
    let cfg = preset("exp1-desk").unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let dir = harness::run_scenario(&cfg, tmp.path()).unwrap();
    let summary = read_summary(&dir);
    let fair = label(&summary, "alpha_fair_a3");
    let random = label(&summary, "random");
    let mut wins = 0;
    for &seed in &cfg.seeds {
        let a = read_seed(&dir, &fair.label, seed);
        let b = read_seed(&dir, &random.label, seed);
        wins += usize::from(a.min_accuracy >= b.min_accuracy);
    }
    let var_ok = fair.mean_accuracy_variance < random.mean_accuracy_variance;
    let mean_gap = (fair.mean_accuracy - random.mean_accuracy).abs();
    report(
        7,
        wins >= 4 && var_ok && mean_gap <= 0.02,
        Some(300.0),
        started,
        format_args!(
            "min-task accuracy wins {wins}/{}, mean variance {:.5} vs {:.5}, mean accuracy {:.4} vs {:.4}",
            cfg.seeds.len(),
            fair.mean_accuracy_variance,
            random.mean_accuracy_variance,
            fair.mean_accuracy,
            random.mean_accuracy
        ),
    );
}

#[test]
fn criterion_08_alpha_sweep_shares() {
    let started = Instant::now();
    let cfg = preset("exp4-alpha").unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let dir = harness::run_scenario(&cfg, tmp.path()).unwrap();
    let summary = read_summary(&dir);
    let hardest = cfg
        .tasks
        .iter()
        .max_by(|a, b| a.difficulty.total_cmp(&b.difficulty))
        .unwrap()
        .task_id;
    let shares: Vec<f64> = ["1", "2", "3", "6", "64"]
        .iter()
        .map(|a| label(&summary, &format!("alpha_fair_a{a}")).client_share[hardest])
        .collect();
    let monotone = shares.windows(2).all(|w| w[1] >= w[0]);
    let top_share = *shares.last().unwrap();
    let mut argmax_seeds = 0;
    for &seed in &cfg.seeds {
        let s = read_seed(&dir, "alpha_fair_a64", seed);
        let arg = (0..s.final_losses.len())
            .max_by(|&a, &b| s.final_losses[a].total_cmp(&s.final_losses[b]))
            .unwrap();
        argmax_seeds += usize::from(arg == hardest);
    }
    report(
        8,
        monotone && top_share >= 0.9 && argmax_seeds == cfg.seeds.len(),
        Some(600.0),
        started,
        format_args!(
            "hardest-task shares {shares:.3?}, alpha=64 share {top_share:.3}, still highest loss in {argmax_seeds}/{} seeds",
            cfg.seeds.len()
        ),
    );
}

#[test]
fn criterion_09_final_gap_bound_envelope() {
    let started = Instant::now();
    let task = TaskSpec {
        task_id: 0,
        difficulty: 1.0,
        input_dim: 3,
        n_classes: 2,
        loss_kind: LossKind::LeastSquares,
    };
    let shape = ScenarioShape {
        n_clients: 2,
        points_per_client: (40, 60),
        noniid_fraction: 0.5,
        noniid_classes: Some(1),
        test_points: 200,
    };
    let scenario = generate_scenario(std::slice::from_ref(&task), &shape, 9).unwrap();
    let clients = &scenario.shards[0];
    let (l, mu) = analysis::least_squares_curvature(clients).unwrap();
    let tau = 5;
    let lr_gamma = (8.0 * l / mu).max(tau as f64);
    let config = TrainingConfig {
        tau,
        batch_size: 5,
        lr_schedule: LrSchedule::Decaying {
            mu,
            gamma: lr_gamma,
        },
        rounds: 200,
        participation: 1.0,
    };
    let policy = AllocationPolicy::alpha_fair(3.0);
    let options = RunOptions {
        record_trajectory: true,
        recruitment: None,
    };
    let runs: Vec<_> = (0..20u64)
        .map(|seed| run_training_with(&scenario, &policy, &config, seed, &options).unwrap())
        .collect();

    let gamma = analysis::gamma_s(clients).unwrap();
    let w0 = task.zero_params();
    let mut points = vec![w0.clone(), gamma.global.params.clone()];
    for run in &runs {
        points.extend(run.trajectory.iter().map(|t| t[0].clone()));
    }
    let (sigma2, g2) =
        analysis::measured_gradient_bounds(clients, &points, config.batch_size, 1.1).unwrap();
    let local_optima = &gamma.local_optima;
    let (mut rho_lo, mut rho_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for w in points.iter().step_by(97) {
        if let Ok(rho) = analysis::selection_skew(clients, local_optima, w, 1.0) {
            rho_lo = rho_lo.min(rho);
            rho_hi = rho_hi.max(rho);
        }
    }
    let constants = ConvergenceConstants {
        l,
        mu,
        sigma2,
        g2,
        gamma_s: gamma.gamma.max(0.0),
        rho_lower: rho_lo,
        rho_upper: rho_hi,
    };
    let fstar = gamma.global.value;
    let mut held = 0;
    let mut rows = Vec::new();
    for t in [50usize, 100, 200] {
        let gaps: Vec<f64> = runs
            .iter()
            .map(|r| r.metrics[t - 1].tasks[0].loss - fstar)
            .collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let inputs = BoundInputs {
            tau,
            lr_gamma,
            t,
            init_dist2: w0.squared_distance(&gamma.global.params),
            ..BoundInputs::default()
        };
        let bound = analysis::bound_rhs(BoundKind::FinalGap, &constants, &inputs).unwrap();
        held += usize::from(mean <= bound);
        rows.push(format!("T={t}: gap {mean:.3e} <= {bound:.3e}"));
    }
    report(
        9,
        held == 3,
        Some(120.0),
        started,
        format_args!(
            "{held}/3 checkpoints bounded (L={l:.3}, mu={mu:.3}, gamma={lr_gamma:.1}, rho in [{rho_lo:.6}, {rho_hi:.6}]); {}",
            rows.join(", ")
        ),
    );
}

fn csv_files(dir: &Path, base: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            csv_files(&path, base, out);
        } else if path.extension().is_some_and(|e| e == "csv") {
            let key = path.strip_prefix(base).unwrap().display().to_string();
            out.insert(key, fs::read(&path).unwrap());
        }
    }
}

#[test]
fn criterion_10_presets_are_deterministic() {
    let started = Instant::now();
    let mut identical = 0;
    let mut files = 0;
    for name in PRESET_NAMES {
        let mut cfg = preset(name).unwrap();
        cfg.seeds = vec![cfg.seeds[0]];
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let tmp = tempfile::tempdir().unwrap();
            let dir = harness::run_scenario(&cfg, tmp.path()).unwrap();
            let mut map = BTreeMap::new();
            csv_files(&dir, &dir, &mut map);
            outputs.push(map);
        }
        files += outputs[0].len();
        identical += usize::from(!outputs[0].is_empty() && outputs[0] == outputs[1]);
    }
    report(
        10,
        identical == PRESET_NAMES.len(),
        None,
        started,
        format_args!(
            "{identical}/{} presets byte-identical across reruns ({files} CSV files)",
            PRESET_NAMES.len()
        ),
    );
}
