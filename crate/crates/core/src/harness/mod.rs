//! Scenario configs, presets, seed fan-out, and result files.
//!
//! Layout of a run directory `<out>/<name>/`:
//!
//! ```text
//! manifest.json                 validated config
//! summary.json                  cross-seed summary per run label
//! <label>/seed_<s>.csv          round,task_id,loss,accuracy,n_selected
//! <label>/seed_<s>.json         final accuracies, min accuracy, variance, client shares
//! <label>/aggregate.csv         mean/min/max per round and task across seeds
//! takeup.csv                    auction take-up per seed, mechanism, budget and task
//! takeup_summary.csv            cross-seed min take-up per mechanism and budget
//! ```
//!
//! Labels are policy labels (`alpha_fair_a3`, `random`, ...) for plain runs and
//! `<mechanism>_B<budget>_<policy>` for auction-recruited runs.

mod analyze;
mod presets;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{AllocationPolicy, PolicyKind, SignalMode};
use crate::analysis::fairness_metrics;
use crate::auctions::takeup::sample_bids;
use crate::auctions::{AuctionError, BidDistribution, Mechanism};
use crate::fedtrain::{run_training_with, Recruitment, RoundMetrics, RunOptions};
use crate::model::{generate_scenario, ScenarioShape, TaskSpec, TrainingConfig};

pub use analyze::{analyze, AnalysisSummary};
pub use presets::{preset, PRESET_NAMES};

/// Stream for drawing auction bids, kept apart from data generation and training.
pub const BID_STREAM: u64 = 1 << 40;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("could not parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("{label}, seed {seed}: {message}")]
    Run {
        label: String,
        seed: u64,
        message: String,
    },
    #[error(transparent)]
    Auction(#[from] AuctionError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

fn config_err(key: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        key: key.into(),
        message: message.into(),
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One allocation policy, written flat: `{"policy": "alpha_fair", "alpha": 3}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub policy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default)]
    pub signal: SignalMode,
}

impl PolicyConfig {
    pub fn alpha_fair(alpha: f64) -> Self {
        Self {
            policy: "alpha_fair".into(),
            alpha: Some(alpha),
            q: None,
            signal: SignalMode::default(),
        }
    }

    pub fn named(policy: &str) -> Self {
        Self {
            policy: policy.into(),
            alpha: None,
            q: None,
            signal: SignalMode::default(),
        }
    }

    pub fn to_policy(&self, key: &str) -> Result<AllocationPolicy> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| {
                config_err(
                    format!("{key}.{name}"),
                    format!("required by `{}`", self.policy),
                )
            })
        };
        let kind = match self.policy.as_str() {
            "alpha_fair" => PolicyKind::AlphaFair {
                alpha: need(self.alpha, "alpha")?,
            },
            "random" => PolicyKind::Random,
            "round_robin" => PolicyKind::RoundRobin,
            "qfel" => PolicyKind::QFelAdapted {
                q: need(self.q, "q")?,
            },
            other => {
                return Err(config_err(
                    format!("{key}.policy"),
                    format!(
                    "unknown policy `{other}` (expected alpha_fair, random, round_robin or qfel)"
                ),
                ))
            }
        };
        let policy = AllocationPolicy {
            kind,
            signal: self.signal,
        };
        policy.validate().map_err(|e| {
            let field = if self.policy == "qfel" { "q" } else { "alpha" };
            config_err(format!("{key}.{field}"), e.to_string())
        })?;
        Ok(policy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionConfig {
    pub mechanisms: Vec<Mechanism>,
    pub budgets: Vec<f64>,
    /// One bid distribution per task.
    pub bids: Vec<BidDistribution>,
    /// Bidders for take-up runs; pipeline runs use every client.
    #[serde(default)]
    pub n_users: Option<usize>,
    /// Recruit training clients with each (mechanism, budget) and train on the result.
    #[serde(default)]
    pub pipeline: bool,
}

fn default_points() -> (usize, usize) {
    (20, 40)
}

fn default_noniid() -> f64 {
    0.5
}

fn default_test_points() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub tasks: Vec<TaskSpec>,
    pub n_clients: usize,
    #[serde(default = "default_points")]
    pub points_per_client: (usize, usize),
    #[serde(default = "default_noniid")]
    pub noniid_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noniid_classes: Option<usize>,
    #[serde(default = "default_test_points")]
    pub test_points: usize,
    #[serde(default)]
    pub policies: Vec<PolicyConfig>,
    pub training: TrainingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auction: Option<AuctionConfig>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// A validated run: policies resolved and labels assigned.
#[derive(Debug, Clone)]
struct Job {
    label: String,
    policy: AllocationPolicy,
    recruit: Option<(Mechanism, f64)>,
    seed: u64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    pub fn shape(&self) -> ScenarioShape {
        ScenarioShape {
            n_clients: self.n_clients,
            points_per_client: self.points_per_client,
            noniid_fraction: self.noniid_fraction,
            noniid_classes: self.noniid_classes,
            test_points: self.test_points,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(config_err(
                "name",
                "must be a non-empty plain directory name",
            ));
        }
        if self.seeds.is_empty() {
            return Err(config_err("seeds", "at least one seed is required"));
        }
        if self.tasks.is_empty() {
            return Err(config_err("tasks", "at least one task is required"));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            t.validate()
                .map_err(|e| config_err(format!("tasks[{i}]"), e.to_string()))?;
            if t.task_id != i {
                return Err(config_err(
                    format!("tasks[{i}].task_id"),
                    format!("task ids must be 0..S in order, got {}", t.task_id),
                ));
            }
        }
        if self.n_clients == 0 {
            return Err(config_err("n_clients", "must be at least 1"));
        }
        let (lo, hi) = self.points_per_client;
        if lo == 0 || lo > hi {
            return Err(config_err("points_per_client", "need 1 <= min <= max"));
        }
        if !(0.0..=1.0).contains(&self.noniid_fraction) {
            return Err(config_err("noniid_fraction", "must lie in [0, 1]"));
        }
        if self.noniid_classes == Some(0) {
            return Err(config_err("noniid_classes", "must be at least 1"));
        }
        if self.test_points == 0 {
            return Err(config_err("test_points", "must be at least 1"));
        }
        let t = &self.training;
        if t.tau == 0 {
            return Err(config_err("training.tau", "must be at least 1"));
        }
        if t.batch_size == 0 {
            return Err(config_err("training.batch_size", "must be at least 1"));
        }
        if !(t.participation > 0.0 && t.participation <= 1.0) {
            return Err(config_err("training.participation", "must lie in (0, 1]"));
        }
        t.lr_schedule
            .validate()
            .map_err(|e| config_err("training.lr_schedule", e.to_string()))?;
        for (i, p) in self.policies.iter().enumerate() {
            p.to_policy(&format!("policies[{i}]"))?;
        }
        match &self.auction {
            None if self.policies.is_empty() => {
                return Err(config_err(
                    "policies",
                    "nothing to run without policies or an auction",
                ))
            }
            None => {}
            Some(a) => self.validate_auction(a)?,
        }
        Ok(())
    }

    fn validate_auction(&self, a: &AuctionConfig) -> Result<()> {
        if a.mechanisms.is_empty() {
            return Err(config_err(
                "auction.mechanisms",
                "at least one mechanism is required",
            ));
        }
        if a.budgets.is_empty() {
            return Err(config_err(
                "auction.budgets",
                "at least one budget is required",
            ));
        }
        if let Some(i) = a.budgets.iter().position(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(config_err(
                format!("auction.budgets[{i}]"),
                "must be finite and >= 0",
            ));
        }
        if a.bids.len() != self.tasks.len() {
            return Err(config_err(
                "auction.bids",
                format!(
                    "need one distribution per task ({}), got {}",
                    self.tasks.len(),
                    a.bids.len()
                ),
            ));
        }
        for (i, d) in a.bids.iter().enumerate() {
            d.validate()
                .map_err(|e| config_err(format!("auction.bids[{i}]"), e.to_string()))?;
        }
        if a.n_users == Some(0) {
            return Err(config_err("auction.n_users", "must be at least 1"));
        }
        if a.pipeline && self.policies.is_empty() {
            return Err(config_err(
                "policies",
                "pipeline runs need at least one policy",
            ));
        }
        Ok(())
    }

    fn jobs(&self) -> Result<Vec<Job>> {
        let mut runs = Vec::new();
        for (i, p) in self.policies.iter().enumerate() {
            let policy = p.to_policy(&format!("policies[{i}]"))?;
            match &self.auction {
                Some(a) if a.pipeline => {
                    for &m in &a.mechanisms {
                        for &b in &a.budgets {
                            let label =
                                format!("{}_B{}_{}", m.name(), fmt_budget(b), policy.label());
                            runs.push((label, policy, Some((m, b))));
                        }
                    }
                }
                _ => runs.push((policy.label(), policy, None)),
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (label, _, _) in &runs {
            if !seen.insert(label.clone()) {
                return Err(config_err(
                    "policies",
                    format!("duplicate run label `{label}`"),
                ));
            }
        }
        Ok(runs
            .into_iter()
            .flat_map(|(label, policy, recruit)| {
                self.seeds.iter().map(move |&seed| Job {
                    label: label.clone(),
                    policy,
                    recruit,
                    seed,
                })
            })
            .collect())
    }
}

fn fmt_budget(b: f64) -> String {
    format!("{b}").replace('.', "p")
}

/// Per-seed summary written next to each seed's CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub label: String,
    pub seed: u64,
    pub final_accuracies: Vec<f64>,
    pub final_losses: Vec<f64>,
    pub min_accuracy: f64,
    pub mean_accuracy: f64,
    pub accuracy_variance: f64,
    /// Fraction of all client-rounds spent on each task.
    pub client_share: Vec<f64>,
    /// Full winners per task when clients were recruited by auction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recruited: Option<Vec<usize>>,
}

/// Cross-seed summary of one run label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub label: String,
    pub seeds: Vec<u64>,
    pub mean_min_accuracy: f64,
    pub mean_accuracy: f64,
    pub mean_accuracy_variance: f64,
    /// Per-task share of client-rounds pooled over all seeds.
    pub client_share: Vec<f64>,
    pub mean_final_accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TakeupRow {
    pub seed: u64,
    pub mechanism: Mechanism,
    pub budget: f64,
    pub task_id: usize,
    pub full_winners: usize,
    pub takeup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TakeupSummaryRow {
    pub mechanism: Mechanism,
    pub budget: f64,
    /// Mean over seeds of the smallest per-task take-up.
    pub mean_min_takeup: f64,
    /// Mean over seeds of this mechanism's min take-up minus budget-fair's.
    pub diff_vs_budget_fair: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub labels: Vec<LabelSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub takeup: Vec<TakeupSummaryRow>,
}

#[derive(Serialize)]
struct CsvRow {
    round: usize,
    task_id: usize,
    loss: f64,
    accuracy: f64,
    n_selected: usize,
}

#[derive(Serialize)]
struct AggregateRow {
    round: usize,
    task_id: usize,
    loss_mean: f64,
    loss_min: f64,
    loss_max: f64,
    accuracy_mean: f64,
    accuracy_min: f64,
    accuracy_max: f64,
    n_selected_mean: f64,
}

struct JobResult {
    metrics: Vec<RoundMetrics>,
    summary: SeedSummary,
}

/// Thread pool honoring `MMFL_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("MMFL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            builder = builder.num_threads(n);
        }
    }
    builder
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))
}

fn bid_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(BID_STREAM);
    rng
}

/// Users that an auction recruits for each task, or an error when the auction fails.
fn recruit(
    cfg: &ScenarioConfig,
    auction: &AuctionConfig,
    m: Mechanism,
    budget: f64,
    seed: u64,
) -> Result<Recruitment> {
    let bids = sample_bids(&auction.bids, cfg.n_clients, &mut bid_rng(seed));
    let out = m.run(&bids, budget)?;
    Ok(Recruitment {
        participation: out.participation,
    })
}

fn run_job(cfg: &ScenarioConfig, job: &Job) -> Result<JobResult> {
    let fail = |message: String| HarnessError::Run {
        label: job.label.clone(),
        seed: job.seed,
        message,
    };
    let scenario =
        generate_scenario(&cfg.tasks, &cfg.shape(), job.seed).map_err(|e| fail(e.to_string()))?;
    let mut options = RunOptions::default();
    let mut recruited = None;
    if let (Some((m, b)), Some(a)) = (job.recruit, &cfg.auction) {
        let r = recruit(cfg, a, m, b, job.seed)?;
        let counts: Vec<usize> = (0..cfg.tasks.len()).map(|s| r.recruited_count(s)).collect();
        for (s, &c) in counts.iter().enumerate() {
            let partial = r
                .participation
                .iter()
                .any(|row| row[s] > 0.0 && row[s] < 1.0);
            if c == 0 {
                log::warn!(
                    "{} seed {}: task {s} recruited no full winners{}",
                    job.label,
                    job.seed,
                    if partial {
                        ", training only with the fractional winner"
                    } else {
                        "; it stays frozen"
                    }
                );
            }
        }
        recruited = Some(counts);
        options.recruitment = Some(r);
    }
    let run = run_training_with(&scenario, &job.policy, &cfg.training, job.seed, &options)
        .map_err(|f| fail(f.error.to_string()))?;
    let final_losses = run
        .metrics
        .last()
        .map(|m| m.tasks.iter().map(|t| t.loss).collect())
        .unwrap_or_default();
    let report = fairness_metrics(&run.final_accuracies);
    let total: usize = run.cumulative_selected.iter().sum();
    let client_share = run
        .cumulative_selected
        .iter()
        .map(|&c| {
            if total > 0 {
                c as f64 / total as f64
            } else {
                0.0
            }
        })
        .collect();
    log::info!(
        "{} seed {} done: min accuracy {:.4}",
        job.label,
        job.seed,
        report.min
    );
    Ok(JobResult {
        summary: SeedSummary {
            label: job.label.clone(),
            seed: job.seed,
            final_accuracies: run.final_accuracies.clone(),
            final_losses,
            min_accuracy: report.min,
            mean_accuracy: report.mean,
            accuracy_variance: report.variance,
            client_share,
            recruited,
        },
        metrics: run.metrics,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_seed_csv(path: &Path, metrics: &[RoundMetrics]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for m in metrics {
        for t in &m.tasks {
            w.serialize(CsvRow {
                round: m.round,
                task_id: t.task_id,
                loss: t.loss,
                accuracy: t.accuracy,
                n_selected: t.n_selected,
            })?;
        }
    }
    w.flush().map_err(io_err(path))
}

fn write_aggregate(path: &Path, runs: &[&JobResult]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let rounds = runs.iter().map(|r| r.metrics.len()).min().unwrap_or(0);
    let n = runs.len() as f64;
    for t in 0..rounds {
        let n_tasks = runs[0].metrics[t].tasks.len();
        for s in 0..n_tasks {
            let cells: Vec<_> = runs.iter().map(|r| &r.metrics[t].tasks[s]).collect();
            let loss: Vec<f64> = cells.iter().map(|c| c.loss).collect();
            let acc: Vec<f64> = cells.iter().map(|c| c.accuracy).collect();
            w.serialize(AggregateRow {
                round: runs[0].metrics[t].round,
                task_id: s,
                loss_mean: loss.iter().sum::<f64>() / n,
                loss_min: loss.iter().copied().fold(f64::INFINITY, f64::min),
                loss_max: loss.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                accuracy_mean: acc.iter().sum::<f64>() / n,
                accuracy_min: acc.iter().copied().fold(f64::INFINITY, f64::min),
                accuracy_max: acc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                n_selected_mean: cells.iter().map(|c| c.n_selected as f64).sum::<f64>() / n,
            })?;
        }
    }
    w.flush().map_err(io_err(path))
}

fn summarize(label: &str, runs: &[&JobResult]) -> LabelSummary {
    let n = runs.len() as f64;
    let n_tasks = runs[0].summary.final_accuracies.len();
    let mut share = vec![0.0; n_tasks];
    let mut mean_acc = vec![0.0; n_tasks];
    for r in runs {
        for s in 0..n_tasks {
            share[s] += r.summary.client_share[s] / n;
            mean_acc[s] += r.summary.final_accuracies[s] / n;
        }
    }
    LabelSummary {
        label: label.to_string(),
        seeds: runs.iter().map(|r| r.summary.seed).collect(),
        mean_min_accuracy: runs.iter().map(|r| r.summary.min_accuracy).sum::<f64>() / n,
        mean_accuracy: runs.iter().map(|r| r.summary.mean_accuracy).sum::<f64>() / n,
        mean_accuracy_variance: runs
            .iter()
            .map(|r| r.summary.accuracy_variance)
            .sum::<f64>()
            / n,
        client_share: share,
        mean_final_accuracies: mean_acc,
    }
}

/// Take-up of every (seed, mechanism, budget, task) for the auction block.
pub fn takeup_table(cfg: &ScenarioConfig, auction: &AuctionConfig) -> Result<Vec<TakeupRow>> {
    let n_users = auction.n_users.unwrap_or(cfg.n_clients);
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let bids = sample_bids(&auction.bids, n_users, &mut bid_rng(seed));
        for &m in &auction.mechanisms {
            for &b in &auction.budgets {
                let out = m.run(&bids, b)?;
                let full = out.full_winners();
                for (s, t) in out.takeup().into_iter().enumerate() {
                    rows.push(TakeupRow {
                        seed,
                        mechanism: m,
                        budget: b,
                        task_id: s,
                        full_winners: full[s],
                        takeup: t,
                    });
                }
            }
        }
    }
    Ok(rows)
}

fn summarize_takeup(
    auction: &AuctionConfig,
    rows: &[TakeupRow],
    n_seeds: usize,
) -> Vec<TakeupSummaryRow> {
    let min_for = |m: Mechanism, b: f64| -> Vec<f64> {
        let mut by_seed: Vec<(u64, f64)> = Vec::new();
        for r in rows.iter().filter(|r| r.mechanism == m && r.budget == b) {
            match by_seed.iter_mut().find(|(s, _)| *s == r.seed) {
                Some(e) => e.1 = e.1.min(r.takeup),
                None => by_seed.push((r.seed, r.takeup)),
            }
        }
        by_seed.into_iter().map(|(_, v)| v).collect()
    };
    let mut out = Vec::new();
    for &m in &auction.mechanisms {
        for &b in &auction.budgets {
            let mins = min_for(m, b);
            let diff = auction
                .mechanisms
                .contains(&Mechanism::BudgetFair)
                .then(|| {
                    let base = min_for(Mechanism::BudgetFair, b);
                    mins.iter().zip(&base).map(|(a, c)| a - c).sum::<f64>() / n_seeds as f64
                });
            out.push(TakeupSummaryRow {
                mechanism: m,
                budget: b,
                mean_min_takeup: mins.iter().sum::<f64>() / n_seeds as f64,
                diff_vs_budget_fair: diff,
            });
        }
    }
    out
}

/// Runs every (label, seed) combination of `cfg` and writes results under
/// `<out_root>/<name>/`. Returns the run directory.
pub fn run_scenario(cfg: &ScenarioConfig, out_root: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let dir = out_root.join(&cfg.name);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_json(&dir.join("manifest.json"), cfg)?;

    let jobs = cfg.jobs()?;
    let pool = thread_pool()?;
    let results: Vec<Result<JobResult>> =
        pool.install(|| jobs.par_iter().map(|j| run_job(cfg, j)).collect());
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut labels: Vec<String> = Vec::new();
    for j in &jobs {
        if !labels.contains(&j.label) {
            labels.push(j.label.clone());
        }
    }
    let mut summary = RunSummary {
        name: cfg.name.clone(),
        labels: Vec::new(),
        takeup: Vec::new(),
    };
    for label in &labels {
        let ldir = dir.join(label);
        fs::create_dir_all(&ldir).map_err(io_err(&ldir))?;
        let runs: Vec<&JobResult> = jobs
            .iter()
            .zip(&results)
            .filter(|(j, _)| &j.label == label)
            .map(|(_, r)| r)
            .collect();
        for r in &runs {
            let seed = r.summary.seed;
            write_seed_csv(&ldir.join(format!("seed_{seed}.csv")), &r.metrics)?;
            write_json(&ldir.join(format!("seed_{seed}.json")), &r.summary)?;
        }
        write_aggregate(&ldir.join("aggregate.csv"), &runs)?;
        summary.labels.push(summarize(label, &runs));
    }

    if let Some(a) = &cfg.auction {
        let rows = takeup_table(cfg, a)?;
        let path = dir.join("takeup.csv");
        let mut w = csv_writer(&path)?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush().map_err(io_err(&path))?;
        summary.takeup = summarize_takeup(a, &rows, cfg.seeds.len());
        let path = dir.join("takeup_summary.csv");
        let mut w = csv_writer(&path)?;
        for r in &summary.takeup {
            w.serialize(r)?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(dir)
}
