//! Post-processing of a run directory: fairness reports per label and bound tables for
//! least-squares tasks.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, write_json, HarnessError, Result, RunSummary, ScenarioConfig, SeedSummary};
use crate::analysis::{self, BoundInputs, BoundKind, ConvergenceConstants, FairnessReport};
use crate::model::{generate_scenario, LossKind, LrSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFairness {
    pub label: String,
    /// Over the cross-seed mean final accuracy of each task.
    pub accuracy: FairnessReport,
    /// Over the cross-seed mean final test loss of each task.
    pub loss: FairnessReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub name: String,
    pub fairness: Vec<LabelFairness>,
    pub bound_rows: usize,
}

#[derive(Serialize)]
struct BoundRow {
    task_id: usize,
    rounds: usize,
    l: f64,
    mu: f64,
    sigma2: f64,
    g2: f64,
    gamma_s: f64,
    final_gap_bound: f64,
}

fn read_seed(path: &Path) -> Result<SeedSummary> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads `<dir>/manifest.json`, `summary.json` and per-seed summaries, then writes
/// `<dir>/analysis/fairness.json` and `<dir>/analysis/bounds.csv`.
pub fn analyze(dir: &Path) -> Result<AnalysisSummary> {
    let manifest = dir.join("manifest.json");
    let cfg = ScenarioConfig::from_file(&manifest)?;
    let summary_path = dir.join("summary.json");
    let text = fs::read_to_string(&summary_path).map_err(io_err(&summary_path))?;
    let summary: RunSummary = serde_json::from_str(&text)?;

    let mut fairness = Vec::new();
    for label in &summary.labels {
        let mut acc = vec![0.0; cfg.tasks.len()];
        let mut loss = vec![0.0; cfg.tasks.len()];
        for seed in &label.seeds {
            let s = read_seed(&dir.join(&label.label).join(format!("seed_{seed}.json")))?;
            let n = label.seeds.len() as f64;
            for (i, (a, l)) in s.final_accuracies.iter().zip(&s.final_losses).enumerate() {
                acc[i] += a / n;
                loss[i] += l / n;
            }
        }
        fairness.push(LabelFairness {
            label: label.label.clone(),
            accuracy: analysis::fairness_metrics(&acc),
            loss: analysis::fairness_metrics(&loss),
        });
    }

    let out = dir.join("analysis");
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    write_json(&out.join("fairness.json"), &fairness)?;

    let rows = bound_rows(&cfg)?;
    let path = out.join("bounds.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(&path))?;

    Ok(AnalysisSummary {
        name: summary.name,
        fairness,
        bound_rows: rows.len(),
    })
}

/// Final-gap bound per least-squares task at the configured horizon, with constants
/// measured at the initial point. Logistic tasks lack strong convexity and are skipped.
fn bound_rows(cfg: &ScenarioConfig) -> Result<Vec<BoundRow>> {
    let seed = cfg.seeds[0];
    let scenario =
        generate_scenario(&cfg.tasks, &cfg.shape(), seed).map_err(|e| HarnessError::Run {
            label: "analysis".into(),
            seed,
            message: e.to_string(),
        })?;
    let lr_gamma = match cfg.training.lr_schedule {
        LrSchedule::Decaying { gamma, .. } => gamma,
        LrSchedule::Constant { .. } => 1.0,
    };
    let mut rows = Vec::new();
    for (s, task) in cfg.tasks.iter().enumerate() {
        if task.loss_kind != LossKind::LeastSquares {
            continue;
        }
        let analysis_err = |e: analysis::AnalysisError| HarnessError::Run {
            label: format!("analysis task {s}"),
            seed,
            message: e.to_string(),
        };
        let clients = &scenario.shards[s];
        let (l, mu) = analysis::least_squares_curvature(clients).map_err(analysis_err)?;
        let gamma = analysis::gamma_s(clients).map_err(analysis_err)?;
        let w0 = task.zero_params();
        let (sigma2, g2) = analysis::measured_gradient_bounds(
            clients,
            std::slice::from_ref(&w0),
            cfg.training.batch_size,
            1.1,
        )
        .map_err(analysis_err)?;
        let constants = ConvergenceConstants {
            l,
            mu,
            sigma2,
            g2,
            gamma_s: gamma.gamma.max(0.0),
            rho_lower: 1.0,
            rho_upper: 1.0,
        };
        let inputs = BoundInputs {
            tau: cfg.training.tau,
            lr_gamma,
            t: cfg.training.rounds,
            init_dist2: w0.squared_distance(&gamma.global.params),
            ..BoundInputs::default()
        };
        let final_gap_bound =
            analysis::bound_rhs(BoundKind::FinalGap, &constants, &inputs).map_err(analysis_err)?;
        rows.push(BoundRow {
            task_id: s,
            rounds: cfg.training.rounds,
            l,
            mu,
            sigma2,
            g2,
            gamma_s: constants.gamma_s,
            final_gap_bound,
        });
    }
    Ok(rows)
}
