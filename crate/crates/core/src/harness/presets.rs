//! Built-in desk-scale experiment configs.

use super::{AuctionConfig, PolicyConfig, ScenarioConfig};
use crate::auctions::{BidDistribution, Mechanism};
use crate::model::{LossKind, LrSchedule, TaskSpec, TrainingConfig};

pub const PRESET_NAMES: [&str; 6] = [
    "exp1-desk",
    "exp2-tasks",
    "exp3-clients",
    "exp4-alpha",
    "exp5-auctions",
    "exp6-pipeline",
];

/// `(difficulty, classes)` per task; harder tasks also have more classes.
fn tasks(specs: &[(f64, usize)]) -> Vec<TaskSpec> {
    specs
        .iter()
        .enumerate()
        .map(|(i, &(difficulty, n_classes))| TaskSpec {
            task_id: i,
            difficulty,
            input_dim: 10,
            n_classes,
            loss_kind: LossKind::Logistic,
        })
        .collect()
}

fn training(rounds: usize) -> TrainingConfig {
    TrainingConfig {
        tau: 5,
        batch_size: 10,
        lr_schedule: LrSchedule::Constant { eta: 0.2 },
        rounds,
        participation: 0.35,
    }
}

fn base(
    name: &str,
    specs: &[(f64, usize)],
    n_clients: usize,
    policies: Vec<PolicyConfig>,
) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        tasks: tasks(specs),
        n_clients,
        points_per_client: (20, 40),
        // Every client sees two classes, so a task's update quality depends on how many
        // clients it gets in a round.
        noniid_fraction: 1.0,
        noniid_classes: Some(2),
        test_points: 500,
        policies,
        training: training(200),
        auction: None,
        seeds: (0..5).collect(),
        output_dir: None,
    }
}

const EXP1_TASKS: [(f64, usize); 3] = [(0.25, 4), (1.0, 6), (2.5, 10)];
const TWO_TASKS: [(f64, usize); 2] = [(0.25, 4), (2.5, 10)];

fn two_task_bids() -> Vec<BidDistribution> {
    vec![
        BidDistribution::TruncatedGaussian {
            mean: 0.5,
            std: 0.25,
        },
        BidDistribution::IncreasingLinear,
    ]
}

/// Returns the named preset, or `None` for an unknown name.
pub fn preset(name: &str) -> Option<ScenarioConfig> {
    let fair_vs_baselines = || {
        vec![
            PolicyConfig::alpha_fair(3.0),
            PolicyConfig::named("random"),
            PolicyConfig::named("round_robin"),
        ]
    };
    Some(match name {
        "exp1-desk" => base(name, &EXP1_TASKS, 60, fair_vs_baselines()),
        "exp2-tasks" => base(
            name,
            &[(0.25, 4), (0.6, 5), (1.0, 6), (1.6, 8), (2.5, 10)],
            60,
            fair_vs_baselines(),
        ),
        "exp3-clients" => {
            let mut c = base(name, &EXP1_TASKS, 120, fair_vs_baselines());
            c.training.rounds = 150;
            c
        }
        "exp4-alpha" => base(
            name,
            &EXP1_TASKS,
            60,
            [1.0, 2.0, 3.0, 6.0, 64.0]
                .map(PolicyConfig::alpha_fair)
                .to_vec(),
        ),
        "exp5-auctions" => {
            let mut c = base(name, &TWO_TASKS, 100, Vec::new());
            c.seeds = (0..20).collect();
            c.auction = Some(AuctionConfig {
                mechanisms: vec![Mechanism::MaxMin, Mechanism::BudgetFair, Mechanism::GmmFair],
                budgets: (1..=20).map(|b| b as f64).collect(),
                bids: two_task_bids(),
                n_users: Some(100),
                pipeline: false,
            });
            c
        }
        "exp6-pipeline" => {
            let mut c = base(name, &TWO_TASKS, 60, vec![PolicyConfig::alpha_fair(3.0)]);
            c.training.rounds = 100;
            c.seeds = (0..3).collect();
            c.auction = Some(AuctionConfig {
                mechanisms: vec![Mechanism::MaxMin, Mechanism::BudgetFair],
                budgets: vec![3.0, 100.0],
                bids: two_task_bids(),
                n_users: None,
                pipeline: true,
            });
            c
        }
        _ => return None,
    })
}
