//! Seeded fixtures shared by the benchmarks.

use mmfl_core::model::generate_scenario;
use mmfl_core::{
    BidMatrix, LossKind, LrSchedule, Scenario, ScenarioShape, TaskSpec, TrainingConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n_users x n_tasks` bids drawn uniformly from [0, 1).
pub fn random_bids(n_users: usize, n_tasks: usize, seed: u64) -> BidMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bids = (0..n_users)
        .map(|_| (0..n_tasks).map(|_| rng.random::<f64>()).collect())
        .collect();
    BidMatrix::new(bids).expect("uniform bids are valid")
}

/// `n_tasks` logistic tasks of rising difficulty over `n_clients` clients.
pub fn scenario(n_tasks: usize, n_clients: usize, seed: u64) -> Scenario {
    let tasks: Vec<TaskSpec> = (0..n_tasks)
        .map(|s| TaskSpec {
            task_id: s,
            difficulty: 0.5 + s as f64,
            input_dim: 10,
            n_classes: 4,
            loss_kind: LossKind::Logistic,
        })
        .collect();
    let shape = ScenarioShape {
        n_clients,
        points_per_client: (20, 40),
        noniid_fraction: 0.5,
        noniid_classes: None,
        test_points: 200,
    };
    generate_scenario(&tasks, &shape, seed).expect("fixture scenario is valid")
}

pub fn training(rounds: usize) -> TrainingConfig {
    TrainingConfig {
        tau: 5,
        batch_size: 10,
        lr_schedule: LrSchedule::Constant { eta: 0.2 },
        rounds,
        participation: 0.35,
    }
}
