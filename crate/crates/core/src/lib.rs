//! Fair concurrent training of several federated-learning tasks over one client pool.
//!
//! * [`model`]: synthetic convex tasks, client shards, losses, and local SGD.
//! * [`allocation`]: per-round client sampling and client-to-task assignment.
//! * [`fedtrain`]: the round orchestrator and training loop.
//! * [`auctions`]: budget-feasible recruitment mechanisms and their test harnesses.
//! * [`analysis`]: fairness metrics, convergence-bound calculators, and brute-force oracles.
//! * [`harness`]: scenario configs, presets, seed fan-out, and CSV/JSON output.

pub mod allocation;
pub mod analysis;
pub mod auctions;
pub mod fedtrain;
pub mod harness;
pub mod model;

pub use allocation::{
    AllocationError, AllocationPolicy, AllocationProbabilities, PolicyKind, RoundAssignment,
    SignalMode,
};
pub use auctions::{AuctionError, AuctionOutcome, BidMatrix, Mechanism};
pub use fedtrain::{GlobalState, RoundMetrics, TaskMetrics, TrainError, TrainingRun};
pub use harness::{HarnessError, ScenarioConfig};
pub use model::{
    ClientDataset, LossKind, LrSchedule, ModelError, ParamVector, Sample, Scenario, ScenarioShape,
    TaskSpec, TestSet, TrainingConfig,
};
