//! Round orchestration: sample active clients, assign them to tasks, run local SGD,
//! aggregate per task, and refresh the allocation signals from server-held test sets.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{
    self, AllocationError, AllocationPolicy, PolicyKind, SignalMode, SIGNAL_FLOOR,
};
use crate::model::{self, ModelError, ParamVector, Scenario, TrainingConfig};

/// RNG stream used for training randomness; data generation uses the task ids.
pub const TRAINING_STREAM: u64 = 1 << 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("round {round}, task {task}, client {client}: {source}")]
    Local {
        round: usize,
        task: usize,
        client: usize,
        source: ModelError,
    },
    #[error("round {round}, task {task}: {source}")]
    Evaluation {
        round: usize,
        task: usize,
        source: ModelError,
    },
    #[error("round {round}: {source}")]
    Allocation {
        round: usize,
        source: AllocationError,
    },
    #[error("invalid training setup: {0}")]
    Config(String),
}

/// A run that stopped early. `partial` holds every round that completed.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("training aborted after {} rounds: {error}", partial.len())]
pub struct RunFailure {
    pub partial: Vec<RoundMetrics>,
    pub error: TrainError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task_id: usize,
    /// Training objective `f_s(w_s)` over all clients' shards.
    pub loss: f64,
    pub accuracy: f64,
    pub n_selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub tasks: Vec<TaskMetrics>,
    pub wall_clock_ms: f64,
}

/// Per-(client, task) recruitment level from an auction: 1 for full winners, a fraction
/// in (0, 1) for the fractional winner, 0 otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Recruitment {
    pub participation: Vec<Vec<f64>>,
}

impl Recruitment {
    pub fn everyone(n_clients: usize, n_tasks: usize) -> Self {
        Self {
            participation: vec![vec![1.0; n_tasks]; n_clients],
        }
    }

    /// Which tasks each listed client may train this round. A fractional level `x` is
    /// realized as a Bernoulli(x) draw; full and zero levels consume no randomness.
    pub fn draw<R: Rng + ?Sized>(&self, active: &[usize], rng: &mut R) -> Vec<Vec<bool>> {
        let n_tasks = self.participation.first().map_or(0, Vec::len);
        let mut eligible = vec![vec![false; n_tasks]; self.participation.len()];
        for &k in active {
            for (s, &x) in self.participation[k].iter().enumerate() {
                eligible[k][s] = if x >= 1.0 {
                    true
                } else if x > 0.0 {
                    rng.random::<f64>() < x
                } else {
                    false
                };
            }
        }
        eligible
    }

    pub fn recruited_count(&self, task: usize) -> usize {
        self.participation
            .iter()
            .filter(|row| row[task] >= 1.0)
            .count()
    }
}

#[derive(Debug, Clone)]
pub struct GlobalState {
    pub round: usize,
    pub params: Vec<ParamVector>,
    /// `signal_history[s][t]` is the signal of task `s` after round `t`.
    pub signal_history: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
}

impl GlobalState {
    pub fn new(scenario: &Scenario, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(TRAINING_STREAM);
        Self {
            round: 0,
            params: scenario.tasks.iter().map(|t| t.zero_params()).collect(),
            signal_history: vec![Vec::new(); scenario.n_tasks()],
            rng,
        }
    }

    /// Latest signal per task; before any evaluation every task reports 1.0, which makes
    /// the first alpha-fair assignment uniform.
    pub fn signals(&self) -> Vec<f64> {
        self.signal_history
            .iter()
            .map(|h| h.last().copied().unwrap_or(1.0))
            .collect()
    }
}

fn validate(scenario: &Scenario, config: &TrainingConfig) -> Result<(), TrainError> {
    config
        .validate()
        .map_err(|e| TrainError::Config(e.to_string()))?;
    if scenario.n_tasks() == 0 || scenario.n_clients() == 0 {
        return Err(TrainError::Config(
            "scenario has no tasks or no clients".into(),
        ));
    }
    if scenario
        .shards
        .iter()
        .any(|s| s.len() != scenario.n_clients())
    {
        return Err(TrainError::Config(
            "every task needs a shard for every client".into(),
        ));
    }
    Ok(())
}

/// Runs one global round and advances `state`.
pub fn run_round(
    state: &mut GlobalState,
    scenario: &Scenario,
    policy: &AllocationPolicy,
    config: &TrainingConfig,
    recruitment: Option<&Recruitment>,
) -> Result<RoundMetrics, TrainError> {
    let start = Instant::now();
    let t = state.round;
    let alloc_err = |source| TrainError::Allocation { round: t, source };
    let signals = state.signals();
    let lr = config.lr_schedule.rate(t);

    let active =
        allocation::sample_active(scenario.n_clients(), config.participation, &mut state.rng)
            .map_err(alloc_err)?;
    let eligible = recruitment.map(|r| r.draw(&active, &mut state.rng));
    let assignment = allocation::assign_tasks_restricted(
        policy,
        &signals,
        &active,
        eligible.as_deref(),
        t,
        &mut state.rng,
    )
    .map_err(alloc_err)?;

    let scales = match policy.kind {
        PolicyKind::QFelAdapted { q } => {
            let floored: Vec<f64> = signals.iter().map(|v| v.max(SIGNAL_FLOOR)).collect();
            Some(allocation::qfel_update_scale(&floored, q).map_err(alloc_err)?)
        }
        _ => None,
    };

    for (s, sel) in assignment.sel.iter().enumerate() {
        let weights = match allocation::aggregation_weights(sel, &scenario.weights(s)) {
            Some(w) => w,
            None => continue,
        };
        let w_s = &state.params[s];
        let mut update = vec![0.0; w_s.len()];
        for (&k, &a) in sel.iter().zip(&weights) {
            let local = model::local_sgd(
                &scenario.shards[s][k],
                w_s,
                config.tau,
                lr,
                config.batch_size,
                &mut state.rng,
            )
            .map_err(|source| TrainError::Local {
                round: t,
                task: s,
                client: k,
                source,
            })?;
            for ((u, wl), w0) in update.iter_mut().zip(&local.values).zip(&w_s.values) {
                *u += a * (wl - w0);
            }
        }
        let scale = scales.as_ref().map_or(1.0, |v| v[s]);
        let next: Vec<f64> = w_s
            .values
            .iter()
            .zip(&update)
            .map(|(w0, u)| w0 + scale * u)
            .collect();
        state.params[s].values = next;
    }

    let mut tasks = Vec::with_capacity(scenario.n_tasks());
    for s in 0..scenario.n_tasks() {
        let eval_err = |source| TrainError::Evaluation {
            round: t,
            task: s,
            source,
        };
        let w = &state.params[s];
        if !w.is_finite() {
            return Err(eval_err(ModelError::NonFinite { step: config.tau }));
        }
        let accuracy = model::evaluate_accuracy(&scenario.test_sets[s], w).map_err(eval_err)?;
        let signal = match policy.signal {
            SignalMode::ErrorRate => 1.0 - accuracy,
            SignalMode::Loss => model::test_loss(&scenario.test_sets[s], w).map_err(eval_err)?,
        };
        state.signal_history[s].push(signal.max(SIGNAL_FLOOR));
        tasks.push(TaskMetrics {
            task_id: scenario.tasks[s].task_id,
            loss: model::global_loss(&scenario.shards[s], w).map_err(eval_err)?,
            accuracy,
            n_selected: assignment.n_selected(s),
        });
    }
    state.round += 1;
    Ok(RoundMetrics {
        round: t,
        tasks,
        wall_clock_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Keep a copy of every task's parameters after each round.
    pub record_trajectory: bool,
    pub recruitment: Option<Recruitment>,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub metrics: Vec<RoundMetrics>,
    pub final_params: Vec<ParamVector>,
    pub final_accuracies: Vec<f64>,
    /// Total client-rounds each task received.
    pub cumulative_selected: Vec<usize>,
    /// `trajectory[t][s]`: parameters of task `s` after round `t`, when recorded.
    pub trajectory: Vec<Vec<ParamVector>>,
}

pub fn run_training(
    scenario: &Scenario,
    policy: &AllocationPolicy,
    config: &TrainingConfig,
    seed: u64,
) -> Result<TrainingRun, RunFailure> {
    run_training_with(scenario, policy, config, seed, &RunOptions::default())
}

pub fn run_training_with(
    scenario: &Scenario,
    policy: &AllocationPolicy,
    config: &TrainingConfig,
    seed: u64,
    options: &RunOptions,
) -> Result<TrainingRun, RunFailure> {
    let fail = |partial: &[RoundMetrics], error| RunFailure {
        partial: partial.to_vec(),
        error,
    };
    validate(scenario, config).map_err(|e| fail(&[], e))?;
    policy
        .validate()
        .map_err(|source| fail(&[], TrainError::Allocation { round: 0, source }))?;
    if let Some(r) = &options.recruitment {
        if r.participation.len() != scenario.n_clients()
            || r.participation
                .iter()
                .any(|row| row.len() != scenario.n_tasks())
        {
            return Err(fail(
                &[],
                TrainError::Config("recruitment table must be clients x tasks".into()),
            ));
        }
    }

    let mut state = GlobalState::new(scenario, seed);
    let mut metrics = Vec::with_capacity(config.rounds);
    let mut trajectory = Vec::new();
    let mut cumulative = vec![0; scenario.n_tasks()];
    for _ in 0..config.rounds {
        let m = run_round(
            &mut state,
            scenario,
            policy,
            config,
            options.recruitment.as_ref(),
        )
        .map_err(|e| fail(&metrics, e))?;
        for (c, t) in cumulative.iter_mut().zip(&m.tasks) {
            *c += t.n_selected;
        }
        if options.record_trajectory {
            trajectory.push(state.params.clone());
        }
        metrics.push(m);
    }

    let final_accuracies = match metrics.last() {
        Some(m) => m.tasks.iter().map(|t| t.accuracy).collect(),
        None => {
            let mut acc = Vec::with_capacity(scenario.n_tasks());
            for (s, w) in state.params.iter().enumerate() {
                acc.push(model::evaluate_accuracy(&scenario.test_sets[s], w).map_err(
                    |source| {
                        fail(
                            &[],
                            TrainError::Evaluation {
                                round: 0,
                                task: s,
                                source,
                            },
                        )
                    },
                )?);
            }
            acc
        }
    };
    Ok(TrainingRun {
        metrics,
        final_params: state.params,
        final_accuracies,
        cumulative_selected: cumulative,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_scenario, LossKind, LrSchedule, ScenarioShape, TaskSpec};

    fn scenario(n_tasks: usize, n_clients: usize, seed: u64) -> Scenario {
        let tasks: Vec<TaskSpec> = (0..n_tasks)
            .map(|i| TaskSpec {
                task_id: i,
                difficulty: 0.5 + i as f64,
                input_dim: 4,
                n_classes: 3,
                loss_kind: LossKind::Logistic,
            })
            .collect();
        let shape = ScenarioShape {
            n_clients,
            points_per_client: (20, 30),
            noniid_fraction: 0.5,
            noniid_classes: None,
            test_points: 60,
        };
        generate_scenario(&tasks, &shape, seed).unwrap()
    }

    fn config(rounds: usize, participation: f64) -> TrainingConfig {
        TrainingConfig {
            tau: 3,
            batch_size: 5,
            lr_schedule: LrSchedule::Constant { eta: 0.1 },
            rounds,
            participation,
        }
    }

    #[test]
    fn zero_rounds_returns_initial_weights() {
        let sc = scenario(2, 3, 1);
        let run =
            run_training(&sc, &AllocationPolicy::alpha_fair(3.0), &config(0, 1.0), 1).unwrap();
        assert!(run.metrics.is_empty());
        assert!(run
            .final_params
            .iter()
            .all(|w| w.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn rounds_partition_active_clients() {
        let sc = scenario(3, 10, 2);
        let run =
            run_training(&sc, &AllocationPolicy::alpha_fair(3.0), &config(15, 0.5), 2).unwrap();
        assert_eq!(run.metrics.len(), 15);
        for m in &run.metrics {
            assert_eq!(m.tasks.iter().map(|t| t.n_selected).sum::<usize>(), 5);
        }
    }

    #[test]
    fn state_history_tracks_rounds() {
        let sc = scenario(2, 4, 3);
        let mut state = GlobalState::new(&sc, 3);
        assert_eq!(state.signals(), vec![1.0, 1.0]);
        for t in 1..=4 {
            run_round(
                &mut state,
                &sc,
                &AllocationPolicy::new(PolicyKind::Random),
                &config(4, 1.0),
                None,
            )
            .unwrap();
            assert!(state.signal_history.iter().all(|h| h.len() == t));
        }
    }

    #[test]
    fn single_client_round_is_local_sgd() {
        let sc = scenario(1, 1, 5);
        let cfg = config(1, 1.0);
        let mut state = GlobalState::new(&sc, 9);
        // Mirror the RNG draws of one round: active-set sampling, then the task draw.
        let mut rng = state.rng.clone();
        allocation::sample_active(1, 1.0, &mut rng).unwrap();
        let _: f64 = rng.random();
        let expected =
            model::local_sgd(&sc.shards[0][0], &state.params[0], 3, 0.1, 5, &mut rng).unwrap();
        run_round(
            &mut state,
            &sc,
            &AllocationPolicy::alpha_fair(2.0),
            &cfg,
            None,
        )
        .unwrap();
        assert_eq!(state.params[0], expected);
    }

    #[test]
    fn recruitment_blocks_unrecruited_tasks() {
        let sc = scenario(2, 6, 4);
        let mut participation = vec![vec![1.0, 0.0]; 6];
        participation[5] = vec![0.0, 1.0];
        let options = RunOptions {
            record_trajectory: false,
            recruitment: Some(Recruitment { participation }),
        };
        let run = run_training_with(
            &sc,
            &AllocationPolicy::alpha_fair(3.0),
            &config(10, 1.0),
            4,
            &options,
        )
        .unwrap();
        for m in &run.metrics {
            assert_eq!(m.tasks[0].n_selected, 5);
            assert_eq!(m.tasks[1].n_selected, 1);
        }
    }

    #[test]
    fn failure_keeps_partial_metrics() {
        let mut sc = scenario(1, 2, 6);
        for c in sc.shards[0].iter_mut() {
            for p in c.points.iter_mut() {
                p.features.iter_mut().for_each(|v| *v *= 1e155);
            }
        }
        let mut cfg = config(5, 1.0);
        cfg.lr_schedule = LrSchedule::Constant { eta: 1e10 };
        let err =
            run_training(&sc, &AllocationPolicy::new(PolicyKind::Random), &cfg, 1).unwrap_err();
        assert!(err.partial.len() < 5);
        assert!(matches!(
            err.error,
            TrainError::Local { .. } | TrainError::Evaluation { .. }
        ));
    }
}
