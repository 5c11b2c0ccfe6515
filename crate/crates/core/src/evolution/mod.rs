//! Tournament-selection evolution without aging, evaluated through hurdles
//! or a fixed step count, driven by a pool of evaluation workers.

mod events;
mod population;
mod search;

pub use events::{first_gate_stats, read_events, replay, Event, EventKind, EventLog, FieldChange, Replay};
pub use population::{kill_and_insert, select_parent, select_victim, Individual, Population};
pub use search::{init_population, resume_search, run_search, top_k, Checkpoint, RunOptions, SearchResult};

use serde::{Deserialize, Serialize};

use crate::pdh::{HurdleSchedule, PdhError};
use crate::search_space::SearchSpaceError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedMode {
    /// Every slot starts as the Transformer genome.
    Transformer,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitnessMode {
    Pdh {
        step_increments: Vec<u64>,
        models_per_hurdle: usize,
    },
    FixedSteps {
        steps: u64,
    },
}

impl FitnessMode {
    /// Schedule driving evaluation; fixed-step mode is a single increment
    /// that never gains hurdles.
    pub fn schedule(&self) -> Result<HurdleSchedule, PdhError> {
        match self {
            FitnessMode::Pdh {
                step_increments,
                models_per_hurdle,
            } => HurdleSchedule::new(step_increments.clone(), *models_per_hurdle),
            FitnessMode::FixedSteps { steps } => HurdleSchedule::new(vec![*steps], 1),
        }
    }
}

/// When the search stops issuing children.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Number of children, not counting the initial population.
    Models(u64),
    /// Total train steps, initial population included. Children stop once
    /// less than half a fully trained child's cost remains.
    Steps(u64),
}

/// Mid-search change of mutation settings at a child-count threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSwitch {
    pub at_model: u64,
    pub rate: f64,
    pub allow_no_normalization: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub seed: u64,
    pub seed_mode: SeedMode,
    pub population_capacity: usize,
    pub parent_subpop: usize,
    pub kill_subpop: usize,
    pub mutation_rate: f64,
    #[serde(default)]
    pub allow_no_normalization: bool,
    #[serde(default)]
    pub mutation_switch: Option<ScheduleSwitch>,
    pub fitness_mode: FitnessMode,
    pub budget: Budget,
    pub worker_count: usize,
    pub max_consecutive_failures: usize,
    /// Whether initial-population evaluations count toward the first
    /// hurdle's `m`.
    #[serde(default)]
    pub count_initial_population: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            seed: 0,
            seed_mode: SeedMode::Transformer,
            population_capacity: 100,
            parent_subpop: 30,
            kill_subpop: 30,
            mutation_rate: 0.025,
            allow_no_normalization: false,
            mutation_switch: None,
            fitness_mode: FitnessMode::Pdh {
                step_increments: vec![30_000; 6],
                models_per_hurdle: 1000,
            },
            budget: Budget::Models(6000),
            worker_count: 1,
            max_consecutive_failures: 20,
            count_initial_population: false,
        }
    }
}

impl SearchConfig {
    pub fn check(&self) -> Result<(), SearchError> {
        let bad = |field: &str, message: String| {
            Err(SearchError::Config {
                field: field.into(),
                message,
            })
        };
        if self.population_capacity == 0 {
            return bad("population_capacity", "must be positive".into());
        }
        for (field, v) in [("parent_subpop", self.parent_subpop), ("kill_subpop", self.kill_subpop)] {
            if v == 0 || v > self.population_capacity {
                return bad(
                    field,
                    format!("{v} must be in [1, population_capacity = {}]", self.population_capacity),
                );
            }
        }
        let rates = std::iter::once(("mutation_rate", self.mutation_rate))
            .chain(self.mutation_switch.map(|s| ("mutation_switch.rate", s.rate)));
        for (field, rate) in rates {
            if !(0.0..=1.0).contains(&rate) {
                return bad(field, format!("{rate} outside [0, 1]"));
            }
        }
        if self.worker_count == 0 {
            return bad("worker_count", "must be positive".into());
        }
        if self.max_consecutive_failures == 0 {
            return bad("max_consecutive_failures", "must be positive".into());
        }
        if let Err(e) = self.fitness_mode.schedule() {
            return bad("fitness_mode", e.to_string());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("invalid config field {field}: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    SearchSpace(#[from] SearchSpaceError),
    #[error("{failures} consecutive evaluation failures; checkpoint saved")]
    FailureStorm { failures: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("event log replay: {0}")]
    Replay(String),
}
