use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Mutex;
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::events::{replay, Event, EventKind, EventLog, FieldChange};
use super::population::{kill_and_insert, select_parent, Individual, Population};
use super::{Budget, SearchConfig, SearchError, SeedMode};
use crate::arch::ModelConfig;
use crate::fitness::Evaluator;
use crate::pdh::{maybe_create_hurdle, run_hurdles, BudgetLedger, HurdleOutcome, HurdleSchedule, PdhError};
use crate::search_space::{mutate_with_mask, random_genome, transformer_seed, Genome, ValidationConfig};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Mirror of the event log; required for resuming.
    pub events_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    /// Children between checkpoints; 0 saves only at the end.
    pub checkpoint_every: u64,
    /// Stop cleanly after this many completed children, as if interrupted.
    pub halt_after: Option<u64>,
}

/// Complete search state at a moment with no evaluation in flight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: SearchConfig,
    pub model: ModelConfig,
    pub population: Population,
    pub schedule: HurdleSchedule,
    pub ledger: BudgetLedger,
    pub rng: ChaCha8Rng,
    pub next_model_id: u64,
    pub children_issued: u64,
    pub children_completed: u64,
    pub models_since_last_hurdle: usize,
    pub mutation_rate: f64,
    pub allow_no_normalization: bool,
    pub switched: bool,
    pub event_count: u64,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self, SearchError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SearchError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub population: Population,
    pub events: Vec<Event>,
    pub ledger: BudgetLedger,
    pub hurdles: Vec<f64>,
    /// Every successfully evaluated model, by creation order.
    pub evaluated: Vec<Individual>,
    pub children_issued: u64,
    /// False when the run stopped at `halt_after`.
    pub completed: bool,
}

/// The `k` fittest models ever evaluated, ties broken by creation order.
pub fn top_k(result: &SearchResult, k: usize) -> Vec<Individual> {
    let mut all = result.evaluated.clone();
    all.sort_by(|a, b| {
        b.fitness
            .total_cmp(&a.fitness)
            .then(a.created_index.cmp(&b.created_index))
    });
    all.truncate(k);
    all
}

fn eval_key(seed: u64, model_id: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(29) ^ model_id
}

struct Task {
    model_id: u64,
    parent_id: Option<u64>,
    genome: Genome,
    eval_key: u64,
    increments: Vec<u64>,
    hurdles: Vec<f64>,
}

struct Done {
    task: Task,
    result: Result<HurdleOutcome, PdhError>,
}

struct Owner<'a> {
    st: Checkpoint,
    validation: ValidationConfig,
    log: EventLog,
    options: &'a RunOptions,
    in_flight: usize,
    consecutive_failures: usize,
}

impl Owner<'_> {
    fn workers(&self) -> usize {
        self.st.config.worker_count
    }

    fn send(&mut self, tx: &Sender<Task>, task: Task) {
        tx.send(task).expect("workers outlive the owner loop");
        self.in_flight += 1;
    }

    fn recv(&mut self, rx: &Receiver<Done>) -> Done {
        let done = rx.recv().expect("a task is in flight");
        self.in_flight -= 1;
        done
    }

    fn record_failure(
        &mut self,
        model_id: u64,
        parent_id: Option<u64>,
        steps: u64,
        message: String,
    ) -> Result<(), SearchError> {
        self.st.ledger.charge(model_id, steps);
        self.log.push(EventKind::EvalFailed {
            model_id,
            parent_id,
            steps,
            message,
        })?;
        self.consecutive_failures += 1;
        Ok(())
    }

    /// Unpacks a finished task into an outcome, or records its failure.
    fn settle(&mut self, done: Done) -> Result<Option<(Task, HurdleOutcome)>, SearchError> {
        let Done { task, result } = done;
        match result {
            Ok(outcome) if outcome.fitness.is_finite() => {
                self.consecutive_failures = 0;
                self.st.ledger.charge(task.model_id, outcome.steps_used);
                Ok(Some((task, outcome)))
            }
            Ok(outcome) => {
                self.record_failure(
                    task.model_id,
                    task.parent_id,
                    outcome.steps_used,
                    "non-finite fitness".into(),
                )?;
                Ok(None)
            }
            Err(PdhError::EvaluationFailed { steps_used, source }) => {
                self.record_failure(task.model_id, task.parent_id, steps_used, source.to_string())?;
                Ok(None)
            }
            Err(e) => Err(SearchError::Config {
                field: "fitness_mode".into(),
                message: e.to_string(),
            }),
        }
    }

    fn storm(&self) -> bool {
        self.consecutive_failures >= self.st.config.max_consecutive_failures
    }

    fn init_phase(&mut self, tx: &Sender<Task>, rx: &Receiver<Done>) -> Result<(), SearchError> {
        let capacity = self.st.config.population_capacity;
        loop {
            while !self.storm()
                && self.in_flight < self.workers()
                && self.st.population.len() + self.in_flight < capacity
            {
                let genome = match self.st.config.seed_mode {
                    SeedMode::Transformer => transformer_seed(),
                    SeedMode::Random => random_genome(&mut self.st.rng, &self.validation)?,
                };
                let model_id = self.st.next_model_id;
                self.st.next_model_id += 1;
                let task = Task {
                    model_id,
                    parent_id: None,
                    genome,
                    eval_key: eval_key(self.st.config.seed, model_id),
                    increments: self.st.schedule.step_increments().to_vec(),
                    hurdles: self.st.schedule.hurdles().to_vec(),
                };
                self.send(tx, task);
            }
            if self.in_flight == 0 {
                break;
            }
            let done = self.recv(rx);
            if let Some((task, outcome)) = self.settle(done)? {
                self.log.push(EventKind::Init {
                    model_id: task.model_id,
                    genome: task.genome.clone(),
                    steps: outcome.steps_used,
                    fitness: outcome.fitness,
                })?;
                self.st.population.members.push(Individual {
                    created_index: task.model_id,
                    parent_id: None,
                    genome: task.genome,
                    fitness: outcome.fitness,
                    steps_trained: outcome.steps_used,
                });
                if self.st.config.count_initial_population {
                    self.st.models_since_last_hurdle += 1;
                }
            }
        }
        if self.storm() {
            return Err(SearchError::FailureStorm {
                failures: self.consecutive_failures,
            });
        }
        self.check_hurdle()
    }

    fn check_hurdle(&mut self) -> Result<(), SearchError> {
        let counted = self.st.models_since_last_hurdle;
        let members = self.st.population.step_fitness().collect::<Vec<_>>();
        if let Some(value) = maybe_create_hurdle(&mut self.st.schedule, members, &mut self.st.models_since_last_hurdle)
        {
            self.log.push(EventKind::HurdleCreated {
                hurdle_index: self.st.schedule.hurdles().len() - 1,
                value,
                models_counted: counted,
            })?;
        }
        Ok(())
    }

    fn can_issue(&self) -> bool {
        if self.storm() {
            return false;
        }
        if let Some(h) = self.options.halt_after {
            if self.st.children_issued >= h {
                return false;
            }
        }
        self.budget_left()
    }

    /// A step budget stops once less than half a fully trained child's cost
    /// remains, so with one worker the final total lands within half a child
    /// of the budget on either side.
    fn budget_left(&self) -> bool {
        match self.st.config.budget {
            Budget::Models(n) => self.st.children_issued < n,
            Budget::Steps(b) => {
                let half_child = self.st.schedule.total_steps() / 2;
                self.st.ledger.total_steps_consumed + half_child < b
            }
        }
    }

    fn issue_child(&mut self, tx: &Sender<Task>) -> Result<(), SearchError> {
        if let Some(sw) = self.st.config.mutation_switch {
            if !self.st.switched && self.st.children_issued >= sw.at_model {
                self.st.switched = true;
                self.st.mutation_rate = sw.rate;
                self.st.allow_no_normalization = sw.allow_no_normalization;
                self.validation.allow_no_normalization = sw.allow_no_normalization;
                self.log.push(EventKind::ConfigSwitch {
                    at_model: self.st.children_issued,
                    mutation_rate: sw.rate,
                    allow_no_normalization: sw.allow_no_normalization,
                })?;
            }
        }
        let slot = select_parent(&self.st.population, self.st.config.parent_subpop, &mut self.st.rng);
        let parent = &self.st.population.members[slot];
        let parent_id = parent.created_index;
        let mutation = mutate_with_mask(
            &parent.genome,
            self.st.mutation_rate,
            &mut self.st.rng,
            &self.validation,
        )?;
        let mutations = mutation
            .mask
            .iter()
            .map(|&id| FieldChange {
                field: id.index(),
                name: id.addr().to_string(),
                from: parent.genome.get(id).to_string(),
                to: mutation.child.get(id).to_string(),
            })
            .collect();
        let model_id = self.st.next_model_id;
        self.st.next_model_id += 1;
        self.st.children_issued += 1;
        let hurdles = self.st.schedule.hurdles().to_vec();
        self.log.push(EventKind::EvalStart {
            model_id,
            parent_id,
            mutations,
            hurdles: hurdles.clone(),
        })?;
        let task = Task {
            model_id,
            parent_id: Some(parent_id),
            genome: mutation.child,
            eval_key: eval_key(self.st.config.seed, model_id),
            increments: self.st.schedule.step_increments().to_vec(),
            hurdles,
        };
        self.send(tx, task);
        Ok(())
    }

    fn complete_child(&mut self, done: Done) -> Result<(), SearchError> {
        self.st.children_completed += 1;
        let Some((task, outcome)) = self.settle(done)? else {
            return Ok(());
        };
        for g in &outcome.gates {
            self.log.push(EventKind::HurdleGate {
                model_id: task.model_id,
                gate: g.gate,
                steps: g.steps,
                fitness: g.fitness,
                hurdle: g.hurdle,
                passed: g.passed,
            })?;
        }
        self.log.push(EventKind::EvalDone {
            model_id: task.model_id,
            parent_id: task.parent_id,
            steps: outcome.steps_used,
            fitness: outcome.fitness,
        })?;
        let child = Individual {
            created_index: task.model_id,
            parent_id: task.parent_id,
            genome: task.genome,
            fitness: outcome.fitness,
            steps_trained: outcome.steps_used,
        };
        let (slot, killed) = kill_and_insert(
            &mut self.st.population,
            child,
            self.st.config.kill_subpop,
            &mut self.st.rng,
        );
        self.log.push(EventKind::Kill {
            model_id: killed.created_index,
            slot,
            fitness: killed.fitness,
        })?;
        self.log.push(EventKind::Insert {
            model_id: task.model_id,
            slot,
        })?;
        self.st.models_since_last_hurdle += 1;
        self.check_hurdle()
    }

    fn drain(&mut self, rx: &Receiver<Done>) -> Result<(), SearchError> {
        while self.in_flight > 0 {
            let done = self.recv(rx);
            self.complete_child(done)?;
        }
        Ok(())
    }

    fn save(&mut self) -> Result<(), SearchError> {
        self.log.flush()?;
        if let Some(path) = &self.options.checkpoint_path {
            self.st.event_count = self.log.len();
            self.st.save(path)?;
        }
        Ok(())
    }

    /// Returns whether the run reached its budget.
    fn children_phase(&mut self, tx: &Sender<Task>, rx: &Receiver<Done>) -> Result<bool, SearchError> {
        loop {
            while self.in_flight < self.workers() && self.can_issue() {
                self.issue_child(tx)?;
            }
            if self.in_flight == 0 {
                break;
            }
            let done = self.recv(rx);
            self.complete_child(done)?;
            if self.storm() {
                self.drain(rx)?;
                let failures = self.consecutive_failures;
                self.consecutive_failures = 0;
                self.save()?;
                return Err(SearchError::FailureStorm { failures });
            }
            let every = self.options.checkpoint_every;
            if every > 0 && self.st.children_completed.is_multiple_of(every) {
                self.drain(rx)?;
                self.save()?;
            }
        }
        let halted = self
            .options
            .halt_after
            .is_some_and(|h| self.st.children_completed >= h && self.budget_left());
        self.save()?;
        Ok(!halted)
    }
}

fn drive(
    st: Checkpoint,
    log: EventLog,
    evaluator: &dyn Evaluator,
    options: &RunOptions,
    needs_init: bool,
) -> Result<SearchResult, SearchError> {
    let validation = ValidationConfig {
        model: st.model.clone(),
        allow_no_normalization: st.allow_no_normalization,
        ..ValidationConfig::default()
    };
    let mut owner = Owner {
        st,
        validation,
        log,
        options,
        in_flight: 0,
        consecutive_failures: 0,
    };
    let (task_tx, task_rx) = mpsc::channel::<Task>();
    let task_rx = Mutex::new(task_rx);
    let (done_tx, done_rx) = mpsc::channel::<Done>();
    let completed = thread::scope(|scope| {
        for _ in 0..owner.workers() {
            let done_tx = done_tx.clone();
            let task_rx = &task_rx;
            scope.spawn(move || loop {
                let next = task_rx.lock().map(|rx| rx.recv());
                let Ok(Ok(task)) = next else { break };
                let result = run_hurdles(&task.genome, task.eval_key, &task.increments, &task.hurdles, evaluator);
                if done_tx.send(Done { task, result }).is_err() {
                    break;
                }
            });
        }
        drop(done_tx);
        let out = (|| {
            if needs_init {
                owner.init_phase(&task_tx, &done_rx)?;
                owner.save()?;
            }
            owner.children_phase(&task_tx, &done_rx)
        })();
        drop(task_tx);
        out
    })?;
    let Owner { st, log, .. } = owner;
    let events = log.into_events();
    let replayed = replay(&events)?;
    if replayed.population != st.population.members {
        return Err(SearchError::Replay(
            "event log does not reproduce the population".into(),
        ));
    }
    Ok(SearchResult {
        population: st.population,
        events,
        ledger: st.ledger,
        hurdles: st.schedule.hurdles().to_vec(),
        evaluated: replayed.evaluated.into_values().collect(),
        children_issued: st.children_issued,
        completed,
    })
}

/// Initializes a population and evolves it until the budget is spent.
/// With one worker the run, including its event log, is a deterministic
/// function of `config` and `model`.
pub fn run_search(
    config: &SearchConfig,
    model: &ModelConfig,
    evaluator: &dyn Evaluator,
    options: &RunOptions,
) -> Result<SearchResult, SearchError> {
    config.check()?;
    let log = match &options.events_path {
        Some(path) => EventLog::create(path)?,
        None => EventLog::in_memory(),
    };
    let st = Checkpoint {
        config: config.clone(),
        model: model.clone(),
        population: Population::new(config.population_capacity),
        schedule: config.fitness_mode.schedule().map_err(|e| SearchError::Config {
            field: "fitness_mode".into(),
            message: e.to_string(),
        })?,
        ledger: BudgetLedger::default(),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        next_model_id: 0,
        children_issued: 0,
        children_completed: 0,
        models_since_last_hurdle: 0,
        mutation_rate: config.mutation_rate,
        allow_no_normalization: config.allow_no_normalization,
        switched: false,
        event_count: 0,
    };
    drive(st, log, evaluator, options, true)
}

/// Continues a run from `checkpoint`, truncating the event log at
/// `options.events_path` to the checkpointed length first.
pub fn resume_search(
    checkpoint: &Path,
    evaluator: &dyn Evaluator,
    options: &RunOptions,
) -> Result<SearchResult, SearchError> {
    let st = Checkpoint::load(checkpoint)?;
    let events_path = options.events_path.as_ref().ok_or_else(|| SearchError::Config {
        field: "events_path".into(),
        message: "resuming needs the event log of the interrupted run".into(),
    })?;
    let log = EventLog::reopen(events_path, st.event_count)?;
    drive(st, log, evaluator, options, false)
}

/// The evaluated initial population `config` would start from.
pub fn init_population(
    config: &SearchConfig,
    model: &ModelConfig,
    evaluator: &dyn Evaluator,
) -> Result<Population, SearchError> {
    let config = SearchConfig {
        budget: Budget::Models(0),
        ..config.clone()
    };
    Ok(run_search(&config, model, evaluator, &RunOptions::default())?.population)
}
