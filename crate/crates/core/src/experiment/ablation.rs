use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ExperimentError};
use crate::evolution::{
    first_gate_stats, run_search, top_k, Budget, EventKind, FitnessMode, RunOptions, SearchConfig, SearchResult,
    SeedMode,
};
use crate::fitness::{Evaluator, SimulatedOracle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    PdhSeed,
    PdhRandom,
    Fixed(u64),
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arm::PdhSeed => f.write_str("pdh_seed"),
            Arm::PdhRandom => f.write_str("pdh_random"),
            Arm::Fixed(n) => write!(f, "fixed_{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmRun {
    pub arm: String,
    pub models_evaluated: u64,
    pub steps_consumed: u64,
    /// True asymptote of the model with the highest search fitness.
    pub best_true_fitness: f64,
    pub best_search_fitness: f64,
    pub best_model_id: u64,
    pub first_gate_stopped: usize,
    pub first_gate_faced: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    /// Steps consumed by the seeded hurdle arm; every other arm is sized to it.
    pub budget: u64,
    pub runs: Vec<ArmRun>,
    pub random_worst: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub arm: String,
    pub mean_best_true_fitness: f64,
    pub sd_best_true_fitness: f64,
    pub mean_models_evaluated: f64,
    pub mean_steps_consumed: f64,
    /// Largest `|steps − budget| / budget` over replications.
    pub max_budget_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub name: String,
    pub replications: usize,
    pub arms: Vec<ArmStats>,
    /// `win_rates[i][j]`: fraction of replications where arm `i` beat arm
    /// `j`, ties counting one half.
    pub win_rates: Vec<Vec<f64>>,
    /// Fraction of replications in which the random-seeded arm was strictly
    /// worst.
    pub random_worst_fraction: f64,
    pub results: Vec<ReplicationResult>,
}

impl AblationReport {
    pub fn arm_index(&self, arm: &str) -> Option<usize> {
        self.arms.iter().position(|a| a.arm == arm)
    }

    pub fn win_rate(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.win_rates[self.arm_index(a)?][self.arm_index(b)?])
    }
}

/// One line of `report.csv`: an evaluation of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub model_id: u64,
    pub parent_id: Option<u64>,
    pub created_index: u64,
    pub steps: u64,
    /// `None` for failed evaluations.
    pub fitness: Option<f64>,
    pub true_asymptote: Option<f64>,
    pub arm: String,
    pub replication: usize,
}

impl CsvRow {
    pub const HEADER: &'static str = "model_id,parent_id,created_index,steps,fitness,true_asymptote,arm,replication";

    pub fn to_line(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.model_id,
            opt(self.parent_id.map(|p| p.to_string())),
            self.created_index,
            self.steps,
            opt(self.fitness.map(|f| f.to_string())),
            opt(self.true_asymptote.map(|f| f.to_string())),
            self.arm,
            self.replication
        )
    }
}

fn replication_seed(base: u64, replication: usize) -> u64 {
    base.wrapping_add(replication as u64)
}

/// Search configs of every arm for one replication, given the seeded hurdle
/// arm's consumption `budget`. The first entry is that hurdle arm itself.
pub fn arm_configs(config: &ExperimentConfig, replication: usize, budget: u64) -> Vec<(Arm, SearchConfig)> {
    let base = SearchConfig {
        seed: replication_seed(config.search.seed, replication),
        seed_mode: SeedMode::Transformer,
        worker_count: 1,
        ..config.search.clone()
    };
    let mut arms = vec![
        (Arm::PdhSeed, base.clone()),
        (
            Arm::PdhRandom,
            SearchConfig {
                seed_mode: SeedMode::Random,
                budget: Budget::Steps(budget),
                ..base.clone()
            },
        ),
    ];
    for &n in &config.fixed_steps {
        let total_models = (budget as f64 / n as f64).round() as u64;
        let children = total_models.saturating_sub(base.population_capacity as u64);
        arms.push((
            Arm::Fixed(n),
            SearchConfig {
                fitness_mode: FitnessMode::FixedSteps { steps: n },
                budget: Budget::Models(children),
                ..base.clone()
            },
        ));
    }
    arms
}

fn csv_rows(result: &SearchResult, arm: Arm, replication: usize, oracle: &SimulatedOracle) -> Vec<CsvRow> {
    let genomes: BTreeMap<u64, _> = result.evaluated.iter().map(|i| (i.created_index, &i.genome)).collect();
    let asymptote = |id: u64| genomes.get(&id).and_then(|g| oracle.true_fitness(g));
    result
        .events
        .iter()
        .filter_map(|e| {
            let (model_id, parent_id, steps, fitness) = match &e.kind {
                EventKind::Init {
                    model_id,
                    steps,
                    fitness,
                    ..
                } => (*model_id, None, *steps, Some(*fitness)),
                EventKind::EvalDone {
                    model_id,
                    parent_id,
                    steps,
                    fitness,
                } => (*model_id, *parent_id, *steps, Some(*fitness)),
                EventKind::EvalFailed {
                    model_id,
                    parent_id,
                    steps,
                    ..
                } => (*model_id, *parent_id, *steps, None),
                _ => return None,
            };
            Some(CsvRow {
                model_id,
                parent_id,
                created_index: model_id,
                steps,
                fitness,
                true_asymptote: asymptote(model_id),
                arm: arm.to_string(),
                replication,
            })
        })
        .collect()
}

fn run_replication(
    config: &ExperimentConfig,
    replication: usize,
) -> Result<(ReplicationResult, Vec<CsvRow>), ExperimentError> {
    let oracle = SimulatedOracle::new(crate::fitness::OracleConfig {
        seed: replication_seed(config.oracle.seed, replication),
        ..config.oracle.clone()
    })
    .map_err(|e| ExperimentError::Domain(e.to_string()))?;
    let options = RunOptions::default();
    let seeded = arm_configs(config, replication, 0).remove(0).1;
    let pdh = run_search(&seeded, &config.model, &oracle, &options)?;
    let budget = pdh.ledger.total_steps_consumed;
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for (arm, search) in arm_configs(config, replication, budget) {
        let result = match arm {
            Arm::PdhSeed => pdh.clone(),
            _ => run_search(&search, &config.model, &oracle, &options)?,
        };
        let best = top_k(&result, 1)
            .pop()
            .ok_or_else(|| ExperimentError::Domain(format!("arm {arm} evaluated no model")))?;
        let (stopped, faced) = first_gate_stats(&result.events);
        runs.push(ArmRun {
            arm: arm.to_string(),
            models_evaluated: result.ledger.models_evaluated,
            steps_consumed: result.ledger.total_steps_consumed,
            best_true_fitness: oracle.true_fitness(&best.genome).unwrap_or(f64::NAN),
            best_search_fitness: best.fitness,
            best_model_id: best.created_index,
            first_gate_stopped: stopped,
            first_gate_faced: faced,
        });
        rows.extend(csv_rows(&result, arm, replication, &oracle));
    }
    let random = runs[1].best_true_fitness;
    let random_worst = runs
        .iter()
        .enumerate()
        .all(|(i, r)| i == 1 || r.best_true_fitness > random);
    Ok((
        ReplicationResult {
            replication,
            budget,
            runs,
            random_worst,
        },
        rows,
    ))
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn summarize(config: &ExperimentConfig, results: Vec<ReplicationResult>) -> AblationReport {
    let arm_names: Vec<String> = results[0].runs.iter().map(|r| r.arm.clone()).collect();
    let arms = arm_names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let column: Vec<&ArmRun> = results.iter().map(|r| &r.runs[i]).collect();
            let best: Vec<f64> = column.iter().map(|r| r.best_true_fitness).collect();
            let (mean, sd) = mean_sd(&best);
            let n = column.len() as f64;
            ArmStats {
                arm: name.clone(),
                mean_best_true_fitness: mean,
                sd_best_true_fitness: sd,
                mean_models_evaluated: column.iter().map(|r| r.models_evaluated as f64).sum::<f64>() / n,
                mean_steps_consumed: column.iter().map(|r| r.steps_consumed as f64).sum::<f64>() / n,
                max_budget_deviation: results
                    .iter()
                    .map(|r| (r.runs[i].steps_consumed as f64 - r.budget as f64).abs() / r.budget as f64)
                    .fold(0.0, f64::max),
            }
        })
        .collect();
    let k = arm_names.len();
    let mut win_rates = vec![vec![0.0; k]; k];
    for (i, row) in win_rates.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let score: f64 = results
                .iter()
                .map(|r| {
                    let (a, b) = (r.runs[i].best_true_fitness, r.runs[j].best_true_fitness);
                    if a > b {
                        1.0
                    } else if a == b {
                        0.5
                    } else {
                        0.0
                    }
                })
                .sum();
            *cell = score / results.len() as f64;
        }
    }
    let random_worst_fraction = results.iter().filter(|r| r.random_worst).count() as f64 / results.len() as f64;
    AblationReport {
        name: config.name.clone(),
        replications: results.len(),
        arms,
        win_rates,
        random_worst_fraction,
        results,
    }
}

/// Runs every arm for each replication, spreading replications over
/// `threads` threads. Each search is single-worker, so the report does not
/// depend on `threads`.
type ReplicationOutput = Result<(ReplicationResult, Vec<CsvRow>), ExperimentError>;

pub fn run_ablation(
    config: &ExperimentConfig,
    threads: usize,
) -> Result<(AblationReport, Vec<CsvRow>), ExperimentError> {
    config.check()?;
    if config.replications < 2 {
        return Err(ExperimentError::Config {
            field: "replications".into(),
            message: "the ablation needs at least 2 replications".into(),
        });
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ReplicationOutput>>> = Mutex::new((0..config.replications).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, config.replications) {
            scope.spawn(|| loop {
                let r = next.fetch_add(1, Ordering::Relaxed);
                if r >= config.replications {
                    break;
                }
                let out = run_replication(config, r);
                slots.lock().expect("no panics while holding the lock")[r] = Some(out);
            });
        }
    });
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for slot in slots.into_inner().expect("threads joined") {
        let (result, mut r) = slot.expect("every replication ran")?;
        results.push(result);
        rows.append(&mut r);
    }
    Ok((summarize(config, results), rows))
}
