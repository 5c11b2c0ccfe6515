//! Progressive dynamic hurdles: training a candidate through a queue of
//! fitness thresholds, growing that queue as the search progresses, and
//! accounting for the train steps spent.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fitness::{EvaluationSession, Evaluator, FitnessError};
use crate::search_space::Genome;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PdhError {
    #[error("step increments must be a non-empty list of positive counts")]
    BadIncrements,
    #[error("models_per_hurdle must be positive")]
    BadModelsPerHurdle,
    #[error("{hurdles} hurdles leave no room in {increments} increments")]
    TooManyHurdles { hurdles: usize, increments: usize },
    #[error("{source} after {steps_used} steps")]
    EvaluationFailed {
        steps_used: u64,
        #[source]
        source: FitnessError,
    },
}

/// Step increments `s`, the hurdle queue `h` and the number of models `m`
/// between hurdle creations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HurdleSchedule {
    step_increments: Vec<u64>,
    models_per_hurdle: usize,
    hurdles: Vec<f64>,
}

impl HurdleSchedule {
    pub fn new(step_increments: Vec<u64>, models_per_hurdle: usize) -> Result<Self, PdhError> {
        if step_increments.is_empty() || step_increments.contains(&0) {
            return Err(PdhError::BadIncrements);
        }
        if models_per_hurdle == 0 {
            return Err(PdhError::BadModelsPerHurdle);
        }
        Ok(HurdleSchedule {
            step_increments,
            models_per_hurdle,
            hurdles: Vec::new(),
        })
    }

    /// A schedule with existing hurdles, as restored from a checkpoint.
    pub fn with_hurdles(
        step_increments: Vec<u64>,
        models_per_hurdle: usize,
        hurdles: Vec<f64>,
    ) -> Result<Self, PdhError> {
        let mut schedule = Self::new(step_increments, models_per_hurdle)?;
        if hurdles.len() >= schedule.step_increments.len() {
            return Err(PdhError::TooManyHurdles {
                hurdles: hurdles.len(),
                increments: schedule.step_increments.len(),
            });
        }
        schedule.hurdles = hurdles;
        Ok(schedule)
    }

    pub fn step_increments(&self) -> &[u64] {
        &self.step_increments
    }

    pub fn models_per_hurdle(&self) -> usize {
        self.models_per_hurdle
    }

    pub fn hurdles(&self) -> &[f64] {
        &self.hurdles
    }

    /// Steps granted to a model that passes every possible hurdle.
    pub fn total_steps(&self) -> u64 {
        self.step_increments.iter().sum()
    }

    /// Whether another hurdle may still be appended.
    pub fn can_grow(&self) -> bool {
        self.hurdles.len() + 1 < self.step_increments.len()
    }
}

/// One evaluation during a hurdle run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub gate: usize,
    pub steps: u64,
    pub fitness: f64,
    /// Threshold the fitness had to exceed; `None` for the implicit final
    /// hurdle.
    pub hurdle: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HurdleOutcome {
    pub fitness: f64,
    pub steps_used: u64,
    pub gates: Vec<GateRecord>,
    pub session: EvaluationSession,
}

/// Trains `genome` through `increments`, stopping at the first hurdle its
/// fitness fails to exceed strictly. `hurdles` is a snapshot; the implicit
/// last hurdle is infinite.
pub fn run_hurdles(
    genome: &Genome,
    eval_key: u64,
    increments: &[u64],
    hurdles: &[f64],
    evaluator: &dyn Evaluator,
) -> Result<HurdleOutcome, PdhError> {
    if increments.is_empty() {
        return Err(PdhError::BadIncrements);
    }
    if hurdles.len() >= increments.len() {
        return Err(PdhError::TooManyHurdles {
            hurdles: hurdles.len(),
            increments: increments.len(),
        });
    }
    let mut session = EvaluationSession::new(genome.clone(), eval_key);
    let mut gates = Vec::new();
    for (i, &inc) in increments.iter().enumerate() {
        session = session
            .train_and_evaluate(evaluator, inc)
            .map_err(|source| PdhError::EvaluationFailed {
                steps_used: session.steps_trained + inc,
                source,
            })?;
        let hurdle = hurdles.get(i).copied();
        let passed = hurdle.is_some_and(|h| session.fitness > h);
        gates.push(GateRecord {
            gate: i,
            steps: session.steps_trained,
            fitness: session.fitness,
            hurdle,
            passed,
        });
        if !passed {
            break;
        }
    }
    Ok(HurdleOutcome {
        fitness: session.fitness,
        steps_used: session.steps_trained,
        gates,
        session,
    })
}

/// Train-step accounting across a search.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub total_steps_consumed: u64,
    /// Steps per model id.
    pub per_model_steps: BTreeMap<u64, u64>,
    pub models_evaluated: u64,
}

impl BudgetLedger {
    pub fn charge(&mut self, model_id: u64, steps: u64) {
        self.total_steps_consumed += steps;
        *self.per_model_steps.entry(model_id).or_default() += steps;
        self.models_evaluated = self.per_model_steps.len() as u64;
    }

    pub fn is_consistent(&self) -> bool {
        self.per_model_steps.values().sum::<u64>() == self.total_steps_consumed
            && self.per_model_steps.len() as u64 == self.models_evaluated
    }
}

/// Runs [`run_hurdles`] against the current hurdles and charges the steps to
/// `model_id`, including steps spent before an evaluation failure.
pub fn fitness_with_hurdles(
    genome: &Genome,
    model_id: u64,
    eval_key: u64,
    schedule: &HurdleSchedule,
    evaluator: &dyn Evaluator,
    ledger: &mut BudgetLedger,
) -> Result<(f64, u64), PdhError> {
    match run_hurdles(
        genome,
        eval_key,
        &schedule.step_increments,
        &schedule.hurdles,
        evaluator,
    ) {
        Ok(outcome) => {
            ledger.charge(model_id, outcome.steps_used);
            Ok((outcome.fitness, outcome.steps_used))
        }
        Err(err) => {
            if let PdhError::EvaluationFailed { steps_used, .. } = err {
                ledger.charge(model_id, steps_used);
            }
            Err(err)
        }
    }
}

/// Mean fitness over the members trained for the most steps. `None` for an
/// empty population.
pub fn mean_fitness_of_max<I>(members: I) -> Option<f64>
where
    I: IntoIterator<Item = (u64, f64)>,
{
    let mut max_steps = 0;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (steps, fitness) in members {
        if count == 0 || steps > max_steps {
            max_steps = steps;
            sum = 0.0;
            count = 0;
        }
        if steps == max_steps {
            sum += fitness;
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Appends a hurdle at the mean fitness of the most-trained members once
/// `models_since_last_hurdle` reaches `m`, unless the queue is full. Resets
/// the counter and returns the new hurdle when one is created.
pub fn maybe_create_hurdle<I>(
    schedule: &mut HurdleSchedule,
    members: I,
    models_since_last_hurdle: &mut usize,
) -> Option<f64>
where
    I: IntoIterator<Item = (u64, f64)>,
{
    if *models_since_last_hurdle < schedule.models_per_hurdle || !schedule.can_grow() {
        return None;
    }
    let hurdle = mean_fitness_of_max(members)?;
    schedule.hurdles.push(hurdle);
    *models_since_last_hurdle = 0;
    Some(hurdle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitness::{ConstantEvaluator, FitnessError};
    use crate::search_space::transformer_seed;

    /// Fitness equals steps / 100, failing past a step limit.
    struct Linear {
        fail_after: u64,
    }

    impl Evaluator for Linear {
        fn evaluate(&self, _g: &Genome, _key: u64, steps: u64) -> Result<f64, FitnessError> {
            if steps > self.fail_after {
                Err(FitnessError::EvaluationFailed("diverged".into()))
            } else {
                Ok(steps as f64 / 100.0)
            }
        }
    }

    fn ok() -> Linear {
        Linear { fail_after: u64::MAX }
    }

    #[test]
    fn empty_queue_trains_first_increment_only() {
        let s = HurdleSchedule::new(vec![10, 20, 30], 5).unwrap();
        let mut ledger = BudgetLedger::default();
        let r = fitness_with_hurdles(&transformer_seed(), 0, 0, &s, &ok(), &mut ledger).unwrap();
        assert_eq!(r, (0.1, 10));
        assert_eq!(ledger.total_steps_consumed, 10);
    }

    #[test]
    fn failing_the_first_gate_stops() {
        let s = HurdleSchedule::with_hurdles(vec![40, 40], 5, vec![0.5]).unwrap();
        let mut ledger = BudgetLedger::default();
        let r = fitness_with_hurdles(&transformer_seed(), 0, 0, &s, &ok(), &mut ledger).unwrap();
        assert_eq!(r, (0.4, 40));
    }

    #[test]
    fn passing_every_hurdle_trains_the_full_schedule() {
        let s = HurdleSchedule::with_hurdles(vec![60, 20, 30], 5, vec![0.5, 0.7]).unwrap();
        let mut ledger = BudgetLedger::default();
        let r = fitness_with_hurdles(&transformer_seed(), 7, 0, &s, &ok(), &mut ledger).unwrap();
        assert_eq!(r, (1.1, 110));
        assert_eq!(ledger.per_model_steps[&7], 110);
        assert!(ledger.is_consistent());
    }

    #[test]
    fn tie_at_hurdle_stops() {
        let s = HurdleSchedule::with_hurdles(vec![1, 1], 1, vec![3.0]).unwrap();
        let mut ledger = BudgetLedger::default();
        let r = fitness_with_hurdles(&transformer_seed(), 0, 0, &s, &ConstantEvaluator(3.0), &mut ledger);
        assert_eq!(r.unwrap(), (3.0, 1));
    }

    #[test]
    fn failure_charges_spent_steps() {
        let s = HurdleSchedule::with_hurdles(vec![10, 10], 1, vec![0.0]).unwrap();
        let mut ledger = BudgetLedger::default();
        let err =
            fitness_with_hurdles(&transformer_seed(), 3, 0, &s, &Linear { fail_after: 15 }, &mut ledger).unwrap_err();
        assert!(matches!(err, PdhError::EvaluationFailed { steps_used: 20, .. }));
        assert_eq!(ledger.total_steps_consumed, 20);
        assert!(ledger.is_consistent());
    }

    #[test]
    fn mean_of_max_examples() {
        assert_eq!(mean_fitness_of_max([(10, 1.0), (10, 2.0), (10, 3.0)]), Some(2.0));
        assert_eq!(
            mean_fitness_of_max([(10, 0.0), (10, 0.0), (20, 4.0), (20, 6.0)]),
            Some(5.0)
        );
        assert_eq!(mean_fitness_of_max([(20, 4.0), (10, 9.0), (20, 6.0)]), Some(5.0));
        assert_eq!(mean_fitness_of_max(std::iter::empty()), None);
    }

    #[test]
    fn hurdle_creation_rules() {
        let pop = [(10, 1.0), (10, 2.0), (10, 3.0), (10, 4.0), (10, 5.0)];
        let mut s = HurdleSchedule::new(vec![10, 10], 3).unwrap();
        let mut counter = 2;
        assert_eq!(maybe_create_hurdle(&mut s, pop, &mut counter), None);
        counter = 3;
        assert_eq!(maybe_create_hurdle(&mut s, pop, &mut counter), Some(3.0));
        assert_eq!(counter, 0);
        assert_eq!(s.hurdles(), &[3.0]);
        counter = 3;
        assert_eq!(maybe_create_hurdle(&mut s, pop, &mut counter), None);
        assert_eq!(counter, 3);
    }

    #[test]
    fn bad_schedules_rejected() {
        assert_eq!(HurdleSchedule::new(vec![], 1), Err(PdhError::BadIncrements));
        assert_eq!(HurdleSchedule::new(vec![1, 0], 1), Err(PdhError::BadIncrements));
        assert_eq!(HurdleSchedule::new(vec![1], 0), Err(PdhError::BadModelsPerHurdle));
        assert!(HurdleSchedule::with_hurdles(vec![1], 1, vec![0.0]).is_err());
    }
}
