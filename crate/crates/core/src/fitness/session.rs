use serde::{Deserialize, Serialize};

use super::{Evaluator, FitnessError};
use crate::search_space::{Genome, GenomeId};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub steps: u64,
    pub fitness: f64,
}

/// One genome's training run: cumulative steps so far and every evaluation
/// made along the way.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationSession {
    pub genome: Genome,
    pub genome_id: GenomeId,
    pub eval_key: u64,
    pub steps_trained: u64,
    /// Latest evaluation; `NaN` before the first one.
    pub fitness: f64,
    pub history: Vec<HistoryPoint>,
}

impl EvaluationSession {
    pub fn new(genome: Genome, eval_key: u64) -> Self {
        EvaluationSession {
            genome_id: genome.id(),
            genome,
            eval_key,
            steps_trained: 0,
            fitness: f64::NAN,
            history: Vec::new(),
        }
    }

    /// Trains `additional_steps` more steps and evaluates.
    pub fn train_and_evaluate(
        &self,
        evaluator: &dyn Evaluator,
        additional_steps: u64,
    ) -> Result<EvaluationSession, FitnessError> {
        if additional_steps == 0 {
            return Err(FitnessError::ZeroSteps);
        }
        let steps = self.steps_trained + additional_steps;
        let fitness = evaluator.evaluate(&self.genome, self.eval_key, steps)?;
        let mut next = self.clone();
        next.steps_trained = steps;
        next.fitness = fitness;
        next.history.push(HistoryPoint { steps, fitness });
        Ok(next)
    }
}
