//! Fitness evaluation: the evaluator contract used by evolution and hurdles,
//! training sessions, and a simulated learning-curve oracle.
//!
//! Fitness is negative log perplexity, so higher is better.

mod oracle;
mod session;

pub use oracle::{curve_for, feature_value, CurveParams, OracleConfig, SimulatedOracle, FEATURES};
pub use session::{EvaluationSession, HistoryPoint};

use crate::search_space::Genome;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitnessError {
    #[error("evaluation failed: {0}")]
    EvaluationFailed(String),
    #[error("training increments must be positive")]
    ZeroSteps,
    #[error("unknown oracle feature {0:?}")]
    UnknownFeature(String),
}

/// Something that can train a genome for a cumulative number of steps and
/// report its fitness.
///
/// `eval_key` identifies one training run. Implementations must be
/// deterministic in `(genome, eval_key, cumulative_steps)`; two runs of the
/// same genome with different keys may differ (measurement noise).
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, genome: &Genome, eval_key: u64, cumulative_steps: u64) -> Result<f64, FitnessError>;

    /// Long-run fitness of `genome` when the evaluator knows it.
    fn true_fitness(&self, _genome: &Genome) -> Option<f64> {
        None
    }

    /// Whether fitness is non-decreasing in steps for every genome and key.
    fn is_monotone(&self) -> bool {
        false
    }
}

/// Degenerate evaluator returning the same fitness for everything.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ConstantEvaluator(pub f64);

impl Evaluator for ConstantEvaluator {
    fn evaluate(&self, _genome: &Genome, _eval_key: u64, _cumulative_steps: u64) -> Result<f64, FitnessError> {
        Ok(self.0)
    }

    fn true_fitness(&self, _genome: &Genome) -> Option<f64> {
        Some(self.0)
    }

    fn is_monotone(&self) -> bool {
        true
    }
}

pub fn fitness_from_perplexity(perplexity: f64) -> f64 {
    -perplexity.ln()
}

pub fn perplexity_from_fitness(fitness: f64) -> f64 {
    (-fitness).exp()
}
