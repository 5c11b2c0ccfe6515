//! Gene encoding of the architecture search space: vocabularies, the
//! canonical seed genomes, sampling, mutation, validation and diffing.

mod diff;
mod genome;
mod io;
mod sample;
pub mod seeds;
mod validate;
mod vocab;

pub use diff::{diff, DiffBranch, FieldDiff};
pub use genome::{
    BlockGene, BranchField, BranchGene, FieldAddr, FieldId, FieldTypeMismatch, FieldValue, Genome, GenomeId, Side,
};
pub use io::{deserialize, serialize};
pub use sample::{field_vocabulary, mutate, mutate_with_mask, random_genome, Mutation};
pub use seeds::{et_seed, transformer_seed};
pub use validate::{has_residual_path, validate, ValidationConfig, ValidityFailure, ValidityReport};
pub use vocab::{
    Activation, CellCount, CellKind, Combiner, Heads, LayerKind, LightweightKernel, Normalization, Reduction, RelDim,
    SeparableKernel, StandardKernel,
};

pub const ENCODER_BLOCKS: usize = 6;
pub const DECODER_BLOCKS: usize = 8;
pub const FIELDS_PER_BLOCK: usize = 11;
/// 11 fields per block × 14 blocks + 2 cell counts.
pub const FIELD_COUNT: usize = FIELDS_PER_BLOCK * (ENCODER_BLOCKS + DECODER_BLOCKS) + 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchSpaceError {
    #[error("no valid genome after {attempts} attempts; the constraints may be unsatisfiable")]
    ResampleLimitExceeded { attempts: usize },
    #[error("parse error at line {line}{}: {message}", field.as_ref().map(|f| format!(" ({f})")).unwrap_or_default())]
    Parse {
        line: usize,
        field: Option<String>,
        message: String,
    },
    #[error("line {line}: value {value:?} is outside the vocabulary of {field}")]
    Vocab { line: usize, field: String, value: String },
    #[error("mutation rate {0} outside [0, 1]")]
    BadRate(f64),
}
