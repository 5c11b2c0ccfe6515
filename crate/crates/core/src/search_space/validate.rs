use std::fmt;

use crate::arch::{scale_dimensions, ArchError, ModelConfig};

use super::genome::{BlockGene, Genome};
use super::vocab::{CellKind, Combiner, LayerKind};

/// Constraints that delimit the search space, plus the knobs that shape
/// sampling and mutation.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationConfig {
    pub model: ModelConfig,
    /// When false the parameter-range check is skipped.
    pub check_param_range: bool,
    pub require_attend_to_encoder: bool,
    pub require_residual_path: bool,
    /// Adds `none` to the normalization vocabulary used for sampling and
    /// mutation.
    pub allow_no_normalization: bool,
    /// Retry bound for sampling and mutation redraws.
    pub max_attempts: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            model: ModelConfig::default(),
            check_param_range: true,
            require_attend_to_encoder: true,
            require_residual_path: true,
            allow_no_normalization: false,
            max_attempts: 1000,
        }
    }
}

impl ValidationConfig {
    /// Accepts every genome with in-range input indices.
    pub fn permissive() -> Self {
        ValidationConfig {
            check_param_range: false,
            require_attend_to_encoder: false,
            require_residual_path: false,
            allow_no_normalization: true,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValidityFailure {
    NoAttendToEncoder,
    NoResidualPath,
    ParamRangeUnsatisfiable,
    BadInputIndex,
}

impl fmt::Display for ValidityFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValidityFailure::NoAttendToEncoder => "NO_ATTEND_TO_ENCODER",
            ValidityFailure::NoResidualPath => "NO_RESIDUAL_PATH",
            ValidityFailure::ParamRangeUnsatisfiable => "PARAM_RANGE_UNSATISFIABLE",
            ValidityFailure::BadInputIndex => "BAD_INPUT_INDEX",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ValidityReport {
    pub failures: Vec<ValidityFailure>,
}

impl ValidityReport {
    pub fn valid(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn contains(&self, failure: ValidityFailure) -> bool {
        self.failures.contains(&failure)
    }
}

fn inputs_in_range(blocks: &[BlockGene]) -> bool {
    blocks
        .iter()
        .enumerate()
        .all(|(i, b)| (b.left.input as usize) <= i && (b.right.input as usize) <= i)
}

fn has_attend_to_encoder(genome: &Genome) -> bool {
    genome
        .decoder_blocks
        .iter()
        .any(|b| b.left.layer == LayerKind::AttendToEncoder || b.right.layer == LayerKind::AttendToEncoder)
}

/// Whether an unbroken chain of identity branches joined by addition leads
/// from the cell input to the cell output. Hidden states that no live branch
/// reads are summed into the output, which counts as a final addition link.
/// Input indices must already be in range.
pub fn has_residual_path(blocks: &[BlockGene]) -> bool {
    let n = blocks.len();
    let mut reach = vec![false; n + 1];
    let mut consumed = vec![false; n + 1];
    reach[0] = true;
    for (i, block) in blocks.iter().enumerate() {
        let mut carried = false;
        for branch in [&block.left, &block.right] {
            if branch.layer != LayerKind::DeadBranch {
                consumed[branch.input as usize] = true;
            }
            if branch.layer == LayerKind::Identity && reach[branch.input as usize] {
                carried = true;
            }
        }
        reach[i + 1] = carried && block.combiner == Combiner::Addition;
    }
    reach[n] || (0..n).any(|h| reach[h] && !consumed[h])
}

pub fn validate(genome: &Genome, config: &ValidationConfig) -> ValidityReport {
    let mut report = ValidityReport::default();
    let indices_ok = inputs_in_range(&genome.encoder_blocks) && inputs_in_range(&genome.decoder_blocks);
    if !indices_ok {
        report.failures.push(ValidityFailure::BadInputIndex);
    }
    if config.require_attend_to_encoder && !has_attend_to_encoder(genome) {
        report.failures.push(ValidityFailure::NoAttendToEncoder);
    }
    if indices_ok
        && config.require_residual_path
        && !(has_residual_path(genome.blocks(CellKind::Encoder)) && has_residual_path(genome.blocks(CellKind::Decoder)))
    {
        report.failures.push(ValidityFailure::NoResidualPath);
    }
    if indices_ok && config.check_param_range {
        if let Err(ArchError::ParamRangeUnsatisfiable { .. }) = scale_dimensions(genome, &config.model) {
            report.failures.push(ValidityFailure::ParamRangeUnsatisfiable);
        }
    }
    report
}

/// Cheap structural checks for one cell, used to reject samples early.
pub(crate) fn cell_is_structurally_valid(genome: &Genome, cell: CellKind, config: &ValidationConfig) -> bool {
    let blocks = genome.blocks(cell);
    if !inputs_in_range(blocks) {
        return false;
    }
    if cell == CellKind::Decoder && config.require_attend_to_encoder && !has_attend_to_encoder(genome) {
        return false;
    }
    !config.require_residual_path || has_residual_path(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::seeds::{et_seed, transformer_seed};

    #[test]
    fn transformer_is_valid() {
        assert!(validate(&transformer_seed(), &ValidationConfig::default()).valid());
    }

    #[test]
    fn missing_attend_to_encoder() {
        let mut g = transformer_seed();
        for b in g.decoder_blocks.iter_mut() {
            for br in [&mut b.left, &mut b.right] {
                if br.layer == LayerKind::AttendToEncoder {
                    br.layer = LayerKind::Identity;
                }
            }
        }
        let report = validate(&g, &ValidationConfig::default());
        assert!(report.contains(ValidityFailure::NoAttendToEncoder));
    }

    #[test]
    fn multiplicative_encoder_has_no_residual_path() {
        let mut g = transformer_seed();
        for b in g.encoder_blocks.iter_mut() {
            b.combiner = Combiner::Multiplication;
        }
        let report = validate(&g, &ValidationConfig::default());
        assert!(report.contains(ValidityFailure::NoResidualPath));
        assert!(!has_residual_path(&g.encoder_blocks));
        assert!(has_residual_path(&g.decoder_blocks));
    }

    #[test]
    fn unused_input_is_a_residual_link() {
        // Block 0 has no identity branch, but nothing else reads hidden 0
        // when every later branch skips it, and block 0 itself is dead on
        // both sides: the cell input flows straight to the output.
        let mut g = et_seed();
        let b0 = &mut g.encoder_blocks[0];
        b0.left.layer = LayerKind::DeadBranch;
        b0.right.layer = LayerKind::DeadBranch;
        assert!(has_residual_path(&g.encoder_blocks));
        // Give block 0 a live non-identity branch: hidden 0 is now consumed
        // and no identity chain starts from it.
        g.encoder_blocks[0].left.layer = LayerKind::GatedLinearUnit;
        assert!(!has_residual_path(&g.encoder_blocks));
    }

    #[test]
    fn bad_input_index_reported() {
        let mut g = transformer_seed();
        g.encoder_blocks[1].left.input = 4;
        let report = validate(&g, &ValidationConfig::default());
        assert_eq!(report.failures, vec![ValidityFailure::BadInputIndex]);
    }

    #[test]
    fn tight_range_is_unsatisfiable() {
        let mut cfg = ValidationConfig::default();
        cfg.model.param_range = [1_000, 2_000];
        let report = validate(&transformer_seed(), &cfg);
        assert_eq!(report.failures, vec![ValidityFailure::ParamRangeUnsatisfiable]);
    }
}
