//! Genome → computation graph: composition, dimension scaling, parameter
//! counting and a small numeric forward pass used for structural checks.

mod forward;
mod graph;
mod report;
mod scale;

pub use forward::{combine, forward, forward_cell, Tensor};
pub use graph::{compose, BlockNode, BranchNode, CellGraph};
pub use report::graph_report;
pub use scale::{
    absolute_width, at_scale, natural_scale, param_count, scale_dimensions, BranchDims, CellDims, ScaledArchitecture,
    SCALE_SEARCH_ITERATIONS, SCALE_SEARCH_MAX, WIDTH_QUANTUM,
};

use serde::{Deserialize, Serialize};

use crate::search_space::{CellKind, Side};

/// Model-level settings shared by every candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Token embedding width; also the width every cell reads and writes.
    pub input_embedding_dim: usize,
    pub vocab_size: usize,
    /// Inclusive `[min, max]` total parameter bound.
    pub param_range: [u64; 2],
    /// Longest sequence accepted by the toy forward pass.
    pub sequence_length: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_embedding_dim: 512,
            vocab_size: 32768,
            param_range: [59_100_000, 64_100_000],
            sequence_length: 16,
        }
    }
}

impl ModelConfig {
    pub fn min_params(&self) -> u64 {
        self.param_range[0]
    }

    pub fn max_params(&self) -> u64 {
        self.param_range[1]
    }

    pub fn check(&self) -> Result<(), String> {
        if self.input_embedding_dim == 0 || self.vocab_size == 0 || self.sequence_length == 0 {
            return Err("model dimensions must be positive".into());
        }
        if self.param_range[0] == 0 || self.param_range[0] >= self.param_range[1] {
            return Err(format!(
                "param_range must satisfy 0 < min < max, got {:?}",
                self.param_range
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ArchError {
    #[error("malformed genome: {cell} block {block} {side} branch reads hidden state {input}, allowed range is [0, {})", block + 1)]
    MalformedGenome {
        cell: CellKind,
        block: usize,
        side: Side,
        input: u8,
    },
    #[error("no scale factor places the parameter count in [{min}, {max}] (smallest reachable count {floor}, largest {ceiling})")]
    ParamRangeUnsatisfiable {
        min: u64,
        max: u64,
        floor: u64,
        ceiling: u64,
    },
    #[error("shape error: combiner received sequence lengths {left} and {right}")]
    Shape { left: usize, right: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
