//! Absolute widths and parameter counts.
//!
//! The scale factor σ is measured in units of [`WIDTH_QUANTUM`] channels per
//! relative-dimension step: a scaled layer with relative dimension `d` gets
//! `16 · max(1, round(d · σ))` output channels. At σ = embedding / 32 a layer
//! with relative dimension 2 is exactly as wide as the embedding.
//!
//! Per-layer parameter formulas (weights plus biases):
//!
//! | layer                      | parameters                          |
//! |----------------------------|-------------------------------------|
//! | standard conv `w`x1        | `in·out·w + out`                    |
//! | separable conv `w`x1       | `in·w + in·out + out`               |
//! | lightweight conv (`w`,`r`) | `ceil(in/r)·w`, output width = `in` |
//! | `h`-head attention         | `3·in·out + out·out + 4·out`        |
//! | attend to encoder          | `in·out + 2·enc·out + out·out + 4·out` |
//! | gated linear unit          | `2·(in·out + out)`                  |
//! | layer norm                 | `2·in`                              |
//!
//! Cell outputs are zero-padded or truncated back to the embedding width so
//! every stacked repetition sees the same input width, and the token
//! embedding is shared between encoder input, decoder input and softmax.

use crate::search_space::{Combiner, Genome, LayerKind, Normalization, RelDim};

use super::graph::{compose, BranchNode, CellGraph};
use super::{ArchError, ModelConfig};

pub const WIDTH_QUANTUM: usize = 16;
/// Upper end of the scale-factor search interval `(0, SCALE_SEARCH_MAX]`.
pub const SCALE_SEARCH_MAX: f64 = 64.0;
pub const SCALE_SEARCH_ITERATIONS: usize = 40;

pub fn absolute_width(rel_dim: RelDim, sigma: f64) -> usize {
    let quanta = (rel_dim.get() as f64 * sigma).round().max(1.0);
    WIDTH_QUANTUM * quanta as usize
}

/// Scale at which relative dimension 2 maps onto the embedding width.
pub fn natural_scale(config: &ModelConfig) -> f64 {
    config.input_embedding_dim as f64 / (2 * WIDTH_QUANTUM) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchDims {
    pub input_width: usize,
    /// `None` for dead branches.
    pub output_width: Option<usize>,
    pub params: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellDims {
    pub input_width: usize,
    /// Width of every hidden state, index 0 being the cell input.
    pub hidden: Vec<usize>,
    pub branches: Vec<[BranchDims; 2]>,
    /// Width of the summed cell output before fitting it to the model width.
    pub raw_output_width: usize,
    pub output_width: usize,
    pub params_per_repeat: u64,
}

/// A composed genome with every width resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledArchitecture {
    pub encoder_graph: CellGraph,
    pub decoder_graph: CellGraph,
    pub scale_factor: f64,
    pub model_width: usize,
    pub encoder_dims: CellDims,
    pub decoder_dims: CellDims,
    pub embedding_params: u64,
    pub total_params: u64,
}

fn layer_params(layer: LayerKind, input: usize, out: usize, enc_width: usize) -> u64 {
    let (i, o, e) = (input as u64, out as u64, enc_width as u64);
    match layer {
        LayerKind::StandardConv(k) => i * o * k.width() as u64 + o,
        LayerKind::SeparableConv(k) => i * k.width() as u64 + i * o + o,
        LayerKind::LightweightConv(k, r) => i.div_ceil(r.factor() as u64) * k.width() as u64,
        LayerKind::Attention(_) => 3 * i * o + o * o + 4 * o,
        LayerKind::AttendToEncoder => i * o + 2 * e * o + o * o + 4 * o,
        LayerKind::GatedLinearUnit => 2 * (i * o + o),
        LayerKind::Identity | LayerKind::DeadBranch => 0,
    }
}

fn branch_dims(branch: &BranchNode, input_width: usize, sigma: f64, enc_width: usize) -> BranchDims {
    let output_width = match branch.layer {
        LayerKind::DeadBranch => None,
        LayerKind::Identity | LayerKind::LightweightConv(..) => Some(input_width),
        _ => Some(absolute_width(branch.rel_dim, sigma)),
    };
    let norm_params = match (branch.normalization, branch.layer) {
        (_, LayerKind::DeadBranch) | (Normalization::None, _) => 0,
        (Normalization::LayerNorm, _) => 2 * input_width as u64,
    };
    let params = norm_params
        + output_width
            .map(|o| layer_params(branch.layer, input_width, o, enc_width))
            .unwrap_or(0);
    BranchDims {
        input_width,
        output_width,
        params,
    }
}

pub(crate) fn combined_width(left: Option<usize>, right: Option<usize>, combiner: Combiner, fallback: usize) -> usize {
    match (left, right) {
        (None, None) => fallback,
        (Some(w), None) | (None, Some(w)) => w,
        (Some(l), Some(r)) => match combiner {
            Combiner::Addition | Combiner::Multiplication => l.max(r),
            Combiner::Concatenation => l + r,
        },
    }
}

fn resolve_cell(graph: &CellGraph, sigma: f64, model_width: usize, enc_width: usize) -> CellDims {
    let mut hidden = vec![model_width];
    let mut branches = Vec::with_capacity(graph.blocks.len());
    for block in &graph.blocks {
        let left = branch_dims(&block.left, hidden[block.left.input], sigma, enc_width);
        let right = branch_dims(&block.right, hidden[block.right.input], sigma, enc_width);
        hidden.push(combined_width(
            left.output_width,
            right.output_width,
            block.combiner,
            left.input_width,
        ));
        branches.push([left, right]);
    }
    let raw_output_width = graph
        .output_addends
        .iter()
        .map(|&h| hidden[h])
        .max()
        .unwrap_or(model_width);
    let params_per_repeat = branches.iter().flat_map(|pair| pair.iter().map(|b| b.params)).sum();
    CellDims {
        input_width: model_width,
        hidden,
        branches,
        raw_output_width,
        output_width: model_width,
        params_per_repeat,
    }
}

/// Total parameters of `arch`: shared embedding plus each cell's parameters
/// times its repeat count.
pub fn param_count(arch: &ScaledArchitecture, config: &ModelConfig) -> u64 {
    let cell = |graph: &CellGraph, dims: &CellDims| {
        let per_repeat: u64 = dims
            .branches
            .iter()
            .flat_map(|pair| pair.iter().map(|b| b.params))
            .sum();
        graph.repeats as u64 * per_repeat
    };
    (config.vocab_size * config.input_embedding_dim) as u64
        + cell(&arch.encoder_graph, &arch.encoder_dims)
        + cell(&arch.decoder_graph, &arch.decoder_dims)
}

fn resolve(encoder_graph: CellGraph, decoder_graph: CellGraph, sigma: f64, config: &ModelConfig) -> ScaledArchitecture {
    let width = config.input_embedding_dim;
    let encoder_dims = resolve_cell(&encoder_graph, sigma, width, width);
    let decoder_dims = resolve_cell(&decoder_graph, sigma, width, width);
    let mut arch = ScaledArchitecture {
        encoder_graph,
        decoder_graph,
        scale_factor: sigma,
        model_width: width,
        encoder_dims,
        decoder_dims,
        embedding_params: (config.vocab_size * width) as u64,
        total_params: 0,
    };
    arch.total_params = param_count(&arch, config);
    arch
}

/// Resolves `genome` at an explicit scale factor without checking the
/// parameter range.
pub fn at_scale(genome: &Genome, config: &ModelConfig, sigma: f64) -> Result<ScaledArchitecture, ArchError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(ArchError::InvalidInput(format!(
            "scale factor must be positive and finite, got {sigma}"
        )));
    }
    let (enc, dec) = compose(genome, config)?;
    Ok(resolve(enc, dec, sigma, config))
}

/// Parameter count at scale `sigma` for already-composed graphs.
fn count_at(enc: &CellGraph, dec: &CellGraph, sigma: f64, config: &ModelConfig) -> u64 {
    let width = config.input_embedding_dim;
    let e = resolve_cell(enc, sigma, width, width);
    let d = resolve_cell(dec, sigma, width, width);
    (config.vocab_size * width) as u64
        + enc.repeats as u64 * e.params_per_repeat
        + dec.repeats as u64 * d.params_per_repeat
}

/// Finds the smallest scale factor in `(0, 64]` whose parameter count reaches
/// the lower bound of `config.param_range`, by bisection; the genome is
/// accepted when that count does not exceed the upper bound. Since the count
/// is non-decreasing in σ, a rejection here means no σ in the interval fits.
pub fn scale_dimensions(genome: &Genome, config: &ModelConfig) -> Result<ScaledArchitecture, ArchError> {
    let (enc, dec) = compose(genome, config)?;
    let [min, max] = config.param_range;
    let ceiling = count_at(&enc, &dec, SCALE_SEARCH_MAX, config);
    let unsatisfiable = |floor: u64| ArchError::ParamRangeUnsatisfiable {
        min,
        max,
        floor,
        ceiling,
    };
    if ceiling < min {
        return Err(unsatisfiable(count_at(&enc, &dec, f64::MIN_POSITIVE, config)));
    }
    let (mut lo, mut hi) = (0.0_f64, SCALE_SEARCH_MAX);
    for _ in 0..SCALE_SEARCH_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if count_at(&enc, &dec, mid, config) >= min {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let arch = resolve(enc, dec, hi, config);
    if arch.total_params > max {
        let floor = count_at(&arch.encoder_graph, &arch.decoder_graph, f64::MIN_POSITIVE, config);
        return Err(unsatisfiable(floor));
    }
    Ok(arch)
}
