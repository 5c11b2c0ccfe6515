//! Toy numeric execution of a scaled architecture.
//!
//! Weights are drawn uniformly from [-0.1, 0.1] in a fixed traversal order, so
//! a given rng seed always produces the same network. Nothing here is meant to
//! be trained; the pass exists to check wiring, padding and causality.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::search_space::{Activation, CellKind, Combiner, LayerKind, Normalization};

use super::graph::{BranchNode, CellGraph};
use super::scale::{BranchDims, CellDims, ScaledArchitecture};
use super::{ArchError, ModelConfig};

/// Sequence × channels.
pub type Tensor = Array2<f64>;

const INIT_RANGE: f64 = 0.1;
const NORM_EPS: f64 = 1e-6;
const ENCODER_ATTENTION_HEADS: usize = 8;
const LEAKY_SLOPE: f64 = 0.01;

struct Init<'a, R: Rng> {
    rng: &'a mut R,
}

impl<R: Rng> Init<'_, R> {
    fn matrix(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || self.rng.random_range(-INIT_RANGE..=INIT_RANGE))
    }

    fn vector(&mut self, len: usize) -> Array1<f64> {
        Array1::from_shape_simple_fn(len, || self.rng.random_range(-INIT_RANGE..=INIT_RANGE))
    }
}

fn pad_channels(x: &Tensor, width: usize, fill: f64) -> Tensor {
    if x.ncols() >= width {
        return x.clone();
    }
    let mut out = Array2::from_elem((x.nrows(), width), fill);
    out.slice_mut(s![.., ..x.ncols()]).assign(x);
    out
}

fn fit_channels(x: Tensor, width: usize) -> Tensor {
    if x.ncols() > width {
        x.slice(s![.., ..width]).to_owned()
    } else {
        pad_channels(&x, width, 0.0)
    }
}

/// Joins two branch outputs. Addition pads the narrower operand with zeros,
/// multiplication with ones, concatenation stacks channels.
pub fn combine(left: Option<Tensor>, right: Option<Tensor>, combiner: Combiner) -> Result<Option<Tensor>, ArchError> {
    let (l, r) = match (left, right) {
        (Some(l), Some(r)) => (l, r),
        (l, r) => return Ok(l.or(r)),
    };
    if l.nrows() != r.nrows() {
        return Err(ArchError::Shape {
            left: l.nrows(),
            right: r.nrows(),
        });
    }
    let width = l.ncols().max(r.ncols());
    Ok(Some(match combiner {
        Combiner::Addition => pad_channels(&l, width, 0.0) + pad_channels(&r, width, 0.0),
        Combiner::Multiplication => pad_channels(&l, width, 1.0) * pad_channels(&r, width, 1.0),
        Combiner::Concatenation => concatenate![Axis(1), l, r],
    }))
}

fn layer_norm(x: &Tensor, gain: &Array1<f64>, bias: &Array1<f64>) -> Tensor {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * inv * gain[j] + bias[j];
        }
    }
    out
}

fn activate(x: Tensor, activation: Activation) -> Tensor {
    match activation {
        Activation::None => x,
        Activation::Relu => x.mapv(|v| v.max(0.0)),
        Activation::LeakyRelu => x.mapv(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v }),
        Activation::Swish => x.mapv(|v| v * sigmoid(v)),
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Input row feeding tap `k` of a width-`w` kernel at output position `t`.
/// Non-causal kernels are centred; causal ones shift the input right by
/// `(w - 1) / 2` so the last tap sits on position `t`.
fn tap(t: usize, k: usize, w: usize, causal: bool, len: usize) -> Option<usize> {
    let back = if causal { w - 1 } else { (w - 1) / 2 };
    let pos = (t + k).checked_sub(back)?;
    (pos < len).then_some(pos)
}

fn depthwise(x: &Tensor, kernel: &Array2<f64>, channel_kernel: impl Fn(usize) -> usize, causal: bool) -> Tensor {
    let (len, ch) = x.dim();
    let w = kernel.ncols();
    let mut out = Array2::zeros((len, ch));
    for t in 0..len {
        for k in 0..w {
            if let Some(p) = tap(t, k, w, causal, len) {
                for c in 0..ch {
                    out[[t, c]] += kernel[[channel_kernel(c), k]] * x[[p, c]];
                }
            }
        }
    }
    out
}

fn softmax_rows(mut m: Array2<f64>) -> Array2<f64> {
    for mut row in m.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    m
}

fn attention(
    query_in: &Tensor,
    memory: ArrayView2<f64>,
    out: usize,
    heads: usize,
    causal: bool,
    init: &mut Init<'_, impl Rng>,
) -> Tensor {
    let wq = init.matrix(query_in.ncols(), out);
    let bq = init.vector(out);
    let wk = init.matrix(memory.ncols(), out);
    let bk = init.vector(out);
    let wv = init.matrix(memory.ncols(), out);
    let bv = init.vector(out);
    let wo = init.matrix(out, out);
    let bo = init.vector(out);
    let q = query_in.dot(&wq) + &bq;
    let k = memory.dot(&wk) + &bk;
    let v = memory.dot(&wv) + &bv;
    let head_dim = out / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut mixed = Array2::zeros((query_in.nrows(), out));
    for h in 0..heads {
        let cols = s![.., h * head_dim..(h + 1) * head_dim];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        if causal {
            for ((i, j), v) in scores.indexed_iter_mut() {
                if j > i {
                    *v = f64::NEG_INFINITY;
                }
            }
        }
        let weights = softmax_rows(scores);
        mixed.slice_mut(cols).assign(&weights.dot(&v.slice(cols)));
    }
    mixed.dot(&wo) + &bo
}

fn run_layer(
    branch: &BranchNode,
    dims: &BranchDims,
    x: &Tensor,
    encoder_out: Option<&Tensor>,
    init: &mut Init<'_, impl Rng>,
) -> Result<Tensor, ArchError> {
    let input = x.ncols();
    let out = dims.output_width.unwrap_or(input);
    let y = match branch.layer {
        LayerKind::DeadBranch => unreachable!("dead branches are skipped"),
        LayerKind::Identity => x.clone(),
        LayerKind::StandardConv(kernel) => {
            let w = kernel.width();
            let weights: Vec<Array2<f64>> = (0..w).map(|_| init.matrix(input, out)).collect();
            let bias = init.vector(out);
            let len = x.nrows();
            let mut y = Array2::zeros((len, out));
            for t in 0..len {
                let mut row = bias.clone();
                for (k, wk) in weights.iter().enumerate() {
                    if let Some(p) = tap(t, k, w, branch.causal, len) {
                        row += &x.row(p).dot(wk);
                    }
                }
                y.row_mut(t).assign(&row);
            }
            y
        }
        LayerKind::SeparableConv(kernel) => {
            let dw = init.matrix(input, kernel.width());
            let pw = init.matrix(input, out);
            let bias = init.vector(out);
            depthwise(x, &dw, |c| c, branch.causal).dot(&pw) + &bias
        }
        LayerKind::LightweightConv(kernel, reduction) => {
            let r = reduction.factor();
            let raw = init.matrix(input.div_ceil(r), kernel.width());
            let shared = softmax_rows(raw);
            depthwise(x, &shared, |c| c / r, branch.causal)
        }
        LayerKind::Attention(heads) => attention(x, x.view(), out, heads.count(), branch.causal, init),
        LayerKind::AttendToEncoder => {
            let memory =
                encoder_out.ok_or_else(|| ArchError::InvalidInput("attend_to_encoder outside the decoder".into()))?;
            attention(x, memory.view(), out, ENCODER_ATTENTION_HEADS, false, init)
        }
        LayerKind::GatedLinearUnit => {
            let wa = init.matrix(input, out);
            let ba = init.vector(out);
            let wb = init.matrix(input, out);
            let bb = init.vector(out);
            let gate = (x.dot(&wb) + &bb).mapv(sigmoid);
            (x.dot(&wa) + &ba) * gate
        }
    };
    Ok(y)
}

fn run_branch(
    branch: &BranchNode,
    dims: &BranchDims,
    x: &Tensor,
    encoder_out: Option<&Tensor>,
    init: &mut Init<'_, impl Rng>,
) -> Result<Option<Tensor>, ArchError> {
    if branch.is_dead() {
        return Ok(None);
    }
    let normed = match branch.normalization {
        Normalization::None => x.clone(),
        Normalization::LayerNorm => {
            let gain = init.vector(x.ncols()).mapv(|v| 1.0 + v);
            let bias = init.vector(x.ncols());
            layer_norm(x, &gain, &bias)
        }
    };
    let y = run_layer(branch, dims, &normed, encoder_out, init)?;
    Ok(Some(activate(y, branch.activation)))
}

fn run_cell(
    graph: &CellGraph,
    dims: &CellDims,
    x: Tensor,
    encoder_out: Option<&Tensor>,
    init: &mut Init<'_, impl Rng>,
) -> Result<Tensor, ArchError> {
    let len = x.nrows();
    let mut hidden = vec![x];
    for (block, bdims) in graph.blocks.iter().zip(&dims.branches) {
        let left = run_branch(&block.left, &bdims[0], &hidden[block.left.input], encoder_out, init)?;
        let right = run_branch(&block.right, &bdims[1], &hidden[block.right.input], encoder_out, init)?;
        let joined =
            combine(left, right, block.combiner)?.unwrap_or_else(|| Array2::zeros((len, bdims[0].input_width)));
        hidden.push(joined);
    }
    let mut acc = Array2::zeros((len, dims.raw_output_width));
    for &h in &graph.output_addends {
        acc += &pad_channels(&hidden[h], dims.raw_output_width, 0.0);
    }
    Ok(fit_channels(acc, dims.output_width))
}

/// Runs a single cell once (no repetition) on an already-embedded input.
pub fn forward_cell<R: Rng>(
    arch: &ScaledArchitecture,
    cell: CellKind,
    input: Tensor,
    encoder_out: Option<&Tensor>,
    rng: &mut R,
) -> Result<Tensor, ArchError> {
    let (graph, dims) = match cell {
        CellKind::Encoder => (&arch.encoder_graph, &arch.encoder_dims),
        CellKind::Decoder => (&arch.decoder_graph, &arch.decoder_dims),
    };
    if input.ncols() != dims.input_width {
        return Err(ArchError::InvalidInput(format!(
            "cell expects {} channels, got {}",
            dims.input_width,
            input.ncols()
        )));
    }
    run_cell(graph, dims, input, encoder_out, &mut Init { rng })
}

fn embed(table: &Array2<f64>, tokens: &[usize], config: &ModelConfig, what: &str) -> Result<Tensor, ArchError> {
    if tokens.is_empty() || tokens.len() > config.sequence_length {
        return Err(ArchError::InvalidInput(format!(
            "{what} length {} outside [1, {}]",
            tokens.len(),
            config.sequence_length
        )));
    }
    let mut out = Array2::zeros((tokens.len(), table.ncols()));
    for (t, &tok) in tokens.iter().enumerate() {
        if tok >= table.nrows() {
            return Err(ArchError::InvalidInput(format!(
                "{what} token {tok} outside vocabulary of {}",
                table.nrows()
            )));
        }
        out.row_mut(t).assign(&table.row(tok));
    }
    Ok(out)
}

/// Embeds both sequences with the shared token table, runs the stacked
/// encoder cells, then the stacked decoder cells attending to the encoder
/// output. Returns the decoder output (decoder length × embedding width).
pub fn forward<R: Rng>(
    arch: &ScaledArchitecture,
    config: &ModelConfig,
    encoder_input: &[usize],
    decoder_input: &[usize],
    rng: &mut R,
) -> Result<Tensor, ArchError> {
    if arch.model_width != config.input_embedding_dim {
        return Err(ArchError::InvalidInput(
            "architecture was scaled for a different embedding width".into(),
        ));
    }
    let mut init = Init { rng };
    let table = init.matrix(config.vocab_size, config.input_embedding_dim);
    let mut enc = embed(&table, encoder_input, config, "encoder input")?;
    for _ in 0..arch.encoder_graph.repeats {
        enc = run_cell(&arch.encoder_graph, &arch.encoder_dims, enc, None, &mut init)?;
    }
    let mut dec = embed(&table, decoder_input, config, "decoder input")?;
    for _ in 0..arch.decoder_graph.repeats {
        dec = run_cell(&arch.decoder_graph, &arch.decoder_dims, dec, Some(&enc), &mut init)?;
    }
    Ok(dec)
}
