use crate::search_space::{Activation, BranchGene, CellKind, Combiner, Genome, LayerKind, Normalization, RelDim, Side};

use super::{ArchError, ModelConfig};

/// One branch: normalization → layer → activation applied to a hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchNode {
    pub side: Side,
    pub input: usize,
    pub normalization: Normalization,
    pub layer: LayerKind,
    pub rel_dim: RelDim,
    pub activation: Activation,
    /// Sequence-mixing layers only look at earlier positions.
    pub causal: bool,
}

impl BranchNode {
    fn from_gene(gene: &BranchGene, side: Side, causal: bool) -> Self {
        BranchNode {
            side,
            input: gene.input as usize,
            normalization: gene.normalization,
            layer: gene.layer,
            rel_dim: gene.relative_output_dim,
            activation: gene.activation,
            causal,
        }
    }

    pub fn is_dead(&self) -> bool {
        self.layer == LayerKind::DeadBranch
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockNode {
    pub left: BranchNode,
    pub right: BranchNode,
    pub combiner: Combiner,
}

impl BlockNode {
    pub fn branches(&self) -> [&BranchNode; 2] {
        [&self.left, &self.right]
    }
}

/// A composed cell. Hidden state 0 is the cell input and hidden state
/// `b + 1` is the output of block `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellGraph {
    pub kind: CellKind,
    pub repeats: usize,
    pub blocks: Vec<BlockNode>,
    /// Hidden states summed into the cell output: the final block output
    /// followed by every other hidden state no live branch consumes.
    pub output_addends: Vec<usize>,
}

impl CellGraph {
    pub fn hidden_count(&self) -> usize {
        self.blocks.len() + 1
    }

    /// Hidden states consumed by at least one non-dead branch.
    pub fn consumed(&self) -> Vec<bool> {
        let mut used = vec![false; self.hidden_count()];
        for block in &self.blocks {
            for branch in block.branches() {
                if !branch.is_dead() {
                    used[branch.input] = true;
                }
            }
        }
        used
    }
}

fn compose_cell(genome: &Genome, kind: CellKind) -> Result<CellGraph, ArchError> {
    let causal = kind == CellKind::Decoder;
    let mut blocks = Vec::with_capacity(kind.block_count());
    for (i, gene) in genome.blocks(kind).iter().enumerate() {
        for side in [Side::Left, Side::Right] {
            let input = gene.branch(side).input;
            if input as usize > i {
                return Err(ArchError::MalformedGenome {
                    cell: kind,
                    block: i,
                    side,
                    input,
                });
            }
        }
        blocks.push(BlockNode {
            left: BranchNode::from_gene(&gene.left, Side::Left, causal),
            right: BranchNode::from_gene(&gene.right, Side::Right, causal),
            combiner: gene.combiner,
        });
    }
    let mut graph = CellGraph {
        kind,
        repeats: genome.cells(kind).get() as usize,
        blocks,
        output_addends: Vec::new(),
    };
    let last = graph.blocks.len();
    let used = graph.consumed();
    graph.output_addends.push(last);
    graph.output_addends.extend((0..last).filter(|&h| !used[h]));
    Ok(graph)
}

/// Builds the encoder and decoder cell graphs for `genome`.
pub fn compose(genome: &Genome, _config: &ModelConfig) -> Result<(CellGraph, CellGraph), ArchError> {
    Ok((
        compose_cell(genome, CellKind::Encoder)?,
        compose_cell(genome, CellKind::Decoder)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::seeds::transformer_seed;

    #[test]
    fn transformer_decoder_attends_to_encoder() {
        let (enc, dec) = compose(&transformer_seed(), &ModelConfig::default()).unwrap();
        let count = |g: &CellGraph| {
            g.blocks
                .iter()
                .flat_map(|b| b.branches())
                .filter(|b| b.layer == LayerKind::AttendToEncoder)
                .count()
        };
        assert_eq!(count(&enc), 0);
        assert!(count(&dec) >= 1);
        assert!(dec.blocks.iter().all(|b| b.left.causal && b.right.causal));
        assert!(!enc.blocks[0].left.causal);
        assert_eq!(dec.repeats, 3);
        // every hidden state of the seed is consumed
        assert_eq!(enc.output_addends, vec![6]);
        assert_eq!(dec.output_addends, vec![8]);
    }

    #[test]
    fn unused_hidden_state_joins_output() {
        let mut g = transformer_seed();
        // block 4 now reads hidden state 3 instead of 4, leaving block 3's
        // output (hidden 4) consumed only by block 5's right branch; redirect
        // that one too so hidden 4 is unused.
        g.encoder_blocks[4].left.input = 3;
        g.encoder_blocks[4].right.input = 3;
        g.encoder_blocks[5].right.input = 3;
        let (enc, _) = compose(&g, &ModelConfig::default()).unwrap();
        assert_eq!(enc.output_addends, vec![6, 4]);
    }

    #[test]
    fn dead_branch_does_not_consume() {
        let mut g = transformer_seed();
        g.encoder_blocks[3].left.layer = LayerKind::DeadBranch;
        g.encoder_blocks[3].right.layer = LayerKind::DeadBranch;
        let (enc, _) = compose(&g, &ModelConfig::default()).unwrap();
        assert_eq!(enc.output_addends, vec![6, 3]);
    }

    #[test]
    fn out_of_range_input_is_malformed() {
        let mut g = transformer_seed();
        g.decoder_blocks[2].right.input = 5;
        assert_eq!(
            compose(&g, &ModelConfig::default()),
            Err(ArchError::MalformedGenome {
                cell: CellKind::Decoder,
                block: 2,
                side: Side::Right,
                input: 5
            })
        );
    }
}
