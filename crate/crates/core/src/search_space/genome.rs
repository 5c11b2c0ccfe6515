use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::vocab::{Activation, CellCount, CellKind, Combiner, LayerKind, Normalization, RelDim};
use super::{DECODER_BLOCKS, ENCODER_BLOCKS, FIELDS_PER_BLOCK, FIELD_COUNT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BranchGene {
    /// Hidden-state index; 0 is the cell input, `j` is the output of block `j - 1`.
    pub input: u8,
    pub normalization: Normalization,
    pub layer: LayerKind,
    pub relative_output_dim: RelDim,
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockGene {
    pub left: BranchGene,
    pub right: BranchGene,
    pub combiner: Combiner,
}

impl BlockGene {
    pub fn branch(&self, side: Side) -> &BranchGene {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn branch_mut(&mut self, side: Side) -> &mut BranchGene {
        match side {
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// A complete architecture encoding: 14 blocks of 11 fields plus two cell
/// counts.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Genome {
    pub encoder_blocks: [BlockGene; ENCODER_BLOCKS],
    pub decoder_blocks: [BlockGene; DECODER_BLOCKS],
    pub encoder_cells: CellCount,
    pub decoder_cells: CellCount,
}

/// Position of a block-level field within a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BranchField {
    Input,
    Normalization,
    Layer,
    RelativeOutputDim,
    Activation,
}

impl BranchField {
    pub const ALL: [BranchField; 5] = [
        BranchField::Input,
        BranchField::Normalization,
        BranchField::Layer,
        BranchField::RelativeOutputDim,
        BranchField::Activation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BranchField::Input => "input",
            BranchField::Normalization => "norm",
            BranchField::Layer => "layer",
            BranchField::RelativeOutputDim => "rel_dim",
            BranchField::Activation => "activation",
        }
    }
}

/// Decoded address of one of the 156 flattened fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldAddr {
    Branch {
        cell: CellKind,
        block: usize,
        side: Side,
        field: BranchField,
    },
    Combiner {
        cell: CellKind,
        block: usize,
    },
    Cells(CellKind),
}

impl FieldAddr {
    pub fn cell(self) -> CellKind {
        match self {
            FieldAddr::Branch { cell, .. } | FieldAddr::Combiner { cell, .. } => cell,
            FieldAddr::Cells(cell) => cell,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldAddr::Branch { field, .. } => field.name(),
            FieldAddr::Combiner { .. } => "combiner",
            FieldAddr::Cells(_) => "num_cells",
        }
    }
}

impl fmt::Display for FieldAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldAddr::Branch {
                cell,
                block,
                side,
                field,
            } => write!(f, "{cell}[{block}].{side}.{}", field.name()),
            FieldAddr::Combiner { cell, block } => write!(f, "{cell}[{block}].combiner"),
            FieldAddr::Cells(cell) => write!(f, "{cell}_cells"),
        }
    }
}

/// Index into the flattened encoding, `0..156`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldId(u16);

impl FieldId {
    pub fn new(index: usize) -> Option<Self> {
        (index < FIELD_COUNT).then_some(FieldId(index as u16))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = FieldId> {
        (0..FIELD_COUNT as u16).map(FieldId)
    }

    pub fn addr(self) -> FieldAddr {
        let i = self.index();
        let block_fields = FIELDS_PER_BLOCK * (ENCODER_BLOCKS + DECODER_BLOCKS);
        if i >= block_fields {
            return FieldAddr::Cells(if i == block_fields {
                CellKind::Encoder
            } else {
                CellKind::Decoder
            });
        }
        let (global_block, slot) = (i / FIELDS_PER_BLOCK, i % FIELDS_PER_BLOCK);
        let (cell, block) = if global_block < ENCODER_BLOCKS {
            (CellKind::Encoder, global_block)
        } else {
            (CellKind::Decoder, global_block - ENCODER_BLOCKS)
        };
        match slot {
            10 => FieldAddr::Combiner { cell, block },
            s => FieldAddr::Branch {
                cell,
                block,
                side: if s < 5 { Side::Left } else { Side::Right },
                field: BranchField::ALL[s % 5],
            },
        }
    }

    pub fn from_addr(addr: FieldAddr) -> FieldId {
        let block_base = |cell: CellKind, block: usize| {
            let global = match cell {
                CellKind::Encoder => block,
                CellKind::Decoder => ENCODER_BLOCKS + block,
            };
            global * FIELDS_PER_BLOCK
        };
        let index = match addr {
            FieldAddr::Branch {
                cell,
                block,
                side,
                field,
            } => {
                let side_offset = if side == Side::Left { 0 } else { 5 };
                let field_offset = BranchField::ALL.iter().position(|f| *f == field).unwrap();
                block_base(cell, block) + side_offset + field_offset
            }
            FieldAddr::Combiner { cell, block } => block_base(cell, block) + 10,
            FieldAddr::Cells(CellKind::Encoder) => FIELDS_PER_BLOCK * 14,
            FieldAddr::Cells(CellKind::Decoder) => FIELDS_PER_BLOCK * 14 + 1,
        };
        FieldId(index as u16)
    }
}

/// Value held by one flattened field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldValue {
    Input(u8),
    Normalization(Normalization),
    Layer(LayerKind),
    RelDim(RelDim),
    Activation(Activation),
    Combiner(Combiner),
    Cells(CellCount),
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Input(v) => write!(f, "{v}"),
            FieldValue::Normalization(v) => write!(f, "{v}"),
            FieldValue::Layer(v) => write!(f, "{v}"),
            FieldValue::RelDim(v) => write!(f, "{}", v.get()),
            FieldValue::Activation(v) => write!(f, "{v}"),
            FieldValue::Combiner(v) => write!(f, "{v}"),
            FieldValue::Cells(v) => write!(f, "{}", v.get()),
        }
    }
}

impl FieldValue {
    /// Parses `text` as a value of the field at `addr`.
    pub fn parse_for(addr: FieldAddr, text: &str) -> Option<FieldValue> {
        match addr {
            FieldAddr::Branch { field, .. } => match field {
                BranchField::Input => text.parse().ok().map(FieldValue::Input),
                BranchField::Normalization => text.parse().ok().map(FieldValue::Normalization),
                BranchField::Layer => text.parse().ok().map(FieldValue::Layer),
                BranchField::RelativeOutputDim => text.parse().ok().and_then(RelDim::new).map(FieldValue::RelDim),
                BranchField::Activation => text.parse().ok().map(FieldValue::Activation),
            },
            FieldAddr::Combiner { .. } => text.parse().ok().map(FieldValue::Combiner),
            FieldAddr::Cells(_) => text.parse().ok().and_then(CellCount::new).map(FieldValue::Cells),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("value {value} does not fit field {field}")]
pub struct FieldTypeMismatch {
    pub field: FieldAddr,
    pub value: FieldValue,
}

/// Content hash of a genome, stable across processes and serialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GenomeId(pub u64);

impl fmt::Display for GenomeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl Genome {
    pub fn blocks(&self, cell: CellKind) -> &[BlockGene] {
        match cell {
            CellKind::Encoder => &self.encoder_blocks,
            CellKind::Decoder => &self.decoder_blocks,
        }
    }

    pub fn blocks_mut(&mut self, cell: CellKind) -> &mut [BlockGene] {
        match cell {
            CellKind::Encoder => &mut self.encoder_blocks,
            CellKind::Decoder => &mut self.decoder_blocks,
        }
    }

    pub fn cells(&self, cell: CellKind) -> CellCount {
        match cell {
            CellKind::Encoder => self.encoder_cells,
            CellKind::Decoder => self.decoder_cells,
        }
    }

    pub fn get(&self, id: FieldId) -> FieldValue {
        match id.addr() {
            FieldAddr::Branch {
                cell,
                block,
                side,
                field,
            } => {
                let b = self.blocks(cell)[block].branch(side);
                match field {
                    BranchField::Input => FieldValue::Input(b.input),
                    BranchField::Normalization => FieldValue::Normalization(b.normalization),
                    BranchField::Layer => FieldValue::Layer(b.layer),
                    BranchField::RelativeOutputDim => FieldValue::RelDim(b.relative_output_dim),
                    BranchField::Activation => FieldValue::Activation(b.activation),
                }
            }
            FieldAddr::Combiner { cell, block } => FieldValue::Combiner(self.blocks(cell)[block].combiner),
            FieldAddr::Cells(cell) => FieldValue::Cells(self.cells(cell)),
        }
    }

    pub fn set(&mut self, id: FieldId, value: FieldValue) -> Result<(), FieldTypeMismatch> {
        let addr = id.addr();
        let mismatch = FieldTypeMismatch { field: addr, value };
        match addr {
            FieldAddr::Branch {
                cell,
                block,
                side,
                field,
            } => {
                let b = self.blocks_mut(cell)[block].branch_mut(side);
                match (field, value) {
                    (BranchField::Input, FieldValue::Input(v)) => b.input = v,
                    (BranchField::Normalization, FieldValue::Normalization(v)) => b.normalization = v,
                    (BranchField::Layer, FieldValue::Layer(v)) => b.layer = v,
                    (BranchField::RelativeOutputDim, FieldValue::RelDim(v)) => b.relative_output_dim = v,
                    (BranchField::Activation, FieldValue::Activation(v)) => b.activation = v,
                    _ => return Err(mismatch),
                }
            }
            FieldAddr::Combiner { cell, block } => match value {
                FieldValue::Combiner(v) => self.blocks_mut(cell)[block].combiner = v,
                _ => return Err(mismatch),
            },
            FieldAddr::Cells(cell) => match (cell, value) {
                (CellKind::Encoder, FieldValue::Cells(v)) => self.encoder_cells = v,
                (CellKind::Decoder, FieldValue::Cells(v)) => self.decoder_cells = v,
                _ => return Err(mismatch),
            },
        }
        Ok(())
    }

    /// The flattened encoding in canonical field order.
    pub fn fields(&self) -> impl Iterator<Item = (FieldId, FieldValue)> + '_ {
        FieldId::all().map(move |id| (id, self.get(id)))
    }

    pub fn id(&self) -> GenomeId {
        let mut hasher = Sha256::new();
        for (_, value) in self.fields() {
            hasher.update(value.to_string().as_bytes());
            hasher.update([0x1f]);
        }
        let digest = hasher.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        GenomeId(u64::from_be_bytes(head))
    }
}

/// Compact form used inside event logs and checkpoints: the 156 field
/// values as strings, in canonical order.
impl Serialize for Genome {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.fields().map(|(_, v)| v.to_string()))
    }
}

impl<'de> Deserialize<'de> for Genome {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let values = Vec::<String>::deserialize(deserializer)?;
        if values.len() != FIELD_COUNT {
            return Err(D::Error::invalid_length(values.len(), &"156 field values"));
        }
        let mut genome = super::seeds::transformer_seed();
        for (id, text) in FieldId::all().zip(&values) {
            let value = FieldValue::parse_for(id.addr(), text)
                .ok_or_else(|| D::Error::custom(format!("bad value {text:?} for {}", id.addr())))?;
            genome.set(id, value).map_err(D::Error::custom)?;
        }
        Ok(genome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::seeds::transformer_seed;

    #[test]
    fn compact_form_round_trips() {
        let g = crate::search_space::seeds::et_seed();
        let text = serde_json::to_string(&g).unwrap();
        let back: Genome = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<Genome>("[\"0\"]").is_err());
    }

    #[test]
    fn field_addressing_is_a_bijection() {
        for id in FieldId::all() {
            assert_eq!(FieldId::from_addr(id.addr()), id);
        }
        assert_eq!(FieldId::all().count(), 156);
        assert_eq!(FieldId::new(155).unwrap().addr(), FieldAddr::Cells(CellKind::Decoder));
        assert!(FieldId::new(156).is_none());
    }

    #[test]
    fn set_rejects_mismatched_value_kind() {
        let mut g = transformer_seed();
        let id = FieldId::new(0).unwrap();
        assert!(g.set(id, FieldValue::Combiner(Combiner::Addition)).is_err());
        let original = g.get(id);
        g.set(id, original).unwrap();
        assert_eq!(g, transformer_seed());
    }

    #[test]
    fn id_changes_with_content() {
        let a = transformer_seed();
        let mut b = a.clone();
        b.decoder_cells = CellCount::new(4).unwrap();
        assert_eq!(a.id(), transformer_seed().id());
        assert_ne!(a.id(), b.id());
    }
}
