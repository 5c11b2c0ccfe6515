//! Genome file format.
//!
//! A genome is stored as a TOML document:
//!
//! ```toml
//! encoder_cells = 3
//! decoder_cells = 3
//!
//! [[encoder_blocks]]
//! combiner = "addition"
//!
//! [encoder_blocks.left]
//! input = 0
//! norm = "layer_norm"
//! layer = "attention_8"
//! rel_dim = 2
//! activation = "none"
//! ...
//! ```
//!
//! Comments are allowed in hand-written files and are dropped on load.

use serde::{Deserialize, Serialize};
use toml::Spanned;

use super::genome::{BlockGene, BranchGene, Genome};
use super::vocab::{CellCount, RelDim};
use super::{SearchSpaceError, DECODER_BLOCKS, ENCODER_BLOCKS};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenomeDoc {
    encoder_cells: Spanned<i64>,
    decoder_cells: Spanned<i64>,
    encoder_blocks: Spanned<Vec<BlockDoc>>,
    decoder_blocks: Spanned<Vec<BlockDoc>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockDoc {
    combiner: Spanned<String>,
    left: BranchDoc,
    right: BranchDoc,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchDoc {
    input: Spanned<i64>,
    norm: Spanned<String>,
    layer: Spanned<String>,
    rel_dim: Spanned<i64>,
    activation: Spanned<String>,
}

#[derive(Serialize)]
struct GenomeOut {
    encoder_cells: u8,
    decoder_cells: u8,
    encoder_blocks: Vec<BlockOut>,
    decoder_blocks: Vec<BlockOut>,
}

#[derive(Serialize)]
struct BlockOut {
    combiner: String,
    left: BranchOut,
    right: BranchOut,
}

#[derive(Serialize)]
struct BranchOut {
    input: u8,
    norm: String,
    layer: String,
    rel_dim: u8,
    activation: String,
}

impl From<&BranchGene> for BranchOut {
    fn from(b: &BranchGene) -> Self {
        BranchOut {
            input: b.input,
            norm: b.normalization.to_string(),
            layer: b.layer.to_string(),
            rel_dim: b.relative_output_dim.get(),
            activation: b.activation.to_string(),
        }
    }
}

impl From<&BlockGene> for BlockOut {
    fn from(b: &BlockGene) -> Self {
        BlockOut {
            combiner: b.combiner.to_string(),
            left: (&b.left).into(),
            right: (&b.right).into(),
        }
    }
}

pub fn serialize(genome: &Genome) -> String {
    let doc = GenomeOut {
        encoder_cells: genome.encoder_cells.get(),
        decoder_cells: genome.decoder_cells.get(),
        encoder_blocks: genome.encoder_blocks.iter().map(Into::into).collect(),
        decoder_blocks: genome.decoder_blocks.iter().map(Into::into).collect(),
    };
    toml::to_string(&doc).expect("genome document always serializes")
}

pub fn deserialize(text: &str) -> Result<Genome, SearchSpaceError> {
    let doc: GenomeDoc = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
        SearchSpaceError::Parse {
            line,
            field: None,
            message: e.message().trim().to_string(),
        }
    })?;
    let cx = Cx { text };

    let encoder_cells = cx.cells("encoder_cells", &doc.encoder_cells)?;
    let decoder_cells = cx.cells("decoder_cells", &doc.decoder_cells)?;
    let encoder_blocks: [BlockGene; ENCODER_BLOCKS] = cx.blocks("encoder_blocks", &doc.encoder_blocks)?;
    let decoder_blocks: [BlockGene; DECODER_BLOCKS] = cx.blocks("decoder_blocks", &doc.decoder_blocks)?;
    Ok(Genome {
        encoder_blocks,
        decoder_blocks,
        encoder_cells,
        decoder_cells,
    })
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

struct Cx<'a> {
    text: &'a str,
}

impl Cx<'_> {
    fn vocab<T: std::fmt::Display>(&self, field: String, value: &Spanned<T>) -> SearchSpaceError {
        SearchSpaceError::Vocab {
            line: line_of(self.text, value.span().start),
            field,
            value: value.get_ref().to_string(),
        }
    }

    fn cells(&self, field: &str, value: &Spanned<i64>) -> Result<CellCount, SearchSpaceError> {
        u8::try_from(*value.get_ref())
            .ok()
            .and_then(CellCount::new)
            .ok_or_else(|| self.vocab(field.to_string(), value))
    }

    fn keyword<T: std::str::FromStr>(&self, field: String, value: &Spanned<String>) -> Result<T, SearchSpaceError> {
        value.get_ref().parse().map_err(|_| self.vocab(field, value))
    }

    fn branch(&self, path: &str, doc: &BranchDoc) -> Result<BranchGene, SearchSpaceError> {
        let input = u8::try_from(*doc.input.get_ref()).map_err(|_| self.vocab(format!("{path}.input"), &doc.input))?;
        let relative_output_dim = u8::try_from(*doc.rel_dim.get_ref())
            .ok()
            .and_then(RelDim::new)
            .ok_or_else(|| self.vocab(format!("{path}.rel_dim"), &doc.rel_dim))?;
        Ok(BranchGene {
            input,
            normalization: self.keyword(format!("{path}.norm"), &doc.norm)?,
            layer: self.keyword(format!("{path}.layer"), &doc.layer)?,
            relative_output_dim,
            activation: self.keyword(format!("{path}.activation"), &doc.activation)?,
        })
    }

    fn blocks<const N: usize>(
        &self,
        field: &str,
        docs: &Spanned<Vec<BlockDoc>>,
    ) -> Result<[BlockGene; N], SearchSpaceError> {
        if docs.get_ref().len() != N {
            return Err(SearchSpaceError::Parse {
                line: line_of(self.text, docs.span().start),
                field: Some(field.to_string()),
                message: format!("expected {N} blocks, found {}", docs.get_ref().len()),
            });
        }
        let mut out = Vec::with_capacity(N);
        for (i, doc) in docs.get_ref().iter().enumerate() {
            let path = format!("{field}[{i}]");
            out.push(BlockGene {
                combiner: self.keyword(format!("{path}.combiner"), &doc.combiner)?,
                left: self.branch(&format!("{path}.left"), &doc.left)?,
                right: self.branch(&format!("{path}.right"), &doc.right)?,
            });
        }
        Ok(out.try_into().unwrap_or_else(|_| unreachable!()))
    }
}
