use std::fmt;

use super::genome::{FieldAddr, FieldId, FieldValue, Genome, Side};
use super::vocab::CellKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DiffBranch {
    Left,
    Right,
    BlockLevel,
    CellLevel,
}

impl fmt::Display for DiffBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiffBranch::Left => "left",
            DiffBranch::Right => "right",
            DiffBranch::BlockLevel => "block",
            DiffBranch::CellLevel => "-",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldDiff {
    pub field: FieldId,
    /// Encoder or decoder; cell counts report the cell they belong to.
    pub section: CellKind,
    /// `None` for cell counts.
    pub block_index: Option<usize>,
    pub branch: DiffBranch,
    pub field_name: &'static str,
    pub value_a: FieldValue,
    pub value_b: FieldValue,
}

impl fmt::Display for FieldDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let block = self.block_index.map(|b| b.to_string()).unwrap_or_else(|| "-".into());
        write!(
            f,
            "{} {}\t{}\t{}\t{}\t{}",
            self.section, self.field_name, block, self.branch, self.value_a, self.value_b
        )
    }
}

/// One entry per flattened field where `a` and `b` differ, in field order.
pub fn diff(a: &Genome, b: &Genome) -> Vec<FieldDiff> {
    a.fields()
        .zip(b.fields())
        .filter(|((_, va), (_, vb))| va != vb)
        .map(|((id, value_a), (_, value_b))| {
            let addr = id.addr();
            let (block_index, branch) = match addr {
                FieldAddr::Branch { block, side, .. } => (
                    Some(block),
                    match side {
                        Side::Left => DiffBranch::Left,
                        Side::Right => DiffBranch::Right,
                    },
                ),
                FieldAddr::Combiner { block, .. } => (Some(block), DiffBranch::BlockLevel),
                FieldAddr::Cells(_) => (None, DiffBranch::CellLevel),
            };
            FieldDiff {
                field: id,
                section: addr.cell(),
                block_index,
                branch,
                field_name: addr.name(),
                value_a,
                value_b,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::seeds::{et_seed, transformer_seed};

    #[test]
    fn self_diff_is_empty() {
        assert!(diff(&et_seed(), &et_seed()).is_empty());
    }

    #[test]
    fn diff_is_symmetric() {
        let ab = diff(&transformer_seed(), &et_seed());
        let ba = diff(&et_seed(), &transformer_seed());
        assert_eq!(ab.len(), ba.len());
        for (x, y) in ab.iter().zip(&ba) {
            assert_eq!(x.field, y.field);
            assert_eq!(x.value_a, y.value_b);
            assert_eq!(x.value_b, y.value_a);
        }
    }
}
