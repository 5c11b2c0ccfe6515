use rand::seq::IndexedRandom;
use rand::Rng;

use super::genome::{BlockGene, BranchField, BranchGene, FieldAddr, FieldId, FieldValue, Genome};
use super::validate::{cell_is_structurally_valid, validate, ValidationConfig};
use super::vocab::{Activation, CellCount, CellKind, Combiner, LayerKind, Normalization, RelDim};
use super::{SearchSpaceError, DECODER_BLOCKS, ENCODER_BLOCKS};

fn normalization_vocabulary(config: &ValidationConfig) -> &'static [Normalization] {
    if config.allow_no_normalization {
        &Normalization::ALL
    } else {
        &Normalization::ALL[..1]
    }
}

/// Values the field at `id` may take under `config`, in canonical order.
pub fn field_vocabulary(id: FieldId, config: &ValidationConfig) -> Vec<FieldValue> {
    match id.addr() {
        FieldAddr::Branch { cell, block, field, .. } => match field {
            BranchField::Input => (0..=block as u8).map(FieldValue::Input).collect(),
            BranchField::Normalization => normalization_vocabulary(config)
                .iter()
                .copied()
                .map(FieldValue::Normalization)
                .collect(),
            BranchField::Layer => LayerKind::vocabulary(cell).into_iter().map(FieldValue::Layer).collect(),
            BranchField::RelativeOutputDim => RelDim::all().map(FieldValue::RelDim).collect(),
            BranchField::Activation => Activation::ALL.map(FieldValue::Activation).to_vec(),
        },
        FieldAddr::Combiner { .. } => Combiner::ALL.map(FieldValue::Combiner).to_vec(),
        FieldAddr::Cells(_) => CellCount::all().map(FieldValue::Cells).collect(),
    }
}

fn random_branch<R: Rng>(rng: &mut R, block: usize, cell: CellKind, config: &ValidationConfig) -> BranchGene {
    BranchGene {
        input: rng.random_range(0..=block as u8),
        normalization: *normalization_vocabulary(config).choose(rng).unwrap(),
        layer: *LayerKind::vocabulary(cell).choose(rng).unwrap(),
        relative_output_dim: *RelDim::all().collect::<Vec<_>>().choose(rng).unwrap(),
        activation: *Activation::ALL.choose(rng).unwrap(),
    }
}

fn random_block<R: Rng>(rng: &mut R, block: usize, cell: CellKind, config: &ValidationConfig) -> BlockGene {
    BlockGene {
        left: random_branch(rng, block, cell, config),
        right: random_branch(rng, block, cell, config),
        combiner: *Combiner::ALL.choose(rng).unwrap(),
    }
}

fn random_cells<R: Rng>(rng: &mut R) -> CellCount {
    CellCount::new(rng.random_range(CellCount::MIN..=CellCount::MAX)).unwrap()
}

/// Draws a genome field by field, uniformly from each vocabulary, and
/// rejects until it validates.
///
/// Structural constraints are per cell, so each cell is redrawn on its own
/// until it passes them; conditioning each cell separately yields the same
/// distribution as redrawing the whole genome. The parameter-range check
/// couples the cells and redraws everything. `config.max_attempts` bounds
/// the full-genome draws, and each cell gets the same bound per draw; a cell
/// that exhausts it spends one full-genome attempt.
pub fn random_genome<R: Rng>(rng: &mut R, config: &ValidationConfig) -> Result<Genome, SearchSpaceError> {
    'draw: for _ in 0..config.max_attempts {
        let mut genome = Genome {
            encoder_blocks: std::array::from_fn(|i| random_block(rng, i, CellKind::Encoder, config)),
            decoder_blocks: std::array::from_fn(|i| random_block(rng, i, CellKind::Decoder, config)),
            encoder_cells: random_cells(rng),
            decoder_cells: random_cells(rng),
        };
        for cell in [CellKind::Encoder, CellKind::Decoder] {
            let mut attempts = 1;
            while !cell_is_structurally_valid(&genome, cell, config) {
                if attempts >= config.max_attempts {
                    continue 'draw;
                }
                attempts += 1;
                match cell {
                    CellKind::Encoder => {
                        genome.encoder_blocks =
                            std::array::from_fn::<_, ENCODER_BLOCKS, _>(|i| random_block(rng, i, cell, config))
                    }
                    CellKind::Decoder => {
                        genome.decoder_blocks =
                            std::array::from_fn::<_, DECODER_BLOCKS, _>(|i| random_block(rng, i, cell, config))
                    }
                }
            }
        }
        if validate(&genome, config).valid() {
            return Ok(genome);
        }
    }
    Err(SearchSpaceError::ResampleLimitExceeded {
        attempts: config.max_attempts,
    })
}

/// A mutated child together with the fields that changed.
#[derive(Clone, Debug, PartialEq)]
pub struct Mutation {
    pub child: Genome,
    pub mask: Vec<FieldId>,
}

fn mutate_once<R: Rng>(parent: &Genome, rate: f64, rng: &mut R, config: &ValidationConfig) -> Mutation {
    let mut child = parent.clone();
    let mut mask = Vec::new();
    for id in FieldId::all() {
        if !rng.random_bool(rate) {
            continue;
        }
        let current = parent.get(id);
        let choices: Vec<FieldValue> = field_vocabulary(id, config)
            .into_iter()
            .filter(|v| *v != current)
            .collect();
        if let Some(&value) = choices.choose(rng) {
            child.set(id, value).expect("vocabulary matches field kind");
            mask.push(id);
        }
    }
    Mutation { child, mask }
}

/// Mutates each of the 156 fields independently with probability `rate`,
/// replacing it by a different value drawn uniformly from its vocabulary. An
/// invalid child is discarded and the whole mutation redrawn from `parent`.
pub fn mutate_with_mask<R: Rng>(
    parent: &Genome,
    rate: f64,
    rng: &mut R,
    config: &ValidationConfig,
) -> Result<Mutation, SearchSpaceError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(SearchSpaceError::BadRate(rate));
    }
    for _ in 0..config.max_attempts {
        let m = mutate_once(parent, rate, rng, config);
        if m.mask.is_empty() || validate(&m.child, config).valid() {
            return Ok(m);
        }
    }
    Err(SearchSpaceError::ResampleLimitExceeded {
        attempts: config.max_attempts,
    })
}

pub fn mutate<R: Rng>(
    parent: &Genome,
    rate: f64,
    rng: &mut R,
    config: &ValidationConfig,
) -> Result<Genome, SearchSpaceError> {
    mutate_with_mask(parent, rate, rng, config).map(|m| m.child)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::seeds::transformer_seed;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_is_identity() {
        let g = transformer_seed();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = mutate_with_mask(&g, 0.0, &mut rng, &ValidationConfig::default()).unwrap();
        assert_eq!(m.child, g);
        assert!(m.mask.is_empty());
    }

    #[test]
    fn full_rate_changes_every_multi_valued_field() {
        let g = transformer_seed();
        let cfg = ValidationConfig::permissive();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let child = mutate(&g, 1.0, &mut rng, &cfg).unwrap();
        for id in FieldId::all() {
            if field_vocabulary(id, &cfg).len() > 1 {
                assert_ne!(child.get(id), g.get(id), "{}", id.addr());
            } else {
                assert_eq!(child.get(id), g.get(id));
            }
        }
    }

    #[test]
    fn none_normalization_is_left_behind_when_excluded() {
        // The seed carries `none` on some branches; with `none` outside the
        // vocabulary a mutated normalization field must become layer_norm.
        let cfg = ValidationConfig {
            allow_no_normalization: false,
            ..ValidationConfig::permissive()
        };
        let g = transformer_seed();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let child = mutate(&g, 1.0, &mut rng, &cfg).unwrap();
        for id in FieldId::all() {
            if let FieldValue::Normalization(n) = child.get(id) {
                assert_eq!(n, Normalization::LayerNorm);
            }
        }
    }

    #[test]
    fn bad_rate_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            mutate(&transformer_seed(), 1.5, &mut rng, &ValidationConfig::default()),
            Err(SearchSpaceError::BadRate(1.5))
        );
    }

    #[test]
    fn input_vocabulary_matches_block_position() {
        let cfg = ValidationConfig::default();
        for id in FieldId::all() {
            if let FieldAddr::Branch {
                block,
                field: BranchField::Input,
                ..
            } = id.addr()
            {
                assert_eq!(field_vocabulary(id, &cfg).len(), block + 1);
            }
        }
    }

    #[test]
    fn random_genomes_are_deterministic_and_valid() {
        let cfg = ValidationConfig::default();
        let a = random_genome(&mut ChaCha8Rng::seed_from_u64(7), &cfg).unwrap();
        let b = random_genome(&mut ChaCha8Rng::seed_from_u64(7), &cfg).unwrap();
        let c = random_genome(&mut ChaCha8Rng::seed_from_u64(8), &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(validate(&a, &cfg).valid());
    }

    #[test]
    fn impossible_constraints_hit_the_limit() {
        let mut cfg = ValidationConfig::default();
        cfg.model.param_range = [1, 2];
        cfg.max_attempts = 5;
        let err = random_genome(&mut ChaCha8Rng::seed_from_u64(1), &cfg).unwrap_err();
        assert_eq!(err, SearchSpaceError::ResampleLimitExceeded { attempts: 5 });
    }
}
