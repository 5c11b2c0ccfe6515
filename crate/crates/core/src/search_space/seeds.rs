//! Canonical seed genomes, stored as checked-in genome files.

use std::sync::OnceLock;

use super::{deserialize, Genome};

/// Text of the Transformer genome file.
pub const TRANSFORMER_SEED_TEXT: &str = include_str!("../../seeds/transformer.seed");
/// Text of the ET genome file.
pub const ET_SEED_TEXT: &str = include_str!("../../seeds/et.seed");

fn load(cache: &'static OnceLock<Genome>, text: &str, name: &str) -> Genome {
    cache
        .get_or_init(|| deserialize(text).unwrap_or_else(|e| panic!("bundled {name} seed is malformed: {e}")))
        .clone()
}

/// The Transformer: per cell, two repetitions of self-attention followed by a
/// two-layer feed-forward projection, each wrapped in an additive residual.
/// Three encoder cells and three decoder cells.
pub fn transformer_seed() -> Genome {
    static CACHE: OnceLock<Genome> = OnceLock::new();
    load(&CACHE, TRANSFORMER_SEED_TEXT, "transformer")
}

/// The evolved ET cell pair.
pub fn et_seed() -> Genome {
    static CACHE: OnceLock<Genome> = OnceLock::new();
    load(&CACHE, ET_SEED_TEXT, "et")
}
