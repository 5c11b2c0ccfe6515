use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Evaluator, FitnessError};
use crate::search_space::{et_seed, CellKind, Genome, LayerKind};

/// Names accepted in the feature-weight table.
pub const FEATURES: [&str; 6] = [
    "separable_conv",
    "glu_encoder_block0",
    "decoder_cells_4",
    "swish_activation",
    "live_branches",
    "et_agreement",
];

/// Settings of the simulated oracle. Serialized as the `[oracle]` section of
/// experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub seed: u64,
    /// Fitness of an untrained model.
    pub start_fitness: f64,
    pub base_asymptote: f64,
    /// Feature name → weight added to the asymptote per unit of feature value.
    pub features: BTreeMap<String, f64>,
    /// Scale of the additive per-field asymptote effects.
    pub field_effect: f64,
    /// Learning rate per step unit for a genome at the base asymptote.
    pub rate: f64,
    /// Log-rate change per unit of asymptote above the base.
    pub rate_coupling: f64,
    /// Scale of the genome-specific log-rate jitter.
    pub rate_jitter: f64,
    /// Standard deviation of Gaussian evaluation noise.
    pub noise_scale: f64,
    pub monotone: bool,
    /// Fitness lost per step unit when `monotone` is false.
    pub overfit: f64,
    /// Raw train steps per oracle step unit.
    pub step_unit: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let features = [
            ("separable_conv", 0.04),
            ("glu_encoder_block0", 0.02),
            ("decoder_cells_4", 0.02),
            ("swish_activation", 0.01),
            ("live_branches", 0.02),
            ("et_agreement", 1.5),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        OracleConfig {
            seed: 0,
            start_fitness: -11.38,
            base_asymptote: -2.73,
            features,
            field_effect: 0.012,
            rate: 0.3,
            rate_coupling: 0.0,
            rate_jitter: 0.03,
            noise_scale: 0.005,
            monotone: true,
            overfit: 0.0,
            step_unit: 1.0,
        }
    }
}

impl OracleConfig {
    pub fn check(&self) -> Result<(), FitnessError> {
        for name in self.features.keys() {
            if !FEATURES.contains(&name.as_str()) {
                return Err(FitnessError::UnknownFeature(name.clone()));
            }
        }
        Ok(())
    }
}

/// Latent learning curve of one genome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    pub asymptote: f64,
    /// Per raw train step.
    pub rate: f64,
    pub noise_scale: f64,
    pub monotone: bool,
    pub start: f64,
    /// Per raw train step; zero in monotone mode.
    pub overfit: f64,
}

impl CurveParams {
    /// Noiseless fitness after `steps` raw train steps.
    pub fn fitness_at(&self, steps: u64) -> f64 {
        let t = steps as f64;
        let saturating = self.asymptote - (self.asymptote - self.start) * (-self.rate * t).exp();
        if self.monotone {
            saturating
        } else {
            saturating - self.overfit * t
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn hash_str(seed: u64, text: &str) -> u64 {
    text.bytes().fold(splitmix(seed), |h, b| splitmix(h ^ b as u64))
}

/// Deterministic value with zero mean and unit variance.
fn unit_uniform(hash: u64) -> f64 {
    let u = (hash >> 11) as f64 / (1u64 << 53) as f64;
    3f64.sqrt() * (2.0 * u - 1.0)
}

fn live_branches(genome: &Genome) -> impl Iterator<Item = (CellKind, usize, &crate::search_space::BranchGene)> {
    [CellKind::Encoder, CellKind::Decoder]
        .into_iter()
        .flat_map(move |cell| {
            genome
                .blocks(cell)
                .iter()
                .enumerate()
                .flat_map(move |(b, block)| [(cell, b, &block.left), (cell, b, &block.right)])
        })
        .filter(|(_, _, br)| br.layer != LayerKind::DeadBranch)
}

/// Value of the named feature for `genome`, each in `[0, 1]`.
pub fn feature_value(name: &str, genome: &Genome) -> Option<f64> {
    let total_branches = 2.0 * (genome.encoder_blocks.len() + genome.decoder_blocks.len()) as f64;
    Some(match name {
        "separable_conv" => {
            let n = live_branches(genome)
                .filter(|(_, _, br)| matches!(br.layer, LayerKind::SeparableConv(_)))
                .count();
            n.min(4) as f64 / 4.0
        }
        "glu_encoder_block0" => {
            let b = &genome.encoder_blocks[0];
            let glu = [b.left.layer, b.right.layer].contains(&LayerKind::GatedLinearUnit);
            glu as u8 as f64
        }
        "decoder_cells_4" => (genome.decoder_cells.get() == 4) as u8 as f64,
        "swish_activation" => {
            live_branches(genome).any(|(_, _, br)| br.activation == crate::search_space::Activation::Swish) as u8 as f64
        }
        "live_branches" => live_branches(genome).count() as f64 / total_branches,
        "et_agreement" => {
            let et = et_seed();
            let same = genome
                .fields()
                .zip(et.fields())
                .filter(|((_, a), (_, b))| a == b)
                .count();
            same as f64 / crate::search_space::FIELD_COUNT as f64
        }
        _ => return None,
    })
}

/// Maps `genome` to its latent curve under `config`. Depends only on the
/// genome's content and the config.
pub fn curve_for(genome: &Genome, config: &OracleConfig) -> CurveParams {
    let bonus: f64 = config
        .features
        .iter()
        .map(|(name, w)| w * feature_value(name, genome).unwrap_or(0.0))
        .sum();
    let field_sum: f64 = genome
        .fields()
        .map(|(id, value)| {
            let h = hash_str(
                config.seed ^ (id.index() as u64).wrapping_mul(0x100_0000_01b3),
                &value.to_string(),
            );
            unit_uniform(h)
        })
        .sum();
    let asymptote = config.base_asymptote + bonus + config.field_effect * field_sum;
    let jitter = unit_uniform(splitmix(config.seed.rotate_left(17) ^ genome.id().0));
    let log_rate = config.rate_coupling * (asymptote - config.base_asymptote) + config.rate_jitter * jitter;
    CurveParams {
        asymptote,
        rate: config.rate * log_rate.exp() / config.step_unit,
        noise_scale: config.noise_scale,
        monotone: config.monotone,
        start: config.start_fitness,
        overfit: if config.monotone {
            0.0
        } else {
            config.overfit / config.step_unit
        },
    }
}

/// Evaluator backed by [`curve_for`] plus optional Gaussian measurement
/// noise.
#[derive(Clone, Debug)]
pub struct SimulatedOracle {
    config: OracleConfig,
}

impl SimulatedOracle {
    pub fn new(config: OracleConfig) -> Result<Self, FitnessError> {
        config.check()?;
        Ok(SimulatedOracle { config })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn curve(&self, genome: &Genome) -> CurveParams {
        curve_for(genome, &self.config)
    }
}

impl Evaluator for SimulatedOracle {
    fn evaluate(&self, genome: &Genome, eval_key: u64, cumulative_steps: u64) -> Result<f64, FitnessError> {
        let curve = self.curve(genome);
        let clean = curve.fitness_at(cumulative_steps);
        if curve.noise_scale == 0.0 {
            return Ok(clean);
        }
        let stream = splitmix(splitmix(self.config.seed ^ genome.id().0) ^ eval_key)
            ^ cumulative_steps.wrapping_mul(0x9e37_79b9);
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        let noise = Normal::new(0.0, curve.noise_scale).map_err(|e| FitnessError::EvaluationFailed(e.to_string()))?;
        Ok(clean + noise.sample(&mut rng))
    }

    fn true_fitness(&self, genome: &Genome) -> Option<f64> {
        Some(self.curve(genome).asymptote)
    }

    fn is_monotone(&self) -> bool {
        self.config.monotone && self.config.noise_scale == 0.0
    }
}
