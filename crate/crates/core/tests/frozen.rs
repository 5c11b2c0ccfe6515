//! Values computed once and pinned, so silent changes to hashing, counting
//! or the simulated oracle show up as failures.

use etnas_core::arch::{at_scale, natural_scale, scale_dimensions, ModelConfig};
use etnas_core::fitness::{fitness_from_perplexity, Evaluator, OracleConfig, SimulatedOracle};
use etnas_core::search_space::{et_seed, transformer_seed};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

#[test]
fn seed_genome_ids() {
    assert_eq!(transformer_seed().id().to_string(), "1fefbac20e910455");
    assert_eq!(et_seed().id().to_string(), "87489b895aa4e7bd");
}

#[test]
fn natural_scale_parameter_counts() {
    let wide = ModelConfig::default();
    let narrow = ModelConfig {
        input_embedding_dim: 128,
        ..ModelConfig::default()
    };
    let count = |g, m: &ModelConfig| at_scale(&g, m, natural_scale(m)).unwrap().total_params;
    assert_eq!(count(transformer_seed(), &wide), 60_915_712);
    assert_eq!(count(et_seed(), &wide), 63_846_400);
    assert_eq!(count(transformer_seed(), &narrow), 6_971_392);
    assert_eq!(count(et_seed(), &narrow), 7_187_968);
}

#[test]
fn scaled_seeds_sit_at_the_range_floor() {
    let model = ModelConfig::default();
    let t = scale_dimensions(&transformer_seed(), &model).unwrap();
    assert_eq!((t.scale_factor, t.total_params), (15.5625, 59_207_296));
    let e = scale_dimensions(&et_seed(), &model).unwrap();
    assert_eq!((e.scale_factor, e.total_params), (14.75, 59_612_512));
}

#[test]
fn default_oracle_curves() {
    let oracle = SimulatedOracle::new(OracleConfig::default()).unwrap();
    let t = oracle.curve(&transformer_seed());
    let e = oracle.curve(&et_seed());
    assert!(close(t.asymptote, -1.2620974598225603));
    assert!(close(e.asymptote, -0.9735534964536254));
    assert!(close(t.fitness_at(10), -1.8423558898419334));
    assert!(close(e.fitness_at(10), -1.429017592449958));
    assert!(close(
        oracle.evaluate(&transformer_seed(), 5, 10).unwrap(),
        -1.8409829620051468
    ));
    assert!(close(oracle.evaluate(&et_seed(), 5, 10).unwrap(), -1.428716381615674));
}

#[test]
fn perplexity_conversion() {
    assert!(close(fitness_from_perplexity(4.5), -1.5040773967762742));
}
