use etnas_core::arch::{absolute_width, at_scale, ModelConfig};
use etnas_core::fitness::{Evaluator, FitnessError};
use etnas_core::pdh::{mean_fitness_of_max, run_hurdles, BudgetLedger};
use etnas_core::search_space::{
    deserialize, diff, mutate_with_mask, random_genome, serialize, transformer_seed, validate, FieldId, Genome, RelDim,
    ValidationConfig, FIELD_COUNT,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn loose() -> ValidationConfig {
    ValidationConfig {
        check_param_range: false,
        ..ValidationConfig::default()
    }
}

fn genome(seed: u64) -> Genome {
    random_genome(&mut ChaCha8Rng::seed_from_u64(seed), &loose()).unwrap()
}

/// Fitness follows a fixed list of values, one per evaluation point.
struct Script {
    increments: Vec<u64>,
    values: Vec<f64>,
}

impl Evaluator for Script {
    fn evaluate(&self, _: &Genome, _: u64, steps: u64) -> Result<f64, FitnessError> {
        let mut total = 0;
        for (i, inc) in self.increments.iter().enumerate() {
            total += inc;
            if total == steps {
                return Ok(self.values[i]);
            }
        }
        Err(FitnessError::EvaluationFailed(format!("unexpected step count {steps}")))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn text_round_trip(seed in any::<u64>()) {
        let g = genome(seed);
        prop_assert_eq!(deserialize(&serialize(&g)).unwrap(), g.clone());
        prop_assert_eq!(g.fields().count(), FIELD_COUNT);
    }

    #[test]
    fn diff_is_symmetric_and_reflexive(a in any::<u64>(), b in any::<u64>()) {
        let (ga, gb) = (genome(a), genome(b));
        prop_assert!(diff(&ga, &ga).is_empty());
        let ab = diff(&ga, &gb);
        let ba = diff(&gb, &ga);
        prop_assert_eq!(ab.len(), ba.len());
        for (x, y) in ab.iter().zip(&ba) {
            prop_assert_eq!(x.value_a, y.value_b);
        }
    }

    #[test]
    fn children_change_only_masked_fields(seed in any::<u64>(), rate in 0.0f64..0.2) {
        let parent = transformer_seed();
        let config = ValidationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mutate_with_mask(&parent, rate, &mut rng, &config).unwrap();
        prop_assert!(validate(&m.child, &config).valid());
        for id in FieldId::all() {
            let changed = m.child.get(id) != parent.get(id);
            prop_assert_eq!(changed, m.mask.contains(&id));
        }
    }

    #[test]
    fn parameter_count_grows_with_scale(seed in any::<u64>(), lo in 0.1f64..30.0, step in 0.0f64..30.0) {
        let g = genome(seed);
        let model = ModelConfig::default();
        let small = at_scale(&g, &model, lo).unwrap().total_params;
        let large = at_scale(&g, &model, lo + step).unwrap().total_params;
        prop_assert!(small <= large);
    }

    #[test]
    fn widths_are_monotone_quanta(rel in 1u8..=10, sigma in 0.01f64..64.0, bump in 0.0f64..4.0) {
        let d = RelDim::new(rel).unwrap();
        let w = absolute_width(d, sigma);
        prop_assert_eq!(w % 16, 0);
        prop_assert!(w >= 16);
        prop_assert!(absolute_width(d, sigma + bump) >= w);
    }

    #[test]
    fn mean_of_max_matches_brute_force(members in prop::collection::vec((0u64..4, -5.0f64..0.0), 1..30)) {
        let max = members.iter().map(|m| m.0).max().unwrap();
        let top: Vec<f64> = members.iter().filter(|m| m.0 == max).map(|m| m.1).collect();
        let want = top.iter().sum::<f64>() / top.len() as f64;
        let got = mean_fitness_of_max(members.iter().copied()).unwrap();
        prop_assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn gates_are_consistent(
        increments in prop::collection::vec(1u64..50, 1..6),
        values in prop::collection::vec(-3.0f64..0.0, 6),
        raw_hurdles in prop::collection::vec(-3.0f64..0.0, 0..5),
    ) {
        let n = raw_hurdles.len().min(increments.len() - 1);
        let hurdles = &raw_hurdles[..n];
        let script = Script { increments: increments.clone(), values };
        let out = run_hurdles(&transformer_seed(), 0, &increments, hurdles, &script).unwrap();
        let (last, passed) = out.gates.split_last().unwrap();
        prop_assert!(passed.iter().all(|g| g.passed));
        prop_assert!(!last.passed);
        prop_assert_eq!(out.steps_used, increments[..out.gates.len()].iter().sum::<u64>());
        prop_assert_eq!(last.fitness, out.fitness);
        for g in &out.gates {
            prop_assert_eq!(g.passed, g.hurdle.is_some_and(|h| g.fitness > h));
        }
        let mut ledger = BudgetLedger::default();
        ledger.charge(1, out.steps_used);
        ledger.charge(2, 7);
        prop_assert!(ledger.is_consistent());
    }
}
