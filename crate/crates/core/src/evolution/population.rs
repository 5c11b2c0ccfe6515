use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::search_space::Genome;

/// An evaluated architecture. `created_index` doubles as the model id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub created_index: u64,
    pub parent_id: Option<u64>,
    pub genome: Genome,
    pub fitness: f64,
    pub steps_trained: u64,
}

impl Individual {
    pub fn model_id(&self) -> u64 {
        self.created_index
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub members: Vec<Individual>,
    pub capacity: usize,
}

impl Population {
    pub fn new(capacity: usize) -> Self {
        Population {
            members: Vec::with_capacity(capacity),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.members.len() >= self.capacity
    }

    /// `(steps_trained, fitness)` pairs, the input of hurdle creation.
    pub fn step_fitness(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.members.iter().map(|m| (m.steps_trained, m.fitness))
    }
}

/// Slot of the fittest member among `subpop_size` members drawn without
/// replacement; ties go to the earlier-created member.
pub fn select_parent<R: Rng>(population: &Population, subpop_size: usize, rng: &mut R) -> usize {
    let k = subpop_size.min(population.len());
    sample(rng, population.len(), k)
        .into_iter()
        .max_by(|&a, &b| {
            let (x, y) = (&population.members[a], &population.members[b]);
            x.fitness
                .total_cmp(&y.fitness)
                .then(y.created_index.cmp(&x.created_index))
        })
        .expect("population is not empty")
}

/// Slot of the least fit member among `subpop_size` members drawn without
/// replacement; ties go to the later-created member.
pub fn select_victim<R: Rng>(population: &Population, subpop_size: usize, rng: &mut R) -> usize {
    let k = subpop_size.min(population.len());
    sample(rng, population.len(), k)
        .into_iter()
        .min_by(|&a, &b| {
            let (x, y) = (&population.members[a], &population.members[b]);
            x.fitness
                .total_cmp(&y.fitness)
                .then(y.created_index.cmp(&x.created_index))
        })
        .expect("population is not empty")
}

/// Replaces a tournament loser by `child`, returning the slot and the removed
/// member.
pub fn kill_and_insert<R: Rng>(
    population: &mut Population,
    child: Individual,
    subpop_size: usize,
    rng: &mut R,
) -> (usize, Individual) {
    let slot = select_victim(population, subpop_size, rng);
    let killed = std::mem::replace(&mut population.members[slot], child);
    (slot, killed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::transformer_seed;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pop(fitness: &[f64]) -> Population {
        Population {
            members: fitness
                .iter()
                .enumerate()
                .map(|(i, &f)| Individual {
                    created_index: i as u64,
                    parent_id: None,
                    genome: transformer_seed(),
                    fitness: f,
                    steps_trained: 10,
                })
                .collect(),
            capacity: fitness.len(),
        }
    }

    #[test]
    fn full_tournament_picks_extremes() {
        let p = pop(&[1.0, 5.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_parent(&p, 3, &mut rng), 1);
        assert_eq!(select_victim(&p, 3, &mut rng), 0);
    }

    #[test]
    fn ties_follow_creation_order() {
        let p = pop(&[2.0, 2.0, 2.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_parent(&p, 4, &mut rng), 0);
        assert_eq!(select_victim(&p, 4, &mut rng), 3);
    }

    #[test]
    fn kill_keeps_size() {
        let mut p = pop(&[2.0; 6]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut child = p.members[0].clone();
        child.created_index = 99;
        let (slot, killed) = kill_and_insert(&mut p, child, 3, &mut rng);
        assert_eq!(p.len(), 6);
        assert_eq!(p.members[slot].created_index, 99);
        assert_ne!(killed.created_index, 99);
    }

    #[test]
    fn best_selected_at_subpop_fraction() {
        let fitness: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let p = pop(&fitness);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hits = (0..10_000).filter(|_| select_parent(&p, 30, &mut rng) == 99).count();
        let rate = hits as f64 / 10_000.0;
        assert!((rate - 0.30).abs() < 0.02, "{rate}");
    }
}
