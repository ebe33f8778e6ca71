use rand::distributions::{Distribution, WeightedIndex};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_batch, History, Method, Optimizer, OptimizerConfig, OptimizerError};
use crate::design_space::{DesignPoint, Param, SpaceSpec};
use crate::pareto::ObjectiveVector;

const TAU_MIN: f64 = 1e-3;

/// Ant colony over independent per-parameter pheromone tables. Each ant picks
/// every parameter's position with probability proportional to pheromone.
/// After each evaluation the tables evaporate and the evaluated design
/// deposits `1 / rank`, where rank is one plus the number of earlier samples
/// that dominate it.
#[derive(Debug, Clone)]
pub struct AntColony {
    space: SpaceSpec,
    rng: ChaCha8Rng,
    evaporation: f64,
    pheromone: Vec<Vec<f64>>,
    history: History,
}

impl AntColony {
    pub fn new(space: SpaceSpec, config: &OptimizerConfig, seed: u64) -> Self {
        let pheromone = Param::ALL
            .iter()
            .map(|&p| vec![1.0; space.values(p).len()])
            .collect();
        AntColony {
            space,
            rng: ChaCha8Rng::seed_from_u64(seed),
            evaporation: config.aco_evaporation,
            pheromone,
            history: Vec::new(),
        }
    }

    pub fn pheromone(&self, p: Param) -> &[f64] {
        &self.pheromone[p.index()]
    }

    /// Rank used for deposits: 1 + number of history points dominating `obj`.
    pub fn deposit_rank(
        history: &[(DesignPoint, ObjectiveVector)],
        obj: &ObjectiveVector,
    ) -> usize {
        1 + history.iter().filter(|(_, h)| h.dominates(obj)).count()
    }
}

impl Optimizer for AntColony {
    fn method(&self) -> Method {
        Method::AntColony
    }

    fn propose(&mut self, batch_size: usize) -> Result<Vec<DesignPoint>, OptimizerError> {
        check_batch(batch_size)?;
        let mut out = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let mut pos = [0usize; 8];
            for p in Param::ALL {
                let dist = WeightedIndex::new(&self.pheromone[p.index()])
                    .expect("pheromone stays positive");
                pos[p.index()] = dist.sample(&mut self.rng);
            }
            out.push(self.space.design_from_positions(&pos));
        }
        Ok(out)
    }

    fn observe(&mut self, design: DesignPoint, obj: ObjectiveVector) {
        let rank = Self::deposit_rank(&self.history, &obj);
        self.history.push((design, obj));
        let Some(pos) = self.space.positions(&design) else {
            return;
        };
        for table in &mut self.pheromone {
            for t in table.iter_mut() {
                *t = (*t * (1.0 - self.evaporation)).max(TAU_MIN);
            }
        }
        for p in Param::ALL {
            self.pheromone[p.index()][pos[p.index()]] += 1.0 / rank as f64;
        }
    }

    fn history(&self) -> &[(DesignPoint, ObjectiveVector)] {
        &self.history
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn deposit_follows_rank() {
        let s = SpaceSpec::default_lattice();
        let cfg = OptimizerConfig {
            aco_evaporation: 0.5,
            ..OptimizerConfig::default()
        };
        let mut aco = AntColony::new(s.clone(), &cfg, 1);
        let d0 = s.design_at(0).unwrap();
        aco.observe(d0, ObjectiveVector::new(0.5, 0.5, 0.5));
        // 1 * 0.5 + 1 / 1 at the chosen position, 0.5 elsewhere
        assert_eq!(aco.pheromone(Param::CoreCount)[0], 1.5);
        assert_eq!(aco.pheromone(Param::CoreCount)[1], 0.5);

        let d1 = s.design_at(1).unwrap(); // differs in mem_channels only
        aco.observe(d1, ObjectiveVector::new(0.9, 0.9, 0.9));
        // dominated by one earlier point: rank 2 deposits 0.5
        assert_eq!(aco.pheromone(Param::MemChannels)[1], 0.5 * 0.5 + 0.5);
        assert_eq!(aco.pheromone(Param::MemChannels)[0], 1.5 * 0.5);
        assert_eq!(aco.pheromone(Param::CoreCount)[0], 1.5 * 0.5 + 0.5);
    }

    #[test]
    fn first_proposals_are_uniform() {
        let s = SpaceSpec::default_lattice();
        let mut aco = AntColony::new(s.clone(), &OptimizerConfig::default(), 11);
        let n = 10_000;
        let designs = aco.propose(n).unwrap();
        for p in Param::ALL {
            let values = s.values(p);
            let mut counts = vec![0f64; values.len()];
            for d in &designs {
                counts[values.iter().position(|&v| v == d.get(p)).unwrap()] += 1.0;
            }
            let expected = n as f64 / values.len() as f64;
            let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
            let dist = ChiSquared::new((values.len() - 1) as f64).unwrap();
            let p_value = 1.0 - dist.cdf(chi2);
            assert!(p_value > 0.01, "{p}: chi2 = {chi2}, p = {p_value}");
        }
    }
}
