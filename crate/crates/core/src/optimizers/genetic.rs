use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_batch, History, Method, Optimizer, OptimizerConfig, OptimizerError};
use crate::design_space::{DesignPoint, Param, SpaceSpec};
use crate::pareto::{crowding_distance, nondominated_ranks, ObjectiveVector};

/// NSGA-II over lattice positions: binary tournament on (rank, crowding),
/// uniform crossover, per-gene mutation to a neighbouring or random position,
/// and elitist survivor selection from parents plus offspring.
#[derive(Debug, Clone)]
pub struct Nsga2 {
    space: SpaceSpec,
    rng: ChaCha8Rng,
    population: usize,
    crossover_prob: f64,
    mutation_prob: f64,
    parents: Vec<(DesignPoint, ObjectiveVector)>,
    parent_rank: Vec<usize>,
    parent_crowd: Vec<f64>,
    offspring: Vec<(DesignPoint, ObjectiveVector)>,
    generation: usize,
    history: History,
}

impl Nsga2 {
    pub fn new(space: SpaceSpec, config: &OptimizerConfig, seed: u64) -> Self {
        Nsga2 {
            space,
            rng: ChaCha8Rng::seed_from_u64(seed),
            population: config.ga_population.max(2),
            crossover_prob: config.ga_crossover_prob,
            mutation_prob: config.ga_mutation_prob,
            parents: Vec::new(),
            parent_rank: Vec::new(),
            parent_crowd: Vec::new(),
            offspring: Vec::new(),
            generation: 0,
            history: Vec::new(),
        }
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn parents(&self) -> &[(DesignPoint, ObjectiveVector)] {
        &self.parents
    }

    fn initializing(&self) -> bool {
        self.generation == 0
    }

    fn tournament(&mut self) -> usize {
        let a = self.rng.gen_range(0..self.parents.len());
        let b = self.rng.gen_range(0..self.parents.len());
        let better = |x: usize, y: usize| {
            self.parent_rank[x] < self.parent_rank[y]
                || (self.parent_rank[x] == self.parent_rank[y]
                    && self.parent_crowd[x] > self.parent_crowd[y])
        };
        if better(b, a) {
            b
        } else {
            a
        }
    }

    fn make_child(&mut self) -> DesignPoint {
        let (ia, ib) = (self.tournament(), self.tournament());
        let (pa, pb) = (self.parents[ia].0, self.parents[ib].0);
        let a = self
            .space
            .positions(&pa)
            .expect("parents are on the lattice");
        let b = self
            .space
            .positions(&pb)
            .expect("parents are on the lattice");
        let mut child = a;
        if self.rng.gen_bool(self.crossover_prob) {
            for i in 0..8 {
                if self.rng.gen_bool(0.5) {
                    child[i] = b[i];
                }
            }
        }
        for p in Param::ALL {
            let n = self.space.values(p).len();
            if n < 2 || !self.rng.gen_bool(self.mutation_prob) {
                continue;
            }
            let i = p.index();
            child[i] = if self.rng.gen_bool(0.5) {
                // neighbouring position
                if child[i] == 0 {
                    1
                } else if child[i] == n - 1 || self.rng.gen_bool(0.5) {
                    child[i] - 1
                } else {
                    child[i] + 1
                }
            } else {
                self.rng.gen_range(0..n)
            };
        }
        self.space.design_from_positions(&child)
    }

    fn rank_parents(&mut self) {
        let objs: Vec<ObjectiveVector> = self.parents.iter().map(|p| p.1).collect();
        self.parent_rank = nondominated_ranks(&objs);
        self.parent_crowd = vec![0.0; objs.len()];
        let max_rank = self.parent_rank.iter().copied().max().unwrap_or(0);
        for r in 1..=max_rank {
            let idx: Vec<usize> = (0..objs.len())
                .filter(|&i| self.parent_rank[i] == r)
                .collect();
            let front: Vec<ObjectiveVector> = idx.iter().map(|&i| objs[i]).collect();
            for (k, d) in crowding_distance(&front).into_iter().enumerate() {
                self.parent_crowd[idx[k]] = d;
            }
        }
    }

    fn survive(&mut self) {
        let mut pool = std::mem::take(&mut self.parents);
        pool.append(&mut self.offspring);
        let objs: Vec<ObjectiveVector> = pool.iter().map(|p| p.1).collect();
        let ranks = nondominated_ranks(&objs);
        let max_rank = ranks.iter().copied().max().unwrap_or(0);
        let mut chosen = Vec::with_capacity(self.population);
        for r in 1..=max_rank {
            let idx: Vec<usize> = (0..pool.len()).filter(|&i| ranks[i] == r).collect();
            if chosen.len() + idx.len() <= self.population {
                chosen.extend(idx);
            } else {
                let front: Vec<ObjectiveVector> = idx.iter().map(|&i| objs[i]).collect();
                let crowd = crowding_distance(&front);
                let mut order: Vec<usize> = (0..idx.len()).collect();
                order.sort_by(|&x, &y| crowd[y].total_cmp(&crowd[x]).then(x.cmp(&y)));
                let room = self.population - chosen.len();
                chosen.extend(order.into_iter().take(room).map(|k| idx[k]));
            }
            if chosen.len() == self.population {
                break;
            }
        }
        chosen.sort_unstable();
        self.parents = chosen.into_iter().map(|i| pool[i]).collect();
        self.generation += 1;
        self.rank_parents();
    }
}

impl Optimizer for Nsga2 {
    fn method(&self) -> Method {
        Method::Genetic
    }

    fn propose(&mut self, batch_size: usize) -> Result<Vec<DesignPoint>, OptimizerError> {
        check_batch(batch_size)?;
        let mut out = Vec::with_capacity(batch_size);
        while out.len() < batch_size {
            let d = if self.initializing() || self.parents.is_empty() {
                self.space.random_design_with(&mut self.rng)
            } else {
                self.make_child()
            };
            out.push(d);
        }
        Ok(out)
    }

    fn observe(&mut self, design: DesignPoint, obj: ObjectiveVector) {
        self.history.push((design, obj));
        if self.initializing() {
            self.parents.push((design, obj));
            if self.parents.len() == self.population {
                self.generation = 1;
                self.rank_parents();
            }
        } else {
            self.offspring.push((design, obj));
            if self.offspring.len() == self.population {
                self.survive();
            }
        }
    }

    fn history(&self) -> &[(DesignPoint, ObjectiveVector)] {
        &self.history
    }
}
