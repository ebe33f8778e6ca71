//! Baseline explorers behind one propose/observe interface.

mod ant_colony;
mod bayesian;
mod genetic;
mod grid;
mod random_walk;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design_space::{DesignPoint, Param, SpaceSpec};
use crate::pareto::ObjectiveVector;

pub use ant_colony::AntColony;
pub use bayesian::{expected_improvement, knn_estimate, BayesianOptimizer, Scored};
pub use genetic::Nsga2;
pub use grid::GridSearch;
pub use random_walk::RandomWalk;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("grid sweep finished after {0} proposals")]
    BudgetExhausted(usize),
    #[error("batch size must be at least 1")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Grid,
    RandomWalk,
    Genetic,
    AntColony,
    Bayesian,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Grid,
        Method::RandomWalk,
        Method::Genetic,
        Method::AntColony,
        Method::Bayesian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Grid => "grid",
            Method::RandomWalk => "random_walk",
            Method::Genetic => "genetic",
            Method::AntColony => "ant_colony",
            Method::Bayesian => "bayesian",
        }
    }

    /// Short names accepted on the command line.
    fn aliases(self) -> &'static [&'static str] {
        match self {
            Method::Grid => &["gs", "grid_search"],
            Method::RandomWalk => &["rw"],
            Method::Genetic => &["ga", "nsga2"],
            Method::AntColony => &["aco"],
            Method::Bayesian => &["bo"],
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.to_ascii_lowercase();
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s || m.aliases().contains(&s.as_str()))
            .ok_or_else(|| format!("unknown optimizer method `{s}`"))
    }
}

/// Hyperparameters of every baseline. Serialized as the `optimizer` section
/// of the run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub rw_restart_prob: f64,
    pub ga_population: usize,
    pub ga_crossover_prob: f64,
    pub ga_mutation_prob: f64,
    pub aco_evaporation: f64,
    pub bo_initial_samples: usize,
    pub bo_candidates: usize,
    pub bo_neighbors: usize,
    /// Most recent observations kept in the surrogate.
    pub bo_max_history: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            rw_restart_prob: 0.05,
            ga_population: 20,
            ga_crossover_prob: 0.9,
            ga_mutation_prob: 0.1,
            aco_evaporation: 0.1,
            bo_initial_samples: 10,
            bo_candidates: 512,
            bo_neighbors: 5,
            bo_max_history: 256,
        }
    }
}

pub type History = Vec<(DesignPoint, ObjectiveVector)>;

pub trait Optimizer {
    fn method(&self) -> Method;

    /// Next designs to evaluate. Always on the lattice.
    fn propose(&mut self, batch_size: usize) -> Result<Vec<DesignPoint>, OptimizerError>;

    /// Feeds back one evaluation, in proposal order.
    fn observe(&mut self, design: DesignPoint, obj: ObjectiveVector);

    fn history(&self) -> &[(DesignPoint, ObjectiveVector)];
}

/// Builds a seeded optimizer. `budget` sizes the grid stride.
pub fn build(
    method: Method,
    space: &SpaceSpec,
    config: &OptimizerConfig,
    seed: u64,
    budget: usize,
) -> Box<dyn Optimizer> {
    match method {
        Method::Grid => Box::new(GridSearch::new(space.clone(), budget)),
        Method::RandomWalk => Box::new(RandomWalk::new(space.clone(), config, seed)),
        Method::Genetic => Box::new(Nsga2::new(space.clone(), config, seed)),
        Method::AntColony => Box::new(AntColony::new(space.clone(), config, seed)),
        Method::Bayesian => Box::new(BayesianOptimizer::new(space.clone(), config, seed)),
    }
}

pub(crate) fn check_batch(batch_size: usize) -> Result<(), OptimizerError> {
    if batch_size == 0 {
        Err(OptimizerError::EmptyBatch)
    } else {
        Ok(())
    }
}

/// Moves one random parameter one step in a random direction, reversing the
/// direction when it would leave the list.
pub(crate) fn random_unit_step<R: Rng + ?Sized>(
    space: &SpaceSpec,
    d: &DesignPoint,
    rng: &mut R,
) -> DesignPoint {
    loop {
        let p = Param::ALL[rng.gen_range(0..Param::ALL.len())];
        if space.values(p).len() < 2 {
            if Param::ALL.iter().all(|&q| space.values(q).len() < 2) {
                return *d;
            }
            continue;
        }
        let delta = if rng.gen_bool(0.5) { 1 } else { -1 };
        return space
            .step_neighbor(d, p, delta)
            .or_else(|_| space.step_neighbor(d, p, -delta))
            .expect("parameter with two or more values has a neighbour");
    }
}
