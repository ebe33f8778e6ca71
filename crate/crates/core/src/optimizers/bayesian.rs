use std::collections::HashSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::{
    check_batch, random_unit_step, History, Method, Optimizer, OptimizerConfig, OptimizerError,
};
use crate::design_space::{DesignPoint, Param, SpaceSpec};
use crate::pareto::ObjectiveVector;

/// Expected improvement below `best` for a Gaussian prediction.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    if sigma <= 0.0 {
        return (best - mu).max(0.0);
    }
    let n = Normal::standard();
    let z = (best - mu) / sigma;
    (best - mu) * n.cdf(z) + sigma * n.pdf(z)
}

/// Inverse-distance weighted mean and weighted standard deviation of
/// `(distance, value)` neighbours.
pub fn knn_estimate(neighbors: &[(f64, f64)]) -> (f64, f64) {
    let w: Vec<f64> = neighbors.iter().map(|(d, _)| 1.0 / (d + 1e-9)).collect();
    let total: f64 = w.iter().sum();
    let mu = neighbors
        .iter()
        .zip(&w)
        .map(|((_, y), w)| w * y)
        .sum::<f64>()
        / total;
    let var = neighbors
        .iter()
        .zip(&w)
        .map(|((_, y), w)| w * (y - mu).powi(2))
        .sum::<f64>()
        / total;
    (mu, var.sqrt())
}

/// One scored candidate from the last acquisition round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub design: DesignPoint,
    pub mu: f64,
    pub sigma: f64,
    pub ei: f64,
}

/// Surrogate-guided search. A k-nearest-neighbour regressor over normalized
/// lattice positions predicts a weighted Chebyshev scalarization of the
/// objectives; the weights are redrawn for every proposal. Neighbours are
/// inverse-distance weighted and their weighted spread is the predictive
/// deviation. Candidates mix uniform draws with unit steps around the
/// incumbent.
#[derive(Debug, Clone)]
pub struct BayesianOptimizer {
    space: SpaceSpec,
    rng: ChaCha8Rng,
    n_init: usize,
    n_candidates: usize,
    k: usize,
    max_history: usize,
    seen: HashSet<DesignPoint>,
    last_weights: [f64; 3],
    last_scores: Vec<Scored>,
    history: History,
}

impl BayesianOptimizer {
    pub fn new(space: SpaceSpec, config: &OptimizerConfig, seed: u64) -> Self {
        BayesianOptimizer {
            space,
            rng: ChaCha8Rng::seed_from_u64(seed),
            n_init: config.bo_initial_samples.max(1),
            n_candidates: config.bo_candidates.max(1),
            k: config.bo_neighbors.max(1),
            max_history: config.bo_max_history.max(1),
            seen: HashSet::new(),
            last_weights: [1.0 / 3.0; 3],
            last_scores: Vec::new(),
            history: Vec::new(),
        }
    }

    pub fn last_weights(&self) -> [f64; 3] {
        self.last_weights
    }

    /// Candidates scored in the most recent acquisition round.
    pub fn last_scores(&self) -> &[Scored] {
        &self.last_scores
    }

    pub fn neighbors(&self) -> usize {
        self.k
    }

    /// Observations the surrogate is fit on (the most recent ones).
    pub fn surrogate_data(&self) -> &[(DesignPoint, ObjectiveVector)] {
        let start = self.history.len().saturating_sub(self.max_history);
        &self.history[start..]
    }

    pub fn scalarize(obj: &ObjectiveVector, w: &[f64; 3]) -> f64 {
        obj.0
            .iter()
            .zip(w)
            .map(|(o, w)| o * w)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Position of each parameter scaled to [0, 1].
    pub fn embed(space: &SpaceSpec, d: &DesignPoint) -> [f64; 8] {
        let pos = space.positions(d).expect("candidates are on the lattice");
        let mut out = [0.0; 8];
        for p in Param::ALL {
            let n = space.values(p).len();
            out[p.index()] = if n > 1 {
                pos[p.index()] as f64 / (n - 1) as f64
            } else {
                0.0
            };
        }
        out
    }

    /// Predictive mean and spread of the scalarized objective at `d`.
    pub fn predict(&self, d: &DesignPoint, w: &[f64; 3]) -> (f64, f64) {
        self.predict_with(&self.training(w), d)
    }

    /// Embedded surrogate data with scalarized targets.
    fn training(&self, w: &[f64; 3]) -> Vec<([f64; 8], f64)> {
        self.surrogate_data()
            .iter()
            .map(|(h, o)| (Self::embed(&self.space, h), Self::scalarize(o, w)))
            .collect()
    }

    fn predict_with(&self, data: &[([f64; 8], f64)], d: &DesignPoint) -> (f64, f64) {
        let x = Self::embed(&self.space, d);
        let mut dists: Vec<(f64, f64)> = data
            .iter()
            .map(|(y, v)| {
                let dist = x
                    .iter()
                    .zip(y)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                (dist, *v)
            })
            .collect();
        if dists.len() > self.k {
            dists.select_nth_unstable_by(self.k, |a, b| a.0.total_cmp(&b.0));
            dists.truncate(self.k);
        }
        dists.sort_by(|a, b| a.0.total_cmp(&b.0));
        knn_estimate(&dists)
    }

    fn draw_weights(&mut self) -> [f64; 3] {
        // uniform on the simplex
        let e: [f64; 3] = std::array::from_fn(|_| -self.rng.gen_range(f64::EPSILON..1.0f64).ln());
        let s: f64 = e.iter().sum();
        [e[0] / s, e[1] / s, e[2] / s]
    }

    fn acquire(&mut self) -> DesignPoint {
        let w = self.draw_weights();
        let incumbent = self
            .history
            .iter()
            .min_by(|a, b| Self::scalarize(&a.1, &w).total_cmp(&Self::scalarize(&b.1, &w)))
            .expect("acquisition needs observations");
        let best = Self::scalarize(&incumbent.1, &w);
        let anchor = incumbent.0;

        let mut candidates = Vec::with_capacity(self.n_candidates);
        let mut picked = HashSet::new();
        let mut tries = 0;
        while candidates.len() < self.n_candidates && tries < self.n_candidates * 20 {
            tries += 1;
            let mut d = self.space.random_design_with(&mut self.rng);
            if candidates.len() % 2 == 1 {
                // local move; a uniform draw stands in once the neighbourhood is used up
                let mut local = anchor;
                for _ in 0..self.rng.gen_range(1..=2) {
                    local = random_unit_step(&self.space, &local, &mut self.rng);
                }
                if !self.seen.contains(&local) && !picked.contains(&local) {
                    d = local;
                }
            }
            if !self.seen.contains(&d) && picked.insert(d) {
                candidates.push(d);
            }
        }
        if candidates.is_empty() {
            candidates.push(self.space.random_design_with(&mut self.rng));
        }

        let data = self.training(&w);
        let scores: Vec<Scored> = candidates
            .iter()
            .map(|&design| {
                let (mu, sigma) = self.predict_with(&data, &design);
                Scored {
                    design,
                    mu,
                    sigma,
                    ei: expected_improvement(mu, sigma, best),
                }
            })
            .collect();
        let pick = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.ei.total_cmp(&b.1.ei).then(b.0.cmp(&a.0)))
            .map(|(_, s)| s.design)
            .unwrap();
        self.last_weights = w;
        self.last_scores = scores;
        pick
    }
}

impl Optimizer for BayesianOptimizer {
    fn method(&self) -> Method {
        Method::Bayesian
    }

    /// Returns designs one acquisition at a time; batched calls without
    /// feedback reuse the same surrogate.
    fn propose(&mut self, batch_size: usize) -> Result<Vec<DesignPoint>, OptimizerError> {
        check_batch(batch_size)?;
        let mut out = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let d = if self.history.len() < self.n_init {
                self.space.random_design_with(&mut self.rng)
            } else {
                self.acquire()
            };
            self.seen.insert(d);
            out.push(d);
        }
        Ok(out)
    }

    fn observe(&mut self, design: DesignPoint, obj: ObjectiveVector) {
        self.seen.insert(design);
        self.history.push((design, obj));
    }

    fn history(&self) -> &[(DesignPoint, ObjectiveVector)] {
        &self.history
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ei_examples() {
        // at the incumbent with unit spread: sigma * phi(0)
        let v = expected_improvement(1.0, 1.0, 1.0);
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert_eq!(expected_improvement(2.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(0.5, 0.0, 1.0), 0.5);
        assert!(expected_improvement(0.5, 0.1, 1.0) > expected_improvement(0.9, 0.1, 1.0));
    }

    #[test]
    fn weights_on_simplex() {
        let mut bo = BayesianOptimizer::new(SpaceSpec::default_lattice(), &OptimizerConfig::default(), 2);
        for _ in 0..100 {
            let w = bo.draw_weights();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&x| x > 0.0));
        }
    }
}
