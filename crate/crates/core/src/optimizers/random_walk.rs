use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    check_batch, random_unit_step, History, Method, Optimizer, OptimizerConfig, OptimizerError,
};
use crate::design_space::{DesignPoint, SpaceSpec};
use crate::pareto::ObjectiveVector;

/// Unit-step random walk from a uniform start, with occasional uniform
/// restarts. Never looks at objective values.
#[derive(Debug, Clone)]
pub struct RandomWalk {
    space: SpaceSpec,
    rng: ChaCha8Rng,
    restart_prob: f64,
    current: Option<DesignPoint>,
    history: History,
}

impl RandomWalk {
    pub fn new(space: SpaceSpec, config: &OptimizerConfig, seed: u64) -> Self {
        RandomWalk {
            space,
            rng: ChaCha8Rng::seed_from_u64(seed),
            restart_prob: config.rw_restart_prob,
            current: None,
            history: Vec::new(),
        }
    }

    pub fn current(&self) -> Option<DesignPoint> {
        self.current
    }

    /// Continues the walk from `d`.
    pub fn set_current(&mut self, d: DesignPoint) {
        self.current = Some(d);
    }
}

impl Optimizer for RandomWalk {
    fn method(&self) -> Method {
        Method::RandomWalk
    }

    fn propose(&mut self, batch_size: usize) -> Result<Vec<DesignPoint>, OptimizerError> {
        check_batch(batch_size)?;
        let mut out = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let next = match self.current {
                Some(d) if !self.rng.gen_bool(self.restart_prob) => {
                    random_unit_step(&self.space, &d, &mut self.rng)
                }
                _ => self.space.random_design_with(&mut self.rng),
            };
            self.current = Some(next);
            out.push(next);
        }
        Ok(out)
    }

    fn observe(&mut self, design: DesignPoint, obj: ObjectiveVector) {
        self.history.push((design, obj));
    }

    fn history(&self) -> &[(DesignPoint, ObjectiveVector)] {
        &self.history
    }
}
