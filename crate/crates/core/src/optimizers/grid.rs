use super::{check_batch, History, Method, Optimizer, OptimizerError};
use crate::design_space::{DesignPoint, SpaceSpec};
use crate::pareto::ObjectiveVector;

/// Evenly strided sweep over the lattice index, starting at the all-minimum
/// design. Ignores objective values.
#[derive(Debug, Clone)]
pub struct GridSearch {
    space: SpaceSpec,
    stride: u64,
    next: u64,
    proposed: usize,
    history: History,
}

impl GridSearch {
    pub fn new(space: SpaceSpec, budget: usize) -> Self {
        let stride = (space.cardinality() / budget.max(1) as u64).max(1);
        GridSearch {
            space,
            stride,
            next: 0,
            proposed: 0,
            history: Vec::new(),
        }
    }

    pub fn stride(&self) -> u64 {
        self.stride
    }
}

impl Optimizer for GridSearch {
    fn method(&self) -> Method {
        Method::Grid
    }

    fn propose(&mut self, batch_size: usize) -> Result<Vec<DesignPoint>, OptimizerError> {
        check_batch(batch_size)?;
        let mut out = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            match self.space.design_at(self.next) {
                Some(d) => {
                    out.push(d);
                    self.next += self.stride;
                    self.proposed += 1;
                }
                None if out.is_empty() => {
                    return Err(OptimizerError::BudgetExhausted(self.proposed))
                }
                None => break,
            }
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
