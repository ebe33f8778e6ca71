//! The bottleneck-guided exploration loop: a qualitative influence map,
//! quantitative sensitivities around a reference, a strategist proposing
//! directives, and a trajectory memory that refines the map and blocks
//! failed patterns.

mod directive;
mod engine;
mod influence;
mod llm_strategist;
mod memory;
mod strategy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design_space::{Param, SpaceError};
use crate::llm::LlmError;

pub use directive::{ee_apply, Applied, Fingerprint, Move, StrategyDirective};
pub use engine::{
    run_loop, run_rule, LuminaConfig, LuminaRun, Proposal, RuleStrategist, Strategist,
};
pub use influence::{
    apply_area_only, apply_probes, is_hard_zero, probe_plan, quane_sensitivity, resource_levers,
    InfluenceEntry, InfluenceMap, InfluenceRow, Metric, Probe, SensitivityReference, Sign, Source,
};
pub use llm_strategist::{quale_llm, LlmStrategist};
pub use memory::{
    classify, reference_steps, refine, refine_pair, Outcome, SampleKind, TrajectoryMemory,
    TrajectorySample, IMPROVE_FRACTION,
};
pub use strategy::{
    boost_order, candidates, choose_target, criticality, predicted_delta, predicted_to_dominate,
    se_propose_rule, tradeoff_order, SeContext,
};

#[derive(Debug, Error)]
pub enum LuminaError {
    #[error(
        "LLM influence map gives {param} a nonzero effect on {metric}, which the model rules out"
    )]
    LlmMapInvalid { param: Param, metric: Metric },
    #[error("invalid directive: {0}")]
    InvalidDirective(String),
    #[error("every candidate directive is blocked")]
    Exhausted,
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("initial design is off the space: {0}")]
    InvalidInitial(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Which strategist proposes directives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Rule,
    Llm,
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rule" => Ok(Backend::Rule),
            "llm" => Ok(Backend::Llm),
            other => Err(format!("unknown backend `{other}` (expected rule or llm)")),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Rule => "rule",
            Backend::Llm => "llm",
        })
    }
}
