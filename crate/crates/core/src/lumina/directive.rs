//! Strategy directives, their fingerprints, and application to a design.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::LuminaError;
use crate::design_space::{DesignPoint, Param, SpaceSpec};
use crate::perf_model::Resource;

/// A signed step count on one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Move {
    pub param: Param,
    pub steps: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyDirective {
    pub target_bottleneck: Resource,
    /// Positive step counts.
    pub boosts: Vec<Move>,
    /// Negative step count, if any.
    pub tradeoff: Option<Move>,
    #[serde(default)]
    pub rationale: String,
}

/// Blocklist key: target plus the signed parameter set, ignoring step sizes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fingerprint {
    pub target: Resource,
    pub moves: Vec<(Param, bool)>,
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.target)?;
        for (i, (p, up)) in self.moves.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}{}", if *up { "+" } else { "-" }, p)?;
        }
        Ok(())
    }
}

impl StrategyDirective {
    pub fn moves(&self) -> impl Iterator<Item = &Move> {
        self.boosts.iter().chain(self.tradeoff.iter())
    }

    /// Number of parameters the directive changes.
    pub fn aggressiveness(&self) -> usize {
        self.boosts.len() + usize::from(self.tradeoff.is_some())
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut moves: Vec<(Param, bool)> = self.moves().map(|m| (m.param, m.steps > 0)).collect();
        moves.sort();
        Fingerprint {
            target: self.target_bottleneck,
            moves,
        }
    }

    /// Checks the structural invariants: boosts present and positive,
    /// tradeoff negative, parameters distinct.
    pub fn check(&self) -> Result<(), LuminaError> {
        let bad = |reason: &str| Err(LuminaError::InvalidDirective(reason.to_string()));
        if self.boosts.is_empty() {
            return bad("directive has no boost");
        }
        if self.boosts.iter().any(|m| m.steps <= 0) {
            return bad("boost steps must be positive");
        }
        if self.tradeoff.is_some_and(|m| m.steps >= 0) {
            return bad("tradeoff steps must be negative");
        }
        let mut params: Vec<Param> = self.moves().map(|m| m.param).collect();
        params.sort();
        params.dedup();
        if params.len() != self.aggressiveness() {
            return bad("a parameter appears twice");
        }
        Ok(())
    }

    /// Canonical JSON text.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("directive serializes")
    }
}

/// Result of applying a directive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Applied {
    pub design: DesignPoint,
    /// Parameters whose move hit a lattice end and was clamped.
    pub clamped: Vec<Param>,
}

/// Applies boosts then the tradeoff. Moves that leave the lattice clamp to
/// the boundary and are reported.
pub fn ee_apply(
    d: &DesignPoint,
    directive: &StrategyDirective,
    spec: &SpaceSpec,
) -> Result<Applied, LuminaError> {
    directive.check()?;
    let mut out = *d;
    let mut clamped = Vec::new();
    for m in directive.moves() {
        let (next, hit) = spec.step_clamped(&out, m.param, m.steps);
        if hit {
            clamped.push(m.param);
        }
        out = next;
    }
    if out == *d {
        return Err(LuminaError::InvalidDirective(
            "no move changes the design".into(),
        ));
    }
    if let Err(v) = spec.validate(&out) {
        return Err(LuminaError::InvalidDirective(format!(
            "result violates the space: {v:?}"
        )));
    }
    Ok(Applied {
        design: out,
        clamped,
    })
}
