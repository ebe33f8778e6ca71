use std::collections::HashSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::directive::StrategyDirective;
use super::influence::{
    apply_area_only, apply_probes, probe_plan, InfluenceMap, Metric, Probe, SensitivityReference,
};
use super::memory::{
    classify, refine_pair, Outcome, SampleKind, TrajectoryMemory, TrajectorySample,
};
use super::strategy::{choose_target, se_propose_rule, SeContext};
use super::LuminaError;
use crate::design_space::{DesignPoint, SpaceSpec};
use crate::pareto::{ObjectiveVector, ParetoArchive};
use crate::perf_model::{BottleneckReport, Evaluator, PpaMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LuminaConfig {
    /// Parameters one directive may change before widening.
    pub aggressiveness: usize,
    /// Widest directive tried before restarting.
    pub max_aggressiveness: usize,
    /// Smoothing weight of new refinement estimates.
    pub smoothing: f64,
    /// Sensitivities from the area model only; no probe samples.
    pub area_only_sensitivity: bool,
    /// Non-improving directives in a row before restarting from the archive.
    pub patience: usize,
    /// Defaults to the space's reference design.
    pub initial_design: Option<DesignPoint>,
}

impl Default for LuminaConfig {
    fn default() -> Self {
        LuminaConfig {
            aggressiveness: 2,
            max_aggressiveness: 3,
            smoothing: 0.5,
            area_only_sensitivity: false,
            patience: 4,
            initial_design: None,
        }
    }
}

/// A directive and whether the primary strategist had to be replaced.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub directive: StrategyDirective,
    pub llm_fallback: bool,
}

pub trait Strategist {
    fn propose(&mut self, ctx: &SeContext) -> Result<Proposal, LuminaError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleStrategist;

impl Strategist for RuleStrategist {
    fn propose(&mut self, ctx: &SeContext) -> Result<Proposal, LuminaError> {
        se_propose_rule(ctx).map(|directive| Proposal {
            directive,
            llm_fallback: false,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LuminaRun {
    pub trajectory: Vec<TrajectorySample>,
    pub archive: ParetoArchive,
    pub ahk: InfluenceMap,
    pub sensitivity: SensitivityReference,
    /// Times the search base was reset.
    pub restarts: usize,
}

struct Base {
    design: DesignPoint,
    metrics: PpaMetrics,
    report: BottleneckReport,
}

impl Base {
    fn of(s: &TrajectorySample) -> Self {
        Base {
            design: s.design,
            metrics: s.metrics,
            report: s.report.clone(),
        }
    }

    fn objectives(&self) -> ObjectiveVector {
        ObjectiveVector::from_metrics(&self.metrics)
    }
}

struct Loop<'a> {
    space: &'a SpaceSpec,
    evaluator: &'a Evaluator,
    budget: usize,
    tm: TrajectoryMemory,
    archive: ParetoArchive,
    rng: ChaCha8Rng,
}

impl Loop<'_> {
    fn full(&self) -> bool {
        self.tm.len() >= self.budget
    }

    fn record(&mut self, sample: TrajectorySample) -> TrajectorySample {
        let s = self.tm.push(sample).clone();
        self.archive.insert(s.design, s.objectives(), s.step);
        s
    }

    fn evaluate(&self, kind: SampleKind, d: DesignPoint) -> TrajectorySample {
        let (metrics, report) = self.evaluator.evaluate(&d);
        TrajectorySample::plain(kind, d, metrics, &report)
    }

    /// Resets the base to a random archive design that still has moves, or
    /// evaluates a fresh random design when none is left.
    fn restart(&mut self, base: &DesignPoint, exhausted: &HashSet<DesignPoint>) -> Option<Base> {
        let pool: Vec<DesignPoint> = self
            .archive
            .entries
            .iter()
            .map(|e| e.design)
            .filter(|d| d != base && !exhausted.contains(d))
            .collect();
        if !pool.is_empty() {
            let pick = pool[self.rng.gen_range(0..pool.len())];
            let s = self
                .tm
                .samples()
                .iter()
                .find(|s| s.design == pick)
                .expect("archive designs are in memory");
            return Some(Base::of(s));
        }
        if self.full() {
            return None;
        }
        let mut d = self.space.random_design_with(&mut self.rng);
        for _ in 0..1000 {
            if !self.tm.visited(&d) {
                break;
            }
            d = self.space.random_design_with(&mut self.rng);
        }
        let s = self.record(self.evaluate(SampleKind::Restart, d));
        Some(Base::of(&s))
    }
}

/// Rule-backend loop with the structural influence map.
pub fn run_rule(
    space: &SpaceSpec,
    evaluator: &Evaluator,
    cfg: &LuminaConfig,
    budget: usize,
    seed: u64,
) -> Result<LuminaRun, LuminaError> {
    run_loop(
        space,
        evaluator,
        cfg,
        budget,
        seed,
        &mut RuleStrategist,
        InfluenceMap::structural(),
    )
}

/// Runs the exploration loop until `budget` designs have been evaluated.
///
/// Sample 0 is the initial design, followed by the sensitivity probes (each
/// counts against the budget) and then one directive per sample. When no
/// directive is admissible the base restarts from the Pareto archive.
pub fn run_loop(
    space: &SpaceSpec,
    evaluator: &Evaluator,
    cfg: &LuminaConfig,
    budget: usize,
    seed: u64,
    strategist: &mut dyn Strategist,
    qualitative: InfluenceMap,
) -> Result<LuminaRun, LuminaError> {
    if budget == 0 {
        return Err(LuminaError::ZeroBudget);
    }
    let initial = cfg.initial_design.unwrap_or_else(|| space.reference());
    space
        .validate(&initial)
        .map_err(|v| LuminaError::InvalidInitial(format!("{v:?}")))?;

    let mut lp = Loop {
        space,
        evaluator,
        budget,
        tm: TrajectoryMemory::new(),
        archive: ParetoArchive::default(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let first = lp.record(lp.evaluate(SampleKind::Initial, initial));

    let mut ahk = qualitative;
    let mut probes = Vec::new();
    if cfg.area_only_sensitivity {
        apply_area_only(&mut ahk, evaluator, space, &initial);
    } else {
        for (param, delta, design) in probe_plan(space, &initial) {
            if lp.full() {
                break;
            }
            let s = lp.record(lp.evaluate(SampleKind::Probe, design));
            probes.push(Probe {
                param,
                delta,
                design,
                metrics: s.metrics,
                report: s.report,
            });
        }
        apply_probes(&mut ahk, evaluator, &initial, &first.metrics, &probes);
    }
    let sensitivity = SensitivityReference {
        design: initial,
        metrics: first.metrics,
        probes,
    };

    let mut base = Base::of(&first);
    let mut last_target: Option<Metric> = None;
    let mut stale = 0usize;
    let mut restarts = 0usize;
    let mut restarted = false;
    let mut exhausted: HashSet<DesignPoint> = HashSet::new();

    while !lp.full() {
        if stale >= cfg.patience.max(1) {
            stale = 0;
            if let Some(b) = lp.restart(&base.design, &exhausted) {
                base = b;
                restarts += 1;
                restarted = true;
            }
            continue;
        }
        let target = choose_target(&base.metrics, last_target);
        let mut proposal = Err(LuminaError::Exhausted);
        for aggressiveness in cfg.aggressiveness..=cfg.max_aggressiveness.max(cfg.aggressiveness) {
            let ctx = SeContext {
                space,
                base: &base.design,
                metrics: &base.metrics,
                report: &base.report,
                ahk: &ahk,
                tm: &lp.tm,
                target,
                aggressiveness,
            };
            proposal = strategist.propose(&ctx);
            if !matches!(proposal, Err(LuminaError::Exhausted)) {
                break;
            }
        }
        let proposal = match proposal {
            Ok(p) => p,
            Err(LuminaError::Exhausted) => {
                log::debug!("no admissible directive at {}; restarting", base.design);
                exhausted.insert(base.design);
                stale = 0;
                match lp.restart(&base.design, &exhausted) {
                    Some(b) => {
                        base = b;
                        restarts += 1;
                        restarted = true;
                        continue;
                    }
                    None => break,
                }
            }
            Err(e) => return Err(e),
        };

        let applied = super::directive::ee_apply(&base.design, &proposal.directive, space)?;
        let mut sample = lp.evaluate(SampleKind::Directive, applied.design);
        let outcome = classify(&base.objectives(), &sample.objectives(), target);
        sample.parent = Some(base.design);
        sample.directive = Some(proposal.directive);
        sample.target_metric = Some(target);
        sample.clamped = applied.clamped;
        sample.llm_fallback = proposal.llm_fallback;
        sample.restarted = std::mem::take(&mut restarted);
        sample.outcome = outcome;
        let s = lp.record(sample);

        refine_pair(
            &mut ahk,
            space,
            &initial,
            (&base.design, &base.metrics),
            (&s.design, &s.metrics),
            cfg.smoothing,
        );
        last_target = Some(target);
        match outcome {
            Outcome::Improved => {
                base = Base::of(&s);
                stale = 0;
            }
            Outcome::Neutral if !base.objectives().dominates(&s.objectives()) => {
                base = Base::of(&s);
                stale += 1;
            }
            _ => stale += 1,
        }
    }

    Ok(LuminaRun {
        trajectory: lp.tm.into_samples(),
        archive: lp.archive,
        ahk,
        sensitivity,
        restarts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_one_is_initial_only() {
        let ev = Evaluator::gpt3_default();
        let s = SpaceSpec::default_lattice();
        let run = run_rule(&s, &ev, &LuminaConfig::default(), 1, 1).unwrap();
        assert_eq!(run.trajectory.len(), 1);
        assert_eq!(run.trajectory[0].kind, SampleKind::Initial);
        assert_eq!(run.trajectory[0].design, s.reference());
        assert!(matches!(
            run_rule(&s, &ev, &LuminaConfig::default(), 0, 1),
            Err(LuminaError::ZeroBudget)
        ));
    }

    #[test]
    fn twenty_samples_find_a_dominating_design() {
        let ev = Evaluator::gpt3_default();
        let s = SpaceSpec::default_lattice();
        for seed in 1..=5 {
            let run = run_rule(&s, &ev, &LuminaConfig::default(), 20, seed).unwrap();
            assert_eq!(run.trajectory.len(), 20);
            assert!(
                run.trajectory.iter().any(|t| t.dominates_reference),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let ev = Evaluator::gpt3_default();
        let s = SpaceSpec::default_lattice();
        let a = run_rule(&s, &ev, &LuminaConfig::default(), 120, 9).unwrap();
        let b = run_rule(&s, &ev, &LuminaConfig::default(), 120, 9).unwrap();
        assert_eq!(
            serde_json::to_string(&a.trajectory).unwrap(),
            serde_json::to_string(&b.trajectory).unwrap()
        );
    }
}
