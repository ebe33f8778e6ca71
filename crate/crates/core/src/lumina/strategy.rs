//! Rule-based strategy engine: pick the bottleneck, boost its most effective
//! lever, give back the least critical resource.

use super::directive::{ee_apply, Move, StrategyDirective};
use super::influence::{resource_levers, InfluenceMap, Metric};
use super::memory::TrajectoryMemory;
use super::LuminaError;
use crate::design_space::{DesignPoint, Param, SpaceSpec};
use crate::perf_model::{BottleneckReport, PhaseReport, PpaMetrics, Resource};

/// Everything a strategist sees when proposing the next directive.
#[derive(Debug, Clone, Copy)]
pub struct SeContext<'a> {
    pub space: &'a SpaceSpec,
    pub base: &'a DesignPoint,
    pub metrics: &'a PpaMetrics,
    pub report: &'a BottleneckReport,
    pub ahk: &'a InfluenceMap,
    pub tm: &'a TrajectoryMemory,
    /// `Ttft` or `Tpot`.
    pub target: Metric,
    /// Most parameters one directive may change.
    pub aggressiveness: usize,
}

impl SeContext<'_> {
    /// The phase the target latency measures.
    pub fn phase(&self) -> &PhaseReport {
        match self.target {
            Metric::Ttft => &self.report.prefill,
            _ => &self.report.decode,
        }
    }

    /// Whether a directive is allowed: it applies without clamping, leads to
    /// an unvisited design, and its fingerprint never failed.
    pub fn admissible(&self, d: &StrategyDirective) -> Result<DesignPoint, LuminaError> {
        if d.aggressiveness() > self.aggressiveness {
            return Err(LuminaError::InvalidDirective(format!(
                "changes {} parameters, limit is {}",
                d.aggressiveness(),
                self.aggressiveness
            )));
        }
        let applied = ee_apply(self.base, d, self.space)?;
        if !applied.clamped.is_empty() {
            return Err(LuminaError::InvalidDirective(format!(
                "moves leave the lattice: {:?}",
                applied.clamped
            )));
        }
        if self.tm.visited(&applied.design) {
            return Err(LuminaError::InvalidDirective(
                "design already evaluated".into(),
            ));
        }
        if self.tm.is_blocked(&d.fingerprint()) {
            return Err(LuminaError::InvalidDirective(format!(
                "pattern {} failed before",
                d.fingerprint()
            )));
        }
        Ok(applied.design)
    }
}

/// Picks the latency to work on: the one at least 10% worse than the other,
/// otherwise the opposite of last round's.
pub fn choose_target(m: &PpaMetrics, last: Option<Metric>) -> Metric {
    if m.ttft_n >= 1.1 * m.tpot_n {
        Metric::Ttft
    } else if m.tpot_n >= 1.1 * m.ttft_n {
        Metric::Tpot
    } else {
        match last {
            Some(Metric::Ttft) => Metric::Tpot,
            _ => Metric::Ttft,
        }
    }
}

/// Levers of `r` that can step up, most favourable target magnitude first.
pub fn boost_order(ctx: &SeContext, r: Resource) -> Vec<Param> {
    let mut out: Vec<Param> = resource_levers(r)
        .iter()
        .copied()
        .filter(|&p| ctx.space.step_neighbor(ctx.base, p, 1).is_ok())
        .collect();
    out.sort_by(|&a, &b| {
        ctx.ahk
            .magnitude(a, ctx.target)
            .total_cmp(&ctx.ahk.magnitude(b, ctx.target))
    });
    out
}

/// Relative latency cost of stepping `p` down: the larger of its per-step
/// effects on TTFT and TPOT, each as a fraction of the base design's value.
pub fn criticality(ctx: &SeContext, p: Param) -> f64 {
    let ttft = ctx.ahk.magnitude(p, Metric::Ttft).abs() / ctx.metrics.ttft_s;
    let tpot = ctx.ahk.magnitude(p, Metric::Tpot).abs() / ctx.metrics.tpot_s;
    ttft.max(tpot)
}

/// Parameters that can step down and free area, least critical first; ties
/// go to the larger area saving.
pub fn tradeoff_order(ctx: &SeContext, exclude: &[Param]) -> Vec<Param> {
    let mut out: Vec<Param> = Param::ALL
        .iter()
        .copied()
        .filter(|p| !exclude.contains(p))
        .filter(|&p| ctx.ahk.magnitude(p, Metric::Area) > 0.0)
        .filter(|&p| ctx.space.step_neighbor(ctx.base, p, -1).is_ok())
        .collect();
    out.sort_by(|&a, &b| {
        criticality(ctx, a)
            .total_cmp(&criticality(ctx, b))
            .then_with(|| {
                ctx.ahk
                    .magnitude(b, Metric::Area)
                    .total_cmp(&ctx.ahk.magnitude(a, Metric::Area))
            })
    });
    out
}

fn directive(
    r: Resource,
    boosts: &[Param],
    tradeoff: Option<Param>,
    target: Metric,
) -> StrategyDirective {
    let names: Vec<&str> = boosts.iter().map(|p| p.name()).collect();
    let rationale = match tradeoff {
        Some(t) => format!(
            "{r} bounds {target}; raise {} and give back {}",
            names.join(" and "),
            t.name()
        ),
        None => format!("{r} bounds {target}; raise {}", names.join(" and ")),
    };
    StrategyDirective {
        target_bottleneck: r,
        boosts: boosts
            .iter()
            .map(|&param| Move { param, steps: 1 })
            .collect(),
        tradeoff: tradeoff.map(|param| Move { param, steps: -1 }),
        rationale,
    }
}

/// All rule candidates in preference order for the given boost count.
pub fn candidates(ctx: &SeContext, n_boosts: usize) -> Vec<StrategyDirective> {
    let mut resources = ctx.phase().stall_share.ranked();
    // the dominant resource leads even on exact share ties
    let dominant = ctx.phase().dominant_resource;
    resources.retain(|&r| r != dominant);
    resources.insert(0, dominant);

    let mut out = Vec::new();
    for r in resources {
        let boosts = boost_order(ctx, r);
        let groups: Vec<Vec<Param>> = match n_boosts {
            1 => boosts.iter().map(|&b| vec![b]).collect(),
            _ => {
                let mut g = Vec::new();
                for i in 0..boosts.len() {
                    for j in i + 1..boosts.len() {
                        g.push(vec![boosts[i], boosts[j]]);
                    }
                }
                g
            }
        };
        if n_boosts + 1 <= ctx.aggressiveness {
            for g in &groups {
                for t in tradeoff_order(ctx, g) {
                    out.push(directive(r, g, Some(t), ctx.target));
                }
            }
        }
        if n_boosts <= ctx.aggressiveness {
            for g in &groups {
                out.push(directive(r, g, None, ctx.target));
            }
        }
    }
    out
}

/// Linear first-order change of (ttft, tpot, area) under `d`, in the
/// influence map's per-step units.
pub fn predicted_delta(ctx: &SeContext, d: &StrategyDirective) -> [f64; 3] {
    let mut out = [0.0; 3];
    for mv in d.moves() {
        for (o, m) in out.iter_mut().zip(Metric::OBJECTIVES) {
            *o += ctx.ahk.magnitude(mv.param, m) * f64::from(mv.steps);
        }
    }
    out
}

/// Whether the linear prediction improves the target without making any
/// objective worse.
pub fn predicted_to_dominate(ctx: &SeContext, d: &StrategyDirective) -> bool {
    let delta = predicted_delta(ctx, d);
    let target = if ctx.target == Metric::Ttft {
        delta[0]
    } else {
        delta[1]
    };
    target < 0.0 && delta.iter().all(|&x| x <= 0.0)
}

/// Admissible rule directive, preferring the first whose predicted effect
/// dominates the base, otherwise the first in preference order. One boost
/// (plus tradeoff if allowed) first, then two boosts once the aggressiveness
/// limit admits them.
pub fn se_propose_rule(ctx: &SeContext) -> Result<StrategyDirective, LuminaError> {
    for n_boosts in [1, 2] {
        if n_boosts > ctx.aggressiveness {
            break;
        }
        if n_boosts == 2 && ctx.aggressiveness < 3 {
            break;
        }
        let mut admissible = candidates(ctx, n_boosts)
            .into_iter()
            .filter(|d| ctx.admissible(d).is_ok())
            .peekable();
        let Some(first) = admissible.peek().cloned() else {
            continue;
        };
        return Ok(admissible
            .find(|d| predicted_to_dominate(ctx, d))
            .unwrap_or(first));
    }
    Err(LuminaError::Exhausted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design_space::A100;
    use crate::lumina::influence::quane_sensitivity;
    use crate::lumina::memory::{Outcome, SampleKind, TrajectorySample};
    use crate::perf_model::{Evaluator, StallShares};

    fn force_dominant(report: &mut BottleneckReport, r: Resource) {
        let mut s = StallShares::default();
        match r {
            Resource::TensorCompute => s.tensor_compute = 1.0,
            Resource::VectorCompute => s.vector_compute = 1.0,
            Resource::MemoryBw => s.memory_bw = 1.0,
            Resource::Interconnect => s.interconnect = 1.0,
        }
        for phase in [&mut report.prefill, &mut report.decode] {
            phase.stall_share = s;
            phase.dominant_resource = r;
        }
    }

    struct Fixture {
        space: SpaceSpec,
        ev: Evaluator,
        ahk: InfluenceMap,
    }

    fn fixture() -> Fixture {
        let space = SpaceSpec::default_lattice();
        let ev = Evaluator::gpt3_default();
        let (ahk, _) = quane_sensitivity(&InfluenceMap::structural(), &space, &ev, &A100);
        Fixture { space, ev, ahk }
    }

    #[test]
    fn interconnect_at_reference() {
        let f = fixture();
        let (m, mut report) = f.ev.evaluate(&A100);
        force_dominant(&mut report, Resource::Interconnect);
        let tm = TrajectoryMemory::new();
        let ctx = SeContext {
            space: &f.space,
            base: &A100,
            metrics: &m,
            report: &report,
            ahk: &f.ahk,
            tm: &tm,
            target: Metric::Ttft,
            aggressiveness: 2,
        };
        let d = se_propose_rule(&ctx).unwrap();
        assert_eq!(
            d.boosts,
            vec![Move {
                param: Param::LinkCount,
                steps: 1
            }]
        );
        assert_eq!(
            d.tradeoff,
            Some(Move {
                param: Param::CoreCount,
                steps: -1
            })
        );
    }

    #[test]
    fn memory_bound_with_links_at_max() {
        let f = fixture();
        let base = A100.with(Param::LinkCount, 24);
        let (m, mut report) = f.ev.evaluate(&base);
        force_dominant(&mut report, Resource::MemoryBw);
        let tm = TrajectoryMemory::new();
        let ctx = SeContext {
            space: &f.space,
            base: &base,
            metrics: &m,
            report: &report,
            ahk: &f.ahk,
            tm: &tm,
            target: Metric::Tpot,
            aggressiveness: 2,
        };
        let d = se_propose_rule(&ctx).unwrap();
        assert_eq!(
            d.boosts,
            vec![Move {
                param: Param::MemChannels,
                steps: 1
            }]
        );
    }

    #[test]
    fn failure_pattern_is_skipped() {
        let f = fixture();
        let (m, mut report) = f.ev.evaluate(&A100);
        force_dominant(&mut report, Resource::Interconnect);
        let mut tm = TrajectoryMemory::new();
        let ctx = |tm: &TrajectoryMemory| {
            se_propose_rule(&SeContext {
                space: &f.space,
                base: &A100,
                metrics: &m,
                report: &report,
                ahk: &f.ahk,
                tm,
                target: Metric::Ttft,
                aggressiveness: 2,
            })
            .unwrap()
        };
        let first = ctx(&tm);
        let bad = f.space.step_neighbor(&A100, Param::LinkCount, 2).unwrap();
        let (bm, br) = f.ev.evaluate(&bad);
        let mut sample = TrajectorySample::plain(SampleKind::Directive, bad, bm, &br);
        sample.parent = Some(A100);
        sample.directive = Some(first.clone());
        sample.outcome = Outcome::Failed;
        tm.push(sample);
        let second = ctx(&tm);
        assert_ne!(second.fingerprint(), first.fingerprint());
    }

    #[test]
    fn target_choice() {
        let mut m = Evaluator::gpt3_default().metrics(&A100);
        assert_eq!(choose_target(&m, None), Metric::Ttft);
        assert_eq!(choose_target(&m, Some(Metric::Ttft)), Metric::Tpot);
        m.tpot_n = 1.2;
        assert_eq!(choose_target(&m, Some(Metric::Tpot)), Metric::Tpot);
    }
}
