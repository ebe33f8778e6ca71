//! Trajectory memory, outcome classification and influence refinement.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::directive::{Fingerprint, StrategyDirective};
use super::influence::{InfluenceMap, Metric};
use crate::design_space::{DesignPoint, Param, SpaceSpec};
use crate::pareto::ObjectiveVector;
use crate::perf_model::{BottleneckReport, PpaMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Initial,
    /// Sensitivity perturbation around the reference.
    Probe,
    Directive,
    /// Fresh random design after the search ran out of directives.
    Restart,
    /// Proposal from a baseline optimizer.
    Proposal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Improved,
    Neutral,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub step: usize,
    pub kind: SampleKind,
    pub design: DesignPoint,
    pub metrics: PpaMetrics,
    pub report: BottleneckReport,
    /// Design the directive was applied to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<DesignPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directive: Option<StrategyDirective>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_metric: Option<Metric>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clamped: Vec<Param>,
    /// The LLM strategist failed and the rule strategist stood in.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub llm_fallback: bool,
    /// The search base was reset to an archive design before this sample.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub restarted: bool,
    pub dominates_reference: bool,
    pub outcome: Outcome,
}

impl TrajectorySample {
    /// A sample with no directive attached.
    pub fn plain(
        kind: SampleKind,
        design: DesignPoint,
        metrics: PpaMetrics,
        report: &BottleneckReport,
    ) -> Self {
        let objectives = ObjectiveVector::from_metrics(&metrics);
        TrajectorySample {
            step: 0,
            kind,
            design,
            metrics,
            report: report.summary(),
            parent: None,
            directive: None,
            target_metric: None,
            clamped: Vec::new(),
            llm_fallback: false,
            restarted: false,
            dominates_reference: objectives.strictly_better(&ObjectiveVector::REFERENCE),
            outcome: Outcome::Neutral,
        }
    }

    pub fn objectives(&self) -> ObjectiveVector {
        ObjectiveVector::from_metrics(&self.metrics)
    }
}

fn target_index(m: Metric) -> usize {
    match m {
        Metric::Ttft => 0,
        Metric::Tpot => 1,
        _ => 2,
    }
}

/// Improvement threshold on the targeted metric.
pub const IMPROVE_FRACTION: f64 = 0.01;

/// improved: child dominates parent or beats it by 1% on the target;
/// failed: the target got worse; neutral otherwise.
pub fn classify(parent: &ObjectiveVector, child: &ObjectiveVector, target: Metric) -> Outcome {
    let i = target_index(target);
    if child.dominates(parent) || child.0[i] <= parent.0[i] * (1.0 - IMPROVE_FRACTION) {
        Outcome::Improved
    } else if child.0[i] > parent.0[i] {
        Outcome::Failed
    } else {
        Outcome::Neutral
    }
}

/// Append-only sample log with the visited set and failure blocklist.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryMemory {
    samples: Vec<TrajectorySample>,
    visited: HashSet<DesignPoint>,
    failures: BTreeSet<Fingerprint>,
}

impl TrajectoryMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn visited(&self, d: &DesignPoint) -> bool {
        self.visited.contains(d)
    }

    pub fn failures(&self) -> &BTreeSet<Fingerprint> {
        &self.failures
    }

    pub fn is_blocked(&self, fp: &Fingerprint) -> bool {
        self.failures.contains(fp)
    }

    /// Appends a sample, assigning its step index; failed directives enter
    /// the blocklist.
    pub fn push(&mut self, mut sample: TrajectorySample) -> &TrajectorySample {
        sample.step = self.samples.len();
        self.visited.insert(sample.design);
        if sample.outcome == Outcome::Failed {
            if let Some(d) = &sample.directive {
                self.failures.insert(d.fingerprint());
            }
        }
        self.samples.push(sample);
        self.samples.last().expect("just pushed")
    }

    pub fn into_samples(self) -> Vec<TrajectorySample> {
        self.samples
    }
}

/// Change of `p` between two designs in units of the step width at the
/// sensitivity reference `at`.
pub fn reference_steps(
    space: &SpaceSpec,
    at: &DesignPoint,
    p: Param,
    from: &DesignPoint,
    to: &DesignPoint,
) -> f64 {
    (to.get(p) as f64 - from.get(p) as f64) / space.step_width_at(at, p)
}

fn objective_raw(m: &PpaMetrics, metric: Metric) -> f64 {
    match metric {
        Metric::Ttft => m.ttft_s,
        Metric::Tpot => m.tpot_s,
        _ => m.area_mm2,
    }
}

/// Refines objective magnitudes from one attributable parent/child pair.
///
/// One changed parameter: the finite difference is the estimate. Two:
/// each parameter's estimate subtracts the other's current contribution.
/// More than two: unattributable, skipped. Returns the refined parameters.
pub fn refine_pair(
    map: &mut InfluenceMap,
    space: &SpaceSpec,
    at: &DesignPoint,
    parent: (&DesignPoint, &PpaMetrics),
    child: (&DesignPoint, &PpaMetrics),
    alpha: f64,
) -> Vec<Param> {
    let changed = parent.0.diff(child.0);
    if changed.is_empty() || changed.len() > 2 {
        return Vec::new();
    }
    let steps: Vec<f64> = changed
        .iter()
        .map(|&p| reference_steps(space, at, p, parent.0, child.0))
        .collect();
    let before = map.clone();
    for metric in Metric::OBJECTIVES {
        let delta = objective_raw(child.1, metric) - objective_raw(parent.1, metric);
        for (i, &p) in changed.iter().enumerate() {
            let mut rest = delta;
            for (j, &q) in changed.iter().enumerate() {
                if j != i {
                    rest -= before.magnitude(q, metric) * steps[j];
                }
            }
            map.smooth(p, metric, rest / steps[i], alpha);
        }
    }
    changed
}

/// Replays refinement over every directive sample of a trajectory.
pub fn refine(
    samples: &[TrajectorySample],
    map: &InfluenceMap,
    space: &SpaceSpec,
    at: &DesignPoint,
    alpha: f64,
) -> InfluenceMap {
    let mut out = map.clone();
    for s in samples {
        let Some(parent) = s.parent else { continue };
        let Some(p) = samples.iter().find(|x| x.design == parent) else {
            continue;
        };
        refine_pair(
            &mut out,
            space,
            at,
            (&p.design, &p.metrics),
            (&s.design, &s.metrics),
            alpha,
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design_space::A100;
    use crate::lumina::influence::Source;
    use crate::perf_model::Evaluator;

    fn ov(a: f64, b: f64, c: f64) -> ObjectiveVector {
        ObjectiveVector::new(a, b, c)
    }

    #[test]
    fn classify_examples() {
        let p = ov(1.0, 1.0, 1.0);
        assert_eq!(
            classify(&p, &ov(0.98, 1.0, 1.1), Metric::Ttft),
            Outcome::Improved
        );
        assert_eq!(
            classify(&p, &ov(1.0, 0.995, 1.0), Metric::Ttft),
            Outcome::Improved
        );
        assert_eq!(
            classify(&p, &ov(0.995, 1.0, 1.1), Metric::Ttft),
            Outcome::Neutral
        );
        assert_eq!(
            classify(&p, &ov(1.01, 0.5, 0.5), Metric::Ttft),
            Outcome::Failed
        );
    }

    #[test]
    fn smoothing_moves_halfway() {
        let ev = Evaluator::gpt3_default();
        let s = SpaceSpec::default_lattice();
        let mut map = InfluenceMap::structural();
        map.set_magnitude(Param::MemChannels, Metric::Tpot, -1.0, Source::Measured);
        let a = A100.with(Param::MemChannels, 6);
        let b = A100.with(Param::MemChannels, 7);
        let (ma, mb) = (ev.metrics(&a), ev.metrics(&b));
        let changed = refine_pair(&mut map, &s, &A100, (&a, &ma), (&b, &mb), 0.5);
        assert_eq!(changed, vec![Param::MemChannels]);
        let observed = mb.tpot_s - ma.tpot_s;
        let got = map.magnitude(Param::MemChannels, Metric::Tpot);
        assert!((got - 0.5 * (-1.0 + observed)).abs() < 1e-15);
        assert_eq!(
            map.get(Param::MemChannels, Metric::Tpot).source,
            Source::Refined
        );
    }

    #[test]
    fn area_refinement_is_exact_for_linear_parameters() {
        let ev = Evaluator::gpt3_default();
        let s = SpaceSpec::default_lattice();
        let mut map = InfluenceMap::structural();
        let base = A100.with(Param::GlobalBufferMb, 64);
        let a = ev.consts.area;
        let (c, sd, vw) = (
            base.core_count as f64,
            base.systolic_dim as f64,
            base.vector_width as f64,
        );
        let per_core = a.core_base
            + base.sublane_count as f64 * (a.pe * sd * sd + a.lane * vw)
            + a.sram_per_kb * base.sram_kb as f64;
        // d(area)/d(value), from the closed form
        let derivative = [
            (Param::LinkCount, a.link),
            (Param::CoreCount, per_core),
            (Param::SublaneCount, c * (a.pe * sd * sd + a.lane * vw)),
            (Param::SramKb, c * a.sram_per_kb),
            (Param::GlobalBufferMb, a.gb_per_mb),
            (Param::MemChannels, a.mem_channel),
        ];
        for (p, dv) in derivative {
            let next = s.step_neighbor(&base, p, 1).unwrap();
            refine_pair(
                &mut map,
                &s,
                &A100,
                (&base, &ev.metrics(&base)),
                (&next, &ev.metrics(&next)),
                0.5,
            );
            let exact = dv * s.step_width_at(&A100, p);
            let got = map.magnitude(p, Metric::Area);
            assert!(
                (got - exact).abs() <= 1e-9 * exact.abs(),
                "{p}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn three_parameter_pairs_are_skipped() {
        let ev = Evaluator::gpt3_default();
        let s = SpaceSpec::default_lattice();
        let mut map = InfluenceMap::structural();
        let b = A100
            .with(Param::MemChannels, 6)
            .with(Param::LinkCount, 18)
            .with(Param::CoreCount, 96);
        assert!(refine_pair(
            &mut map,
            &s,
            &A100,
            (&A100, &ev.metrics(&A100)),
            (&b, &ev.metrics(&b)),
            0.5
        )
        .is_empty());
        assert_eq!(map, InfluenceMap::structural());
    }
}
