//! Parameter-to-metric influence map: structural signs plus measured and
//! refined per-step magnitudes.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::LuminaError;
use crate::design_space::{DesignPoint, Param, SpaceSpec};
use crate::perf_model::{
    derive_hw, BottleneckReport, Evaluator, HardwareDerived, PpaMetrics, Resource,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Ttft,
    Tpot,
    Area,
    PeakTensor,
    PeakVector,
    MemBw,
    NetBw,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Ttft,
        Metric::Tpot,
        Metric::Area,
        Metric::PeakTensor,
        Metric::PeakVector,
        Metric::MemBw,
        Metric::NetBw,
    ];

    /// Metrics refined from trajectory observations.
    pub const OBJECTIVES: [Metric; 3] = [Metric::Ttft, Metric::Tpot, Metric::Area];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ttft => "ttft",
            Metric::Tpot => "tpot",
            Metric::Area => "area",
            Metric::PeakTensor => "peak_tensor",
            Metric::PeakVector => "peak_vector",
            Metric::MemBw => "mem_bw",
            Metric::NetBw => "net_bw",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        Metric::ALL.iter().copied().find(|m| m.name() == s)
    }

    /// Capability metric that relieves a resource.
    pub fn capability_of(r: Resource) -> Metric {
        match r {
            Resource::TensorCompute => Metric::PeakTensor,
            Resource::VectorCompute => Metric::PeakVector,
            Resource::MemoryBw => Metric::MemBw,
            Resource::Interconnect => Metric::NetBw,
        }
    }

    /// Raw value of the metric: seconds, mm^2, FLOP/s or bytes/s.
    pub fn raw(self, m: &PpaMetrics, hw: &HardwareDerived) -> f64 {
        match self {
            Metric::Ttft => m.ttft_s,
            Metric::Tpot => m.tpot_s,
            Metric::Area => m.area_mm2,
            Metric::PeakTensor => hw.peak_tensor_flops,
            Metric::PeakVector => hw.peak_vector_flops,
            Metric::MemBw => hw.mem_bw,
            Metric::NetBw => hw.net_bw,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
    #[serde(rename = "0")]
    Zero,
}

impl Sign {
    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
            Sign::Zero => "0",
        }
    }

    pub fn parse(s: &str) -> Option<Sign> {
        match s.trim() {
            "+" | "plus" | "positive" => Some(Sign::Plus),
            "-" | "−" | "minus" | "negative" => Some(Sign::Minus),
            "0" | "zero" | "none" => Some(Sign::Zero),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Structural,
    Measured,
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluenceEntry {
    pub sign: Sign,
    /// Change in the raw metric per +1 lattice step at the sensitivity
    /// reference. `None` until measured.
    pub magnitude: Option<f64>,
    pub source: Source,
}

/// One flattened map cell, used for dumps and LLM exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRow {
    pub param: Param,
    pub metric: Metric,
    pub sign: Sign,
    pub magnitude: Option<f64>,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceMap {
    entries: [[InfluenceEntry; 7]; 8],
}

/// Levers that raise the capability relieving each resource. Memory also
/// counts the on-chip buffers that cut DRAM traffic.
pub fn resource_levers(r: Resource) -> &'static [Param] {
    match r {
        Resource::TensorCompute => &[Param::CoreCount, Param::SublaneCount, Param::SystolicDim],
        Resource::VectorCompute => &[Param::CoreCount, Param::SublaneCount, Param::VectorWidth],
        Resource::MemoryBw => &[Param::MemChannels, Param::SramKb, Param::GlobalBufferMb],
        Resource::Interconnect => &[Param::LinkCount],
    }
}

fn structural_sign(p: Param, m: Metric) -> Sign {
    use Param::*;
    match m {
        Metric::Area => Sign::Plus,
        Metric::Ttft | Metric::Tpot => Sign::Minus,
        Metric::PeakTensor => match p {
            CoreCount | SublaneCount | SystolicDim => Sign::Plus,
            _ => Sign::Zero,
        },
        Metric::PeakVector => match p {
            CoreCount | SublaneCount | VectorWidth => Sign::Plus,
            _ => Sign::Zero,
        },
        Metric::MemBw => match p {
            MemChannels => Sign::Plus,
            _ => Sign::Zero,
        },
        Metric::NetBw => match p {
            LinkCount => Sign::Plus,
            _ => Sign::Zero,
        },
    }
}

/// Whether the closed-form model has no path from `p` to `m`.
pub fn is_hard_zero(p: Param, m: Metric) -> bool {
    structural_sign(p, m) == Sign::Zero
}

impl InfluenceMap {
    /// Signs read off the closed-form performance and area model. Latency
    /// signs are non-positive: more of any resource never slows a phase.
    pub fn structural() -> Self {
        let mut entries = [[InfluenceEntry {
            sign: Sign::Zero,
            magnitude: None,
            source: Source::Structural,
        }; 7]; 8];
        for p in Param::ALL {
            for m in Metric::ALL {
                let sign = structural_sign(p, m);
                let magnitude = if sign == Sign::Zero { Some(0.0) } else { None };
                entries[p.index()][m.index()] = InfluenceEntry {
                    sign,
                    magnitude,
                    source: Source::Structural,
                };
            }
        }
        InfluenceMap { entries }
    }

    /// Builds a map from rows, e.g. an LLM reply, and checks it against the
    /// structural hard zeros. Missing cells keep their structural sign.
    pub fn from_rows(rows: &[InfluenceRow]) -> Result<Self, LuminaError> {
        let mut map = InfluenceMap::structural();
        for r in rows {
            if is_hard_zero(r.param, r.metric) && r.sign != Sign::Zero {
                return Err(LuminaError::LlmMapInvalid {
                    param: r.param,
                    metric: r.metric,
                });
            }
            let e = map.entry_mut(r.param, r.metric);
            e.sign = r.sign;
        }
        Ok(map)
    }

    pub fn get(&self, p: Param, m: Metric) -> &InfluenceEntry {
        &self.entries[p.index()][m.index()]
    }

    fn entry_mut(&mut self, p: Param, m: Metric) -> &mut InfluenceEntry {
        &mut self.entries[p.index()][m.index()]
    }

    /// Magnitude, treating unmeasured cells as zero.
    pub fn magnitude(&self, p: Param, m: Metric) -> f64 {
        self.get(p, m).magnitude.unwrap_or(0.0)
    }

    /// Records a magnitude unless the cell is a hard zero. Returns whether
    /// the value was stored.
    pub fn set_magnitude(&mut self, p: Param, m: Metric, value: f64, source: Source) -> bool {
        if is_hard_zero(p, m) || !value.is_finite() {
            return false;
        }
        let e = self.entry_mut(p, m);
        e.magnitude = Some(value);
        e.source = source;
        true
    }

    /// Exponential smoothing towards `estimate`.
    pub fn smooth(&mut self, p: Param, m: Metric, estimate: f64, alpha: f64) -> bool {
        let next = match self.get(p, m).magnitude {
            Some(old) => (1.0 - alpha) * old + alpha * estimate,
            None => estimate,
        };
        self.set_magnitude(p, m, next, Source::Refined)
    }

    pub fn rows(&self) -> Vec<InfluenceRow> {
        let mut out = Vec::with_capacity(56);
        for p in Param::ALL {
            for m in Metric::ALL {
                let e = self.get(p, m);
                out.push(InfluenceRow {
                    param: p,
                    metric: m,
                    sign: e.sign,
                    magnitude: e.magnitude,
                    source: e.source,
                });
            }
        }
        out
    }

    /// CSV table `param,metric,sign,magnitude,source`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("param,metric,sign,magnitude,source\n");
        for r in self.rows() {
            let mag = r.magnitude.map(|v| format!("{v:e}")).unwrap_or_default();
            let src = match r.source {
                Source::Structural => "structural",
                Source::Measured => "measured",
                Source::Refined => "refined",
            };
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.param,
                r.metric,
                r.sign.symbol(),
                mag,
                src
            ));
        }
        s
    }
}

/// One QuanE perturbation and its evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub param: Param,
    pub delta: i32,
    pub design: DesignPoint,
    pub metrics: PpaMetrics,
    pub report: BottleneckReport,
}

/// The fixed design the per-step magnitudes refer to, with its probes.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReference {
    pub design: DesignPoint,
    pub metrics: PpaMetrics,
    pub probes: Vec<Probe>,
}

/// The ordered perturbations QuanE wants: `(param, +1)` then `(param, -1)`
/// for every parameter, skipping moves that leave the lattice.
pub fn probe_plan(space: &SpaceSpec, reference: &DesignPoint) -> Vec<(Param, i32, DesignPoint)> {
    let mut plan = Vec::new();
    for p in Param::ALL {
        for delta in [1, -1] {
            if let Ok(d) = space.step_neighbor(reference, p, delta) {
                plan.push((p, delta, d));
            }
        }
    }
    plan
}

/// Fills magnitudes from probes around the reference: central differences
/// where both neighbours were evaluated, one-sided otherwise. Capability
/// metrics use the analytic hardware derivation of the same designs.
pub fn apply_probes(
    map: &mut InfluenceMap,
    evaluator: &Evaluator,
    reference: &DesignPoint,
    ref_metrics: &PpaMetrics,
    probes: &[Probe],
) {
    let ref_hw = derive_hw(reference, &evaluator.consts);
    for p in Param::ALL {
        let up = probes.iter().find(|q| q.param == p && q.delta == 1);
        let down = probes.iter().find(|q| q.param == p && q.delta == -1);
        let value =
            |q: &Probe, m: Metric| m.raw(&q.metrics, &derive_hw(&q.design, &evaluator.consts));
        for m in Metric::ALL {
            if is_hard_zero(p, m) {
                continue;
            }
            let here = m.raw(ref_metrics, &ref_hw);
            let mag = match (up, down) {
                (Some(u), Some(d)) => (value(u, m) - value(d, m)) / 2.0,
                (Some(u), None) => value(u, m) - here,
                (None, Some(d)) => here - value(d, m),
                (None, None) => continue,
            };
            map.set_magnitude(p, m, mag, Source::Measured);
        }
    }
}

/// Area-only sensitivity: analytic area and capability differences, no
/// performance evaluations.
pub fn apply_area_only(
    map: &mut InfluenceMap,
    evaluator: &Evaluator,
    space: &SpaceSpec,
    reference: &DesignPoint,
) {
    let consts = &evaluator.consts;
    for p in Param::ALL {
        let up = space.step_neighbor(reference, p, 1).ok();
        let down = space.step_neighbor(reference, p, -1).ok();
        for m in [
            Metric::Area,
            Metric::PeakTensor,
            Metric::PeakVector,
            Metric::MemBw,
            Metric::NetBw,
        ] {
            if is_hard_zero(p, m) {
                continue;
            }
            let f = |d: &DesignPoint| {
                let hw = derive_hw(d, consts);
                let area = crate::perf_model::area(d, consts);
                let pm = PpaMetrics {
                    ttft_s: 0.0,
                    tpot_s: 0.0,
                    area_mm2: area,
                    ttft_n: 0.0,
                    tpot_n: 0.0,
                    area_n: 0.0,
                };
                m.raw(&pm, &hw)
            };
            let mag = match (up, down) {
                (Some(u), Some(d)) => (f(&u) - f(&d)) / 2.0,
                (Some(u), None) => f(&u) - f(reference),
                (None, Some(d)) => f(reference) - f(&d),
                (None, None) => continue,
            };
            map.set_magnitude(p, m, mag, Source::Measured);
        }
    }
}

/// Evaluates every planned probe and fills the map.
pub fn quane_sensitivity(
    map: &InfluenceMap,
    space: &SpaceSpec,
    evaluator: &Evaluator,
    reference: &DesignPoint,
) -> (InfluenceMap, SensitivityReference) {
    let (ref_metrics, _) = evaluator.evaluate(reference);
    let probes: Vec<Probe> = probe_plan(space, reference)
        .into_iter()
        .map(|(param, delta, design)| {
            let (metrics, report) = evaluator.evaluate(&design);
            Probe {
                param,
                delta,
                design,
                metrics,
                report: report.summary(),
            }
        })
        .collect();
    let mut out = map.clone();
    apply_probes(&mut out, evaluator, reference, &ref_metrics, &probes);
    (
        out,
        SensitivityReference {
            design: *reference,
            metrics: ref_metrics,
            probes,
        },
    )
}
