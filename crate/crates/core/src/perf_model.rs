//! Roofline performance and area model.
//!
//! Every operator takes the max of its compute, DRAM and interconnect times;
//! a phase is the plain sum over its sequential chain. The resource that set
//! each operator's time is recorded so stalls can be attributed per phase.

use serde::{Deserialize, Serialize};

use crate::design_space::{DesignPoint, A100};
use crate::workload::{GemmDims, OperatorSpec, PhaseGraph, UnitClass};

/// Die-area coefficients in mm². See [`AreaConstants::calibrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaConstants {
    pub core_base: f64,
    /// Per processing element of a systolic array (per sublane).
    pub pe: f64,
    /// Per vector lane (per sublane).
    pub lane: f64,
    pub sram_per_kb: f64,
    pub gb_per_mb: f64,
    pub mem_channel: f64,
    pub link: f64,
}

/// How the reference die is split across components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AreaShares {
    pub die_mm2: f64,
    pub cores: f64,
    pub global_buffer: f64,
    pub mem_phy: f64,
    pub link_phy: f64,
    /// Split of the per-core area; sums to 1.
    pub core_base: f64,
    pub core_tensor: f64,
    pub core_vector: f64,
    pub core_sram: f64,
}

impl Default for AreaShares {
    fn default() -> Self {
        AreaShares {
            die_mm2: 826.0,
            cores: 0.60,
            global_buffer: 0.10,
            mem_phy: 0.20,
            link_phy: 0.10,
            core_base: 0.47,
            core_tensor: 0.08,
            core_vector: 0.10,
            core_sram: 0.35,
        }
    }
}

impl AreaConstants {
    /// Solves per-unit coefficients so that `reference` occupies exactly
    /// `shares.die_mm2` split as given.
    pub fn calibrate(reference: &DesignPoint, shares: &AreaShares) -> Self {
        let die = shares.die_mm2;
        let cores = reference.core_count as f64;
        let per_core = shares.cores * die / cores;
        let sub = reference.sublane_count as f64;
        let sd = reference.systolic_dim as f64;
        AreaConstants {
            core_base: shares.core_base * per_core,
            pe: shares.core_tensor * per_core / (sub * sd * sd),
            lane: shares.core_vector * per_core / (sub * reference.vector_width as f64),
            sram_per_kb: shares.core_sram * per_core / reference.sram_kb as f64,
            gb_per_mb: shares.global_buffer * die / reference.global_buffer_mb as f64,
            mem_channel: shares.mem_phy * die / reference.mem_channels as f64,
            link: shares.link_phy * die / reference.link_count as f64,
        }
    }
}

impl Default for AreaConstants {
    fn default() -> Self {
        AreaConstants::calibrate(&A100, &AreaShares::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConstants {
    pub clock_hz: f64,
    pub bw_per_channel: f64,
    pub bw_per_link: f64,
    /// GPUs taking part in each ring allreduce.
    pub ring_gpus: u32,
    pub area: AreaConstants,
}

impl Default for CalibrationConstants {
    fn default() -> Self {
        CalibrationConstants {
            clock_hz: 1.41e9,
            bw_per_channel: 408e9,
            bw_per_link: 50e9,
            ring_gpus: 8,
            area: AreaConstants::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareDerived {
    pub peak_tensor_flops: f64,
    pub peak_vector_flops: f64,
    pub mem_bw: f64,
    pub net_bw: f64,
    pub clock_hz: f64,
    pub sram_bytes_per_core: f64,
    pub gb_bytes: f64,
}

pub fn derive_hw(d: &DesignPoint, c: &CalibrationConstants) -> HardwareDerived {
    let lanes = d.core_count as f64 * d.sublane_count as f64;
    let sd = d.systolic_dim as f64;
    HardwareDerived {
        peak_tensor_flops: lanes * sd * sd * 2.0 * c.clock_hz,
        peak_vector_flops: lanes * d.vector_width as f64 * 2.0 * c.clock_hz,
        mem_bw: d.mem_channels as f64 * c.bw_per_channel,
        net_bw: d.link_count as f64 * c.bw_per_link,
        clock_hz: c.clock_hz,
        sram_bytes_per_core: d.sram_kb as f64 * 1024.0,
        gb_bytes: d.global_buffer_mb as f64 * 1024.0 * 1024.0,
    }
}

/// Fraction of a `systolic_dim`-square array doing useful work on an
/// M x N output, counting padding of partial tiles.
pub fn tensor_utilization(m: u64, n: u64, systolic_dim: u64) -> f64 {
    let pad = |x: u64| x as f64 / (x.div_ceil(systolic_dim) * systolic_dim) as f64;
    pad(m) * pad(n)
}

/// Edge of a square tile such that three tiles fit in one core's SRAM.
pub fn tile_edge(sram_bytes: f64, elem_bytes: f64) -> f64 {
    (sram_bytes / elem_bytes / 3.0).sqrt().floor().max(1.0)
}

pub fn area(d: &DesignPoint, c: &CalibrationConstants) -> f64 {
    let a = &c.area;
    let sd = d.systolic_dim as f64;
    let per_core = a.core_base
        + d.sublane_count as f64 * (a.pe * sd * sd + a.lane * d.vector_width as f64)
        + a.sram_per_kb * d.sram_kb as f64;
    d.core_count as f64 * per_core
        + a.gb_per_mb * d.global_buffer_mb as f64
        + a.mem_channel * d.mem_channels as f64
        + a.link * d.link_count as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resource {
    TensorCompute,
    VectorCompute,
    MemoryBw,
    Interconnect,
}

impl Resource {
    pub const ALL: [Resource; 4] = [
        Resource::TensorCompute,
        Resource::VectorCompute,
        Resource::MemoryBw,
        Resource::Interconnect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Resource::TensorCompute => "tensor_compute",
            Resource::VectorCompute => "vector_compute",
            Resource::MemoryBw => "memory_bw",
            Resource::Interconnect => "interconnect",
        }
    }

    pub fn parse(s: &str) -> Option<Resource> {
        Resource::ALL.iter().copied().find(|r| r.name() == s)
    }
}

impl std::fmt::Display for Resource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-resource fractions, indexed in [`Resource::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StallShares {
    pub tensor_compute: f64,
    pub vector_compute: f64,
    pub memory_bw: f64,
    pub interconnect: f64,
}

impl StallShares {
    pub fn get(&self, r: Resource) -> f64 {
        match r {
            Resource::TensorCompute => self.tensor_compute,
            Resource::VectorCompute => self.vector_compute,
            Resource::MemoryBw => self.memory_bw,
            Resource::Interconnect => self.interconnect,
        }
    }

    fn add(&mut self, r: Resource, v: f64) {
        match r {
            Resource::TensorCompute => self.tensor_compute += v,
            Resource::VectorCompute => self.vector_compute += v,
            Resource::MemoryBw => self.memory_bw += v,
            Resource::Interconnect => self.interconnect += v,
        }
    }

    /// Highest share; ties resolve in [`Resource::ALL`] order.
    pub fn dominant(&self) -> Resource {
        let mut best = Resource::TensorCompute;
        for r in Resource::ALL {
            if self.get(r) > self.get(best) {
                best = r;
            }
        }
        best
    }

    /// Resources by decreasing share.
    pub fn ranked(&self) -> Vec<Resource> {
        let mut rs = Resource::ALL.to_vec();
        rs.sort_by(|a, b| self.get(*b).total_cmp(&self.get(*a)));
        rs
    }

    pub fn sum(&self) -> f64 {
        Resource::ALL.iter().map(|&r| self.get(r)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorTiming {
    pub name: String,
    pub binding_resource: Resource,
    pub bound_time: f64,
    pub compute_time: f64,
    pub memory_time: f64,
    pub network_time: f64,
    pub dram_bytes: f64,
    /// Only for tensor operators.
    pub utilization: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub time_s: f64,
    pub stall_share: StallShares,
    pub dominant_resource: Resource,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub operators: Vec<OperatorTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckReport {
    pub prefill: PhaseReport,
    pub decode: PhaseReport,
}

impl BottleneckReport {
    /// Copy without per-operator detail.
    pub fn summary(&self) -> BottleneckReport {
        let strip = |p: &PhaseReport| PhaseReport {
            operators: Vec::new(),
            ..p.clone()
        };
        BottleneckReport {
            prefill: strip(&self.prefill),
            decode: strip(&self.decode),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawMetrics {
    pub ttft_s: f64,
    pub tpot_s: f64,
    pub area_mm2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpaMetrics {
    pub ttft_s: f64,
    pub tpot_s: f64,
    pub area_mm2: f64,
    pub ttft_n: f64,
    pub tpot_n: f64,
    pub area_n: f64,
}

impl PpaMetrics {
    pub fn normalized(&self) -> [f64; 3] {
        [self.ttft_n, self.tpot_n, self.area_n]
    }
}

/// DRAM bytes moved by `op` on a design with the given buffers.
///
/// Activations that fit the global buffer stay on chip. A GEMM whose K x N
/// operand overflows one core's SRAM is tiled with edge `T`, re-reading its
/// inputs `N/T` and `M/T` times; traffic never drops below one pass over
/// everything that lives in DRAM.
pub fn dram_bytes(op: &OperatorSpec, hw: &HardwareDerived, elem_bytes: f64) -> f64 {
    let spill = |b: f64| if b > hw.gb_bytes { b } else { 0.0 };
    let act_in = spill(op.act_in_bytes);
    let act_out = spill(op.act_out_bytes);
    let compulsory = op.weight_bytes + op.state_bytes + act_in + act_out;
    let Some(GemmDims { m, k, n, count }) = op.gemm_dims else {
        return compulsory;
    };
    if (k * n) as f64 * elem_bytes <= hw.sram_bytes_per_core {
        return compulsory;
    }
    let t = tile_edge(hw.sram_bytes_per_core, elem_bytes);
    let tiled_inputs = 2.0 * (m * k) as f64 * n as f64 / t * count as f64 * elem_bytes;
    compulsory.max(tiled_inputs + act_out)
}

pub fn time_operator(
    op: &OperatorSpec,
    hw: &HardwareDerived,
    consts: &CalibrationConstants,
    systolic_dim: u32,
    elem_bytes: f64,
) -> OperatorTiming {
    let mut utilization = None;
    let compute_time = match op.unit_class {
        UnitClass::Tensor => {
            let u = op
                .gemm_dims
                .map(|g| tensor_utilization(g.m, g.n, systolic_dim as u64))
                .unwrap_or(1.0);
            utilization = Some(u);
            op.flops / (hw.peak_tensor_flops * u)
        }
        UnitClass::Vector => op.flops / hw.peak_vector_flops,
        UnitClass::Comm => 0.0,
    };
    let bytes = dram_bytes(op, hw, elem_bytes);
    let memory_time = bytes / hw.mem_bw;
    let network_time = if op.comm_bytes > 0.0 {
        let g = consts.ring_gpus.max(1) as f64;
        op.comm_bytes * 2.0 * (g - 1.0) / g / hw.net_bw
    } else {
        0.0
    };
    let compute_resource = match op.unit_class {
        UnitClass::Vector => Resource::VectorCompute,
        _ => Resource::TensorCompute,
    };
    let mut binding = compute_resource;
    let mut bound = compute_time;
    if memory_time > bound {
        binding = Resource::MemoryBw;
        bound = memory_time;
    }
    if network_time > bound || op.unit_class == UnitClass::Comm {
        binding = Resource::Interconnect;
        bound = bound.max(network_time);
    }
    OperatorTiming {
        name: op.name.clone(),
        binding_resource: binding,
        bound_time: bound,
        compute_time,
        memory_time,
        network_time,
        dram_bytes: bytes,
        utilization,
    }
}

pub fn evaluate_phase(
    d: &DesignPoint,
    graph: &PhaseGraph,
    consts: &CalibrationConstants,
    elem_bytes: f64,
) -> PhaseReport {
    let hw = derive_hw(d, consts);
    let operators: Vec<OperatorTiming> = graph
        .operators
        .iter()
        .map(|op| time_operator(op, &hw, consts, d.systolic_dim, elem_bytes))
        .collect();
    let time_s: f64 = operators.iter().map(|o| o.bound_time).sum();
    let mut stall_share = StallShares::default();
    if time_s > 0.0 {
        for o in &operators {
            stall_share.add(o.binding_resource, o.bound_time / time_s);
        }
    }
    PhaseReport {
        time_s,
        dominant_resource: stall_share.dominant(),
        stall_share,
        operators,
    }
}

/// Raw metrics plus the stall report for one design.
pub fn evaluate_raw(
    d: &DesignPoint,
    prefill: &PhaseGraph,
    decode: &PhaseGraph,
    consts: &CalibrationConstants,
    elem_bytes: f64,
) -> (RawMetrics, BottleneckReport) {
    let prefill = evaluate_phase(d, prefill, consts, elem_bytes);
    let decode = evaluate_phase(d, decode, consts, elem_bytes);
    let raw = RawMetrics {
        ttft_s: prefill.time_s,
        tpot_s: decode.time_s,
        area_mm2: area(d, consts),
    };
    (raw, BottleneckReport { prefill, decode })
}

/// Binds a workload, calibration and reference design so designs can be
/// scored with normalized metrics.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub prefill: PhaseGraph,
    pub decode: PhaseGraph,
    pub consts: CalibrationConstants,
    pub elem_bytes: f64,
    pub reference: DesignPoint,
    reference_raw: RawMetrics,
}

impl Evaluator {
    pub fn new(
        prefill: PhaseGraph,
        decode: PhaseGraph,
        consts: CalibrationConstants,
        elem_bytes: f64,
        reference: DesignPoint,
    ) -> Self {
        let (reference_raw, _) = evaluate_raw(&reference, &prefill, &decode, &consts, elem_bytes);
        Evaluator {
            prefill,
            decode,
            consts,
            elem_bytes,
            reference,
            reference_raw,
        }
    }

    /// GPT-3 layer, default scenario, default calibration, A100 reference.
    pub fn gpt3_default() -> Self {
        let cfg = crate::workload::ModelConfig::default();
        let (p, d) = crate::workload::Scenario::default()
            .build(&cfg)
            .expect("default model config is valid");
        Evaluator::new(
            p,
            d,
            CalibrationConstants::default(),
            cfg.elem_bytes as f64,
            A100,
        )
    }

    pub fn reference_raw(&self) -> RawMetrics {
        self.reference_raw
    }

    pub fn normalize(&self, raw: RawMetrics) -> PpaMetrics {
        let r = self.reference_raw;
        PpaMetrics {
            ttft_s: raw.ttft_s,
            tpot_s: raw.tpot_s,
            area_mm2: raw.area_mm2,
            ttft_n: raw.ttft_s / r.ttft_s,
            tpot_n: raw.tpot_s / r.tpot_s,
            area_n: raw.area_mm2 / r.area_mm2,
        }
    }

    pub fn evaluate(&self, d: &DesignPoint) -> (PpaMetrics, BottleneckReport) {
        let (raw, report) = evaluate_raw(
            d,
            &self.prefill,
            &self.decode,
            &self.consts,
            self.elem_bytes,
        );
        (self.normalize(raw), report)
    }

    pub fn metrics(&self, d: &DesignPoint) -> PpaMetrics {
        self.evaluate(d).0
    }

    pub fn hardware(&self, d: &DesignPoint) -> HardwareDerived {
        derive_hw(d, &self.consts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design_space::{Param, SpaceSpec};
    use approx::assert_relative_eq;

    #[test]
    fn a100_peaks() {
        let hw = derive_hw(&A100, &CalibrationConstants::default());
        assert_relative_eq!(hw.peak_tensor_flops, 108.0 * 4.0 * 256.0 * 2.0 * 1.41e9);
        assert!((hw.peak_tensor_flops / 3.118e14 - 1.0).abs() < 0.005);
        assert_relative_eq!(hw.mem_bw, 2.04e12);
        assert_relative_eq!(hw.net_bw, 600e9);
    }

    #[test]
    fn smallest_lattice_point_peaks() {
        let c = CalibrationConstants::default();
        let d = DesignPoint::from_array([6, 1, 1, 4, 4, 32, 32, 1]);
        let hw = derive_hw(&d, &c);
        assert_relative_eq!(hw.peak_tensor_flops, 32.0 * c.clock_hz);
        assert_relative_eq!(hw.peak_vector_flops, 8.0 * c.clock_hz);
    }

    #[test]
    fn utilization_padding() {
        assert_eq!(tensor_utilization(8, 12288, 128), 0.0625);
        assert_eq!(tensor_utilization(256, 512, 128), 1.0);
        assert_eq!(tensor_utilization(8, 8, 8), 1.0);
        assert_eq!(tensor_utilization(8, 16, 16), 0.5);
    }

    #[test]
    fn reference_area_is_calibrated() {
        let c = CalibrationConstants::default();
        assert_relative_eq!(area(&A100, &c), 826.0, max_relative = 1e-12);
    }

    #[test]
    fn area_linear_in_links() {
        let c = CalibrationConstants::default();
        let d = A100.with(Param::LinkCount, 24);
        assert_relative_eq!(
            area(&d, &c) - area(&A100, &c),
            12.0 * c.area.link,
            max_relative = 1e-9
        );
    }

    #[test]
    fn area_grows_with_cores() {
        let s = SpaceSpec::default_lattice();
        let c = CalibrationConstants::default();
        let mut d = s.design_at(0).unwrap();
        while let Ok(next) = s.step_neighbor(&d, Param::CoreCount, 1) {
            assert!(area(&next, &c) > area(&d, &c));
            d = next;
        }
    }

    #[test]
    fn reference_normalizes_to_one() {
        let ev = Evaluator::gpt3_default();
        let m = ev.metrics(&A100);
        assert_eq!(m.normalized(), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn single_channel_is_memory_bound_in_decode() {
        let ev = Evaluator::gpt3_default();
        let (m, rep) = ev.evaluate(&A100.with(Param::MemChannels, 1));
        assert!(m.tpot_n > 1.0);
        assert_eq!(rep.decode.dominant_resource, Resource::MemoryBw);
    }

    #[test]
    fn doubling_links_halves_allreduce() {
        let ev = Evaluator::gpt3_default();
        let (_, base) = ev.evaluate(&A100);
        let (_, wide) = ev.evaluate(&A100.with(Param::LinkCount, 24));
        for (a, b) in base.prefill.operators.iter().zip(&wide.prefill.operators) {
            if a.name.starts_with("allreduce") {
                assert_relative_eq!(b.bound_time * 2.0, a.bound_time, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn stall_shares_sum_to_one() {
        let ev = Evaluator::gpt3_default();
        let s = SpaceSpec::default_lattice();
        for seed in 0..50 {
            let (_, rep) = ev.evaluate(&s.random_design(seed));
            for ph in [&rep.prefill, &rep.decode] {
                assert!((ph.stall_share.sum() - 1.0).abs() < 1e-9);
                let total: f64 = ph.operators.iter().map(|o| o.bound_time).sum();
                assert_eq!(total, ph.time_s);
            }
        }
    }
}
