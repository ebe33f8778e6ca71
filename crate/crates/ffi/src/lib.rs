//! C interface to the performance/area model and the Pareto utilities.
//!
//! Every fallible call returns a [`LuminaStatus`]; on failure the message is
//! available from [`lumina_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their `_free` function. Panics never
//! cross the boundary; they surface as `LUMINA_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use lumina::config::RunConfig;
use lumina::design_space::{DesignPoint, SpaceSpec};
use lumina::pareto::{hypervolume, ObjectiveVector};
use lumina::perf_model::{Evaluator, Resource};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LuminaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The design has a value outside its parameter's allowed list.
    InvalidDesign = 3,
    Config = 4,
    Internal = 5,
}

/// Resource that bounds a phase.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LuminaResource {
    TensorCompute = 0,
    VectorCompute = 1,
    MemoryBw = 2,
    Interconnect = 3,
}

impl From<Resource> for LuminaResource {
    fn from(r: Resource) -> Self {
        match r {
            Resource::TensorCompute => LuminaResource::TensorCompute,
            Resource::VectorCompute => LuminaResource::VectorCompute,
            Resource::MemoryBw => LuminaResource::MemoryBw,
            Resource::Interconnect => LuminaResource::Interconnect,
        }
    }
}

/// One node configuration.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LuminaDesign {
    pub link_count: u32,
    pub core_count: u32,
    pub sublane_count: u32,
    pub systolic_dim: u32,
    pub vector_width: u32,
    pub sram_kb: u32,
    pub global_buffer_mb: u32,
    pub mem_channels: u32,
}

impl From<LuminaDesign> for DesignPoint {
    fn from(d: LuminaDesign) -> Self {
        DesignPoint::from_array([
            d.link_count,
            d.core_count,
            d.sublane_count,
            d.systolic_dim,
            d.vector_width,
            d.sram_kb,
            d.global_buffer_mb,
            d.mem_channels,
        ])
    }
}

impl From<DesignPoint> for LuminaDesign {
    fn from(d: DesignPoint) -> Self {
        let [link_count, core_count, sublane_count, systolic_dim, vector_width, sram_kb, global_buffer_mb, mem_channels] =
            d.to_array();
        LuminaDesign {
            link_count,
            core_count,
            sublane_count,
            systolic_dim,
            vector_width,
            sram_kb,
            global_buffer_mb,
            mem_channels,
        }
    }
}

/// Evaluated latencies and area, raw and normalized to the reference.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LuminaMetrics {
    pub ttft_s: f64,
    pub tpot_s: f64,
    pub area_mm2: f64,
    pub ttft_n: f64,
    pub tpot_n: f64,
    pub area_n: f64,
    pub prefill_bottleneck: LuminaResource,
    pub decode_bottleneck: LuminaResource,
}

/// Opaque evaluator handle.
pub struct LuminaEvaluator {
    evaluator: Evaluator,
    space: SpaceSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: LuminaStatus, msg: impl Into<String>) -> LuminaStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into `Internal`.
fn guard(f: impl FnOnce() -> LuminaStatus) -> LuminaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(LuminaStatus::Internal, format!("internal error: {msg}"))
        }
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call on this thread; do not free.
#[no_mangle]
pub extern "C" fn lumina_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lumina_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an evaluator for the default workload and design space.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn lumina_evaluator_new_default(out: *mut *mut LuminaEvaluator) -> LuminaStatus {
    guard(|| {
        if out.is_null() {
            return fail(LuminaStatus::NullPointer, "out is NULL");
        }
        let cfg = RunConfig::default();
        let handle = LuminaEvaluator {
            evaluator: cfg.evaluator().expect("default config is valid"),
            space: cfg.space().expect("default space is valid"),
        };
        *out = Box::into_raw(Box::new(handle));
        LuminaStatus::Ok
    })
}

/// Creates an evaluator from a JSON run-config file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lumina_evaluator_from_config(
    path: *const c_char,
    out: *mut *mut LuminaEvaluator,
) -> LuminaStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(LuminaStatus::NullPointer, "path or out is NULL");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(LuminaStatus::InvalidArgument, "path is not UTF-8");
        };
        let built = RunConfig::load(Path::new(path)).and_then(|c| Ok((c.evaluator()?, c.space()?)));
        match built {
            Ok((evaluator, space)) => {
                *out = Box::into_raw(Box::new(LuminaEvaluator { evaluator, space }));
                LuminaStatus::Ok
            }
            Err(e) => fail(LuminaStatus::Config, e.to_string()),
        }
    })
}

/// Releases an evaluator. NULL is ignored.
///
/// # Safety
/// `ev` must come from a constructor above and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lumina_evaluator_free(ev: *mut LuminaEvaluator) {
    if !ev.is_null() {
        drop(Box::from_raw(ev));
    }
}

/// The evaluator's reference design.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lumina_reference_design(ev: *const LuminaEvaluator, out: *mut LuminaDesign) -> LuminaStatus {
    guard(|| {
        if ev.is_null() || out.is_null() {
            return fail(LuminaStatus::NullPointer, "ev or out is NULL");
        }
        *out = (*ev).space.reference().into();
        LuminaStatus::Ok
    })
}

/// Number of designs in the evaluator's lattice.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lumina_space_cardinality(ev: *const LuminaEvaluator, out: *mut u64) -> LuminaStatus {
    guard(|| {
        if ev.is_null() || out.is_null() {
            return fail(LuminaStatus::NullPointer, "ev or out is NULL");
        }
        *out = (*ev).space.cardinality();
        LuminaStatus::Ok
    })
}

/// Evaluates one design. Designs off the parameter lists are rejected with
/// `InvalidDesign`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lumina_evaluate(
    ev: *const LuminaEvaluator,
    design: *const LuminaDesign,
    out: *mut LuminaMetrics,
) -> LuminaStatus {
    guard(|| {
        if ev.is_null() || design.is_null() || out.is_null() {
            return fail(LuminaStatus::NullPointer, "ev, design or out is NULL");
        }
        let ev = &*ev;
        let d: DesignPoint = (*design).into();
        if let Err(v) = ev.space.validate(&d) {
            let params: Vec<String> = v.iter().map(|x| x.param.name().to_string()).collect();
            return fail(LuminaStatus::InvalidDesign, format!("invalid values for {}", params.join(", ")));
        }
        let (m, report) = ev.evaluator.evaluate(&d);
        *out = LuminaMetrics {
            ttft_s: m.ttft_s,
            tpot_s: m.tpot_s,
            area_mm2: m.area_mm2,
            ttft_n: m.ttft_n,
            tpot_n: m.tpot_n,
            area_n: m.area_n,
            prefill_bottleneck: report.prefill.dominant_resource.into(),
            decode_bottleneck: report.decode.dominant_resource.into(),
        };
        LuminaStatus::Ok
    })
}

/// Exact hypervolume of `n` points (row-major, 3 objectives each, all
/// minimized) against `reference` (3 values).
///
/// # Safety
/// `points` must hold `3 * n` doubles (may be NULL when `n == 0`);
/// `reference` must hold 3; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lumina_hypervolume(
    points: *const f64,
    n: usize,
    reference: *const f64,
    out: *mut f64,
) -> LuminaStatus {
    guard(|| {
        if (points.is_null() && n > 0) || reference.is_null() || out.is_null() {
            return fail(LuminaStatus::NullPointer, "points, reference or out is NULL");
        }
        let r = std::slice::from_raw_parts(reference, 3);
        let flat: &[f64] = if n == 0 { &[] } else { std::slice::from_raw_parts(points, 3 * n) };
        if flat.iter().chain(r).any(|x| !x.is_finite()) {
            return fail(LuminaStatus::InvalidArgument, "objective values must be finite");
        }
        let front: Vec<ObjectiveVector> = flat.chunks_exact(3).map(|c| ObjectiveVector([c[0], c[1], c[2]])).collect();
        *out = hypervolume(&front, &ObjectiveVector([r[0], r[1], r[2]]));
        LuminaStatus::Ok
    })
}

/// 1 when `a` Pareto-dominates `b` (no worse everywhere, better somewhere),
/// 0 otherwise or when either pointer is NULL.
///
/// # Safety
/// Non-NULL pointers must each hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn lumina_dominates(a: *const f64, b: *const f64) -> i32 {
    if a.is_null() || b.is_null() {
        return 0;
    }
    let a = std::slice::from_raw_parts(a, 3);
    let b = std::slice::from_raw_parts(b, 3);
    ObjectiveVector([a[0], a[1], a[2]]).dominates(&ObjectiveVector([b[0], b[1], b[2]])) as i32
}
