use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use lumina_ffi::*;

fn last_error() -> String {
    let p = lumina_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Handle(*mut LuminaEvaluator);

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { lumina_evaluator_free(self.0) }
    }
}

fn default_evaluator() -> Handle {
    let mut ev = ptr::null_mut();
    assert_eq!(unsafe { lumina_evaluator_new_default(&mut ev) }, LuminaStatus::Ok);
    assert!(!ev.is_null());
    Handle(ev)
}

#[test]
fn reference_evaluates_to_unit_ppa() {
    let ev = default_evaluator();
    let mut d = LuminaDesign {
        link_count: 0,
        core_count: 0,
        sublane_count: 0,
        systolic_dim: 0,
        vector_width: 0,
        sram_kb: 0,
        global_buffer_mb: 0,
        mem_channels: 0,
    };
    assert_eq!(unsafe { lumina_reference_design(ev.0, &mut d) }, LuminaStatus::Ok);
    assert_eq!((d.link_count, d.core_count, d.global_buffer_mb, d.mem_channels), (12, 108, 40, 5));
    let mut m = std::mem::MaybeUninit::<LuminaMetrics>::uninit();
    assert_eq!(unsafe { lumina_evaluate(ev.0, &d, m.as_mut_ptr()) }, LuminaStatus::Ok);
    let m = unsafe { m.assume_init() };
    assert_eq!((m.ttft_n, m.tpot_n, m.area_n), (1.0, 1.0, 1.0));
    assert!(m.ttft_s > 0.0 && m.tpot_s > 0.0 && m.area_mm2 > 0.0);
    assert_eq!(m.decode_bottleneck, LuminaResource::MemoryBw);
}

#[test]
fn cardinality_of_default_space() {
    let ev = default_evaluator();
    let mut n = 0u64;
    assert_eq!(unsafe { lumina_space_cardinality(ev.0, &mut n) }, LuminaStatus::Ok);
    assert_eq!(n, 4_741_632);
}

#[test]
fn invalid_design_reports_the_parameter() {
    let ev = default_evaluator();
    let mut d = LuminaDesign {
        link_count: 13,
        core_count: 108,
        sublane_count: 4,
        systolic_dim: 16,
        vector_width: 32,
        sram_kb: 128,
        global_buffer_mb: 40,
        mem_channels: 5,
    };
    let mut m = std::mem::MaybeUninit::<LuminaMetrics>::uninit();
    assert_eq!(unsafe { lumina_evaluate(ev.0, &d, m.as_mut_ptr()) }, LuminaStatus::InvalidDesign);
    assert!(last_error().contains("link_count"), "{}", last_error());
    d.link_count = 12;
    d.mem_channels = 0;
    assert_eq!(unsafe { lumina_evaluate(ev.0, &d, m.as_mut_ptr()) }, LuminaStatus::InvalidDesign);
    assert!(last_error().contains("mem_channels"));
}

#[test]
fn null_pointers_are_rejected() {
    assert_eq!(unsafe { lumina_evaluator_new_default(ptr::null_mut()) }, LuminaStatus::NullPointer);
    let mut out = 0.0;
    let r = [1.0, 1.0, 1.0];
    assert_eq!(unsafe { lumina_hypervolume(ptr::null(), 2, r.as_ptr(), &mut out) }, LuminaStatus::NullPointer);
    assert_eq!(unsafe { lumina_dominates(ptr::null(), r.as_ptr()) }, 0);
    unsafe { lumina_evaluator_free(ptr::null_mut()) };
}

#[test]
fn hypervolume_of_two_boxes() {
    // union of [0.5,1]^3 and [0.25,1]x[0.75,1]x[0.75,1]: 0.125 + 0.25*0.0625
    let pts = [0.5, 0.5, 0.5, 0.25, 0.75, 0.75];
    let r = [1.0, 1.0, 1.0];
    let mut out = 0.0;
    assert_eq!(unsafe { lumina_hypervolume(pts.as_ptr(), 2, r.as_ptr(), &mut out) }, LuminaStatus::Ok);
    assert!((out - (0.125 + 0.25 * 0.0625)).abs() < 1e-15, "{out}");
    assert_eq!(unsafe { lumina_hypervolume(ptr::null(), 0, r.as_ptr(), &mut out) }, LuminaStatus::Ok);
    assert_eq!(out, 0.0);
    let bad = [f64::NAN, 0.5, 0.5];
    assert_eq!(unsafe { lumina_hypervolume(bad.as_ptr(), 1, r.as_ptr(), &mut out) }, LuminaStatus::InvalidArgument);
}

#[test]
fn dominance() {
    let a = [0.5, 0.5, 0.5];
    let b = [0.5, 0.6, 0.5];
    unsafe {
        assert_eq!(lumina_dominates(a.as_ptr(), b.as_ptr()), 1);
        assert_eq!(lumina_dominates(b.as_ptr(), a.as_ptr()), 0);
        assert_eq!(lumina_dominates(a.as_ptr(), a.as_ptr()), 0);
    }
}

#[test]
fn config_errors_carry_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"scenario\": {\"batch\": 0}}").unwrap();
    let c = std::ffi::CString::new(path.to_str().unwrap()).unwrap();
    let mut ev = ptr::null_mut();
    assert_eq!(unsafe { lumina_evaluator_from_config(c.as_ptr(), &mut ev) }, LuminaStatus::Config);
    assert!(ev.is_null());
    assert!(last_error().contains("batch"), "{}", last_error());

    std::fs::write(&path, "{\"scenario\": {\"batch\": 4}}").unwrap();
    assert_eq!(unsafe { lumina_evaluator_from_config(c.as_ptr(), &mut ev) }, LuminaStatus::Ok);
    let _h = Handle(ev);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(lumina_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("lumina.h")
}

#[test]
fn header_declares_the_interface() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "lumina_evaluator_new_default",
        "lumina_evaluator_from_config",
        "lumina_evaluator_free",
        "lumina_evaluate",
        "lumina_reference_design",
        "lumina_space_cardinality",
        "lumina_hypervolume",
        "lumina_dominates",
        "lumina_last_error_message",
        "typedef struct LuminaEvaluator LuminaEvaluator;",
        "LUMINA_STATUS_INVALID_DESIGN = 3",
    ] {
        assert!(text.contains(name), "missing {name}");
    }
}

/// Compiles and runs a small C program against the static library when a C
/// compiler and the archive are available.
#[test]
fn c_program_links_and_runs() {
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| Command::new(c).arg("--version").output().is_ok()) else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let include = header().parent().unwrap().to_path_buf();
    let out = tempfile::tempdir().unwrap();
    let src = out.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "lumina.h"
int main(void) {
    LuminaEvaluator *ev = NULL;
    if (lumina_evaluator_new_default(&ev) != LUMINA_STATUS_OK) return 1;
    LuminaDesign d;
    lumina_reference_design(ev, &d);
    LuminaMetrics m;
    if (lumina_evaluate(ev, &d, &m) != LUMINA_STATUS_OK) return 2;
    uint64_t n = 0;
    lumina_space_cardinality(ev, &n);
    d.link_count = 13;
    LuminaStatus s = lumina_evaluate(ev, &d, &m);
    printf("%.3f %.3f %.3f %llu %d %s\n", m.ttft_n, m.tpot_n, m.area_n, (unsigned long long)n, (int)s,
           lumina_last_error_message());
    lumina_evaluator_free(ev);
    return 0;
}
"#,
    )
    .unwrap();
    let syntax = Command::new(cc).arg("-fsyntax-only").arg("-I").arg(&include).arg(&src).status().unwrap();
    assert!(syntax.success(), "header does not compile as C");

    // the archive sits next to this test binary's deps directory
    let exe = std::env::current_exe().unwrap();
    let target_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    let archive = target_dir.join("liblumina_ffi.a");
    if !archive.is_file() {
        eprintln!("{} not built; skipping link step", archive.display());
        return;
    }
    let bin = out.path().join("demo");
    let status = Command::new(cc)
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&archive)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "link failed");
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success());
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.starts_with("1.000 1.000 1.000 4741632 3 "), "{stdout}");
    assert!(stdout.contains("link_count"), "{stdout}");
}
