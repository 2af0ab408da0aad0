use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use specrecon_ffi::*;

const SMALL: &str = r#"{
  "geometry": {"image_size": 32, "num_views": 30, "detector_count": 48, "pixel_size": 0.9},
  "recon": {"sirt_iterations": 5, "outer_iterations": 1, "sweeps_per_outer": 2},
  "train": {"epochs": 1, "epochs_per_outer": 1, "net": {"widths": [2, 2]},
            "ssim": {"window_size": 7, "sigma": 1.5, "k1": 0.01, "k2": 0.03, "data_range": 1.0}}
}"#;

fn config(json: &str) -> *mut SrConfig {
    let text = CString::new(json).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { sr_config_from_json(text.as_ptr(), &mut cfg) }, SrStatus::Ok);
    cfg
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(sr_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn config_errors_map_to_status_and_message() {
    let bad = CString::new(r#"{"recon": {"relaxation": 3.0}}"#).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { sr_config_from_json(bad.as_ptr(), &mut cfg) }, SrStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("recon.relaxation"));

    assert_eq!(unsafe { sr_config_from_json(ptr::null(), &mut cfg) }, SrStatus::NullPointer);
    assert!(last_error().contains("json"));
}

#[test]
fn config_json_round_trip() {
    let cfg = config(SMALL);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { sr_config_to_json(cfg, &mut s) }, SrStatus::Ok);
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    let again = config(&text);
    let mut s2 = ptr::null_mut();
    assert_eq!(unsafe { sr_config_to_json(again, &mut s2) }, SrStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(s2) }.to_str().unwrap(), text);
    unsafe {
        sr_string_free(s);
        sr_string_free(s2);
        sr_config_free(cfg);
        sr_config_free(again);
    }
}

#[test]
fn simulate_reconstruct_and_score_in_memory() {
    let cfg = config(SMALL);
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { sr_simulate(cfg, &mut sim) }, SrStatus::Ok);
    let (mut views, mut dets) = (0, 0);
    assert_eq!(unsafe { sr_simulation_sinogram_shape(sim, &mut views, &mut dets) }, SrStatus::Ok);
    assert_eq!((views, dets), (30, 48));
    let mut sino = vec![0.0; views * dets];
    assert_eq!(unsafe { sr_simulation_copy_sinogram(sim, 0, sino.as_mut_ptr(), sino.len()) }, SrStatus::Ok);
    assert!(sino.iter().any(|&v| v > 0.0));

    let mut truth = ptr::null_mut();
    assert_eq!(unsafe { sr_simulation_truth(sim, &mut truth) }, SrStatus::Ok);
    for alg in [SrAlgorithm::Sirt, SrAlgorithm::Tvm, SrAlgorithm::N2nPost, SrAlgorithm::S2s] {
        let mut rec = ptr::null_mut();
        assert_eq!(unsafe { sr_reconstruct(cfg, sim, alg, &mut rec) }, SrStatus::Ok, "{alg:?}: {}", last_error());
        let (bins, size) = unsafe { (sr_stack_num_bins(rec), sr_stack_size(rec)) };
        assert_eq!((bins, size), (5, 32));
        let mut a = vec![0.0; size * size];
        let mut t = vec![0.0; size * size];
        unsafe {
            assert_eq!(sr_stack_copy_bin(rec, 2, a.as_mut_ptr(), a.len()), SrStatus::Ok);
            assert_eq!(sr_stack_copy_bin(truth, 2, t.as_mut_ptr(), t.len()), SrStatus::Ok);
        }
        let zeros = vec![0.0; a.len()];
        let (mut p, mut p0) = (0.0, 0.0);
        unsafe {
            assert_eq!(sr_psnr(a.as_ptr(), t.as_ptr(), a.len(), 0.0243, &mut p), SrStatus::Ok);
            assert_eq!(sr_psnr(zeros.as_ptr(), t.as_ptr(), a.len(), 0.0243, &mut p0), SrStatus::Ok);
        }
        assert!(p.is_finite() && p > p0 + 1.0, "{alg:?} psnr {p} vs empty image {p0}");
        unsafe { sr_stack_free(rec) };
    }
    let mut buf = vec![0.0; 4];
    assert_eq!(unsafe { sr_stack_copy_bin(truth, 9, buf.as_mut_ptr(), 4) }, SrStatus::InvalidArgument);
    assert_eq!(unsafe { sr_stack_copy_bin(truth, 0, buf.as_mut_ptr(), 4) }, SrStatus::InvalidArgument);
    unsafe {
        sr_stack_free(truth);
        sr_simulation_free(sim);
        sr_config_free(cfg);
    }
}

#[test]
fn metrics_entry_points() {
    let a = [0.0; 16];
    let mut p = 0.0;
    assert_eq!(unsafe { sr_psnr(a.as_ptr(), a.as_ptr(), 16, 1.0, &mut p) }, SrStatus::Ok);
    assert_eq!(p, f64::INFINITY);
    let (mut v, mut defined) = (0.0, true);
    assert_eq!(unsafe { sr_blur_fraction(a.as_ptr(), 4, &mut v, &mut defined) }, SrStatus::Ok);
    assert!(!defined && v.is_nan());
}

#[test]
fn file_commands_and_tamper_detection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(SMALL);
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sr_cmd_simulate(cfg, out.as_ptr()) }, SrStatus::Ok);
    assert_eq!(unsafe { sr_cmd_reconstruct(cfg, SrAlgorithm::Sirt, out.as_ptr(), out.as_ptr()) }, SrStatus::Ok);
    std::fs::write(dir.path().join("truth_bin1.f32"), [0u8; 16]).unwrap();
    assert_eq!(unsafe { sr_cmd_reconstruct(cfg, SrAlgorithm::Sirt, out.as_ptr(), out.as_ptr()) }, SrStatus::Integrity);
    unsafe { sr_config_free(cfg) };
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/specrecon.h")).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src.split("extern \"C\" fn ").skip(1).map(|s| s.split('(').next().unwrap()).collect();
    assert!(exports.len() > 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

fn cdylib_dir() -> PathBuf {
    // target/<profile>/deps/abi-<hash> -> target/<profile>
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_header_and_library() {
    let lib_dir = cdylib_dir();
    if !lib_dir.join("libspecrecon_ffi.so").exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no cdylib or C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "specrecon.h"

int main(void) {
    SrConfig *cfg = NULL;
    if (sr_config_from_json("{\"bogus\": 1}", &cfg) != SR_STATUS_CONFIG) return 1;
    if (strstr(sr_last_error(), "bogus") == NULL) return 2;
    const char *json = "{\"geometry\": {\"image_size\": 16, \"num_views\": 12, \"detector_count\": 24, \"pixel_size\": 1.8},"
                       " \"recon\": {\"sirt_iterations\": 4}}";
    if (sr_config_from_json(json, &cfg) != SR_STATUS_OK) return 3;
    SrSimulation *sim = NULL;
    if (sr_simulate(cfg, &sim) != SR_STATUS_OK) return 4;
    SrStack *rec = NULL;
    if (sr_reconstruct(cfg, sim, SR_ALGORITHM_SIRT, &rec) != SR_STATUS_OK) return 5;
    size_t n = sr_stack_size(rec);
    double img[256];
    if (n != 16 || sr_stack_copy_bin(rec, 0, img, n * n) != SR_STATUS_OK) return 6;
    double p = 0.0;
    if (sr_psnr(img, img, n * n, 1.0, &p) != SR_STATUS_OK || !isinf(p)) return 7;
    sr_stack_free(rec);
    sr_simulation_free(sim);
    sr_config_free(cfg);
    printf("ok %s\n", sr_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lspecrecon_ffi")
        .arg("-lm")
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
