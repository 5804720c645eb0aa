use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use shearsplat::checkpoint::{Checkpoint, Rig};
use shearsplat::config::RunConfig;
use shearsplat::linalg::{conditional_moments, congruence_shear, schur_tt, Quat};
use shearsplat::render::{quantize, render};
use shearsplat::scene::{synth_scene, SceneSpec};
use shearsplat::training::{init_model, TrainState};
use shearsplat_ffi::*;

const SCENE: &str = "\
[scene]
width = 20
height = 16
times = 4
held_out = 1

[rig]
count = 2
radius = 4.0
height = 1.0
focal = 25.0

[mover]
position = 0.2, 0.0, 0.0
velocity = 0.5, 0.0, 0.0
scales = 0.3, 0.2, 0.2
rgb = 0.8, 0.3, 0.2
";

fn checkpoint() -> Checkpoint {
    let data = synth_scene(&SceneSpec::parse(SCENE).unwrap()).unwrap();
    let mut config = RunConfig::default();
    config.model.gaussians = 25;
    let mut model = init_model(&config.model, &data, 4).unwrap();
    for (i, g) in model.gaussians.iter_mut().enumerate() {
        g.q_l = Quat::new(1.0, 0.1 * i as f64, 0.2, -0.1);
        g.opacity_logit = 1.0;
    }
    Checkpoint {
        config,
        state: TrainState::new(model),
        rig: Rig {
            cameras: data.cameras.clone(),
            held_out: data.held_out.clone(),
            times: data.times.clone(),
        },
    }
}

fn last_error() -> String {
    let p = shs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(ck: &Checkpoint) -> *mut ShsModel {
    let bytes = ck.to_bytes();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { shs_model_load_bytes(bytes.as_ptr(), bytes.len(), &mut m) }, ShsStatus::Ok);
    assert!(shs_last_error().is_null());
    m
}

#[test]
fn render_matches_the_library() {
    let ck = checkpoint();
    let m = load(&ck);
    let (mut w, mut h, mut n, mut cams) = (0, 0, 0, 0);
    unsafe {
        assert_eq!(shs_model_gaussian_count(m, &mut n), ShsStatus::Ok);
        assert_eq!(shs_model_camera_count(m, &mut cams), ShsStatus::Ok);
        assert_eq!(shs_model_image_size(m, 1, &mut w, &mut h), ShsStatus::Ok);
    }
    assert_eq!((n, cams, w, h), (25, 2, 20, 16));
    let expect = render(&ck.state.model, &ck.rig.cameras[1], 0.4).unwrap();
    let mut buf = vec![0.0; w * h * 3];
    let mut bytes = vec![0u8; w * h * 3];
    unsafe {
        assert_eq!(shs_model_render(m, 1, 0.4, buf.as_mut_ptr(), buf.len()), ShsStatus::Ok);
        assert_eq!(shs_model_render_rgb8(m, 1, 0.4, bytes.as_mut_ptr(), bytes.len()), ShsStatus::Ok);
        shs_model_free(m);
    }
    assert_eq!(buf, expect.data);
    assert_eq!(bytes, expect.data.iter().map(|v| quantize(*v)).collect::<Vec<_>>());
}

#[test]
fn slices_match_the_library() {
    let ck = checkpoint();
    let m = load(&ck);
    let model = &ck.state.model;
    let mut seen = 0;
    for i in 0..model.gaussians.len() {
        for &t in &[0.0, 0.3, 0.7, 1.0] {
            let mut s = ShsSlice::default();
            let mut visible = 9u8;
            assert_eq!(unsafe { shs_model_slice(m, i, t, &mut s, &mut visible) }, ShsStatus::Ok);
            match model.slice(i, t).unwrap() {
                Some(e) => {
                    seen += 1;
                    assert_eq!(visible, 1);
                    assert_eq!(s.mean, e.mean3);
                    assert_eq!(s.cov, *e.cov3.0.as_flattened());
                    assert_eq!(s.opacity, e.opacity);
                }
                None => assert_eq!(visible, 0),
            }
        }
    }
    assert!(seen > 0);
    unsafe { shs_model_free(m) };
}

#[test]
fn kernels_match_the_library() {
    let cov = [
        2.0, 0.3, -0.2, 0.5, //
        0.3, 1.5, 0.1, -0.4, //
        -0.2, 0.1, 1.2, 0.2, //
        0.5, -0.4, 0.2, 0.9,
    ];
    let sym = shearsplat::linalg::Sym4::from_upper(&shearsplat::linalg::Mat4(std::array::from_fn(|i| {
        std::array::from_fn(|j| cov[4 * i + j])
    })));
    let v = [0.4, -1.0, 2.5];
    let (mut schur, mut sheared, mut mean3, mut cov3) = ([0.0; 9], [0.0; 16], [0.0; 3], [0.0; 9]);
    let mean = [0.1, 0.2, 0.3, 0.5];
    unsafe {
        assert_eq!(shs_schur_tt(cov.as_ptr(), schur.as_mut_ptr()), ShsStatus::Ok);
        assert_eq!(shs_congruence_shear(cov.as_ptr(), v.as_ptr(), sheared.as_mut_ptr()), ShsStatus::Ok);
        assert_eq!(
            shs_conditional_moments(mean.as_ptr(), cov.as_ptr(), 0.8, mean3.as_mut_ptr(), cov3.as_mut_ptr()),
            ShsStatus::Ok
        );
    }
    assert_eq!(schur, *schur_tt(&sym).unwrap().0.as_flattened());
    assert_eq!(sheared, *congruence_shear(&sym, v).to_mat4().0.as_flattened());
    let (m, c) = conditional_moments(mean, &sym, 0.8).unwrap();
    assert_eq!(mean3, m);
    assert_eq!(cov3[..], *c.0.as_flattened());

    // the shear leaves the complement alone through the C surface too
    let mut again = [0.0; 9];
    unsafe { shs_schur_tt(sheared.as_ptr(), again.as_mut_ptr()) };
    for (a, b) in again.iter().zip(&schur) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn failures_set_codes_and_messages() {
    let ck = checkpoint();
    let bytes = ck.to_bytes();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(shs_model_load_bytes(bytes.as_ptr(), bytes.len() / 2, &mut m), ShsStatus::Parse);
        assert!(m.is_null());
        assert!(last_error().contains("parse error at byte"), "{}", last_error());

        assert_eq!(shs_model_load_bytes(ptr::null(), 0, &mut m), ShsStatus::NullPointer);
        assert!(last_error().contains("data"));

        let missing = CString::new("/nonexistent/model.ckpt").unwrap();
        assert_eq!(shs_model_load(missing.as_ptr(), &mut m), ShsStatus::Io);
        assert!(last_error().contains("/nonexistent/model.ckpt"));
        assert_eq!(shs_model_load(ptr::null(), &mut m), ShsStatus::NullPointer);

        let m = load(&ck);
        let mut small = vec![0.0; 10];
        assert_eq!(shs_model_render(m, 0, 0.5, small.as_mut_ptr(), small.len()), ShsStatus::BufferTooSmall);
        assert!(last_error().contains("960"));
        assert_eq!(shs_model_render(m, 7, 0.5, small.as_mut_ptr(), small.len()), ShsStatus::InvalidArgument);
        assert_eq!(shs_model_render(m, 0, f64::NAN, small.as_mut_ptr(), small.len()), ShsStatus::InvalidArgument);
        assert_eq!(shs_model_render(m, 0, 0.5, ptr::null_mut(), 960), ShsStatus::NullPointer);
        let mut s = ShsSlice::default();
        let mut vis = 0;
        assert_eq!(shs_model_slice(m, 25, 0.5, &mut s, &mut vis), ShsStatus::InvalidArgument);
        let mut n = 0;
        assert_eq!(shs_model_gaussian_count(ptr::null(), &mut n), ShsStatus::NullPointer);
        assert_eq!(shs_model_gaussian_count(m, ptr::null_mut()), ShsStatus::NullPointer);
        // a success clears the message
        assert_eq!(shs_model_gaussian_count(m, &mut n), ShsStatus::Ok);
        assert!(shs_last_error().is_null());
        shs_model_free(m);
        shs_model_free(ptr::null_mut());

        let mut bad = [0.0; 16];
        bad[15] = -1.0;
        let mut out = [0.0; 9];
        assert_eq!(shs_schur_tt(bad.as_ptr(), out.as_mut_ptr()), ShsStatus::Degenerate);
        bad[0] = f64::INFINITY;
        assert_eq!(shs_schur_tt(bad.as_ptr(), out.as_mut_ptr()), ShsStatus::InvalidArgument);
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(shs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_surface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/shearsplat.h")).unwrap();
    for name in [
        "shs_model_load",
        "shs_model_load_bytes",
        "shs_model_free",
        "shs_model_render",
        "shs_model_render_rgb8",
        "shs_model_slice",
        "shs_schur_tt",
        "shs_congruence_shear",
        "shs_conditional_moments",
        "shs_last_error",
        "typedef struct ShsModel ShsModel",
        "SHS_STATUS_BUFFER_TOO_SMALL = 3",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "shearsplat.h"

int main(int argc, char **argv) {
    ShsModel *m = NULL;
    if (shs_model_load(argv[1], &m) != SHS_STATUS_OK) {
        fprintf(stderr, "%s\n", shs_last_error());
        return 1;
    }
    size_t n = 0, w = 0, h = 0;
    shs_model_gaussian_count(m, &n);
    shs_model_image_size(m, 0, &w, &h);
    static double rgb[20 * 16 * 3];
    if (shs_model_render(m, 0, 0.5, rgb, sizeof rgb / sizeof rgb[0]) != SHS_STATUS_OK) return 2;
    double sum = 0.0;
    for (size_t i = 0; i < w * h * 3; i++) sum += rgb[i];
    ShsStatus s = shs_model_render(m, 0, 0.5, rgb, 3);
    printf("%zu %zu %zu %.17g %d %s\n", n, w, h, sum, (int)s, shs_last_error());
    shs_model_free(m);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = target_dir().join("libshearsplat_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let cc = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));

    let ck = checkpoint();
    let path = dir.path().join("m.ckpt");
    ck.save(&path).unwrap();
    let run = Command::new(&exe).arg(&path).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let line = String::from_utf8(run.stdout).unwrap();
    let fields: Vec<&str> = line.trim().splitn(6, ' ').collect();
    assert_eq!(fields[..3], ["25", "20", "16"]);
    let sum: f64 = render(&ck.state.model, &ck.rig.cameras[0], 0.5).unwrap().data.iter().sum();
    assert_eq!(fields[3].parse::<f64>().unwrap(), sum);
    assert_eq!(fields[4], (ShsStatus::BufferTooSmall as i32).to_string());
    assert!(fields[5].contains("frame needs 960"));
}
