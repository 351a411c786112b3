use std::ffi::{CStr, CString};
use std::ptr;

use plenoptic_bounds::scene::corridor_fixture;
use plenoptic_bounds_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(pb_last_error()) }.to_string_lossy().into_owned()
}

fn tiny_scene() -> *mut PbScene {
    let mut doc: serde_json::Value = serde_json::from_str(corridor_fixture()).unwrap();
    doc["camera"]["width"] = 8.into();
    doc["camera"]["height"] = 6.into();
    let text = CString::new(doc.to_string()).unwrap();
    let mut scene = ptr::null_mut();
    assert_eq!(unsafe { pb_scene_parse(text.as_ptr(), &mut scene) }, PbStatus::Ok);
    scene
}

#[test]
fn render_write_read_round_trip() {
    let scene = tiny_scene();
    let mut dim = 0;
    assert_eq!(unsafe { pb_scene_parameter_dim(scene, &mut dim) }, PbStatus::Ok);
    assert_eq!(dim, 1);
    let theta = [0.5];
    let mut img = ptr::null_mut();
    let st = unsafe { pb_scene_render(scene, theta.as_ptr(), 1, 4, 7, 0, &mut img) };
    assert_eq!(st, PbStatus::Ok, "{}", last_error());

    let (mut w, mut h, mut c) = (0, 0, 0);
    assert_eq!(unsafe { pb_image_shape(img, &mut w, &mut h, &mut c) }, PbStatus::Ok);
    assert_eq!((w, h, c), (8, 6, 3));
    let mut data = vec![0.0; w * h * c];
    assert_eq!(unsafe { pb_image_copy_data(img, data.as_mut_ptr(), data.len()) }, PbStatus::Ok);
    assert_eq!(unsafe { pb_image_copy_data(img, data.as_mut_ptr(), 3) }, PbStatus::Invalid);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("r.pfm").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { pb_pfm_write(img, path.as_ptr()) }, PbStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { pb_pfm_read(path.as_ptr(), &mut back) }, PbStatus::Ok);
    let mut again = vec![0.0; data.len()];
    assert_eq!(unsafe { pb_image_copy_data(back, again.as_mut_ptr(), again.len()) }, PbStatus::Ok);
    assert_eq!(
        data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        again.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );

    let mut lambda = -1.0;
    assert_eq!(unsafe { pb_lambda_gaussian(img, back, 0.1, &mut lambda) }, PbStatus::Ok);
    assert_eq!(lambda, 0.0);

    let out_of_range = [5.0];
    let mut none = ptr::null_mut();
    let st = unsafe { pb_scene_render(scene, out_of_range.as_ptr(), 1, 4, 7, 0, &mut none) };
    assert_eq!(st, PbStatus::Invalid);
    assert!(none.is_null());
    assert!(last_error().contains("outside"), "{}", last_error());

    unsafe {
        pb_image_free(img);
        pb_image_free(back);
        pb_scene_free(scene);
    }
}

#[test]
fn schema_errors_carry_the_path() {
    let doc = CString::new(r#"{"camera": {"fov": 60}}"#).unwrap();
    let mut scene = ptr::null_mut();
    assert_eq!(unsafe { pb_scene_parse(doc.as_ptr(), &mut scene) }, PbStatus::Schema);
    assert!(scene.is_null());
    assert!(last_error().contains("camera"), "{}", last_error());
}

#[test]
fn poisson_exponent_of_constant_images() {
    let a = vec![10.0; 100];
    let b = vec![10.01; 100];
    let (mut ia, mut ib) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(pb_image_new(100, 1, 1, a.as_ptr(), &mut ia), PbStatus::Ok);
        assert_eq!(pb_image_new(100, 1, 1, b.as_ptr(), &mut ib), PbStatus::Ok);
        let mut lambda = 0.0;
        assert_eq!(pb_lambda_poisson(ia, ib, &mut lambda), PbStatus::Ok);
        let expected = 100.0 * (10.01f64 - 10.0).powi(2) / 10.0;
        assert!((lambda - expected).abs() < 1e-15);
        let mut v = 0.0;
        assert_eq!(pb_hcr_functional(lambda, 0.01, &mut v), PbStatus::Ok);
        assert!((v - 0.09995).abs() < 1e-6);
        pb_image_free(ia);
        pb_image_free(ib);
    }
}

#[test]
fn least_squares_through_the_boundary() {
    let spp = [1000u32, 2000];
    let tilde = [0.5 + 3.0 / 1000.0, 0.5 + 3.0 / 2000.0];
    let (mut l, mut c, mut clamped) = (0.0, 0.0, true);
    let st = unsafe { pb_estimate_lambda(spp.as_ptr(), tilde.as_ptr(), 2, &mut l, &mut c, &mut clamped) };
    assert_eq!(st, PbStatus::Ok);
    assert!((l - 0.5).abs() < 1e-12 && (c - 3.0).abs() < 1e-9 && !clamped);
    let st = unsafe { pb_estimate_lambda(spp.as_ptr(), tilde.as_ptr(), 1, &mut l, &mut c, &mut clamped) };
    assert_eq!(st, PbStatus::Invalid);
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/plenoptic_bounds.h");
    for name in [
        "pb_last_error",
        "pb_scene_parse",
        "pb_scene_free",
        "pb_scene_parameter_dim",
        "pb_scene_render",
        "pb_image_new",
        "pb_image_free",
        "pb_image_shape",
        "pb_image_copy_data",
        "pb_pfm_read",
        "pb_pfm_write",
        "pb_lambda_poisson",
        "pb_lambda_gaussian",
        "pb_hcr_functional",
        "pb_estimate_lambda",
        "PB_STATUS_PANIC",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"plenoptic_bounds.h\"\n\
         int main(void) {\n\
           PbImage *img = NULL;\n\
           double v;\n\
           PbStatus s = pb_hcr_functional(1.0, 0.1, &v);\n\
           pb_image_free(img);\n\
           return s == PB_STATUS_OK ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include])
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
        .ok_or(())
}
