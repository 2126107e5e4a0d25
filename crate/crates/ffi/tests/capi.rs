use std::ffi::{CStr, CString};
use std::ptr;

use mlvb_ffi::*;

const SIM: &str = r#"{"depth":"two","m":8,"o":6,"beta_r":[0.5,1.0],"beta_a":[0.7],
  "beta_s":[2.0,-1.5,0,0,0,0],"sigsq":0.5,"sigma_l1":[[0.4,0.0],[0.0,0.3]],"seed":4}"#;

fn last_error() -> String {
    let p = mlvb_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn simulated() -> *mut MlvbDataset {
    let sim = CString::new(SIM).unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { mlvb_dataset_simulate(sim.as_ptr(), &mut ds) }, MlvbStatus::Ok);
    ds
}

#[test]
fn simulate_fit_select_roundtrip() {
    let ds = simulated();
    let (mut p, mut m, mut n) = (0, 0, 0);
    assert_eq!(unsafe { mlvb_dataset_dims(ds, &mut p, &mut m, &mut n) }, MlvbStatus::Ok);
    assert_eq!((p, m, n), (9, 8, 48));

    let prior = CString::new(r#"{"family":"horseshoe"}"#).unwrap();
    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { mlvb_fit(ds, prior.as_ptr(), ptr::null(), &mut fit) }, MlvbStatus::Ok);

    let (mut iters, mut conv) = (0usize, false);
    assert_eq!(unsafe { mlvb_fit_status(fit, &mut iters, &mut conv) }, MlvbStatus::Ok);
    assert!(iters >= 1);

    let mut mean = vec![0.0; p];
    let mut sd = vec![0.0; p];
    assert_eq!(unsafe { mlvb_fit_beta(fit, mean.as_mut_ptr(), sd.as_mut_ptr(), p) }, MlvbStatus::Ok);
    assert!(sd.iter().all(|s| *s > 0.0));
    assert!((mean[3] - 2.0).abs() < 0.5, "{mean:?}");

    let mut gamma = vec![9u8; 6];
    let mut est = vec![f64::NAN; 6];
    assert_eq!(unsafe { mlvb_fit_select(fit, gamma.as_mut_ptr(), est.as_mut_ptr(), 6) }, MlvbStatus::Ok);
    assert_eq!(&gamma[..2], &[1, 1]);
    assert!(gamma.iter().all(|g| *g <= 1));
    for (g, e) in gamma.iter().zip(&est) {
        assert_eq!(*g == 0, *e == 0.0);
    }

    let mut json = ptr::null();
    assert_eq!(unsafe { mlvb_fit_summary_json(fit, 0.9, &mut json) }, MlvbStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap();
    let doc: serde_json::Value = serde_json::from_str(text).unwrap();
    assert_eq!(doc["beta"].as_array().unwrap().len(), 9);
    assert_eq!(doc["random"].as_array().unwrap().len(), 16);
    assert_eq!(doc["schema_version"], "1.0");

    unsafe {
        mlvb_fit_free(fit);
        mlvb_dataset_free(ds);
    }
}

#[test]
fn error_codes() {
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { mlvb_dataset_simulate(ptr::null(), ptr::null_mut()) }, MlvbStatus::NullPointer);
    assert!(last_error().contains("out"));

    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { mlvb_dataset_simulate(bad.as_ptr(), &mut ds) }, MlvbStatus::InvalidInput);
    assert!(ds.is_null());

    let path = CString::new("/definitely/not/here.csv").unwrap();
    let schema = CString::new(r#"{"response":"y","group_id":"g","S":["s"]}"#).unwrap();
    assert_eq!(unsafe { mlvb_dataset_load_csv(path.as_ptr(), schema.as_ptr(), &mut ds) }, MlvbStatus::Io);

    let ds = simulated();
    let unknown = CString::new(r#"{"family":"cauchy"}"#).unwrap();
    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { mlvb_fit(ds, unknown.as_ptr(), ptr::null(), &mut fit) }, MlvbStatus::InvalidInput);
    assert!(last_error().contains("cauchy"));

    assert_eq!(unsafe { mlvb_fit(ds, ptr::null(), ptr::null(), &mut fit) }, MlvbStatus::Ok);
    let mut short = [0.0; 2];
    assert_eq!(unsafe { mlvb_fit_beta(fit, short.as_mut_ptr(), ptr::null_mut(), 2) }, MlvbStatus::BufferSize);
    let mut json = ptr::null();
    assert_eq!(unsafe { mlvb_fit_summary_json(fit, 1.5, &mut json) }, MlvbStatus::InvalidInput);
    assert_eq!(unsafe { mlvb_fit_status(ptr::null(), ptr::null_mut(), ptr::null_mut()) }, MlvbStatus::NullPointer);
    unsafe {
        mlvb_fit_free(fit);
        mlvb_dataset_free(ds);
        mlvb_dataset_free(ptr::null_mut());
    }
}

#[test]
fn csv_load_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let mut text = String::from("g,y,x,s1,s2\n");
    for i in 0..30 {
        let x = (i % 7) as f64 - 3.0;
        let s1 = ((i * 5) % 11) as f64 - 5.0;
        let s2 = ((i * 3) % 13) as f64 - 6.0;
        text += &format!("{},{},{x},{s1},{s2}\n", i % 5, 1.0 + x + 2.0 * s1 + 0.1 * ((i * 7) % 3) as f64);
    }
    std::fs::write(&path, text).unwrap();
    let p = CString::new(path.to_str().unwrap()).unwrap();
    let schema = CString::new(r#"{"response":"y","group_id":"g","R":["x"],"S":["s1","s2"]}"#).unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { mlvb_dataset_load_csv(p.as_ptr(), schema.as_ptr(), &mut ds) }, MlvbStatus::Ok);
    let (mut pp, mut m, mut n) = (0, 0, 0);
    unsafe { mlvb_dataset_dims(ds, &mut pp, &mut m, &mut n) };
    assert_eq!((pp, m, n), (4, 5, 30));
    unsafe { mlvb_dataset_free(ds) };
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(mlvb_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api_and_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/mlvb.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in [
        "mlvb_last_error",
        "mlvb_dataset_load_csv",
        "mlvb_dataset_simulate",
        "mlvb_dataset_dims",
        "mlvb_fit(",
        "mlvb_fit_beta",
        "mlvb_fit_select",
        "mlvb_fit_summary_json",
        "mlvb_fit_free",
        "typedef struct MlvbFit MlvbFit",
        "MLVB_STATUS_NUMERICAL = 4",
    ] {
        assert!(text.contains(f), "header lacks {f}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"mlvb.h\"\nint main(void) { MlvbDataset *d = 0; MlvbStatus s = mlvb_dataset_simulate(0, &d); mlvb_dataset_free(d); return s == MLVB_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    match std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include])
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler on PATH; syntax check skipped"),
    }
}
