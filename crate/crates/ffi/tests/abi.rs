use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use fairadj_ffi::*;

struct Arrays {
    x: Vec<f64>,
    y: Vec<f64>,
    p: Vec<u8>,
    n: usize,
    d: usize,
}

/// Deterministic two-group classification data; group 1 is shifted down and
/// its indicator is the last feature.
fn arrays(n: usize) -> Arrays {
    let d = 4;
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    for i in 0..n {
        let g = (i % 3 == 0) as u8;
        let a = ((i * 7919) % 101) as f64 / 50.0 - 1.0;
        let b = ((i * 104729) % 89) as f64 / 44.0 - 1.0;
        let c = ((i * 31) % 17) as f64 / 8.0 - 1.0;
        x.extend([a, b, c, g as f64]);
        let score = 1.5 * a - b + 0.3 * c - 1.5 * g as f64 + if i % 5 == 0 { 0.9 } else { 0.0 };
        y.push((score > 0.0) as u8 as f64);
        p.push(g);
    }
    Arrays { x, y, p, n, d }
}

fn last_error() -> String {
    let p = fa_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn dataset(a: &Arrays) -> *mut FaDataset {
    let mut ds = ptr::null_mut();
    let s = unsafe {
        fa_dataset_new(a.x.as_ptr(), a.n, a.d, a.y.as_ptr(), a.p.as_ptr(), 1, FA_TASK_CLASSIFICATION, &mut ds)
    };
    assert_eq!(s, FaStatus::Ok);
    ds
}

fn options(rounds: usize, lambda: f64) -> FaTrainOptions {
    let mut o = std::mem::MaybeUninit::uninit();
    assert_eq!(unsafe { fa_train_options_default(FA_TASK_CLASSIFICATION, o.as_mut_ptr()) }, FaStatus::Ok);
    let mut o = unsafe { o.assume_init() };
    o.rounds = rounds;
    o.lambda = lambda;
    o
}

#[test]
fn train_predict_save_load() {
    let a = arrays(300);
    let ds = dataset(&a);
    assert_eq!(unsafe { fa_dataset_rows(ds) }, 300);
    assert_eq!(unsafe { fa_dataset_cols(ds) }, 4);
    let opts = options(40, 5.0);
    let (mut f, mut h, mut g) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(fa_train_baseline(ds, &opts, &mut f), FaStatus::Ok);
        assert_eq!(fa_train_joint(ds, &opts, &mut h), FaStatus::Ok);
        assert_eq!(fa_train_adjuster(f, ds, &opts, &mut g), FaStatus::Ok);
        assert_eq!(fa_model_n_features(f), 4);
        assert_eq!(fa_model_task(g), FA_TASK_CLASSIFICATION);
    }

    let mut base = vec![0.0; a.n];
    let mut adj = vec![0.0; a.n];
    let mut off = vec![0.0; a.n];
    unsafe {
        assert_eq!(fa_model_predict(f, a.x.as_ptr(), a.n, a.d, base.as_mut_ptr()), FaStatus::Ok);
        assert_eq!(fa_model_predict(g, a.x.as_ptr(), a.n, a.d, off.as_mut_ptr()), FaStatus::Ok);
        assert_eq!(
            fa_model_predict_adjusted(f, g, a.x.as_ptr(), a.n, a.d, adj.as_mut_ptr()),
            FaStatus::Ok
        );
    }
    for i in 0..a.n {
        assert_eq!(adj[i], base[i] + off[i]);
    }

    let mut eb = std::mem::MaybeUninit::uninit();
    let mut ea = std::mem::MaybeUninit::uninit();
    unsafe {
        fa_evaluate(base.as_ptr(), a.y.as_ptr(), a.p.as_ptr(), a.n, 1, eb.as_mut_ptr());
        fa_evaluate(adj.as_ptr(), a.y.as_ptr(), a.p.as_ptr(), a.n, 1, ea.as_mut_ptr());
    }
    let (eb, ea) = unsafe { (eb.assume_init(), ea.assume_init()) };
    assert!(eb.accuracy > 0.8, "baseline accuracy {}", eb.accuracy);
    assert!(
        (ea.disparate_impact - 1.0).abs() < (eb.disparate_impact - 1.0).abs(),
        "adjusted DI {} vs baseline {}",
        ea.disparate_impact,
        eb.disparate_impact
    );

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("g.json").to_str().unwrap()).unwrap();
    let mut loaded = ptr::null_mut();
    let mut again = vec![0.0; a.n];
    unsafe {
        assert_eq!(fa_model_save(g, path.as_ptr()), FaStatus::Ok);
        assert_eq!(fa_model_load(path.as_ptr(), &mut loaded), FaStatus::Ok);
        fa_model_predict(loaded, a.x.as_ptr(), a.n, a.d, again.as_mut_ptr());
    }
    assert_eq!(again, off);

    unsafe {
        for m in [f, h, g, loaded] {
            fa_model_free(m);
        }
        fa_dataset_free(ds);
    }
}

#[test]
fn error_codes() {
    let a = arrays(30);
    let mut ds = ptr::null_mut();
    unsafe {
        let s = fa_dataset_new(ptr::null(), a.n, a.d, a.y.as_ptr(), a.p.as_ptr(), 1, FA_TASK_CLASSIFICATION, &mut ds);
        assert_eq!(s, FaStatus::NullPointer);
        assert!(ds.is_null());
        assert_eq!(last_error(), "x is null");

        let s = fa_dataset_new(a.x.as_ptr(), a.n, a.d, a.y.as_ptr(), a.p.as_ptr(), 1, 9, &mut ds);
        assert_eq!(s, FaStatus::InvalidArgument);

        let mut bad = a.y.clone();
        bad[4] = 0.5;
        let s = fa_dataset_new(a.x.as_ptr(), a.n, a.d, bad.as_ptr(), a.p.as_ptr(), 1, FA_TASK_CLASSIFICATION, &mut ds);
        assert_eq!(s, FaStatus::Data);

        let one_group = vec![0u8; a.n];
        let s = fa_dataset_new(
            a.x.as_ptr(),
            a.n,
            a.d,
            a.y.as_ptr(),
            one_group.as_ptr(),
            1,
            FA_TASK_CLASSIFICATION,
            &mut ds,
        );
        assert_eq!(s, FaStatus::Data);
        assert!(last_error().contains("protected"));
    }

    let ds = dataset(&a);
    let mut m = ptr::null_mut();
    unsafe {
        let mut opts = options(5, 1.0);
        opts.task = FA_TASK_REGRESSION;
        assert_eq!(fa_train_baseline(ds, &opts, &mut m), FaStatus::InvalidArgument);
        let mut opts = options(5, -1.0);
        assert_eq!(fa_train_joint(ds, &opts, &mut m), FaStatus::InvalidArgument);
        opts.lambda = 1.0;
        opts.penalty = 42;
        assert_eq!(fa_train_joint(ds, &opts, &mut m), FaStatus::InvalidArgument);
        assert_eq!(fa_train_adjuster(ptr::null(), ds, &options(5, 1.0), &mut m), FaStatus::NullPointer);
        assert!(m.is_null());

        assert_eq!(fa_train_baseline(ds, &options(5, 0.0), &mut m), FaStatus::Ok);
        let mut out = vec![0.0; 2];
        let x = [0.0; 4];
        assert_eq!(fa_model_predict(m, x.as_ptr(), 2, 2, out.as_mut_ptr()), FaStatus::Data);

        let missing = CString::new("/nonexistent/model.json").unwrap();
        let mut loaded = ptr::null_mut();
        assert_eq!(fa_model_load(missing.as_ptr(), &mut loaded), FaStatus::Io);

        let dir = tempfile::tempdir().unwrap();
        let junk = dir.path().join("junk.json");
        std::fs::write(&junk, "{\"format\": \"other\"}").unwrap();
        let junk = CString::new(junk.to_str().unwrap()).unwrap();
        assert_eq!(fa_model_load(junk.as_ptr(), &mut loaded), FaStatus::ModelFormat);

        let name = CString::new("no-such-dataset").unwrap();
        let mut d2 = ptr::null_mut();
        assert_eq!(fa_dataset_load(ptr::null(), name.as_ptr(), &mut d2), FaStatus::Data);

        fa_model_free(m);
        fa_dataset_free(ds);
        fa_model_free(ptr::null_mut());
        fa_dataset_free(ptr::null_mut());
        assert_eq!(fa_dataset_rows(ptr::null()), 0);
    }
}

#[test]
fn loads_shipped_dataset() {
    let name = CString::new("german").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { fa_dataset_load(ptr::null(), name.as_ptr(), &mut ds) }, FaStatus::Ok);
    let (n, d) = unsafe { (fa_dataset_rows(ds), fa_dataset_cols(ds)) };
    assert_eq!(n, 1000);
    let mut x = vec![f64::NAN; n * d];
    assert_eq!(unsafe { fa_dataset_features(ds, x.as_mut_ptr()) }, FaStatus::Ok);
    assert!(x.iter().all(|v| v.is_finite()));
    unsafe { fa_dataset_free(ds) };
}

const C_PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "fairadj.h"

int main(void) {
    double x[40 * 2], y[40];
    uint8_t p[40];
    for (int i = 0; i < 40; i++) {
        x[2 * i] = (i % 10) / 5.0 - 1.0;
        x[2 * i + 1] = (i % 7) / 3.5 - 1.0;
        p[i] = i % 2;
        y[i] = x[2 * i] + 0.3 * x[2 * i + 1] - 0.4 * p[i] > 0 ? 1.0 : 0.0;
    }
    FaDataset *ds = NULL;
    if (fa_dataset_new(x, 40, 2, y, p, 1, FA_TASK_CLASSIFICATION, &ds) != FA_STATUS_OK) return 1;
    FaTrainOptions o;
    fa_train_options_default(FA_TASK_CLASSIFICATION, &o);
    o.rounds = 10;
    FaModel *m = NULL;
    if (fa_train_baseline(ds, &o, &m) != FA_STATUS_OK) return 2;
    double s[40];
    if (fa_model_predict(m, x, 40, 2, s) != FA_STATUS_OK) return 3;
    FaEvaluation e;
    fa_evaluate(s, y, p, 40, 1, &e);
    if (fa_model_predict(m, x, 40, 3, s) != FA_STATUS_DATA || fa_last_error() == NULL) return 4;
    printf("%s %.3f\n", fa_version(), e.accuracy);
    fa_model_free(m);
    fa_dataset_free(ds);
    return e.accuracy > 0.7 ? 0 : 5;
}
"#;

/// Compiles a C program against the generated header and the static library.
#[test]
fn header_compiles_and_links_from_c() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    let lib = lib_dir.join("libfairadj_ffi.a");
    if !lib.exists() {
        eprintln!("static library not built at {}; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = dir.path().join("main");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with(env!("CARGO_PKG_VERSION")), "{stdout}");
}
