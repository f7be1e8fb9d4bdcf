use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use sotl_ffi::*;

/// Noiseless two-group problem with target coefficients (3, −2, 0, 0, 0, 0).
fn sample_groups() -> Vec<(usize, usize, Vec<f64>, Vec<f64>)> {
    let p = 6;
    let mut out = Vec::new();
    for (g, n) in [(0usize, 20usize), (1, 25)] {
        let mut x = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let row: Vec<f64> = (0..p)
                .map(|j| (((i * 7 + j * 13 + g * 5) % 17) as f64 - 8.0) / 4.0 + 0.01 * (i * j) as f64)
                .collect();
            y.push(3.0 * row[0] - 2.0 * row[1]);
            x.extend(row);
        }
        out.push((n, p, x, y));
    }
    out
}

unsafe fn build_problem() -> *mut SotlProblem {
    let problem = sotl_problem_new();
    for (n, p, x, y) in sample_groups() {
        assert_eq!(sotl_problem_add_group(problem, n, p, x.as_ptr(), y.as_ptr()), SotlStatus::Ok);
    }
    problem
}

#[test]
fn sotl_fit_round_trip() {
    unsafe {
        let problem = build_problem();
        let mut count = 0;
        assert_eq!(sotl_problem_group_count(problem, &mut count), SotlStatus::Ok);
        assert_eq!(count, 2);
        assert_eq!(sotl_problem_set_target(problem, 0), SotlStatus::Ok);

        let mut fit = ptr::null_mut();
        assert_eq!(sotl_fit_sotl(problem, 6, &mut fit), SotlStatus::Ok);
        assert!(!fit.is_null());

        let mut len = 0;
        assert_eq!(sotl_fit_beta_len(fit, &mut len), SotlStatus::Ok);
        assert_eq!(len, 6);
        let mut beta = vec![f64::NAN; len];
        assert_eq!(sotl_fit_copy_beta(fit, beta.as_mut_ptr(), len), SotlStatus::Ok);
        assert!((beta[0] - 3.0).abs() < 1e-8 && (beta[1] + 2.0).abs() < 1e-8, "{beta:?}");
        assert!(beta[2..].iter().all(|&b| b == 0.0));

        let mut gamma = 0;
        assert_eq!(sotl_fit_gamma_opt(fit, &mut gamma), SotlStatus::Ok);
        assert_eq!(gamma, 2);

        let mut json = ptr::null_mut();
        assert_eq!(sotl_fit_to_json(fit, &mut json), SotlStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        sotl_string_free(json);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["gamma_opt"], 2);
        assert_eq!(value["method"], "sotl");

        sotl_fit_free(fit);
        sotl_problem_free(problem);
    }
}

#[test]
fn sjets_fit_is_seed_deterministic() {
    unsafe {
        let problem = build_problem();
        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(sotl_fit_sjets(problem, 4, &mut a), SotlStatus::Ok);
        assert_eq!(sotl_fit_sjets(problem, 4, &mut b), SotlStatus::Ok);
        let mut ba = vec![0.0; 6];
        let mut bb = vec![0.0; 6];
        sotl_fit_copy_beta(a, ba.as_mut_ptr(), 6);
        sotl_fit_copy_beta(b, bb.as_mut_ptr(), 6);
        assert_eq!(ba, bb);
        sotl_fit_free(a);
        sotl_fit_free(b);
        sotl_problem_free(problem);
    }
}

#[test]
fn error_codes_and_messages() {
    unsafe {
        let mut fit = ptr::null_mut();
        assert_eq!(sotl_fit_sotl(ptr::null(), 0, &mut fit), SotlStatus::NullPointer);
        assert!(last_error().unwrap().contains("null"));

        let problem = sotl_problem_new();
        assert_eq!(sotl_fit_sotl(problem, 0, &mut fit), SotlStatus::InvalidArgument);
        assert!(fit.is_null());
        assert!(last_error().is_some());

        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 2.0];
        assert_eq!(sotl_problem_add_group(problem, 2, 2, x.as_ptr(), y.as_ptr()), SotlStatus::Ok);
        assert!(last_error().is_none());
        assert_eq!(
            sotl_problem_add_group(problem, 1, 4, x.as_ptr(), y.as_ptr()),
            SotlStatus::DimensionMismatch
        );
        assert_eq!(sotl_problem_set_target(problem, 3), SotlStatus::InvalidArgument);
        let bad = [f64::NAN, 0.0];
        assert_eq!(
            sotl_problem_add_group(problem, 1, 2, bad.as_ptr(), y.as_ptr()),
            SotlStatus::InvalidArgument
        );
        assert_eq!(sotl_fit_sotl(problem, 99, &mut fit), SotlStatus::InvalidArgument);

        let mut small = [0.0; 1];
        let full = build_problem();
        assert_eq!(sotl_fit_sotl(full, 0, &mut fit), SotlStatus::Ok);
        assert_eq!(sotl_fit_copy_beta(fit, small.as_mut_ptr(), 1), SotlStatus::DimensionMismatch);
        sotl_fit_free(fit);
        sotl_problem_free(full);
        sotl_problem_free(problem);
        sotl_problem_free(ptr::null_mut());
        sotl_fit_free(ptr::null_mut());
    }
}

#[test]
fn hbic_through_the_abi() {
    unsafe {
        let mut h = 0.0;
        assert_eq!(sotl_hbic(100, 1200, 10, 25.0, &mut h), SotlStatus::Ok);
        assert!((h + 0.3033).abs() < 1e-3);
        assert_eq!(sotl_hbic(2, 10, 1, 1.0, &mut h), SotlStatus::InvalidArgument);
        assert_eq!(sotl_hbic(10, 10, 1, 1.0, ptr::null_mut()), SotlStatus::NullPointer);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(sotl_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_compiles_as_c() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include").join("sotl.h");
    assert!(header.exists(), "header missing at {}", header.display());
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in ["sotl_problem_new", "sotl_fit_sotl", "sotl_fit_sjets", "sotl_last_error_message", "SOTL_STATUS_PANIC"] {
        assert!(text.contains(symbol), "{symbol} not exported");
    }

    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping compile check");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        "#include \"sotl.h\"\nint main(void) {\n  SotlProblem *p = sotl_problem_new();\n  SotlStatus s = sotl_problem_set_target(p, 0);\n  sotl_problem_free(p);\n  return s == SOTL_STATUS_INVALID_ARGUMENT ? 0 : 1;\n}\n",
    )
    .unwrap();
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc);
        }
    }
    Err(())
}
