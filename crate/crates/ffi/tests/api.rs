use std::ffi::{c_char, c_int, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use sdom_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = sdom_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const GRID: &str = r#"{"n":1,"L":6,"origin":[0.0],"side":1.0}"#;

struct Setup {
    grid: *mut SdomGrid,
    kernel: *mut SdomKernel,
    fs: Vec<*mut SdomFunction>,
}

impl Setup {
    fn bilinear() -> Setup {
        let mut grid = ptr::null_mut();
        let mut kernel = ptr::null_mut();
        unsafe {
            assert_eq!(
                sdom_grid_from_json(c(GRID).as_ptr(), &mut grid),
                SdomStatus::Ok
            );
            let k = c(r#"{"variant":"BilinearOddHomogeneous","m":2}"#);
            assert_eq!(
                sdom_kernel_from_json(k.as_ptr(), &mut kernel),
                SdomStatus::Ok
            );
            assert_eq!(sdom_kernel_m(kernel), 2);
        }
        let n = unsafe { sdom_grid_num_cells(grid) };
        assert_eq!(n, 64);
        let fs = [(17usize, 22usize), (20, 31)]
            .iter()
            .map(|&(lo, hi)| {
                let v: Vec<f64> = (0..n)
                    .map(|i| {
                        if (lo..hi).contains(&i) {
                            1.0 + 0.1 * i as f64
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let mut f = ptr::null_mut();
                let st = unsafe { sdom_function_new(grid, v.as_ptr(), v.len(), &mut f) };
                assert_eq!(st, SdomStatus::Ok);
                f
            })
            .collect();
        Setup { grid, kernel, fs }
    }

    fn inputs(&self) -> Vec<*const SdomFunction> {
        self.fs.iter().map(|&f| f as *const _).collect()
    }
}

impl Drop for Setup {
    fn drop(&mut self) {
        unsafe {
            for &f in &self.fs {
                sdom_function_free(f);
            }
            sdom_kernel_free(self.kernel);
            sdom_grid_free(self.grid);
        }
    }
}

#[test]
fn build_serialize_and_dominate() {
    let s = Setup::bilinear();
    let fs = s.inputs();
    let root = c(r#"{"level":2,"index":[1]}"#);
    let mut family = ptr::null_mut();
    let st = unsafe {
        sdom_build_family(
            s.kernel,
            s.grid,
            fs.as_ptr(),
            2,
            root.as_ptr(),
            2.0,
            SdomMode::Dyadic as c_int,
            &mut family,
        )
    };
    assert_eq!(
        st,
        SdomStatus::Ok,
        "{}",
        if st == SdomStatus::Ok {
            String::new()
        } else {
            last_error()
        }
    );
    let len = unsafe { sdom_family_len(family) };
    assert!(len >= 1);

    let mut json: *mut c_char = ptr::null_mut();
    assert_eq!(
        unsafe { sdom_family_to_json(family, &mut json) },
        SdomStatus::Ok
    );
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { sdom_string_free(json) };
    let core = sdom_core::sparse::SparseFamily::from_json(&text).unwrap();
    assert_eq!(core.len(), len);

    let mut again = ptr::null_mut();
    assert_eq!(
        unsafe { sdom_family_from_json(c(&text).as_ptr(), &mut again) },
        SdomStatus::Ok
    );
    let (mut c1, mut c2, mut flag) = (0.0, 0.0, -1);
    unsafe {
        assert_eq!(
            sdom_domination_constant(
                s.kernel,
                s.grid,
                fs.as_ptr(),
                2,
                family,
                2.0,
                &mut c1,
                &mut flag
            ),
            SdomStatus::Ok
        );
        assert_eq!(
            sdom_domination_constant(
                s.kernel,
                s.grid,
                fs.as_ptr(),
                2,
                again,
                2.0,
                &mut c2,
                &mut flag
            ),
            SdomStatus::Ok
        );
        sdom_family_free(family);
        sdom_family_free(again);
    }
    assert!(c1.is_finite() && c1 > 0.0);
    assert_eq!(c1, c2);
    assert_eq!(flag, 0);
}

#[test]
fn function_round_trip_and_values() {
    let s = Setup::bilinear();
    let mut buf = vec![0.0; 8];
    let mut count = 0;
    assert_eq!(
        unsafe { sdom_function_values(s.fs[0], buf.as_mut_ptr(), buf.len(), &mut count) },
        SdomStatus::Ok
    );
    assert_eq!(count, 64);
    assert_eq!(buf[7], 0.0);
    let mut full = vec![0.0; count];
    unsafe { sdom_function_values(s.fs[0], full.as_mut_ptr(), full.len(), &mut count) };
    assert_eq!(full[17], 1.0 + 1.7);

    let json = sdom_core::GridFunction::zeros(&sdom_core::GridSpec::unit(1, 3).unwrap())
        .to_json()
        .unwrap();
    let mut f = ptr::null_mut();
    assert_eq!(
        unsafe { sdom_function_from_json(c(&json).as_ptr(), &mut f) },
        SdomStatus::Ok
    );
    unsafe { sdom_function_values(f, ptr::null_mut(), 0, &mut count) };
    assert_eq!(count, 8);
    unsafe { sdom_function_free(f) };
}

#[test]
fn functionals() {
    let mut grid = ptr::null_mut();
    let mut kernel = ptr::null_mut();
    unsafe {
        sdom_grid_from_json(
            c(r#"{"n":1,"L":10,"origin":[0.0],"side":8.0}"#).as_ptr(),
            &mut grid,
        );
        let k = c(r#"{"variant":"MPTExample","m":1,"beta":1.0,"r":2.0}"#);
        assert_eq!(
            sdom_kernel_from_json(k.as_ptr(), &mut kernel),
            SdomStatus::Ok
        );
    }
    let plan = c(r#"{"kind":"dyadic","min_level":1,"max_level":6,"depth":2}"#);
    let (mut kr, mut h2, mut d) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(
            sdom_hormander_constant(kernel, grid, 2.0, plan.as_ptr(), &mut kr),
            SdomStatus::Ok
        );
        assert_eq!(
            sdom_h2_constant(kernel, grid, 2.0, 1.0, plan.as_ptr(), &mut h2),
            SdomStatus::Ok
        );
        assert_eq!(
            sdom_h2_constant(kernel, grid, 2.0, 0.5, plan.as_ptr(), &mut h2),
            SdomStatus::InvalidArgument
        );
        assert!(last_error().contains("delta"), "{}", last_error());
        let m = c(r#"{"kind":"power","c":1.0,"eps":0.5}"#);
        assert_eq!(sdom_dini_norm(m.as_ptr(), &mut d), SdomStatus::Ok);
        sdom_kernel_free(kernel);
        sdom_grid_free(grid);
    }
    let direct = sdom_core::regularity::hormander_constant(
        &sdom_core::KernelSpec::mpt(1.0, 2.0).unwrap(),
        &sdom_core::GridSpec::new(1, 10, &[0.0], 8.0).unwrap(),
        2.0,
        &sdom_core::regularity::SamplePlan::dyadic(1, 6, 2),
    )
    .unwrap();
    assert_eq!(kr, direct.value);
    assert!((d - 2.0).abs() < 1e-5);
}

#[test]
fn error_codes() {
    let mut grid = ptr::null_mut();
    let mut v = 0.0;
    unsafe {
        assert_eq!(
            sdom_grid_from_json(ptr::null(), &mut grid),
            SdomStatus::NullPointer
        );
        assert!(last_error().contains("json"));
        assert_eq!(
            sdom_grid_from_json(c("{").as_ptr(), &mut grid),
            SdomStatus::Parse
        );
        assert_eq!(
            sdom_grid_from_json(
                c(r#"{"n":3,"L":2,"origin":[0,0,0],"side":1.0}"#).as_ptr(),
                &mut grid
            ),
            SdomStatus::Parse
        );
        assert_eq!(
            sdom_grid_from_json(c(GRID).as_ptr(), ptr::null_mut()),
            SdomStatus::NullPointer
        );
        let bad = [0x66u8, 0xff, 0x00];
        assert_eq!(
            sdom_grid_from_json(bad.as_ptr().cast(), &mut grid),
            SdomStatus::InvalidUtf8
        );
        assert_eq!(
            sdom_dini_norm(c(r#"{"kind":"log","c":1.0,"eps":0.0}"#).as_ptr(), &mut v),
            SdomStatus::NotDini
        );
        assert_eq!(sdom_grid_num_cells(ptr::null()), 0);
        sdom_grid_free(ptr::null_mut());
        sdom_string_free(ptr::null_mut());
    }

    let s = Setup::bilinear();
    let fs = s.inputs();
    let mut family = ptr::null_mut();
    let outside = c(r#"{"level":1,"index":[0]}"#);
    let st = unsafe {
        sdom_build_family(
            s.kernel,
            s.grid,
            fs.as_ptr(),
            2,
            outside.as_ptr(),
            2.0,
            0,
            &mut family,
        )
    };
    assert_eq!(st, SdomStatus::Precondition, "{}", last_error());
    let root = c(r#"{"level":2,"index":[1]}"#);
    let st = unsafe {
        sdom_build_family(
            s.kernel,
            s.grid,
            fs.as_ptr(),
            2,
            root.as_ptr(),
            2.0,
            7,
            &mut family,
        )
    };
    assert_eq!(st, SdomStatus::InvalidArgument);
    assert!(last_error().contains("mode"));
    let st = unsafe {
        sdom_build_family(
            s.kernel,
            s.grid,
            ptr::null(),
            2,
            root.as_ptr(),
            2.0,
            0,
            &mut family,
        )
    };
    assert_eq!(st, SdomStatus::NullPointer);
}

#[test]
fn run_experiment_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = c(dir.path().to_str().unwrap());
    let cfg = c(r#"{"command":"dini","modulus":{"kind":"power","c":1.0,"eps":1.0}}"#);
    let mut code: c_int = -1;
    assert_eq!(
        unsafe { sdom_run_experiment(cfg.as_ptr(), out.as_ptr(), &mut code) },
        SdomStatus::Ok
    );
    assert_eq!(code, 0);
    assert!(dir.path().join("dini.json").exists());

    let bad = c(r#"{"command":"dini"}"#);
    assert_eq!(
        unsafe { sdom_run_experiment(bad.as_ptr(), out.as_ptr(), &mut code) },
        SdomStatus::Usage
    );
    assert_eq!(code, 1);
    assert!(last_error().contains("modulus"));
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(sdom_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_api() {
    let header = std::fs::read_to_string(crate_dir().join("include/sdom.h")).unwrap();
    for item in [
        "typedef struct SdomGrid SdomGrid;",
        "typedef struct SdomFamily SdomFamily;",
        "SDOM_STATUS_NOT_DINI = 6",
        "SDOM_MODE_DYADIC_SHIFTED = 2",
        "sdom_build_family(",
        "sdom_run_experiment(",
        "sdom_last_error(void)",
    ] {
        assert!(header.contains(item), "header lacks {item}");
    }
}

fn static_lib() -> PathBuf {
    // CARGO_TARGET_TMPDIR is <target>/tmp; the library sits in <target>/<profile>.
    let target = Path::new(env!("CARGO_TARGET_TMPDIR"))
        .parent()
        .unwrap()
        .to_path_buf();
    let profile = if cfg!(debug_assertions) {
        "debug"
    } else {
        "release"
    };
    // Test-only builds leave the archive in deps/ without uplifting it.
    let dir = target.join(profile);
    [dir.join("libsdom_ffi.a"), dir.join("deps/libsdom_ffi.a")]
        .into_iter()
        .find(|p| p.exists())
        .unwrap_or_else(|| dir.join("libsdom_ffi.a"))
}

#[test]
fn c_program_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let lib = static_lib();
    assert!(lib.exists(), "{} missing", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let out = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = Command::new(&exe).output().unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("entries="));
}
