use std::ffi::CStr;
use std::ptr;

use impactlab_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(impactlab_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn reference() -> *mut ImpactlabModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { impactlab_model_reference(&mut m) }, ImpactlabStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(impactlab_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn psi_through_the_abi_matches_the_library() {
    let m = reference();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { impactlab_psi(m, 500, &mut d) }, ImpactlabStatus::Ok);
    let len = unsafe { impactlab_density_len(d) };
    assert_eq!(len, 501);
    let mut buf = vec![0.0; len];
    assert_eq!(
        unsafe { impactlab_density_values(d, buf.as_mut_ptr(), len) },
        ImpactlabStatus::Ok
    );
    let direct = impactlab::stationary::psi(&impactlab::ModelParams::reference(), 500).unwrap();
    assert_eq!(buf, direct.values);
    let mut wing = 0.0;
    assert_eq!(unsafe { impactlab_density_wing(d, &mut wing) }, ImpactlabStatus::Ok);
    assert_eq!(wing, direct.wing());
    let mut small = vec![0.0; 10];
    assert_eq!(
        unsafe { impactlab_density_values(d, small.as_mut_ptr(), small.len()) },
        ImpactlabStatus::BufferTooSmall
    );
    assert!(last_error().contains("need 501"));
    unsafe {
        impactlab_density_free(d);
        impactlab_model_free(m);
    }
}

#[test]
fn chi_and_f_handles() {
    let m = reference();
    let (mut c, mut f) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { impactlab_chi(m, 0.2, 200, &mut c) }, ImpactlabStatus::Ok);
    assert_eq!(
        unsafe { impactlab_stationary_f(m, 0.0, 200, &mut f) },
        ImpactlabStatus::Ok
    );
    let (mut wc, mut wf) = (0.0, 0.0);
    unsafe {
        impactlab_density_wing(c, &mut wc);
        impactlab_density_wing(f, &mut wf);
    }
    assert!(wc < wf);
    unsafe {
        impactlab_density_free(c);
        impactlab_density_free(f);
        impactlab_model_free(m);
    }
}

#[test]
fn impact_and_resilience_curves() {
    let m = reference();
    let q = [0.0, 0.05, 0.1];
    let mut out = [f64::NAN; 3];
    assert_eq!(
        unsafe { impactlab_impact_curve(m, 0.2, q.as_ptr(), q.len(), 200, out.as_mut_ptr()) },
        ImpactlabStatus::Ok
    );
    assert_eq!(out[0], 0.0);
    assert!(out[1] > 0.0 && out[2] > out[1]);
    let mut r = [f64::NAN; 3];
    assert_eq!(
        unsafe { impactlab_resilience_curve(m, 0.2, q.as_ptr(), q.len(), 200, r.as_mut_ptr()) },
        ImpactlabStatus::Ok
    );
    assert_eq!(r[0], 0.0);
    assert!(r[2] < 0.0);
    let bad = [0.1, 0.05];
    assert_eq!(
        unsafe { impactlab_impact_curve(m, 0.2, bad.as_ptr(), 2, 200, out.as_mut_ptr()) },
        ImpactlabStatus::InvalidArgument
    );
    assert!(!last_error().is_empty());
    unsafe { impactlab_model_free(m) };
}

#[test]
fn coefficients_at_the_midpoint() {
    let m = reference();
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    assert_eq!(
        unsafe { impactlab_model_coefficients(m, 1.0, 0.5, &mut a, &mut b, &mut c) },
        ImpactlabStatus::Ok
    );
    // symmetric book: no market drift, meta-order drift α at full participation
    assert!(a.abs() < 1e-12);
    assert!((b - 10.0).abs() < 1e-12);
    assert!(c > 0.0);
    assert_eq!(
        unsafe { impactlab_model_coefficients(m, 0.0, 0.5, &mut a, &mut b, &mut c) },
        ImpactlabStatus::InvalidArgument
    );
    unsafe { impactlab_model_free(m) };
}

#[test]
fn invalid_inputs_map_to_status_codes() {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { impactlab_model_uniform(1.2, 10.0, 1.0, 1.5, 1.0, &mut m) },
        ImpactlabStatus::InvalidArgument
    );
    assert!(m.is_null());
    assert!(last_error().contains("theta"));
    assert_eq!(
        unsafe { impactlab_model_reference(ptr::null_mut()) },
        ImpactlabStatus::NullPointer
    );
    let mut d = ptr::null_mut();
    assert_eq!(
        unsafe { impactlab_psi(ptr::null(), 100, &mut d) },
        ImpactlabStatus::NullPointer
    );
    assert_eq!(unsafe { impactlab_density_len(ptr::null()) }, 0);
    unsafe {
        impactlab_model_free(ptr::null_mut());
        impactlab_density_free(ptr::null_mut());
    }
}

#[test]
fn too_small_grid_is_rejected() {
    let m = reference();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { impactlab_psi(m, 4, &mut d) }, ImpactlabStatus::InvalidArgument);
    unsafe { impactlab_model_free(m) };
}

#[test]
fn bin_masses_conserve_volume() {
    let mut out = [0.0; 10];
    assert_eq!(
        unsafe { impactlab_continuous_bin_masses(1, 500.0, 500.0, 500.0, 10, out.as_mut_ptr()) },
        ImpactlabStatus::Ok
    );
    assert!((out.iter().sum::<f64>() - 500.0).abs() < 1e-9);
    assert!(out[..5].iter().all(|&v| v == 0.0));
    assert_eq!(
        unsafe { impactlab_continuous_bin_masses(0, 10.0, 500.0, 50.0, 10, out.as_mut_ptr()) },
        ImpactlabStatus::InvalidArgument
    );
}

/// The generated header compiles as C and C++ when a compiler is present.
#[test]
fn header_compiles() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/impactlab.h");
    assert!(std::path::Path::new(header).exists());
    for (cc, lang) in [("cc", "c"), ("c++", "c++")] {
        let status = std::process::Command::new(cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, header])
            .status();
        match status {
            Ok(s) => assert!(s.success(), "{cc} rejected the header"),
            Err(_) => eprintln!("{cc} not found; skipping"),
        }
    }
}
