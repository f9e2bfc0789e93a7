use std::ffi::CStr;
use std::ptr;

use otdiff_ffi::*;

fn last_error() -> String {
    let p = otdiff_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn circle(n: usize) -> Vec<f64> {
    (0..n)
        .flat_map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            [t.cos(), t.sin()]
        })
        .collect()
}

#[test]
fn gaussian_pipeline() {
    let n = 32;
    let pos = circle(n);
    let mut op = ptr::null_mut();
    unsafe {
        assert_eq!(otdiff_operator_gaussian(2, n, pos.as_ptr(), ptr::null(), 0.4, &mut op), OtdiffStatus::Ok);
        let mut len = 0;
        assert_eq!(otdiff_operator_len(op, &mut len), OtdiffStatus::Ok);
        assert_eq!(len, n);

        let mut diff = ptr::null_mut();
        let mut info = OtdiffSinkhornInfo::default();
        assert_eq!(otdiff_sinkhorn(op, 1e-12, 1000, 0, &mut diff, &mut info), OtdiffStatus::Ok);
        assert_eq!(info.converged, 1);

        let mut scales = vec![0.0; n];
        assert_eq!(otdiff_diffusion_log_scales(diff, scales.as_mut_ptr()), OtdiffStatus::Ok);
        let spread = scales.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - scales.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-10);

        let mut f = vec![0.0; n];
        f[3] = 1.0;
        let mut out = vec![0.0; n];
        assert_eq!(otdiff_diffusion_apply(diff, f.as_ptr(), 1, 4, out.as_mut_ptr()), OtdiffStatus::Ok);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(out.iter().all(|v| *v >= 0.0));

        let k = 3;
        let mut values = vec![0.0; k];
        let mut vectors = vec![0.0; n * k];
        let mut residuals = vec![0.0; k];
        assert_eq!(
            otdiff_top_eigenpairs(diff, k, 1e-10, 5000, 0, values.as_mut_ptr(), vectors.as_mut_ptr(), residuals.as_mut_ptr()),
            OtdiffStatus::Ok
        );
        assert!((values[0] - 1.0).abs() < 1e-9);
        assert!((values[1] - values[2]).abs() < 1e-9);
        assert!(residuals.iter().all(|r| *r < 1e-8));

        otdiff_diffusion_free(diff);
        otdiff_operator_free(op);
    }
}

#[test]
fn matvec_matches_closed_form() {
    // Two points at distance sigma, unit masses.
    let pos = [0.0, 1.0];
    let masses = [1.0, 1.0];
    let mut op = ptr::null_mut();
    unsafe {
        assert_eq!(otdiff_operator_gaussian(1, 2, pos.as_ptr(), masses.as_ptr(), 1.0, &mut op), OtdiffStatus::Ok);
        let f = [1.0, 0.0];
        let mut out = [0.0; 2];
        assert_eq!(otdiff_operator_matvec(op, f.as_ptr(), 1, out.as_mut_ptr()), OtdiffStatus::Ok);
        assert_eq!(out[0], 1.0);
        assert!((out[1] - (-0.5f64).exp()).abs() < 1e-15);
        otdiff_operator_free(op);
    }
}

#[test]
fn other_modalities() {
    unsafe {
        let (ei, ej, w) = ([0usize, 0, 0], [1usize, 2, 3], [1.0, 1.0, 1.0]);
        let mut op = ptr::null_mut();
        assert_eq!(
            otdiff_operator_graph(4, 3, ei.as_ptr(), ej.as_ptr(), w.as_ptr(), ptr::null(), 0.0, &mut op),
            OtdiffStatus::Ok
        );
        let mut diff = ptr::null_mut();
        assert_eq!(otdiff_sinkhorn(op, 1e-12, 10_000, 0, &mut diff, ptr::null_mut()), OtdiffStatus::Ok);
        let f = [1.0, 0.0, 0.0, 0.0];
        let mut out = [0.0; 4];
        assert_eq!(otdiff_diffusion_apply(diff, f.as_ptr(), 1, 1, out.as_mut_ptr()), OtdiffStatus::Ok);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        otdiff_diffusion_free(diff);
        otdiff_operator_free(op);

        let (weights, means, covs) = ([1.0, 1.0], [0.0, 1.0], [0.02, 0.02]);
        assert_eq!(
            otdiff_operator_gmm(1, 2, weights.as_ptr(), means.as_ptr(), covs.as_ptr(), 0.2, &mut op),
            OtdiffStatus::Ok
        );
        let mut out = [0.0; 2];
        assert_eq!(otdiff_operator_matvec(op, [0.0, 1.0].as_ptr(), 1, out.as_mut_ptr()), OtdiffStatus::Ok);
        assert!((out[0] - (-6.25f64).exp()).abs() < 1e-15);
        otdiff_operator_free(op);

        let dims = [2usize, 2, 2];
        let origin = [0.0; 3];
        let idx = [0usize, 0, 0, 1, 1, 1];
        assert_eq!(
            otdiff_operator_voxel(dims.as_ptr(), origin.as_ptr(), 1.0, 2, idx.as_ptr(), ptr::null(), 1.0, &mut op),
            OtdiffStatus::Ok
        );
        let mut len = 0;
        otdiff_operator_len(op, &mut len);
        assert_eq!(len, 2);
        otdiff_operator_free(op);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut op = ptr::null_mut();
        let pos = [0.0, 1.0];
        assert_eq!(otdiff_operator_gaussian(1, 2, pos.as_ptr(), ptr::null(), -1.0, &mut op), OtdiffStatus::Value);
        assert!(op.is_null());
        assert!(last_error().contains("sigma"));

        assert_eq!(otdiff_operator_gaussian(1, 2, ptr::null(), ptr::null(), 1.0, &mut op), OtdiffStatus::NullPointer);
        assert!(last_error().contains("positions"));

        // Disconnected graph without regularizer.
        let (ei, ej, w) = ([0usize, 2], [1usize, 3], [1.0, 1.0]);
        assert_eq!(
            otdiff_operator_graph(4, 2, ei.as_ptr(), ej.as_ptr(), w.as_ptr(), ptr::null(), 0.0, &mut op),
            OtdiffStatus::Ok
        );
        let mut diff = ptr::null_mut();
        assert_eq!(otdiff_sinkhorn(op, 1e-8, 100, 0, &mut diff, ptr::null_mut()), OtdiffStatus::Numerical);
        assert!(diff.is_null());
        assert_eq!(otdiff_sinkhorn(op, 1e-8, 100, 1, &mut diff, ptr::null_mut()), OtdiffStatus::Numerical);
        otdiff_operator_free(op);

        let (ei, ej, w) = ([0usize], [0usize], [1.0]);
        assert_eq!(
            otdiff_operator_graph(2, 1, ei.as_ptr(), ej.as_ptr(), w.as_ptr(), ptr::null(), 0.0, &mut op),
            OtdiffStatus::Format
        );
        otdiff_operator_free(ptr::null_mut());
        otdiff_diffusion_free(ptr::null_mut());
        assert!(!otdiff_version().is_null());
    }
}

#[test]
fn log_domain_needs_pairwise_kernel() {
    unsafe {
        let dims = [2usize, 1, 1];
        let origin = [0.0; 3];
        let idx = [0usize, 0, 0, 1, 0, 0];
        let mut op = ptr::null_mut();
        assert_eq!(
            otdiff_operator_voxel(dims.as_ptr(), origin.as_ptr(), 1.0, 2, idx.as_ptr(), ptr::null(), 1.0, &mut op),
            OtdiffStatus::Ok
        );
        let mut diff = ptr::null_mut();
        assert_eq!(otdiff_sinkhorn(op, 1e-8, 100, 1, &mut diff, ptr::null_mut()), OtdiffStatus::Capability);
        otdiff_operator_free(op);
    }
}
