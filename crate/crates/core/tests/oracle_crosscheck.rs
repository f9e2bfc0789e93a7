mod common;

use common::*;
use otdiff::geometry::{GaussianComponent, GaussianMixture};
use otdiff::normalize::dirichlet_energy;
use otdiff::oracle::{dense_assemble, dense_generalized_eigs, dense_sinkhorn, DenseMatrix};
use otdiff::*;
use rand::Rng;

fn tight(tol: f64) -> SinkhornOptions {
    SinkhornOptions::default().with_tol(tol).with_max_iter(100_000)
}

#[test]
fn assembled_matrix_reproduces_matvec() {
    for (s, family) in FAMILIES.into_iter().enumerate() {
        let op = random_operator(family, 40, s as u64);
        let dense = dense_assemble(&op).unwrap();
        let mut r = rng(9);
        let f: Vec<f64> = (0..40).map(|_| r.random_range(-1.0..1.0)).collect();
        let a = dense.matvec(&f);
        let b = smatvec(&op, &Signal::from_column(f)).unwrap();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= 1e-14 * scale, "{family}");
        }
    }
}

#[test]
fn kernel_part_is_symmetric() {
    for (s, family) in FAMILIES.into_iter().enumerate() {
        let op = random_operator(family, 64, 40 + s as u64);
        let dense = dense_assemble(&op).unwrap();
        let ones = vec![1.0; 64];
        let inv: Vec<f64> = op.masses().iter().map(|m| 1.0 / m).collect();
        let k = dense.scaled(&ones, &inv);
        assert!(k.symmetry_defect() <= 1e-14 * k.max_abs(), "{family}");
        assert!(k.as_slice().iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn matrix_free_sinkhorn_matches_dense_fixed_point() {
    for (s, family) in FAMILIES.into_iter().enumerate() {
        for n in [16usize, 128] {
            let op = random_operator(family, n, 60 + s as u64);
            let a = sinkhorn_normalize(&op, &tight(1e-13)).unwrap();
            let b = dense_sinkhorn(&dense_assemble(&op).unwrap(), op.masses(), 1e-13).unwrap();
            for (x, y) in a.scales().iter().zip(b.scales()) {
                assert!((x - y).abs() <= 1e-9, "{family} {n}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn bistochastic_input_needs_no_scaling() {
    // Doubly stochastic with unit masses.
    let k = DenseMatrix::from_row_major(3, vec![0.5, 0.25, 0.25, 0.25, 0.5, 0.25, 0.25, 0.25, 0.5]).unwrap();
    let s = dense_sinkhorn(&k, &[1.0; 3], 1e-14).unwrap();
    assert!(s.log_scales.iter().all(|l| l.abs() < 1e-15));
    let op = SmoothingOperator::dense(k, vec![1.0; 3]).unwrap();
    let m = sinkhorn_normalize(&op, &tight(1e-14)).unwrap();
    assert!(m.log_scales.iter().all(|l| l.abs() < 1e-15));
}

#[test]
fn lanczos_matches_jacobi() {
    for (s, family) in FAMILIES.into_iter().enumerate() {
        let op = random_operator(family, 96, 80 + s as u64);
        let diff = DiffusionOperator::normalize(op, &tight(1e-12)).unwrap();
        let k = 6;
        let basis = top_eigenpairs(
            &diff,
            k,
            &EigenOptions {
                solver_tol: 1e-11,
                ..EigenOptions::default()
            },
        )
        .unwrap();
        assert!(basis.converged, "{family}");
        let eig = dense_generalized_eigs(&mass_times(&dense_q(&diff), diff.masses()), diff.masses()).unwrap();
        assert!(eig.relative_residual <= 1e-10);
        for i in 0..k {
            assert!((basis.eigenvalues[i] - eig.values[i]).abs() <= 1e-8, "{family} {i}");
        }
        for g in eigengroups(&eig.values, k, 1e-6) {
            let u: Vec<Vec<f64>> = g.clone().map(|i| basis.vector(i)).collect();
            let v: Vec<Vec<f64>> = g.map(|i| eig.vectors[i].clone()).collect();
            assert!(subspace_sin(&u, &v, diff.masses()) <= 1e-6, "{family}");
        }
    }
}

#[test]
fn leading_pair_is_the_constant() {
    for (s, family) in FAMILIES.into_iter().enumerate() {
        let op = random_operator(family, 50, 120 + s as u64);
        let diff = DiffusionOperator::normalize(op, &tight(1e-12)).unwrap();
        let basis = top_eigenpairs(&diff, 1, &EigenOptions::default()).unwrap();
        assert!((basis.eigenvalues[0] - 1.0).abs() < 1e-9, "{family}");
        let total: f64 = diff.masses().iter().sum();
        let phi = basis.vector(0);
        for v in &phi {
            assert!((v - 1.0 / total.sqrt()).abs() <= 1e-6 / total.sqrt(), "{family}");
        }
    }
}

#[test]
fn eigenvalues_invariant_under_mass_rescaling() {
    let cloud = samples::uniform_cube(80, 2, 5).unwrap();
    let scaled = PointCloud::new(2, cloud.positions().to_vec(), cloud.masses().iter().map(|m| 7.5 * m).collect()).unwrap();
    let values = |c: &PointCloud| {
        let op = build_gaussian_operator(c, 0.15).unwrap();
        let diff = DiffusionOperator::normalize(op, &tight(1e-13)).unwrap();
        top_eigenpairs(&diff, 5, &EigenOptions::default()).unwrap().eigenvalues
    };
    for (a, b) in values(&cloud).iter().zip(values(&scaled)) {
        assert!((a - b).abs() <= 1e-8);
    }
}

#[test]
fn eigenvectors_are_mass_orthonormal() {
    let op = random_operator("exponential", 120, 3);
    let diff = DiffusionOperator::normalize(op, &tight(1e-12)).unwrap();
    let basis = top_eigenpairs(&diff, 10, &EigenOptions::default()).unwrap();
    for i in 0..10 {
        for j in 0..10 {
            let g = m_dot(&basis.vector(i), &basis.vector(j), diff.masses());
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((g - expect).abs() <= 1e-8);
        }
    }
}

/// The mixture kernel omits the determinant factor of the Gaussian L2 product, so mixtures
/// whose covariances are as wide as the kernel radius give an indefinite
/// kernel and the diffusion axioms no longer hold.
#[test]
fn mixture_kernel_is_indefinite_for_wide_covariances() {
    let mut r = rng(102);
    let n = 128;
    let comps = (0..n)
        .map(|_| {
            let mean = vec![r.random::<f64>(), r.random::<f64>(), r.random::<f64>()];
            let a: Vec<f64> = (0..9).map(|_| r.random_range(-0.1..0.1)).collect();
            let mut cov = vec![0.0; 9];
            for i in 0..3 {
                for j in 0..3 {
                    cov[3 * i + j] = (0..3).map(|k| a[3 * i + k] * a[3 * j + k]).sum();
                }
            }
            GaussianComponent {
                weight: 1.0,
                mean,
                covariance: cov,
            }
        })
        .collect();
    let gmm = GaussianMixture::new(3, comps).unwrap();
    let op = build_gmm_operator(&gmm, 0.1).unwrap();
    let s = dense_assemble(&op).unwrap();
    let eig = dense_generalized_eigs(&mass_times(&s, op.masses()), op.masses()).unwrap();
    let lowest = *eig.values.last().unwrap();
    println!("lowest eigenvalue of S: {lowest:.3e}");
    assert!(lowest < -1e-3);
}

#[test]
fn diffusion_damps_dirichlet_energy() {
    // Observed behaviour, reported for the record: the energy of Q f is
    // compared with that of f on a seeded family.
    let mut damped = 0;
    let trials = 10;
    for seed in 0..trials {
        let g = samples::random_geometric_graph(200, 0.2, seed).unwrap();
        let op = build_graph_operator(&g, 0.0).unwrap();
        let diff = DiffusionOperator::normalize(op, &tight(1e-10)).unwrap();
        let mut r = rng(seed);
        let f = Signal::from_column((0..200).map(|_| r.random::<f64>()).collect());
        let before = dirichlet_energy(&g, &f).unwrap()[0];
        let after = dirichlet_energy(&g, &diff.apply(&f).unwrap()).unwrap()[0];
        if after < before {
            damped += 1;
        }
    }
    println!("Dirichlet energy decreased in {damped}/{trials} trials");
}
