//! Dense brute-force references for small problems.
//!
//! Nothing here is fast. These routines exist so that the matrix-free code
//! paths can be checked against explicit matrices: kernel assembly by
//! applying the operator to basis vectors, the Sinkhorn fixed point on an
//! explicit matrix, and a cyclic Jacobi eigensolver for the generalized
//! problem `A phi = lambda M phi`.

use crate::error::{Error, Result};
use crate::normalize::ScalingVector;
use crate::operators::{smatvec, SmoothingOperator};
use crate::signal::Signal;

/// Largest operator [`dense_assemble`] accepts.
pub const MAX_ASSEMBLE: usize = 4096;
/// Largest problem [`dense_generalized_eigs`] accepts.
pub const MAX_JACOBI: usize = 512;

/// Square row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Shape {
                expected: n * n,
                actual: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::value("dense matrix entries must be finite"));
        }
        Ok(DenseMatrix { n, data })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        DenseMatrix { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, x| a.max(x.abs()))
    }

    /// `max |A_ij - A_ji| / max |A_ij|`.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    /// `diag(left) A diag(right)`.
    pub fn scaled(&self, left: &[f64], right: &[f64]) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, |i, j| left[i] * self.get(i, j) * right[j])
    }
}

/// Explicit `S` whose column `j` is `smatvec(op, e_j)`.
pub fn dense_assemble(op: &SmoothingOperator) -> Result<DenseMatrix> {
    let n = op.len();
    if n > MAX_ASSEMBLE {
        return Err(Error::Size(format!("dense assembly limited to N <= {MAX_ASSEMBLE}, got {n}")));
    }
    // All basis vectors at once, as the N channels of one signal.
    let basis = DenseMatrix::identity(n);
    let out = smatvec(op, &Signal::new(n, n, basis.data)?)?;
    DenseMatrix::from_row_major(n, out.into_vec())
}

/// Symmetric Sinkhorn fixed point on an explicit matrix:
/// `d = S lambda`, `lambda <- sqrt(lambda / d)`, until the mass-weighted mean
/// of `|lambda_i d_i - 1|` is below `tol`.
pub fn dense_sinkhorn(s: &DenseMatrix, masses: &[f64], tol: f64) -> Result<ScalingVector> {
    const MAX_ITER: usize = 100_000;
    let n = s.n();
    if masses.len() != n {
        return Err(Error::Shape {
            expected: n,
            actual: masses.len(),
        });
    }
    if s.as_slice().iter().any(|x| !(*x >= 0.0)) || (0..n).any(|i| !(s.get(i, i) > 0.0)) {
        return Err(Error::value("dense Sinkhorn needs nonnegative entries and a positive diagonal"));
    }
    let total: f64 = masses.iter().sum();
    let mut lambda = vec![1.0; n];
    let mut error = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let d = s.matvec(&lambda);
        error = lambda
            .iter()
            .zip(&d)
            .zip(masses)
            .map(|((l, d), m)| m * (l * d - 1.0).abs())
            .sum::<f64>()
            / total;
        if error.is_nan() {
            return Err(Error::numerical("dense Sinkhorn produced NaN"));
        }
        if error <= tol {
            break;
        }
        for (l, d) in lambda.iter_mut().zip(&d) {
            *l = (*l / d).sqrt();
        }
        iterations += 1;
    }
    Ok(ScalingVector {
        log_scales: lambda.iter().map(|l| l.ln()).collect(),
        converged: error <= tol,
        final_error: error,
        iterations,
    })
}

/// Full solution of a generalized symmetric eigenproblem.
#[derive(Clone, Debug)]
pub struct DenseEigen {
    /// Descending.
    pub values: Vec<f64>,
    /// `vectors[k]` pairs with `values[k]`; M-orthonormal.
    pub vectors: Vec<Vec<f64>>,
    /// `|B Y - Y diag(values)|_F / |B|_F` for the conjugated problem.
    pub relative_residual: f64,
}

/// Solves `A phi = lambda M phi` for symmetric `A` and positive diagonal `M`
/// by Jacobi rotations on `B = M^{-1/2} A M^{-1/2}`.
pub fn dense_generalized_eigs(a: &DenseMatrix, masses: &[f64]) -> Result<DenseEigen> {
    let n = a.n();
    if n > MAX_JACOBI {
        return Err(Error::Size(format!("Jacobi oracle limited to N <= {MAX_JACOBI}, got {n}")));
    }
    if masses.len() != n {
        return Err(Error::Shape {
            expected: n,
            actual: masses.len(),
        });
    }
    let inv_sqrt: Vec<f64> = masses.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut b = a.scaled(&inv_sqrt, &inv_sqrt);
    // Exact symmetrization; A is symmetric up to rounding.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (b.get(i, j) + b.get(j, i));
            b.set(i, j, v);
            b.set(j, i, v);
        }
    }
    let original = b.clone();
    let (values, y) = jacobi(&mut b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| values[q].total_cmp(&values[p]));

    let mut residual2 = 0.0;
    for &k in &order {
        let col: Vec<f64> = (0..n).map(|i| y.get(i, k)).collect();
        let by = original.matvec(&col);
        residual2 += by
            .iter()
            .zip(&col)
            .map(|(p, q)| (p - values[k] * q).powi(2))
            .sum::<f64>();
    }
    let scale = original.frobenius();
    let relative_residual = if scale > 0.0 { residual2.sqrt() / scale } else { residual2.sqrt() };

    Ok(DenseEigen {
        values: order.iter().map(|&k| values[k]).collect(),
        vectors: order
            .iter()
            .map(|&k| (0..n).map(|i| y.get(i, k) * inv_sqrt[i]).collect())
            .collect(),
        relative_residual,
    })
}

/// Cyclic Jacobi. Returns eigenvalues and the orthogonal matrix whose
/// columns are the eigenvectors; `b` is destroyed.
fn jacobi(b: &mut DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = b.n();
    let mut v = DenseMatrix::identity(n);
    let scale = b.frobenius();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| b.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = b.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (b.get(p, p), b.get(q, q));
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (bkp, bkq) = (b.get(k, p), b.get(k, q));
                    b.set(k, p, c * bkp - s * bkq);
                    b.set(k, q, s * bkp + c * bkq);
                }
                for k in 0..n {
                    let (bpk, bqk) = (b.get(p, k), b.get(q, k));
                    b.set(p, k, c * bpk - s * bqk);
                    b.set(q, k, s * bpk + c * bqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    ((0..n).map(|i| b.get(i, i)).collect(), v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_assembles_to_identity() {
        let op = SmoothingOperator::identity(4).unwrap();
        assert_eq!(dense_assemble(&op).unwrap(), DenseMatrix::identity(4));
    }

    #[test]
    fn two_by_two_sinkhorn_closed_form() {
        let a = (-0.5f64).exp();
        let s = DenseMatrix::from_row_major(2, vec![1.0, a, a, 1.0]).unwrap();
        let sv = dense_sinkhorn(&s, &[1.0, 1.0], 1e-14).unwrap();
        let expect = 1.0 / (1.0 + a).sqrt();
        for l in &sv.log_scales {
            assert!((l.exp() - expect).abs() < 1e-12);
        }
        assert!((expect - 0.78894).abs() < 5e-5);
    }

    #[test]
    fn bistochastic_input_is_fixed() {
        let s = DenseMatrix::from_row_major(2, vec![0.25, 0.75, 0.75, 0.25]).unwrap();
        let sv = dense_sinkhorn(&s, &[1.0, 1.0], 1e-14).unwrap();
        assert_eq!(sv.iterations, 0);
        assert!(sv.log_scales.iter().all(|l| *l == 0.0));
    }

    #[test]
    fn jacobi_identity_and_residual() {
        let e = dense_generalized_eigs(&DenseMatrix::identity(5), &[1.0; 5]).unwrap();
        assert!(e.values.iter().all(|v| (*v - 1.0).abs() < 1e-15));

        let a = DenseMatrix::from_fn(6, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let m = [1.0, 2.0, 0.5, 1.5, 3.0, 0.25];
        let e = dense_generalized_eigs(&a, &m).unwrap();
        assert!(e.relative_residual <= 1e-10);
        for w in e.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
        // M-orthonormality.
        for p in 0..6 {
            for q in 0..6 {
                let dot: f64 = (0..6).map(|i| e.vectors[p][i] * m[i] * e.vectors[q][i]).sum();
                let want = if p == q { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn size_limits() {
        let big = DenseMatrix::zeros(MAX_JACOBI + 1);
        assert!(matches!(
            dense_generalized_eigs(&big, &vec![1.0; MAX_JACOBI + 1]),
            Err(Error::Size(_))
        ));
    }
}
