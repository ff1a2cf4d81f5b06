//! Hermitian eigendecomposition by cyclic complex Jacobi rotations.
//!
//! Matrices here are at most 4x4, where Jacobi converges in a handful of
//! sweeps and yields eigenvectors orthonormal to machine precision.

use super::matrix::{ComplexMatrix, C64};
use crate::error::{numeric, Result};

const MAX_SWEEPS: usize = 64;

/// `H = V · diag(values) · V†` with `V` unitary.
#[derive(Debug, Clone, Copy)]
pub struct HermitianEigen {
    pub values: [f64; 4],
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values[..self.dim()]
    }

    /// Rebuilds `V · diag(f(λ)) · V†` for a scalar function of the spectrum.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let n = self.dim();
        let v = &self.vectors;
        let mut out = ComplexMatrix::zeros(n);
        for k in 0..n {
            let fk = f(self.values[k]);
            for i in 0..n {
                let vik = v[(i, k)] * fk;
                for j in 0..n {
                    out[(i, j)] += vik * v[(j, k)].conj();
                }
            }
        }
        out
    }
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Fails if the input is not Hermitian to [`super::matrix::HERMITIAN_TOL`]
/// relative to its scale, or holds non-finite entries.
pub fn hermitian_eigen(h: &ComplexMatrix) -> Result<HermitianEigen> {
    if !h.is_finite() {
        return Err(numeric("non-finite entry in Hermitian eigensolver input"));
    }
    let scale = h.norm_inf().max(1.0);
    let residual = h.hermitian_residual();
    if residual > super::matrix::HERMITIAN_TOL * scale {
        return Err(numeric(format!(
            "matrix is not Hermitian (residual {residual:e})"
        )));
    }
    let n = h.dim();
    let mut a = *h;
    let mut v = ComplexMatrix::identity(n);
    let threshold = f64::EPSILON * scale * 1e-2;

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= threshold * 1e-3 {
                    continue;
                }
                // Phase so the (p,q) entry becomes real and positive, then a
                // real symmetric Jacobi rotation zeroes it.
                let phase = apq / r;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // J = P·R with P = diag(.., 1_p, conj(phase)_q, ..).
                let mut j = ComplexMatrix::identity(n);
                j[(p, p)] = C64::new(c, 0.0);
                j[(p, q)] = C64::new(s, 0.0);
                j[(q, p)] = -phase.conj() * s;
                j[(q, q)] = phase.conj() * c;
                a = j.adjoint() * a * j;
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                v = v * j;
            }
        }
    }
    if off_diagonal_norm(&a) > 1e3 * threshold.max(f64::MIN_POSITIVE) {
        return Err(numeric("Jacobi eigensolver did not converge"));
    }
    let mut values = [0.0; 4];
    for (i, val) in values.iter_mut().enumerate().take(n) {
        *val = a[(i, i)].re;
    }
    Ok(HermitianEigen { values, vectors: v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::test_support::random_hermitian;
    use crate::seed::rng_from;

    #[test]
    fn reconstructs_random_hermitian() {
        let mut rng = rng_from(11, &[]);
        for dim in [1usize, 2, 3, 4] {
            for _ in 0..50 {
                let h = random_hermitian(dim, 3.0, &mut rng);
                let e = hermitian_eigen(&h).unwrap();
                let back = e.map_spectrum(|x| C64::new(x, 0.0));
                assert!(back.max_abs_diff(&h) < 1e-12, "dim {dim}");
                assert!(e.vectors.unitarity_residual() < 1e-13);
            }
        }
    }

    #[test]
    fn degenerate_spectrum() {
        let zz = ComplexMatrix::diag(&[
            C64::new(1.0, 0.0),
            C64::new(-1.0, 0.0),
            C64::new(-1.0, 0.0),
            C64::new(1.0, 0.0),
        ]);
        let e = hermitian_eigen(&zz).unwrap();
        let mut vals = e.eigenvalues().to_vec();
        vals.sort_by(f64::total_cmp);
        assert_eq!(vals, vec![-1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        assert!(hermitian_eigen(&m).is_err());
    }
}
