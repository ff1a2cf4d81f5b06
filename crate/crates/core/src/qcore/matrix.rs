use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{argument, Result};

pub type C64 = Complex64;

/// Largest supported matrix dimension (two qubits).
pub const MAX_DIM: usize = 4;

/// Tolerance used when a matrix is required to be Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance used when a matrix is required to be unitary.
pub const UNITARY_TOL: f64 = 1e-10;

/// Dense square complex matrix of dimension at most [`MAX_DIM`].
///
/// Storage is inline and row-major, so matrices are `Copy` and cost no
/// allocation in the propagator hot loop.
#[derive(Clone, Copy, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: [C64; MAX_DIM * MAX_DIM],
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(
            (1..=MAX_DIM).contains(&dim),
            "matrix dimension {dim} outside 1..={MAX_DIM}"
        );
        Self {
            dim,
            data: [C64::new(0.0, 0.0); MAX_DIM * MAX_DIM],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from row slices; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[&[C64]]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(argument(format!("unsupported matrix dimension {dim}")));
        }
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(argument(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        let refs: Vec<&[C64]> = rows.iter().map(|r| r.as_slice()).collect();
        Self::from_rows(&refs)
    }

    pub fn diag(entries: &[C64]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major entries.
    pub fn entries(&self) -> impl Iterator<Item = C64> + '_ {
        (0..self.dim).flat_map(move |i| (0..self.dim).map(move |j| self[(i, j)]))
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[(i, j)] = self[(j, i)].conj();
            }
        }
        m
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[(i, j)] *= s;
            }
        }
        m
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// `Tr(self · other)` without forming the product.
    pub fn trace_of_product(&self, other: &Self) -> C64 {
        debug_assert_eq!(self.dim, other.dim);
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.dim {
            for k in 0..self.dim {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    pub fn kron(&self, other: &Self) -> Result<Self> {
        let dim = self.dim * other.dim;
        if dim > MAX_DIM {
            return Err(argument(format!("kronecker product dimension {dim} too large")));
        }
        let mut m = Self::zeros(dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..other.dim {
                    for l in 0..other.dim {
                        m[(i * other.dim + k, j * other.dim + l)] = self[(i, j)] * other[(k, l)];
                    }
                }
            }
        }
        Ok(m)
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.entries()
            .zip(other.entries())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn hermitian_residual(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    pub fn unitarity_residual(&self) -> f64 {
        (self.adjoint() * *self).max_abs_diff(&Self::identity(self.dim))
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_residual() < HERMITIAN_TOL
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_residual() < UNITARY_TOL
    }

    pub fn is_finite(&self) -> bool {
        self.entries().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest absolute row sum (induced infinity norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.dim && j < self.dim);
        &self.data[i * MAX_DIM + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.dim && j < self.dim);
        &mut self.data[i * MAX_DIM + j]
    }
}

impl Mul for ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let n = self.dim;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                for j in 0..n {
                    m.data[i * MAX_DIM + j] += a * rhs.data[k * MAX_DIM + j];
                }
            }
        }
        m
    }
}

impl Add for ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(mut self, rhs: ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += b;
        }
        self
    }
}

impl Sub for ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(mut self, rhs: ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a -= b;
        }
        self
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})[", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn product_and_adjoint() {
        let a = ComplexMatrix::from_rows(&[&[c(1.0, 1.0), c(0.0, 2.0)], &[c(3.0, 0.0), c(0.0, -1.0)]])
            .unwrap();
        let ident = ComplexMatrix::identity(2);
        assert_eq!(a * ident, a);
        assert_eq!(a.adjoint()[(0, 1)], c(3.0, 0.0));
        assert_eq!(a.adjoint()[(1, 0)], c(0.0, -2.0));
        let p = a * a.adjoint();
        assert!(p.is_hermitian());
        assert!((a.trace_of_product(&a) - (a * a).trace()).norm() < 1e-15);
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[1.0]]).is_err());
        assert!(ComplexMatrix::from_real_rows(&[]).is_err());
    }

    #[test]
    fn kron_dimension_limit() {
        let a = ComplexMatrix::identity(4);
        assert!(a.kron(&ComplexMatrix::identity(2)).is_err());
        let z = ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap();
        let zz = z.kron(&z).unwrap();
        assert_eq!(zz.dim(), 4);
        assert_eq!(zz[(3, 3)], c(1.0, 0.0));
        assert_eq!(zz[(1, 1)], c(-1.0, 0.0));
    }
}
