//! Small fixed-size dense matrices over a generic scalar.
//!
//! Sized for the 8-state filter and the 3×3 / 9×9 calibration problems; no
//! attempt is made at blocking or SIMD.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix<T, const R: usize, const C: usize>(pub [[T; C]; R]);

pub type Vector<T, const N: usize> = Matrix<T, N, 1>;

impl<T: Scalar, const R: usize, const C: usize> Default for Matrix<T, R, C> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<T: Scalar, const R: usize, const C: usize> Matrix<T, R, C> {
    pub fn zeros() -> Self {
        Matrix([[T::zero(); C]; R])
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros();
        for r in 0..R {
            for c in 0..C {
                m.0[r][c] = f(r, c);
            }
        }
        m
    }

    pub fn transpose(&self) -> Matrix<T, C, R> {
        Matrix::from_fn(|r, c| self.0[c][r])
    }

    pub fn scale(&self, k: T) -> Self {
        Self::from_fn(|r, c| self.0[r][c] * k)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut worst = T::zero();
        for r in 0..R {
            for c in 0..C {
                worst = worst.max((self.0[r][c] - other.0[r][c]).abs());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

impl<T: Scalar, const N: usize> Matrix<T, N, N> {
    pub fn identity() -> Self {
        Self::from_fn(|r, c| if r == c { T::one() } else { T::zero() })
    }

    pub fn from_diagonal(d: [T; N]) -> Self {
        Self::from_fn(|r, c| if r == c { d[r] } else { T::zero() })
    }

    pub fn trace(&self) -> T {
        (0..N).fold(T::zero(), |acc, i| acc + self.0[i][i])
    }

    /// `(M + Mᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(|r, c| (self.0[r][c] + self.0[c][r]) * half)
    }

    pub fn asymmetry(&self) -> T {
        self.max_abs_diff(&self.transpose())
    }

    /// Gauss-Jordan inverse with partial pivoting. Returns `None` when a pivot
    /// falls below `tol` in absolute value.
    pub fn try_inverse(&self, tol: T) -> Option<Self> {
        let mut a = self.0;
        let mut inv = Self::identity().0;
        for col in 0..N {
            let pivot_row = (col..N).max_by(|&i, &j| {
                a[i][col]
                    .abs()
                    .partial_cmp(&a[j][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })?;
            if !(a[pivot_row][col].abs() > tol) {
                return None;
            }
            a.swap(col, pivot_row);
            inv.swap(col, pivot_row);
            let p = a[col][col];
            for k in 0..N {
                a[col][k] /= p;
                inv[col][k] /= p;
            }
            for row in 0..N {
                if row == col {
                    continue;
                }
                let f = a[row][col];
                if f == T::zero() {
                    continue;
                }
                for k in 0..N {
                    a[row][k] -= f * a[col][k];
                    inv[row][k] -= f * inv[col][k];
                }
            }
        }
        Some(Matrix(inv))
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    ///
    /// Returns eigenvalues sorted ascending and the matching eigenvectors as
    /// the columns of the second matrix.
    pub fn symmetric_eigen(&self) -> ([T; N], Self) {
        let mut a = self.symmetrized();
        let mut v = Self::identity();
        let eps = T::epsilon();
        for _sweep in 0..100 {
            let mut off = T::zero();
            let mut total = T::zero();
            for r in 0..N {
                for c in 0..N {
                    let sq = a.0[r][c] * a.0[r][c];
                    total += sq;
                    if r != c {
                        off += sq;
                    }
                }
            }
            if off <= eps * eps * total || off == T::zero() {
                break;
            }
            for p in 0..N {
                for q in (p + 1)..N {
                    let apq = a.0[p][q];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a.0[q][q] - a.0[p][p]) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let cos = T::one() / (t * t + T::one()).sqrt();
                    let sin = t * cos;
                    for k in 0..N {
                        let akp = a.0[k][p];
                        let akq = a.0[k][q];
                        a.0[k][p] = cos * akp - sin * akq;
                        a.0[k][q] = sin * akp + cos * akq;
                    }
                    for k in 0..N {
                        let apk = a.0[p][k];
                        let aqk = a.0[q][k];
                        a.0[p][k] = cos * apk - sin * aqk;
                        a.0[q][k] = sin * apk + cos * aqk;
                    }
                    for k in 0..N {
                        let vkp = v.0[k][p];
                        let vkq = v.0[k][q];
                        v.0[k][p] = cos * vkp - sin * vkq;
                        v.0[k][q] = sin * vkp + cos * vkq;
                    }
                }
            }
        }
        let mut order: [usize; N] = std::array::from_fn(|i| i);
        order.sort_by(|&i, &j| {
            a.0[i][i]
                .partial_cmp(&a.0[j][j])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let values = std::array::from_fn(|i| a.0[order[i]][order[i]]);
        let vectors = Self::from_fn(|r, c| v.0[r][order[c]]);
        (values, vectors)
    }
}

impl<T: Scalar, const N: usize> Vector<T, N> {
    pub fn from_array(v: [T; N]) -> Self {
        Matrix(v.map(|x| [x]))
    }

    pub fn to_array(&self) -> [T; N] {
        std::array::from_fn(|i| self.0[i][0])
    }
}

impl<T, const R: usize, const C: usize> Index<(usize, usize)> for Matrix<T, R, C> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.0[r][c]
    }
}

impl<T, const R: usize, const C: usize> IndexMut<(usize, usize)> for Matrix<T, R, C> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.0[r][c]
    }
}

impl<T: Scalar, const R: usize, const K: usize, const C: usize> Mul<Matrix<T, K, C>>
    for Matrix<T, R, K>
{
    type Output = Matrix<T, R, C>;
    fn mul(self, rhs: Matrix<T, K, C>) -> Matrix<T, R, C> {
        let mut out = Matrix::<T, R, C>::zeros();
        for r in 0..R {
            for k in 0..K {
                let a = self.0[r][k];
                if a == T::zero() {
                    continue;
                }
                for c in 0..C {
                    out.0[r][c] += a * rhs.0[k][c];
                }
            }
        }
        out
    }
}

impl<T: Scalar, const R: usize, const C: usize> Add for Matrix<T, R, C> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_fn(|r, c| self.0[r][c] + rhs.0[r][c])
    }
}

impl<T: Scalar, const R: usize, const C: usize> Sub for Matrix<T, R, C> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_fn(|r, c| self.0[r][c] - rhs.0[r][c])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip() {
        let m = Matrix([[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]]);
        let inv = m.try_inverse(1e-12).unwrap();
        assert!((m * inv).max_abs_diff(&Matrix::identity()) < 1e-12);
    }

    #[test]
    fn singular_has_no_inverse() {
        let m = Matrix([[1.0, 2.0], [2.0, 4.0]]);
        assert!(m.try_inverse(1e-12).is_none());
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let m = Matrix([[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]]);
        let (vals, vecs) = m.symmetric_eigen();
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        let d = Matrix::from_diagonal(vals);
        let back = vecs * d * vecs.transpose();
        assert!(back.max_abs_diff(&m) < 1e-12);
    }
}
