//! Dense symmetric helpers: Cholesky factorization and solves.
//!
//! Matrices are square, row-major `Vec<T>` of size `n * n`.

use crate::scalar::Scalar;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Returns `None` when a pivot is not strictly positive.
    pub fn factor(a: &[T], n: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d = d - l[j * n + k] * l[j * n + k];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s = s - self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }

    /// Evaluates `bᵀ A⁻¹ b` through the forward substitution only.
    pub fn inv_quad_form(&self, b: &[T]) -> T {
        let n = self.n;
        let mut y = b.to_vec();
        let mut acc = T::zero();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
            acc = acc + y[i] * y[i];
        }
        acc
    }
}

/// Adds `weight * u uᵀ` to the upper triangle of `a`.
#[inline]
pub fn syr_upper<T: Scalar>(a: &mut [T], n: usize, weight: T, u: &[T]) {
    for i in 0..n {
        let wi = weight * u[i];
        if wi == T::zero() {
            continue;
        }
        let row = &mut a[i * n..(i + 1) * n];
        for j in i..n {
            row[j] = row[j] + wi * u[j];
        }
    }
}

/// Copies the upper triangle onto the lower one.
pub fn symmetrize_from_upper<T: Scalar>(a: &mut [T], n: usize) {
    for i in 0..n {
        for j in 0..i {
            a[i * n + j] = a[j * n + i];
        }
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn inf_norm<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}
