use std::ops::{Index, IndexMut};

use crate::scalar::Real;

/// Dense row-major matrix. Only what the OLS and logistic code needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from row vectors. Returns `None` when rows are ragged.
    pub fn from_rows(rows: &[Vec<T>]) -> Option<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Some(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_columns(n_rows: usize, columns: &[Vec<T>]) -> Option<Self> {
        if columns.iter().any(|c| c.len() != n_rows) {
            return None;
        }
        let mut m = Self::zeros(n_rows, columns.len());
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Some(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Sub-matrix made of the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut m = Self::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            for (jj, &j) in cols.iter().enumerate() {
                m[(i, jj)] = self[(i, j)];
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Euclidean norm with scaling to avoid overflow.
pub fn norm2<T: Real>(v: &[T]) -> T {
    let scale = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    let ss = v.iter().fold(T::zero(), |acc, &x| {
        let r = x / scale;
        acc + r * r
    });
    scale * ss.sqrt()
}

/// Householder QR factorization of an `n × p` matrix with `n ≥ p`.
///
/// Stores the reflectors compactly; `R` is the upper `p × p` block.
#[derive(Debug, Clone)]
pub struct Qr<T> {
    qr: Matrix<T>,
    /// Householder vectors, one per column, each of length `n - j`.
    reflectors: Vec<Vec<T>>,
    /// Reflector scaling `2 / vᵀv`, zero when the column was already zero.
    betas: Vec<T>,
}

impl<T: Real> Qr<T> {
    pub fn new(a: &Matrix<T>) -> Self {
        let (n, p) = (a.rows(), a.cols());
        assert!(n >= p, "QR needs at least as many rows as columns");
        let mut qr = a.clone();
        let mut reflectors = Vec::with_capacity(p);
        let mut betas = Vec::with_capacity(p);
        for j in 0..p {
            let x: Vec<T> = (j..n).map(|i| qr[(i, j)]).collect();
            let alpha = norm2(&x);
            if alpha == T::zero() {
                reflectors.push(vec![T::zero(); n - j]);
                betas.push(T::zero());
                continue;
            }
            // Reflect onto -sign(x0)·‖x‖·e1 to avoid cancellation.
            let signed = if x[0] >= T::zero() { -alpha } else { alpha };
            let mut v = x;
            v[0] -= signed;
            let vtv = dot(&v, &v);
            let beta = if vtv == T::zero() { T::zero() } else { T::lit(2.0) / vtv };
            for jj in j..p {
                let s = (j..n).fold(T::zero(), |acc, i| acc + v[i - j] * qr[(i, jj)]);
                let f = beta * s;
                for i in j..n {
                    qr[(i, jj)] -= f * v[i - j];
                }
            }
            reflectors.push(v);
            betas.push(beta);
        }
        Self { qr, reflectors, betas }
    }

    /// Upper-triangular factor `R` (`p × p`).
    pub fn r(&self) -> Matrix<T> {
        let p = self.qr.cols();
        let mut r = Matrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                r[(i, j)] = self.qr[(i, j)];
            }
        }
        r
    }

    /// Computes `Qᵀ b` for a vector of length `n`.
    pub fn qt_mul(&self, b: &[T]) -> Vec<T> {
        let n = self.qr.rows();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for (j, (v, &beta)) in self.reflectors.iter().zip(&self.betas).enumerate() {
            if beta == T::zero() {
                continue;
            }
            let s = (j..n).fold(T::zero(), |acc, i| acc + v[i - j] * y[i]);
            let f = beta * s;
            for i in j..n {
                y[i] -= f * v[i - j];
            }
        }
        y
    }
}

/// Solves `R x = b` for upper-triangular `R`.
pub fn back_substitute<T: Real>(r: &Matrix<T>, b: &[T]) -> Vec<T> {
    let p = r.cols();
    let mut x = vec![T::zero(); p];
    for i in (0..p).rev() {
        let s = ((i + 1)..p).fold(b[i], |acc, j| acc - r[(i, j)] * x[j]);
        x[i] = s / r[(i, i)];
    }
    x
}

/// Inverse of an upper-triangular matrix.
pub fn upper_triangular_inverse<T: Real>(r: &Matrix<T>) -> Matrix<T> {
    let p = r.cols();
    let mut inv = Matrix::zeros(p, p);
    for col in 0..p {
        let mut e = vec![T::zero(); p];
        e[col] = T::one();
        let x = back_substitute(r, &e);
        for i in 0..p {
            inv[(i, col)] = x[i];
        }
    }
    inv
}

/// Singular values of a small square matrix via one-sided Jacobi rotations,
/// sorted in decreasing order.
pub fn singular_values<T: Real>(a: &Matrix<T>) -> Vec<T> {
    let (n, p) = (a.rows(), a.cols());
    let mut u = a.clone();
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut rotated = false;
        for j in 0..p {
            for k in (j + 1)..p {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..n {
                    let (x, y) = (u[(i, j)], u[(i, k)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let (x, y) = (u[(i, j)], u[(i, k)]);
                    u[(i, j)] = c * x - s * y;
                    u[(i, k)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<T> = (0..p).map(|j| norm2(&u.column(j))).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}
