//! Dense row-major matrices, complex LU with partial pivoting and a real
//! Cholesky factorization.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::specfun::wrap_angle;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

pub type RealMatrix = Matrix<f64>;
pub type ComplexSquareMatrix = Matrix<Complex64>;

impl<T: Copy + Default> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (head, tail) = self.data.split_at_mut(hi * self.cols);
        head[lo * self.cols..(lo + 1) * self.cols].swap_with_slice(&mut tail[..self.cols]);
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

impl RealMatrix {
    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn matmul(&self, other: &RealMatrix) -> Result<RealMatrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = RealMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn to_complex(&self) -> ComplexSquareMatrix {
        self.map(|x| Complex64::new(x, 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl ComplexSquareMatrix {
    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn matmul(&self, other: &ComplexSquareMatrix) -> Result<ComplexSquareMatrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = ComplexSquareMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in dst.iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: Complex64) -> ComplexSquareMatrix {
        self.map(|x| c * x)
    }

    pub fn sub(&self, other: &ComplexSquareMatrix) -> ComplexSquareMatrix {
        let mut out = self.clone();
        for (o, &b) in out.data.iter_mut().zip(&other.data) {
            *o -= b;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.norm()))
    }

    /// Largest entrywise difference between the matrix and its plain
    /// (non-conjugated) transpose.
    pub fn transpose_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).norm());
            }
        }
        worst
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// LU factorization `P M = L U` with unit-diagonal `L`.
#[derive(Debug, Clone)]
pub struct ComplexLu {
    lu: ComplexSquareMatrix,
    perm: Vec<usize>,
    swaps: usize,
}

/// Relative pivot threshold below which a matrix is declared singular.
pub const SINGULAR_PIVOT_REL: f64 = 1e-14;

impl ComplexLu {
    pub fn factor(m: ComplexSquareMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "LU of a {}x{} matrix",
                m.rows, m.cols
            )));
        }
        let n = m.rows;
        let threshold = SINGULAR_PIVOT_REL * m.inf_norm();
        let mut lu = m;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].l1_norm();
            for i in k + 1..n {
                let v = lu[(i, k)].l1_norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            let pivot_norm = lu[(p, k)].norm();
            if !(pivot_norm > threshold) {
                return Err(Error::Singular {
                    column: k,
                    pivot: pivot_norm,
                    threshold,
                });
            }
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
                swaps += 1;
            }
            let inv_pivot = lu[(k, k)].inv();
            let (head, tail) = lu.data.split_at_mut((k + 1) * n);
            let pivot_row = &head[k * n + k + 1..(k + 1) * n];
            for row in tail.chunks_exact_mut(n) {
                let l = row[k] * inv_pivot;
                row[k] = l;
                if l.re == 0.0 && l.im == 0.0 {
                    continue;
                }
                for (x, &u) in row[k + 1..].iter_mut().zip(pivot_row) {
                    *x -= l * u;
                }
            }
        }
        Ok(Self { lu, perm, swaps })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    pub fn det(&self) -> Complex64 {
        let mut d: Complex64 = (0..self.dim()).map(|i| self.lu[(i, i)]).product();
        if self.swaps % 2 == 1 {
            d = -d;
        }
        d
    }

    /// Principal logarithm of the determinant, accumulated pivot by pivot so
    /// that the modulus never overflows. The imaginary part lies in `(-pi, pi]`.
    pub fn log_det(&self) -> Complex64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for i in 0..self.dim() {
            let p = self.lu[(i, i)];
            re += p.norm().ln();
            im += p.arg();
        }
        if self.swaps % 2 == 1 {
            im += std::f64::consts::PI;
        }
        Complex64::new(re, wrap_angle(im))
    }

    pub fn solve_vec(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::Dimension(format!(
                "rhs of length {} for dimension {n}",
                rhs.len()
            )));
        }
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let mut acc = x[i];
            for j in 0..i {
                acc -= row[j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= row[j] * x[j];
            }
            x[i] = acc / row[i];
        }
        Ok(x)
    }

    pub fn solve_matrix(&self, rhs: &ComplexSquareMatrix) -> Result<ComplexSquareMatrix> {
        if rhs.rows != self.dim() {
            return Err(Error::Dimension(format!(
                "rhs with {} rows for dimension {}",
                rhs.rows,
                self.dim()
            )));
        }
        let mut out = ComplexSquareMatrix::zeros(rhs.rows, rhs.cols);
        let mut col = vec![Complex64::new(0.0, 0.0); rhs.rows];
        for j in 0..rhs.cols {
            for i in 0..rhs.rows {
                col[i] = rhs[(i, j)];
            }
            let x = self.solve_vec(&col)?;
            for i in 0..rhs.rows {
                out[(i, j)] = x[i];
            }
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<ComplexSquareMatrix> {
        self.solve_matrix(&ComplexSquareMatrix::identity(self.dim()))
    }
}

/// Determinant of `m` and, when `rhs` is given, the solution of `m X = rhs`.
pub fn lu_det_and_solve(
    m: &ComplexSquareMatrix,
    rhs: Option<&ComplexSquareMatrix>,
) -> Result<(Complex64, Option<ComplexSquareMatrix>)> {
    let lu = ComplexLu::factor(m.clone())?;
    let solution = rhs.map(|b| lu.solve_matrix(b)).transpose()?;
    Ok((lu.det(), solution))
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(m: &RealMatrix) -> Result<RealMatrix> {
    if !m.is_square() {
        return Err(Error::Dimension("Cholesky of a non-square matrix".into()));
    }
    let n = m.rows;
    let mut l = RealMatrix::zeros(n, n);
    for j in 0..n {
        let lj: Vec<f64> = l.row(j)[..j].to_vec();
        let d = m[(j, j)] - lj.iter().map(|x| x * x).sum::<f64>();
        if !(d > 0.0) {
            return Err(Error::Factorization(format!(
                "non-positive pivot {d:e} at index {j}"
            )));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let s: f64 = l.row(i)[..j].iter().zip(&lj).map(|(a, b)| a * b).sum();
            l[(i, j)] = (m[(i, j)] - s) / djj;
        }
    }
    Ok(l)
}
