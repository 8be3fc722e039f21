//! Dense complex matrices with operator syntax.
//!
//! Shapes are checked at run time. The `checked_*` methods return a
//! [`LinalgError`] on a shape mismatch; the operator impls panic instead,
//! the same way slice indexing does.
//!
//! Every reduction (products, determinants, norms) accumulates in
//! increasing index order so the same inputs give the same bits no matter
//! which rank evaluates them.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use thiserror::Error;

use crate::lattice::RngStream;

/// Double precision complex scalar.
pub type Complex = num_complex::Complex64;

/// The imaginary unit.
pub const I: Complex = Complex::new(0.0, 1.0);

/// Pivots smaller than this are treated as exact zeros.
pub const SINGULAR_PIVOT: f64 = 1e-300;

const EXP_TERM_TOLERANCE: f64 = 1e-16;
const EXP_MAX_TERMS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular (pivot {pivot:e} in column {column})")]
    Singular { column: usize, pivot: f64 },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Row-major dense complex matrix of any shape.
#[derive(Clone, PartialEq, Default)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![Complex::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex::new(1.0, 0.0);
        }
        m
    }

    pub fn diag(entries: &[Complex]) -> Self {
        let n = entries.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &z) in entries.iter().enumerate() {
            m.data[i * n + i] = z;
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::Dimension(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[Complex]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[Complex] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[Complex] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn row_mut(&mut self, i: usize) -> &mut [Complex] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Replaces this matrix by `value`, taking on its shape.
    pub fn assign(&mut self, value: &Matrix) {
        self.rows = value.rows;
        self.cols = value.cols;
        self.data.clear();
        self.data.extend_from_slice(&value.data);
    }

    /// Largest entry magnitude, 0 for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().fold(0.0, |s, z| s + z.norm()))
            .fold(0.0, f64::max)
    }

    fn same_shape(&self, other: &Matrix, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(LinalgError::Dimension(format!(
                "cannot {op} {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    fn require_square(&self, op: &str) -> Result<()> {
        if !self.is_square() {
            return Err(LinalgError::Dimension(format!(
                "{op} needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(Complex, Complex) -> Complex) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    fn map(&self, f: impl Fn(Complex) -> Complex) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn checked_add(&self, other: &Matrix) -> Result<Matrix> {
        self.same_shape(other, "add")?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn checked_sub(&self, other: &Matrix) -> Result<Matrix> {
        self.same_shape(other, "subtract")?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub fn checked_mul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(LinalgError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = Complex::new(0.0, 0.0);
                for k in 0..self.cols {
                    acc += self.data[i * self.cols + k] * other.data[k * other.cols + j];
                }
                out.data[i * other.cols + j] = acc;
            }
        }
        Ok(out)
    }

    /// `self + s·1`. Only defined for square matrices.
    pub fn checked_add_scalar(&self, s: Complex) -> Result<Matrix> {
        self.require_square("adding a scalar")?;
        let mut out = self.clone();
        for i in 0..self.rows {
            out.data[i * self.cols + i] += s;
        }
        Ok(out)
    }

    pub fn scale(&self, s: Complex) -> Matrix {
        self.map(|z| z * s)
    }

    pub fn scale_real(&self, s: f64) -> Matrix {
        self.map(|z| z * s)
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Determinant by LU decomposition with partial pivoting.
    pub fn det(&self) -> Result<Complex> {
        self.require_square("det")?;
        let n = self.rows;
        let mut lu = self.clone();
        let mut det = Complex::new(1.0, 0.0);
        for col in 0..n {
            let p = pivot_row(&lu, col);
            if lu.data[p * n + col].norm() < SINGULAR_PIVOT {
                return Ok(Complex::new(0.0, 0.0));
            }
            if p != col {
                swap_rows(&mut lu, p, col);
                det = -det;
            }
            let pivot = lu.data[col * n + col];
            det *= pivot;
            for r in col + 1..n {
                let factor = lu.data[r * n + col] / pivot;
                if factor == Complex::new(0.0, 0.0) {
                    continue;
                }
                for c in col..n {
                    let sub = factor * lu.data[col * n + c];
                    lu.data[r * n + c] -= sub;
                }
            }
        }
        Ok(det)
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inv(&self) -> Result<Matrix> {
        self.require_square("inv")?;
        let n = self.rows;
        let mut a = self.clone();
        let mut out = Matrix::identity(n);
        for col in 0..n {
            let p = pivot_row(&a, col);
            let magnitude = a.data[p * n + col].norm();
            if magnitude < SINGULAR_PIVOT {
                return Err(LinalgError::Singular {
                    column: col,
                    pivot: magnitude,
                });
            }
            if p != col {
                swap_rows(&mut a, p, col);
                swap_rows(&mut out, p, col);
            }
            let recip = Complex::new(1.0, 0.0) / a.data[col * n + col];
            a.row_mut(col).iter_mut().for_each(|z| *z *= recip);
            out.row_mut(col).iter_mut().for_each(|z| *z *= recip);
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = a.data[r * n + col];
                if factor == Complex::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..n {
                    let da = factor * a.data[col * n + c];
                    a.data[r * n + c] -= da;
                    let db = factor * out.data[col * n + c];
                    out.data[r * n + c] -= db;
                }
            }
        }
        Ok(out)
    }

    /// Matrix exponential by scaling and squaring around a Taylor series.
    pub fn exp(&self) -> Result<Matrix> {
        self.require_square("exp")?;
        let n = self.rows;
        let norm = self.norm_inf();
        let squarings = if norm > 1.0 {
            norm.log2().ceil() as i32
        } else {
            0
        };
        let scaled = self.scale_real(0.5f64.powi(squarings));

        let mut sum = Matrix::identity(n);
        let mut term = Matrix::identity(n);
        for k in 1..=EXP_MAX_TERMS {
            term = (&term * &scaled).scale_real(1.0 / k as f64);
            sum += &term;
            if term.max_abs() < EXP_TERM_TOLERANCE {
                break;
            }
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        Ok(sum)
    }

    /// A random special unitary `n`x`n` matrix drawn from `rng`.
    ///
    /// Gaussian entries (real part then imaginary part, row-major) are
    /// orthonormalized row by row with modified Gram-Schmidt, then row 0 is
    /// multiplied by the conjugate of the determinant to land in SU(n).
    pub fn random_su(n: usize, rng: &mut RngStream) -> Result<Matrix> {
        if n == 0 {
            return Err(LinalgError::Dimension("SU(0) is empty".into()));
        }
        let mut m = Matrix::zeros(n, n);
        for z in m.data.iter_mut() {
            let re = rng.gaussian();
            let im = rng.gaussian();
            *z = Complex::new(re, im);
        }
        for i in 0..n {
            for j in 0..i {
                // <row j, row i> with row j already normalized
                let mut proj = Complex::new(0.0, 0.0);
                for k in 0..n {
                    proj += m.data[j * n + k].conj() * m.data[i * n + k];
                }
                for k in 0..n {
                    let d = proj * m.data[j * n + k];
                    m.data[i * n + k] -= d;
                }
            }
            let norm = m.row(i).iter().fold(0.0, |s, z| s + z.norm_sqr()).sqrt();
            m.row_mut(i).iter_mut().for_each(|z| *z /= norm);
        }
        let d = m.det()?;
        let phase = (d / d.norm()).conj();
        m.row_mut(0).iter_mut().for_each(|z| *z *= phase);
        Ok(m)
    }
}

fn pivot_row(m: &Matrix, col: usize) -> usize {
    let n = m.cols;
    let mut best = col;
    let mut best_abs = m.data[col * n + col].norm();
    for r in col + 1..m.rows {
        let v = m.data[r * n + col].norm();
        if v > best_abs {
            best = r;
            best_abs = v;
        }
    }
    best
}

fn swap_rows(m: &mut Matrix, a: usize, b: usize) {
    let n = m.cols;
    for c in 0..n {
        m.data.swap(a * n + c, b * n + c);
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "{}[", if i == 0 { "" } else { ", " })?;
            for (j, z) in self.row(i).iter().enumerate() {
                write!(f, "{}{}", if j == 0 { "" } else { ", " }, z)?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = Complex;

    fn index(&self, (i, j): (usize, usize)) -> &Complex {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        &mut self.data[i * self.cols + j]
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $checked:ident) => {
        impl $tr<&Matrix> for &Matrix {
            type Output = Matrix;
            fn $method(self, rhs: &Matrix) -> Matrix {
                self.$checked(rhs).unwrap_or_else(|e| panic!("{e}"))
            }
        }
        impl $tr<Matrix> for Matrix {
            type Output = Matrix;
            fn $method(self, rhs: Matrix) -> Matrix {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&Matrix> for Matrix {
            type Output = Matrix;
            fn $method(self, rhs: &Matrix) -> Matrix {
                (&self).$method(rhs)
            }
        }
    };
}

binop!(Add, add, checked_add);
binop!(Sub, sub, checked_sub);
binop!(Mul, mul, checked_mul);

impl AddAssign<&Matrix> for Matrix {
    fn add_assign(&mut self, rhs: &Matrix) {
        self.same_shape(rhs, "add").unwrap_or_else(|e| panic!("{e}"));
        self.data.iter_mut().zip(&rhs.data).for_each(|(a, &b)| *a += b);
    }
}

impl SubAssign<&Matrix> for Matrix {
    fn sub_assign(&mut self, rhs: &Matrix) {
        self.same_shape(rhs, "subtract")
            .unwrap_or_else(|e| panic!("{e}"));
        self.data.iter_mut().zip(&rhs.data).for_each(|(a, &b)| *a -= b);
    }
}

impl Neg for &Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        self.map(|z| -z)
    }
}

impl Neg for Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        -&self
    }
}

// `A + 5` is `A + 5·1`.
impl Add<f64> for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: f64) -> Matrix {
        self.checked_add_scalar(Complex::new(rhs, 0.0))
            .unwrap_or_else(|e| panic!("{e}"))
    }
}

impl Add<Complex> for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: Complex) -> Matrix {
        self.checked_add_scalar(rhs)
            .unwrap_or_else(|e| panic!("{e}"))
    }
}

impl Mul<f64> for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: f64) -> Matrix {
        self.scale_real(rhs)
    }
}

impl Mul<f64> for Matrix {
    type Output = Matrix;
    fn mul(self, rhs: f64) -> Matrix {
        self.scale_real(rhs)
    }
}

impl Mul<Complex> for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: Complex) -> Matrix {
        self.scale(rhs)
    }
}

impl Mul<&Matrix> for f64 {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        rhs.map(|z| z * self)
    }
}

impl Mul<&Matrix> for Complex {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        rhs.map(|z| self * z)
    }
}

impl Div<f64> for &Matrix {
    type Output = Matrix;
    fn div(self, rhs: f64) -> Matrix {
        self.map(|z| z / rhs)
    }
}

impl Div<f64> for Matrix {
    type Output = Matrix;
    fn div(self, rhs: f64) -> Matrix {
        &self / rhs
    }
}
