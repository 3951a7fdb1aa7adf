//! Dense complex matrices and the Hermitian eigen-machinery built on them.
//!
//! Hermitian problems are solved through the real symmetric embedding
//! `[[Re A, -Im A], [Im A, Re A]]`, which has every eigenvalue of `A` twice.
//! Any spectral function `f(A)` maps to `f` of the embedding, so the matrix
//! square root never needs to untangle repeated eigenvectors.

use std::fmt;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense complex matrix. Values are immutable once built.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> fmt::Debug for ComplexMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|c| {
                    let z = self.get(r, c);
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl<T: Real> ComplexMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFiniteInput("complex matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| {
            if r == c {
                Complex::new(T::one(), T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            }
        })
    }

    pub fn diagonal(entries: &[Complex<T>]) -> Self {
        let n = entries.len();
        Self::from_fn(n, n, |r, c| if r == c { entries[r] } else { Complex::new(T::zero(), T::zero()) })
    }

    pub fn column_vector(entries: Vec<Complex<T>>) -> Self {
        let rows = entries.len();
        Self { rows, cols: 1, data: entries }
    }

    /// Builds from interleaved `(re, im)` pairs in row-major order.
    pub fn from_interleaved(rows: usize, cols: usize, values: &[T]) -> Result<Self> {
        if values.len() != 2 * rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} reals for a {rows}x{cols} complex matrix",
                values.len()
            )));
        }
        let data = values.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect();
        Self::new(rows, cols, data)
    }

    pub fn to_interleaved(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(2 * self.data.len());
        for z in &self.data {
            out.push(z.re);
            out.push(z.im);
        }
        out
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex<T> {
        self.data[r * self.cols + c]
    }

    pub fn column(&self, c: usize) -> Vec<Complex<T>> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn row(&self, r: usize) -> &[Complex<T>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Selects a subset of columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.rows, cols.len(), |r, c| self.get(r, cols[c]))
    }

    pub fn from_columns(columns: &[Vec<Complex<T>>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch("ragged columns".into()));
        }
        Ok(Self::from_fn(rows, cols, |r, c| columns[c][r]))
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                let orow = other.row(k);
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch("matrix subtraction".into()));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn frobenius_norm_sqr(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.frobenius_norm_sqr().sqrt()
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Largest |A_ij - conj(A_ji)|.
    pub fn hermitian_defect(&self) -> T {
        let mut worst = T::zero();
        for r in 0..self.rows {
            for c in r..self.cols {
                worst = worst.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        worst
    }

    /// Real symmetric `2n x 2n` embedding `[[Re, -Im], [Im, Re]]` of the Hermitian part.
    fn real_embedding(&self) -> Vec<T> {
        let n = self.rows;
        let m = 2 * n;
        let mut out = vec![T::zero(); m * m];
        for r in 0..n {
            for c in 0..n {
                let z = (self.get(r, c) + self.get(c, r).conj()) * T::half();
                out[r * m + c] = z.re;
                out[r * m + c + n] = -z.im;
                out[(r + n) * m + c] = z.im;
                out[(r + n) * m + c + n] = z.re;
            }
        }
        out
    }
}

/// Eigen-decomposition of a real symmetric matrix via cyclic Jacobi sweeps.
///
/// Returns eigenvalues (ascending) and the row-major orthogonal matrix whose
/// columns are the matching eigenvectors.
pub fn symmetric_eigen<T: Real>(a: &[T], n: usize) -> (Vec<T>, Vec<T>) {
    let mut a = a.to_vec();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let scale = a.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt().max(T::min_positive_value());
    let threshold = scale * T::of(1e-12).max(T::eps() * T::of(4.0));
    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (T::two() * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![T::zero(); n * n];
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[k * n + dst] = v[k * n + src];
        }
    }
    (values, vectors)
}

fn check_hermitian<T: Real>(a: &ComplexMatrix<T>, tolerance: T) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!("{}x{} is not square", a.rows, a.cols)));
    }
    let defect = a.hermitian_defect();
    if defect > tolerance {
        return Err(Error::NotHermitian {
            asymmetry: defect.to_f64_lossy(),
            tolerance: tolerance.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues<T: Real>(a: &ComplexMatrix<T>, tolerance: T) -> Result<Vec<T>> {
    check_hermitian(a, tolerance)?;
    let (values, _) = symmetric_eigen(&a.real_embedding(), 2 * a.rows);
    Ok(values.into_iter().step_by(2).collect())
}

/// Applies a real spectral function to a Hermitian matrix: `V f(Λ) V^H`.
pub fn hermitian_function<T: Real>(
    a: &ComplexMatrix<T>,
    tolerance: T,
    f: impl Fn(T) -> T,
) -> Result<ComplexMatrix<T>> {
    check_hermitian(a, tolerance)?;
    let n = a.rows;
    let m = 2 * n;
    let (values, q) = symmetric_eigen(&a.real_embedding(), m);
    let fv: Vec<T> = values.iter().map(|&x| f(x)).collect();
    // only the left block column [Re; Im] of f(M) is needed
    Ok(ComplexMatrix::from_fn(n, n, |r, c| {
        let mut re = T::zero();
        let mut im = T::zero();
        for k in 0..m {
            let w = fv[k] * q[c * m + k];
            re += q[r * m + k] * w;
            im += q[(r + n) * m + k] * w;
        }
        Complex::new(re, im)
    }))
}

/// Principal square root `S` of a Hermitian PSD matrix (`S S = R`, `S = S^H`).
///
/// Eigenvalues in `[-tolerance·max(1,‖R‖_F), 0)` are clamped to zero.
pub fn hermitian_sqrt<T: Real>(r: &ComplexMatrix<T>, tolerance: T) -> Result<ComplexMatrix<T>> {
    let scale = T::one().max(r.frobenius_norm());
    let values = hermitian_eigenvalues(r, tolerance * scale)?;
    if let Some(&lowest) = values.first() {
        if lowest < -tolerance * scale {
            return Err(Error::IndefiniteMatrix {
                eigenvalue: lowest.to_f64_lossy(),
                tolerance: (tolerance * scale).to_f64_lossy(),
            });
        }
    }
    hermitian_function(r, tolerance * scale, |x| x.max(T::zero()).sqrt())
}

/// Unit-norm eigenvector of the largest eigenvalue of a Hermitian matrix.
pub fn dominant_eigenvector<T: Real>(a: &ComplexMatrix<T>, tolerance: T) -> Result<(T, Vec<Complex<T>>)> {
    check_hermitian(a, tolerance)?;
    let n = a.rows;
    let m = 2 * n;
    let (values, q) = symmetric_eigen(&a.real_embedding(), m);
    let top = m - 1;
    let mut v: Vec<Complex<T>> = (0..n).map(|r| Complex::new(q[r * m + top], q[(r + n) * m + top])).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
    for z in &mut v {
        *z = *z / norm;
    }
    Ok((values[top], v))
}

/// Dominant left singular vector of `h` (dominant eigenvector of `h h^H`).
pub fn dominant_left_singular_vector<T: Real>(h: &ComplexMatrix<T>) -> Result<Vec<Complex<T>>> {
    let gram = h.matmul(&h.adjoint())?;
    let tol = T::of(1e-9) * T::one().max(gram.frobenius_norm());
    Ok(dominant_eigenvector(&gram, tol)?.1)
}

pub fn vector_norm<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
}

/// `a^H b` for column vectors.
pub fn inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
