//! Dense complex linear algebra.
//!
//! Small row-major complex matrices and vectors, a Hermitian eigensolver
//! working on the real symmetric embedding `[[Re A, -Im A], [Im A, Re A]]`,
//! Kronecker products, column-major vectorization and projection onto the
//! positive semidefinite cone.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex scalar used throughout the crate.
pub type C64 = Complex64;

/// Relative tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Dense complex column vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CVector {
    data: Vec<C64>,
}

impl CVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            data: vec![ZERO; n],
        }
    }

    pub fn from_vec(data: Vec<C64>) -> Self {
        Self { data }
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> C64) -> Self {
        Self {
            data: (0..n).map(f).collect(),
        }
    }

    /// Standard basis vector `e_i` of length `n`.
    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.data[i] = ONE;
        v
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, C64> {
        self.data.iter()
    }

    /// Inner product `selfᴴ other`.
    pub fn dot(&self, other: &CVector) -> C64 {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, s: C64) -> CVector {
        Self {
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn conj(&self) -> CVector {
        Self {
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &CVector) -> CVector {
        assert_eq!(self.len(), other.len(), "hadamard: length mismatch");
        Self {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        }
    }

    /// Outer product `self otherᴴ`.
    pub fn outer(&self, other: &CVector) -> CMatrix {
        CMatrix::from_fn(self.len(), other.len(), |i, j| {
            self.data[i] * other.data[j].conj()
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<usize> for CVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for CVector {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.data[i]
    }
}

impl Add for &CVector {
    type Output = CVector;
    fn add(self, rhs: &CVector) -> CVector {
        assert_eq!(self.len(), rhs.len(), "add: length mismatch");
        CVector::from_fn(self.len(), |i| self.data[i] + rhs.data[i])
    }
}

impl Sub for &CVector {
    type Output = CVector;
    fn sub(self, rhs: &CVector) -> CVector {
        assert_eq!(self.len(), rhs.len(), "sub: length mismatch");
        CVector::from_fn(self.len(), |i| self.data[i] - rhs.data[i])
    }
}

/// Dense complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        Self::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn from_diag(d: &[C64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &z) in d.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    pub fn from_real_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = C64::new(x, 0.0);
        }
        m
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

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> CVector {
        CVector::from_fn(self.rows, |i| self[(i, j)])
    }

    pub fn diag(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn adjoint(&self) -> CMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> CMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> CMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> CMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Real part of the trace.
    pub fn trace_re(&self) -> f64 {
        self.trace().re
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `max |A - Aᴴ|` over all entries.
    pub fn hermitian_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut r: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                r = r.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        r
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.is_square() && self.hermitian_residual() <= rel_tol * self.max_abs().max(f64::MIN_POSITIVE)
    }

    /// `(A + Aᴴ) / 2`.
    pub fn hermitian_part(&self) -> CMatrix {
        assert!(self.is_square(), "hermitian_part: non-square matrix");
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * 0.5
        })
    }

    pub fn mul_vec(&self, x: &CVector) -> CVector {
        assert_eq!(self.cols, x.len(), "mul_vec: dimension mismatch");
        CVector::from_fn(self.rows, |i| {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            row.iter().zip(x.iter()).map(|(a, b)| a * b).sum()
        })
    }

    /// `xᴴ A x`.
    pub fn quad_form(&self, x: &CVector) -> C64 {
        x.dot(&self.mul_vec(x))
    }

    /// `Tr(A B)` without forming the product.
    pub fn trace_product(&self, other: &CMatrix) -> C64 {
        assert_eq!(self.cols, other.rows, "trace_product: dimension mismatch");
        assert_eq!(self.rows, other.cols, "trace_product: dimension mismatch");
        let mut s = ZERO;
        for i in 0..self.rows {
            for k in 0..self.cols {
                s += self[(i, k)] * other[(k, i)];
            }
        }
        s
    }

    /// `diag(d) A` for a diagonal given as a slice.
    pub fn left_diag_mul(&self, d: &[C64]) -> CMatrix {
        assert_eq!(d.len(), self.rows);
        Self::from_fn(self.rows, self.cols, |i, j| d[i] * self[(i, j)])
    }

    /// `A diag(d)` for a diagonal given as a slice.
    pub fn right_diag_mul(&self, d: &[C64]) -> CMatrix {
        assert_eq!(d.len(), self.cols);
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * d[j])
    }

    /// Real symmetric embedding `[[Re A, -Im A], [Im A, Re A]]`, row-major.
    pub fn real_embedding(&self) -> Vec<f64> {
        let (r, c) = (self.rows, self.cols);
        let w = 2 * c;
        let mut out = vec![0.0; 4 * r * c];
        for i in 0..r {
            for j in 0..c {
                let z = self[(i, j)];
                out[i * w + j] = z.re;
                out[i * w + c + j] = -z.im;
                out[(r + i) * w + j] = z.im;
                out[(r + i) * w + c + j] = z.re;
            }
        }
        out
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "matmul: dimension mismatch");
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let rrow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add: shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub: shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_real(-1.0)
    }
}

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&CMatrix> for CMatrix {
    fn sub_assign(&mut self, rhs: &CMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

/// Column-major vectorization.
pub fn vec(a: &CMatrix) -> CVector {
    let mut out = Vec::with_capacity(a.rows * a.cols);
    for j in 0..a.cols {
        for i in 0..a.rows {
            out.push(a[(i, j)]);
        }
    }
    CVector::from_vec(out)
}

/// Inverse of [`vec`].
pub fn unvec(v: &CVector, rows: usize, cols: usize) -> Result<CMatrix> {
    if v.len() != rows * cols {
        return Err(Error::invalid(format!(
            "unvec: vector of length {} cannot form {rows}x{cols}",
            v.len()
        )));
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| v[j * rows + i]))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (br, bc) = (b.rows, b.cols);
    CMatrix::from_fn(a.rows * br, a.cols * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// Eigendecomposition of a real symmetric matrix (row-major, `n×n`).
///
/// Returns eigenvalues in ascending order and the eigenvectors as the
/// columns of a row-major matrix.
pub fn sym_eig(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut v = a.to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e, n);
    tql2(Some(&mut v), &mut d, &mut e, n);
    (d, v)
}

// Householder reduction to tridiagonal form (Bowdler, Martin, Reinsch, Wilkinson).
fn tred2(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    let idx = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
                v[idx(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..(n - 1) {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = 0.0;
    }
    v[idx(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

// Implicit QL iteration on the symmetric tridiagonal form.
fn tql2(mut v: Option<&mut [f64]>, d: &mut [f64], e: &mut [f64], n: usize) {
    let idx = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(v) = v.as_deref_mut() {
                        for k in 0..n {
                            h = v[idx(k, i + 1)];
                            v[idx(k, i + 1)] = s * v[idx(k, i)] + c * h;
                            v[idx(k, i)] = c * v[idx(k, i)] - s * h;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 || iter > 60 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // Selection sort into ascending order.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            if let Some(v) = v.as_deref_mut() {
                for row in 0..n {
                    v.swap(idx(row, i), idx(row, k));
                }
            }
        }
    }
}

/// Complex Householder reduction of a Hermitian matrix to real symmetric
/// tridiagonal form. Returns the diagonal, the subdiagonal in the layout
/// expected by `tql2` (`e[0] = 0`), and optionally the unitary `U` with
/// `A = U T Uᴴ`.
fn hermitian_tridiagonalize(a: &CMatrix, want_u: bool) -> (Vec<f64>, Vec<f64>, Option<Vec<C64>>) {
    let n = a.rows;
    let mut w = a.data.clone();
    let mut q: Option<Vec<C64>> = want_u.then(|| {
        let mut q = vec![ZERO; n * n];
        for i in 0..n {
            q[i * n + i] = ONE;
        }
        q
    });
    let mut v = vec![ZERO; n];
    let mut p = vec![ZERO; n];
    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1;
        let tail: f64 = (k + 2..n).map(|i| w[i * n + k].norm_sqr()).sum();
        if tail == 0.0 {
            continue;
        }
        let x0 = w[(k + 1) * n + k];
        let alpha = (tail + x0.norm_sqr()).sqrt();
        let ph = if x0.norm() > 0.0 { x0 / x0.norm() } else { ONE };
        for j in 0..m {
            v[j] = w[(k + 1 + j) * n + k];
        }
        v[0] += ph * alpha;
        let tau = 1.0 / (alpha * (alpha + x0.norm()));
        for i in 0..m {
            let row = (k + 1 + i) * n + k + 1;
            let mut acc = ZERO;
            for j in 0..m {
                acc += w[row + j] * v[j];
            }
            p[i] = acc * tau;
        }
        let mut vp = ZERO;
        for j in 0..m {
            vp += v[j].conj() * p[j];
        }
        let kk = 0.5 * tau * vp.re;
        for j in 0..m {
            p[j] -= v[j] * kk;
        }
        for i in 0..m {
            let row = (k + 1 + i) * n + k + 1;
            for j in 0..m {
                w[row + j] -= v[i] * p[j].conj() + p[i] * v[j].conj();
            }
        }
        w[(k + 1) * n + k] = -ph * alpha;
        w[k * n + k + 1] = (-ph * alpha).conj();
        for i in (k + 2)..n {
            w[i * n + k] = ZERO;
            w[k * n + i] = ZERO;
        }
        if let Some(q) = q.as_mut() {
            for r in 0..n {
                let base = r * n + k + 1;
                let mut acc = ZERO;
                for j in 0..m {
                    acc += q[base + j] * v[j];
                }
                acc *= tau;
                for j in 0..m {
                    q[base + j] -= acc * v[j].conj();
                }
            }
        }
    }
    let d: Vec<f64> = (0..n).map(|i| w[i * n + i].re).collect();
    let mut e = vec![0.0; n];
    let mut phase = vec![ONE; n];
    for k in 0..n.saturating_sub(1) {
        let b = w[(k + 1) * n + k];
        e[k + 1] = b.norm();
        phase[k + 1] = if b.norm() > 0.0 { phase[k] * b / b.norm() } else { phase[k] };
    }
    if let Some(q) = q.as_mut() {
        for r in 0..n {
            for c in 0..n {
                q[r * n + c] *= phase[c];
            }
        }
    }
    (d, e, q)
}

/// Eigendecomposition of a Hermitian matrix: ascending eigenvalues and a
/// unitary matrix whose columns are the eigenvectors.
pub fn hermitian_eig(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    check_hermitian(a, "hermitian_eig")?;
    let n = a.rows;
    let (mut d, mut e, q) = hermitian_tridiagonalize(&a.hermitian_part(), true);
    let q = q.expect("requested");
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    tql2(Some(&mut v), &mut d, &mut e, n);
    let mut u = CMatrix::zeros(n, n);
    for r in 0..n {
        for k in 0..n {
            let qrk = q[r * n + k];
            if qrk == ZERO {
                continue;
            }
            for c in 0..n {
                u.data[r * n + c] += qrk * v[k * n + c];
            }
        }
    }
    Ok((d, u))
}

/// Eigenvalues of a Hermitian matrix in ascending order, without vectors.
pub fn hermitian_eigvals_fast(a: &CMatrix) -> Result<Vec<f64>> {
    check_hermitian(a, "hermitian_eigvals_fast")?;
    let (mut d, mut e, _) = hermitian_tridiagonalize(&a.hermitian_part(), false);
    let n = a.rows;
    tql2(None, &mut d, &mut e, n);
    Ok(d)
}

/// Lower-triangular `L` with `A = L Lᴴ` for a Hermitian positive definite `A`.
pub fn hermitian_cholesky(a: &CMatrix) -> Result<CMatrix> {
    let n = a.rows;
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut s = a.data[j * n + j].re;
        for k in 0..j {
            s -= l.data[j * n + k].norm_sqr();
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::numerical(format!("hermitian_cholesky: not positive definite at pivot {j} ({s:.3e})")));
        }
        let dj = s.sqrt();
        l.data[j * n + j] = C64::new(dj, 0.0);
        for i in (j + 1)..n {
            let mut z = a.data[i * n + j];
            for k in 0..j {
                z -= l.data[i * n + k] * l.data[j * n + k].conj();
            }
            l.data[i * n + j] = z / dj;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse(l: &CMatrix) -> CMatrix {
    let n = l.rows;
    let mut inv = CMatrix::zeros(n, n);
    for c in 0..n {
        inv.data[c * n + c] = ONE / l.data[c * n + c];
        for r in (c + 1)..n {
            let mut z = ZERO;
            for k in c..r {
                z += l.data[r * n + k] * inv.data[k * n + c];
            }
            inv.data[r * n + c] = -z / l.data[r * n + r];
        }
    }
    inv
}

/// Inverse of a Hermitian positive definite matrix.
pub fn hermitian_pd_inverse(a: &CMatrix) -> Result<CMatrix> {
    let li = lower_inverse(&hermitian_cholesky(a)?);
    Ok((&li.adjoint() * &li).hermitian_part())
}

fn check_hermitian(a: &CMatrix, what: &str) -> Result<()> {
    if !a.is_square() || a.rows == 0 {
        return Err(Error::invalid(format!(
            "{what}: expected a nonempty square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if !a.is_finite() {
        return Err(Error::invalid(format!("{what}: non-finite entries")));
    }
    if !a.is_hermitian(HERMITIAN_TOL) {
        return Err(Error::invalid(format!(
            "{what}: matrix is not Hermitian (residual {:.3e}, scale {:.3e})",
            a.hermitian_residual(),
            a.max_abs()
        )));
    }
    Ok(())
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigvals(a: &CMatrix) -> Result<Vec<f64>> {
    hermitian_eigvals_fast(a)
}

/// Phase-rotates `u` so that its largest-magnitude entry is real and nonnegative.
pub fn phase_normalize(u: &CVector) -> CVector {
    let mut best = 0;
    for (i, z) in u.iter().enumerate() {
        if z.norm() > u[best].norm() {
            best = i;
        }
    }
    let p = u[best];
    if p.norm() == 0.0 {
        return u.clone();
    }
    u.scale(p.conj() / p.norm())
}

/// Largest eigenvalue and a unit eigenvector of a Hermitian matrix.
///
/// The eigenvector is phase-normalized so that its largest-magnitude entry is
/// real and nonnegative.
pub fn hermitian_eig_max(a: &CMatrix) -> Result<(f64, CVector)> {
    let (d, u) = hermitian_eig(a)?;
    let n = a.rows;
    Ok((d[n - 1], phase_normalize(&u.column(n - 1))))
}

/// Smallest eigenvalue and a unit eigenvector of a Hermitian matrix.
pub fn hermitian_eig_min(a: &CMatrix) -> Result<(f64, CVector)> {
    let (d, u) = hermitian_eig(a)?;
    Ok((d[0], phase_normalize(&u.column(0))))
}

/// Projection of a real symmetric matrix onto the PSD cone; returns the
/// projected matrix and the smallest eigenvalue before clipping.
pub fn sym_psd_project(a: &[f64], n: usize) -> (Vec<f64>, f64) {
    let (d, v) = sym_eig(a, n);
    let mut out = vec![0.0; n * n];
    for (k, &lam) in d.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        for i in 0..n {
            let vi = lam * v[i * n + k];
            if vi == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += vi * v[j * n + k];
            }
        }
    }
    (out, d.first().copied().unwrap_or(0.0))
}

/// Nearest positive semidefinite matrix in Frobenius norm.
pub fn psd_project(a: &CMatrix) -> Result<CMatrix> {
    let (d, u) = hermitian_eig(a)?;
    let n = a.rows;
    let mut out = CMatrix::zeros(n, n);
    for (k, &lam) in d.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        for i in 0..n {
            let ui = u.data[i * n + k] * lam;
            for j in 0..n {
                out.data[i * n + j] += ui * u.data[j * n + k].conj();
            }
        }
    }
    Ok(out.hermitian_part())
}

/// Ratio of the largest eigenvalue to the trace of a PSD matrix, with the
/// corresponding unit eigenvector.
pub fn rank_one_ratio(a: &CMatrix) -> Result<(f64, f64, CVector)> {
    let (lam, u) = hermitian_eig_max(a)?;
    let tr = a.trace_re();
    if tr <= 0.0 {
        return Err(Error::invalid(format!("rank_one_ratio: trace {tr:.3e} is not positive")));
    }
    Ok((lam / tr, lam, u))
}

/// Relative Frobenius distance to the best rank-one approximation.
pub fn rank_one_residual(a: &CMatrix) -> Result<f64> {
    let nrm = a.fro_norm();
    if nrm == 0.0 {
        return Ok(0.0);
    }
    let (lam, u) = hermitian_eig_max(a)?;
    let r = a - &u.outer(&u).scale_real(lam);
    Ok(r.fro_norm() / nrm)
}

/// Cholesky factorization of a real SPD matrix (row-major), lower factor.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut s = a[j * n + j];
        for k in 0..j {
            s -= l[j * n + k] * l[j * n + k];
        }
        if s <= 0.0 || !s.is_finite() {
            return Err(Error::numerical(format!(
                "cholesky: matrix not positive definite at pivot {j} ({s:.3e})"
            )));
        }
        let d = s.sqrt();
        l[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` in place given the lower Cholesky factor.
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn vec_is_column_major() {
        let a = CMatrix::from_real_rows(&[&[1.0, 3.0], &[2.0, 4.0]]);
        let v = vec(&a);
        let got: Vec<f64> = v.iter().map(|z| z.re).collect();
        assert_eq!(got, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(unvec(&v, 2, 2).unwrap(), a);
        assert!(unvec(&v, 3, 2).is_err());
    }

    #[test]
    fn kron_small_cases() {
        let b = CMatrix::from_fn(2, 3, |i, j| c(i as f64, j as f64));
        assert_eq!(kron(&CMatrix::identity(1), &b), b);
        let k = kron(&CMatrix::from_real_diag(&[1.0, 2.0]), &CMatrix::identity(2));
        assert_eq!(k, CMatrix::from_real_diag(&[1.0, 1.0, 2.0, 2.0]));
    }

    #[test]
    fn eig_max_simple() {
        let (l, u) = hermitian_eig_max(&CMatrix::identity(2)).unwrap();
        assert!((l - 1.0).abs() < 1e-14);
        assert!((u.norm() - 1.0).abs() < 1e-14);
        let (l, u) = hermitian_eig_max(&CMatrix::from_real_diag(&[1.0, 3.0])).unwrap();
        assert!((l - 3.0).abs() < 1e-14);
        assert!((u[1] - ONE).norm() < 1e-14 && u[0].norm() < 1e-14);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let a = CMatrix::from_real_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(hermitian_eig_max(&a).is_err());
        assert!(psd_project(&a).is_err());
    }

    #[test]
    fn psd_project_clips() {
        let p = psd_project(&CMatrix::from_real_diag(&[1.0, -1.0])).unwrap();
        assert!((&p - &CMatrix::from_real_diag(&[1.0, 0.0])).max_abs() < 1e-14);
        let a = CMatrix::from_fn(2, 2, |i, j| if i == j { c(2.0, 0.0) } else if i < j { c(0.5, 0.5) } else { c(0.5, -0.5) });
        assert!((&psd_project(&a).unwrap() - &a).max_abs() < 1e-12);
    }

    #[test]
    fn cholesky_roundtrip() {
        let a = vec![4.0, 2.0, 2.0, 3.0];
        let l = cholesky(&a, 2).unwrap();
        let mut b = vec![2.0, 1.0];
        cholesky_solve(&l, 2, &mut b);
        assert!((4.0 * b[0] + 2.0 * b[1] - 2.0).abs() < 1e-14);
        assert!((2.0 * b[0] + 3.0 * b[1] - 1.0).abs() < 1e-14);
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
    }

    fn rand_herm(seed: u64, n: usize) -> CMatrix {
        let mut st = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            st = st.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((st >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let g = CMatrix::from_fn(n, n, |_, _| c(next(), next()));
        (&g + &g.adjoint()).scale_real(0.5)
    }

    #[test]
    fn complex_eig_reconstructs() {
        for n in 1..12 {
            let a = rand_herm(n as u64, n);
            let (d, u) = hermitian_eig(&a).unwrap();
            let recon = &(&u * &CMatrix::from_real_diag(&d)) * &u.adjoint();
            assert!((&recon - &a).max_abs() < 1e-12, "n={n}");
            assert!((&(&u.adjoint() * &u) - &CMatrix::identity(n)).max_abs() < 1e-12);
            let slow = hermitian_eigvals(&a).unwrap();
            let fast = hermitian_eigvals_fast(&a).unwrap();
            for k in 0..n {
                assert!((slow[k] - d[k]).abs() < 1e-12 && (fast[k] - d[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn complex_cholesky_inverse() {
        let g = rand_herm(7, 6);
        let a = &(&g * &g) + &CMatrix::identity(6);
        let l = hermitian_cholesky(&a).unwrap();
        assert!((&(&l * &l.adjoint()) - &a).max_abs() < 1e-12);
        let inv = hermitian_pd_inverse(&a).unwrap();
        assert!((&(&inv * &a) - &CMatrix::identity(6)).max_abs() < 1e-12);
        assert!(hermitian_cholesky(&CMatrix::from_real_diag(&[1.0, -1.0])).is_err());
    }

}
