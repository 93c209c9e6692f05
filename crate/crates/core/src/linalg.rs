//! Dense linear algebra for the small matrices used throughout the crate.
//!
//! Everything here is sized for n ≲ 12: row-major storage, Gaussian
//! elimination with partial pivoting, explicit Kronecker vectorisation for
//! the Lyapunov equation. Imaginary-axis spectrum tests go through the
//! characteristic polynomial rather than an eigensolver.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

/// Pivot magnitude below which a matrix is treated as singular.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular (pivot {pivot:e} at column {col})")]
    SingularMatrix { col: usize, pivot: f64 },
    #[error("Routh array row {row} is identically zero")]
    DegenerateRow { row: usize },
    #[error("polynomial must be monic with at least one coefficient")]
    NotMonic,
    #[error("matrix is not Hurwitz")]
    NotHurwitz,
    #[error("non-finite entry")]
    NonFinite,
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: (rows, cols),
                got: (data.len(), 1),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    /// Block-diagonal assembly of square blocks.
    pub fn block_diag(blocks: &[Matrix]) -> Self {
        let n: usize = blocks.iter().map(|b| b.rows).sum();
        let mut m = Self::zeros(n, n);
        let mut off = 0;
        for b in blocks {
            for i in 0..b.rows {
                for j in 0..b.cols {
                    m[(off + i, off + j)] = b[(i, j)];
                }
            }
            off += b.rows;
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
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

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch {
                expected: (self.cols, other.cols),
                got: (other.rows, other.cols),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// `y = A x`. Panics on dimension mismatch.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Allocation-free `out = A x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    /// `yᵀ = xᵀ A`.
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for (i, xi) in x.iter().enumerate() {
            for (j, yj) in y.iter_mut().enumerate() {
                *yj += xi * self[(i, j)];
            }
        }
        y
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    /// Outer product `x yᵀ`.
    pub fn outer(x: &[f64], y: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(x.len(), y.len());
        for (i, xi) in x.iter().enumerate() {
            for (j, yj) in y.iter().enumerate() {
                m[(i, j)] = xi * yj;
            }
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn inverse(&self) -> Result<Matrix, LinalgError> {
        let n = self.require_square()?;
        let lu = Lu::factor(self)?;
        let mut inv = Matrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            let x = lu.solve(&col);
            for i in 0..n {
                inv[(i, j)] = x[i];
            }
        }
        Ok(inv)
    }

    /// Determinant by elimination; zero for (numerically) singular input.
    pub fn determinant(&self) -> Result<f64, LinalgError> {
        self.require_square()?;
        match Lu::factor(self) {
            Ok(lu) => Ok(lu.determinant()),
            Err(LinalgError::SingularMatrix { .. }) => Ok(0.0),
            Err(e) => Err(e),
        }
    }

    /// Sylvester's criterion: all leading principal minors strictly positive.
    pub fn leading_minors_positive(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        (1..=self.rows).all(|k| {
            let sub = self.submatrix(k);
            sub.determinant().map_or(false, |d| d > 0.0)
        })
    }

    fn submatrix(&self, k: usize) -> Matrix {
        let mut m = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                m[(i, j)] = self[(i, j)];
            }
        }
        m
    }

    fn require_square(&self) -> Result<usize, LinalgError> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// LU factorisation with partial pivoting, `P A = L U` packed in one matrix.
struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    swaps: usize,
}

impl Lu {
    fn factor(a: &Matrix) -> Result<Self, LinalgError> {
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot < PIVOT_TOL {
                return Err(LinalgError::SingularMatrix { col: k, pivot });
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                swaps += 1;
            }
            let d = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= f * u;
                    }
                }
            }
        }
        Ok(Self { lu, perm, swaps })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        x
    }

    fn determinant(&self) -> f64 {
        let n = self.lu.rows;
        let d: f64 = (0..n).map(|i| self.lu[(i, i)]).product();
        if self.swaps % 2 == 0 {
            d
        } else {
            -d
        }
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.require_square()?;
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: (n, 1),
            got: (b.len(), 1),
        });
    }
    Ok(Lu::factor(a)?.solve(b))
}

/// Companion matrix with `I_{n-1}` in the upper-right block and last row
/// `(-c₁, …, -cₙ)`. Its characteristic polynomial is
/// `sⁿ + cₙ sⁿ⁻¹ + … + c₂ s + c₁`.
pub fn companion(coeffs: &[f64]) -> Matrix {
    let n = coeffs.len();
    assert!(n >= 1, "companion matrix needs at least one coefficient");
    let mut m = Matrix::zeros(n, n);
    for i in 0..n - 1 {
        m[(i, i + 1)] = 1.0;
    }
    for (j, c) in coeffs.iter().enumerate() {
        m[(n - 1, j)] = -c;
    }
    m
}

/// Characteristic polynomial `det(sI - A)` via Faddeev–LeVerrier.
///
/// Returned highest degree first: `[1, c_{n-1}, …, c_0]`.
pub fn charpoly(a: &Matrix) -> Result<Vec<f64>, LinalgError> {
    let n = a.require_square()?;
    let mut coeffs = vec![1.0];
    let mut mk = Matrix::zeros(n, n);
    let ident = Matrix::identity(n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{n-k+1} I
        mk = a.matmul(&mk)?.add(&ident.scale(c_prev));
        let amk = a.matmul(&mk)?;
        let trace: f64 = (0..n).map(|i| amk[(i, i)]).sum();
        let c = -trace / k as f64;
        coeffs.push(c);
        c_prev = c;
    }
    Ok(coeffs)
}

/// Routh–Hurwitz test on a monic polynomial given highest degree first.
///
/// Returns `Ok(true)` iff every root lies in the open left half-plane. An
/// identically zero Routh row (roots symmetric about the origin, e.g. on the
/// imaginary axis) is reported as [`LinalgError::DegenerateRow`].
pub fn routh_hurwitz_stable(coeffs_monic: &[f64]) -> Result<bool, LinalgError> {
    if coeffs_monic.is_empty() || (coeffs_monic[0] - 1.0).abs() > 1e-12 {
        return Err(LinalgError::NotMonic);
    }
    let deg = coeffs_monic.len() - 1;
    if deg == 0 {
        return Ok(true);
    }
    let scale = coeffs_monic.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let zero_tol = 1e-12 * scale.max(1.0);
    let width = deg / 2 + 1;
    let pick = |start: usize| -> Vec<f64> {
        (0..width)
            .map(|i| coeffs_monic.get(start + 2 * i).copied().unwrap_or(0.0))
            .collect()
    };
    let mut prev = pick(0);
    let mut cur = pick(1);
    for row in 1..=deg {
        if cur.iter().all(|x| x.abs() <= zero_tol) {
            return Err(LinalgError::DegenerateRow { row });
        }
        if cur[0] <= zero_tol {
            return Ok(false);
        }
        let next: Vec<f64> = (0..width)
            .map(|j| {
                let a = prev.get(j + 1).copied().unwrap_or(0.0);
                let b = cur.get(j + 1).copied().unwrap_or(0.0);
                (cur[0] * a - prev[0] * b) / cur[0]
            })
            .collect();
        prev = cur;
        cur = next;
    }
    Ok(true)
}

/// Hurwitz test for a square matrix; imaginary-axis degeneracy counts as unstable.
pub fn is_hurwitz(a: &Matrix) -> bool {
    charpoly(a)
        .and_then(|p| routh_hurwitz_stable(&p))
        .unwrap_or(false)
}

/// Solves `P F + Fᵀ P = -I` through the n²×n² vectorised system.
pub fn lyapunov_solve(f: &Matrix) -> Result<Matrix, LinalgError> {
    let n = f.require_square()?;
    if !is_hurwitz(f) {
        return Err(LinalgError::NotHurwitz);
    }
    let nn = n * n;
    let mut sys = Matrix::zeros(nn, nn);
    let mut rhs = vec![0.0; nn];
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            // (P F)_{ij} = Σ_k P_{ik} F_{kj}
            for k in 0..n {
                sys[(row, i * n + k)] += f[(k, j)];
            }
            // (Fᵀ P)_{ij} = Σ_k F_{ki} P_{kj}
            for k in 0..n {
                sys[(row, k * n + j)] += f[(k, i)];
            }
            if i == j {
                rhs[row] = -1.0;
            }
        }
    }
    let p = solve_linear(&sys, &rhs)?;
    let p = Matrix::new(n, n, p)?;
    Ok(p.add(&p.transpose()).scale(0.5))
}

/// Residual `‖P F + Fᵀ P + I‖_F`.
pub fn lyapunov_residual(p: &Matrix, f: &Matrix) -> f64 {
    let pf = p.matmul(f).expect("square");
    pf.add(&pf.transpose())
        .add(&Matrix::identity(f.rows()))
        .frobenius_norm()
}

/// True iff every eigenvalue of `s` is simple and purely imaginary.
///
/// Such a characteristic polynomial has the form `s^r h(-s²)` with `r ∈ {0,1}`
/// where `h(λ)` has only simple, strictly positive real roots `λ = ω²`. The
/// parity structure is checked directly and the root count of `h` on `(0, ∞)`
/// by a Sturm sequence.
pub fn eig_imaginary_distinct(s: &Matrix) -> bool {
    let Ok(p) = charpoly(s) else { return false };
    let n = p.len() - 1;
    let scale = p.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let tol = 1e-9 * scale;
    // p[i] multiplies s^{n-i}; terms with parity of n survive.
    if p
        .iter()
        .enumerate()
        .any(|(i, c)| i % 2 == 1 && c.abs() > tol)
    {
        return false;
    }
    // p(s) = s^r Σ_j p[2j] s^{2(m-j)}, m = ⌊n/2⌋. With s² = -λ:
    // h(λ) = Σ_j p[2j] (-λ)^{m-j}, ascending coefficients below.
    let m = n / 2;
    let mut h_asc = vec![0.0; m + 1];
    for j in 0..=m {
        let sign = if (m - j) % 2 == 0 { 1.0 } else { -1.0 };
        h_asc[m - j] = sign * p[2 * j];
    }
    if n % 2 == 1 && h_asc[0].abs() <= tol {
        return false;
    }
    if m == 0 {
        return true;
    }
    sturm_positive_roots(&h_asc, tol) == m
}

/// Number of distinct real roots of `h` (ascending coefficients) in `(0, ∞)`.
fn sturm_positive_roots(h_asc: &[f64], tol: f64) -> usize {
    let deriv: Vec<f64> = h_asc
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * i as f64)
        .collect();
    let mut seq = vec![trim(h_asc.to_vec(), tol), trim(deriv, tol)];
    loop {
        let (a, b) = (&seq[seq.len() - 2], &seq[seq.len() - 1]);
        if b.len() <= 1 {
            break;
        }
        let r = poly_rem(a, b);
        let r = trim(r.into_iter().map(|x| -x).collect(), tol);
        if r.iter().all(|x| *x == 0.0) {
            break;
        }
        seq.push(r);
    }
    let at_zero: Vec<f64> = seq.iter().map(|q| q[0]).collect();
    let at_inf: Vec<f64> = seq.iter().map(|q| *q.last().unwrap()).collect();
    sign_changes(&at_zero).saturating_sub(sign_changes(&at_inf))
}

fn trim(mut p: Vec<f64>, tol: f64) -> Vec<f64> {
    while p.len() > 1 && p.last().map_or(false, |c| c.abs() <= tol) {
        p.pop();
    }
    for c in p.iter_mut() {
        if c.abs() <= tol {
            *c = 0.0;
        }
    }
    p
}

fn poly_rem(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = a.to_vec();
    let db = b.len() - 1;
    let lead = b[db];
    while r.len() > db {
        let dr = r.len() - 1;
        let f = r[dr] / lead;
        for (i, bc) in b.iter().enumerate() {
            r[dr - db + i] -= f * bc;
        }
        r.pop();
    }
    if r.is_empty() {
        r.push(0.0);
    }
    r
}

fn sign_changes(vals: &[f64]) -> usize {
    let signs: Vec<f64> = vals.iter().copied().filter(|v| *v != 0.0).collect();
    signs.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
}

/// 2×2 rotation generator `[[0, ω], [-ω, 0]]`.
pub fn rotation_block(omega: f64) -> Matrix {
    Matrix::from_rows(&[&[0.0, omega], &[-omega, 0.0]])
}
