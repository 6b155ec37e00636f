//! Dense linear-algebra kernel: symmetric matrices, symmetric vectorization,
//! eigenvalue queries and linear solves with conditioning diagnostics.

use std::fmt;
use std::ops::{Add, Deref, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use thiserror::Error;

/// Dense real matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;

/// Dense real vector.
pub type Vector = DVector<f64>;

/// Numerical tolerances shared by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative symmetry tolerance, scaled by `max(1, max |entry|)`.
    pub sym_tol: f64,
    /// Margin for semi-definiteness tests: `A ⪰ 0` iff `eig_min(A) ≥ -psd_tol`.
    pub psd_tol: f64,
    /// Relative residual bound for linear solves.
    pub lin_tol: f64,
    /// 1-norm condition number above which solves are flagged.
    pub cond_warn: f64,
    /// Strict margin for "spectrum in the open left half-plane".
    pub stab_tol: f64,
    /// Relative residual bound for generalized Lyapunov solves.
    pub lyap_tol: f64,
    /// Turn the ill-conditioning warning into a hard error.
    pub strict_conditioning: bool,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        sym_tol: 1e-12,
        psd_tol: 1e-8,
        lin_tol: 1e-10,
        cond_warn: 1e12,
        stab_tol: 1e-9,
        lyap_tol: 1e-10,
        strict_conditioning: false,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("vector length {0} is not a triangular number")]
    NonTriangularLength(usize),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: max asymmetry {asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is singular at working precision (reciprocal condition {rcond:e})")]
    SingularMatrix { rcond: f64 },
    #[error("matrix is ill-conditioned (1-norm condition estimate {cond:e})")]
    IllConditioned { cond: f64 },
}

/// Square real symmetric matrix.
///
/// The stored value is always exactly symmetric: constructors either check
/// symmetry within tolerance or explicitly replace the input by `(M + Mᵀ)/2`.
#[derive(Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Checks squareness and symmetry within `sym_tol · max(1, max|entry|)`,
    /// then stores the symmetric part.
    pub fn new(m: Matrix) -> Result<Self, NumericsError> {
        Self::with_tolerance(m, Tolerances::DEFAULT.sym_tol)
    }

    pub fn with_tolerance(m: Matrix, sym_tol: f64) -> Result<Self, NumericsError> {
        if !m.is_square() {
            return Err(NumericsError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let asymmetry = max_asymmetry(&m);
        let tolerance = sym_tol * m.amax().max(1.0);
        if asymmetry > tolerance {
            return Err(NumericsError::NotSymmetric {
                asymmetry,
                tolerance,
            });
        }
        Ok(Self::symmetrize(m))
    }

    /// Replaces `m` by its symmetric part without any check.
    ///
    /// Panics if `m` is not square.
    pub fn symmetrize(m: Matrix) -> Self {
        assert!(m.is_square(), "symmetrize needs a square matrix");
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Matrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(Matrix::from_diagonal(&Vector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Congruence `Xᵀ S X`, symmetrized.
    pub fn congruence(&self, x: &Matrix) -> SymMatrix {
        SymMatrix::symmetrize(x.transpose() * &self.0 * x)
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        sym_eigenvalues(self)
    }

    pub fn eig_min(&self) -> f64 {
        eig_min_sym(self)
    }

    pub fn eig_max(&self) -> f64 {
        eig_max_sym(self)
    }

    pub fn is_psd(&self, psd_tol: f64) -> bool {
        self.dim() == 0 || self.eig_min() >= -psd_tol
    }

    pub fn is_positive_definite(&self, psd_tol: f64) -> bool {
        self.dim() == 0 || self.eig_min() > psd_tol
    }

    pub fn is_negative_definite(&self, psd_tol: f64) -> bool {
        self.dim() == 0 || self.eig_max() < -psd_tol
    }
}

impl Deref for SymMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMatrix{}", self.0)
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;

    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl Add for SymMatrix {
    type Output = SymMatrix;

    fn add(self, rhs: SymMatrix) -> SymMatrix {
        SymMatrix(self.0 + rhs.0)
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;

    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl Sub for SymMatrix {
    type Output = SymMatrix;

    fn sub(self, rhs: SymMatrix) -> SymMatrix {
        SymMatrix(self.0 - rhs.0)
    }
}

impl Neg for SymMatrix {
    type Output = SymMatrix;

    fn neg(self) -> SymMatrix {
        SymMatrix(-self.0)
    }
}

impl Neg for &SymMatrix {
    type Output = SymMatrix;

    fn neg(self) -> SymMatrix {
        SymMatrix(-&self.0)
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;

    fn mul(self, rhs: f64) -> SymMatrix {
        SymMatrix(&self.0 * rhs)
    }
}

fn max_asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigenvalues of a general real matrix together with the largest real part.
#[derive(Debug, Clone)]
pub struct SpectrumSummary {
    pub eigenvalues: Vec<Complex64>,
    pub max_real_part: f64,
}

impl SpectrumSummary {
    pub fn of(m: &Matrix) -> Self {
        if m.nrows() == 0 {
            return SpectrumSummary {
                eigenvalues: Vec::new(),
                max_real_part: f64::NEG_INFINITY,
            };
        }
        let eigenvalues = general_eigenvalues(m);
        let max_real_part = eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        SpectrumSummary {
            eigenvalues,
            max_real_part,
        }
    }
}

/// Eigenvalues of a general square matrix.
///
/// nalgebra's unbounded Francis iteration can cycle on exactly structured
/// inputs (skew blocks with zero diagonal), so the QR sweep is bounded and
/// retried on orthogonally similar or shifted copies.
fn general_eigenvalues(m: &Matrix) -> Vec<Complex64> {
    let n = m.nrows();
    let max_niter = 200 * n.max(1);
    let eig = |x: Matrix| {
        Schur::try_new(x, f64::EPSILON, max_niter).map(|s| s.complex_eigenvalues())
    };
    if let Some(ev) = eig(m.clone()) {
        return ev.iter().copied().collect();
    }
    for seed in [0.7, 1.3, 2.9] {
        let v = Vector::from_fn(n, |i, _| ((i as f64 + 1.0) * seed).sin() + 1.5);
        let h = Matrix::identity(n, n) - &v * v.transpose() * (2.0 / v.norm_squared());
        if let Some(ev) = eig(&h * m * &h) {
            return ev.iter().copied().collect();
        }
    }
    let shift = 0.37 * m.amax().max(1.0);
    let ev = eig(m + Matrix::identity(n, n) * shift)
        .expect("Schur iteration failed on the original, reflected and shifted matrix");
    ev.iter().map(|z| z - shift).collect()
}

/// Number of free coordinates of an `n×n` symmetric matrix.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Isometric coordinates on the symmetric matrices: row-major upper triangle,
/// off-diagonal entries scaled by `√2`, so `⟨svec(S), svec(T)⟩ = Tr(SᵀT)`.
pub fn svec(s: &SymMatrix) -> Vector {
    let n = s.dim();
    let mut v = Vector::zeros(svec_len(n));
    let mut idx = 0;
    for i in 0..n {
        v[idx] = s[(i, i)];
        idx += 1;
        for j in (i + 1)..n {
            v[idx] = std::f64::consts::SQRT_2 * s[(i, j)];
            idx += 1;
        }
    }
    v
}

/// Inverse of [`svec`].
pub fn unsvec(v: &[f64]) -> Result<SymMatrix, NumericsError> {
    let n = triangular_root(v.len()).ok_or(NumericsError::NonTriangularLength(v.len()))?;
    let mut m = Matrix::zeros(n, n);
    let mut idx = 0;
    for i in 0..n {
        m[(i, i)] = v[idx];
        idx += 1;
        for j in (i + 1)..n {
            let x = v[idx] / std::f64::consts::SQRT_2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            idx += 1;
        }
    }
    Ok(SymMatrix(m))
}

fn triangular_root(len: usize) -> Option<usize> {
    let mut n = ((2.0 * len as f64).sqrt()) as usize;
    while svec_len(n) < len {
        n += 1;
    }
    while n > 0 && svec_len(n) > len {
        n -= 1;
    }
    (svec_len(n) == len).then_some(n)
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn sym_eigenvalues(s: &SymMatrix) -> Vec<f64> {
    if s.dim() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = s.as_matrix().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn eig_min_sym(s: &SymMatrix) -> f64 {
    sym_eigenvalues(s).first().copied().unwrap_or(f64::INFINITY)
}

pub fn eig_max_sym(s: &SymMatrix) -> f64 {
    sym_eigenvalues(s).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Matrix 1-norm (maximum absolute column sum).
pub fn norm1(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU factorization of a square matrix with a 1-norm condition estimate.
///
/// Used wherever the crate needs `M⁻¹ X` without keeping `M⁻¹` around.
#[derive(Debug, Clone)]
pub struct Factorized {
    a: Matrix,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    cond: f64,
    lin_tol: f64,
}

impl Factorized {
    pub fn new(a: &Matrix, tol: &Tolerances) -> Result<Self, NumericsError> {
        if !a.is_square() {
            return Err(NumericsError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let n = a.nrows();
        let lu = a.clone().lu();
        if n == 0 {
            return Ok(Factorized {
                a: a.clone(),
                lu,
                cond: 1.0,
                lin_tol: tol.lin_tol,
            });
        }
        let inv = match lu.try_inverse() {
            Some(inv) if inv.iter().all(|x| x.is_finite()) => inv,
            _ => return Err(NumericsError::SingularMatrix { rcond: 0.0 }),
        };
        let cond = norm1(a) * norm1(&inv);
        if !cond.is_finite() || cond * f64::EPSILON >= 1.0 {
            return Err(NumericsError::SingularMatrix {
                rcond: if cond.is_finite() { 1.0 / cond } else { 0.0 },
            });
        }
        if cond > tol.cond_warn {
            if tol.strict_conditioning {
                return Err(NumericsError::IllConditioned { cond });
            }
            log::warn!("ill-conditioned linear solve: 1-norm condition estimate {cond:e}");
        }
        Ok(Factorized {
            a: a.clone(),
            lu,
            cond,
            lin_tol: tol.lin_tol,
        })
    }

    pub fn cond_estimate(&self) -> f64 {
        self.cond
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Solves `A X = B`, with one step of iterative refinement when the first
    /// residual exceeds `lin_tol · ‖B‖_F`.
    pub fn solve(&self, b: &Matrix) -> Matrix {
        assert_eq!(b.nrows(), self.dim(), "right-hand side has wrong row count");
        if self.dim() == 0 {
            return Matrix::zeros(0, b.ncols());
        }
        let mut x = self
            .lu
            .solve(b)
            .expect("factorization was checked to be invertible");
        let r = b - &self.a * &x;
        if r.norm() > self.lin_tol * b.norm() {
            if let Some(dx) = self.lu.solve(&r) {
                x += dx;
            }
        }
        x
    }
}

/// Solution of a dense linear system plus its 1-norm condition estimate.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub x: Matrix,
    pub cond_estimate: f64,
}

/// Solves `A X = B` for square `A`.
pub fn solve_linear(a: &Matrix, b: &Matrix) -> Result<LinearSolution, NumericsError> {
    solve_linear_with(a, b, &Tolerances::DEFAULT)
}

pub fn solve_linear_with(
    a: &Matrix,
    b: &Matrix,
    tol: &Tolerances,
) -> Result<LinearSolution, NumericsError> {
    if a.nrows() != b.nrows() {
        return Err(NumericsError::DimensionMismatch(format!(
            "A is {}x{} but B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let f = Factorized::new(a, tol)?;
    Ok(LinearSolution {
        x: f.solve(b),
        cond_estimate: f.cond_estimate(),
    })
}

/// Builds a matrix from row slices. Panics on ragged input.
pub fn matrix_from_rows(rows: &[&[f64]]) -> Matrix {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
    Matrix::from_fn(nrows, ncols, |i, j| rows[i][j])
}
