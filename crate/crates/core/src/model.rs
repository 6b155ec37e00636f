//! Problem data for the zero-sum stochastic LQ game and the algebraic map
//! `G(P) = Q(P) − S(P)ᵀ R(P)⁻¹ S(P)` together with the matrices derived from it.

use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::{Factorized, Matrix, NumericsError, SymMatrix, Tolerances};

/// All constant coefficients of the game.
///
/// Player 1 (`u1`, weight `R11`) maximizes, player 2 (`u2`, weight `R22`)
/// minimizes. `R21` is not stored; it is `R12ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GtareProblem {
    pub a: Matrix,
    pub c: Vec<Matrix>,
    pub b1: Matrix,
    pub b2: Matrix,
    /// `D_{l,1}` for `l = 1..r`.
    pub d1: Vec<Matrix>,
    /// `D_{l,2}` for `l = 1..r`.
    pub d2: Vec<Matrix>,
    pub q: Matrix,
    pub s1: Matrix,
    pub s2: Matrix,
    pub r11: Matrix,
    pub r12: Matrix,
    pub r22: Matrix,
}

/// A problem defect found by [`GtareProblem::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    Dimension(String),
    Asymmetric { field: &'static str, asymmetry: f64 },
    NonFinite { field: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Dimension(msg) => write!(f, "dimension: {msg}"),
            Diagnostic::Asymmetric { field, asymmetry } => {
                write!(f, "symmetry: {field} has asymmetry {asymmetry:e}")
            }
            Diagnostic::NonFinite { field } => write!(f, "non-finite entry in {field}"),
        }
    }
}

/// `Q(P)`, `S(P)` and `R(P)` evaluated at one `P`.
#[derive(Debug, Clone)]
pub struct CoefficientBlocks {
    m1: usize,
    pub qp: SymMatrix,
    /// `S1(P)` stacked over `S2(P)`.
    pub sp: Matrix,
    /// `[[R11(P), R12(P)], [R21(P), R22(P)]]`.
    pub rp: SymMatrix,
}

impl CoefficientBlocks {
    pub fn s1(&self) -> Matrix {
        self.sp.rows(0, self.m1).into_owned()
    }

    pub fn s2(&self) -> Matrix {
        let m2 = self.sp.nrows() - self.m1;
        self.sp.rows(self.m1, m2).into_owned()
    }

    pub fn r11(&self) -> SymMatrix {
        SymMatrix::symmetrize(self.rp.view((0, 0), (self.m1, self.m1)).into_owned())
    }

    pub fn r12(&self) -> Matrix {
        let m2 = self.rp.nrows() - self.m1;
        self.rp.view((0, self.m1), (self.m1, m2)).into_owned()
    }

    pub fn r22(&self) -> SymMatrix {
        let m2 = self.rp.nrows() - self.m1;
        SymMatrix::symmetrize(self.rp.view((self.m1, self.m1), (m2, m2)).into_owned())
    }
}

/// Feedback gains `[K1; K2] = −R(P)⁻¹ [S1(P); S2(P)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    pub k1: Matrix,
    pub k2: Matrix,
}

impl Gains {
    pub fn zeros(problem: &GtareProblem) -> Self {
        Gains {
            k1: Matrix::zeros(problem.m1(), problem.n()),
            k2: Matrix::zeros(problem.m2(), problem.n()),
        }
    }

    pub fn stacked(&self) -> Matrix {
        stack_rows(&self.k1, &self.k2)
    }

    fn split(stacked: Matrix, m1: usize) -> Self {
        let m2 = stacked.nrows() - m1;
        Gains {
            k1: stacked.rows(0, m1).into_owned(),
            k2: stacked.rows(m1, m2).into_owned(),
        }
    }
}

/// Closed-loop drift and diffusion matrices `(A_cl, C_cl,1..r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub a: Matrix,
    pub c: Vec<Matrix>,
}

pub(crate) fn stack_rows(top: &Matrix, bottom: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(top.nrows() + bottom.nrows(), top.ncols().max(bottom.ncols()));
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    out
}

pub(crate) fn stack_cols(left: &Matrix, right: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(left.nrows().max(right.nrows()), left.ncols() + right.ncols());
    out.view_mut((0, 0), left.shape()).copy_from(left);
    out.view_mut((0, left.ncols()), right.shape()).copy_from(right);
    out
}

/// Coefficients of a problem with `n = m1 = m2 = r = 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScalarGame {
    pub a: f64,
    pub c: f64,
    pub b1: f64,
    pub b2: f64,
    pub d1: f64,
    pub d2: f64,
    pub q: f64,
    pub s1: f64,
    pub s2: f64,
    pub r11: f64,
    pub r12: f64,
    pub r22: f64,
}

impl From<ScalarGame> for GtareProblem {
    fn from(g: ScalarGame) -> Self {
        let m = |x: f64| Matrix::from_element(1, 1, x);
        GtareProblem {
            a: m(g.a),
            c: vec![m(g.c)],
            b1: m(g.b1),
            b2: m(g.b2),
            d1: vec![m(g.d1)],
            d2: vec![m(g.d2)],
            q: m(g.q),
            s1: m(g.s1),
            s2: m(g.s2),
            r11: m(g.r11),
            r12: m(g.r12),
            r22: m(g.r22),
        }
    }
}

impl GtareProblem {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m1(&self) -> usize {
        self.b1.ncols()
    }

    pub fn m2(&self) -> usize {
        self.b2.ncols()
    }

    pub fn r(&self) -> usize {
        self.c.len()
    }

    /// Lists every dimension, symmetry and finiteness defect. Empty means valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let (n, m1, m2, r) = (self.n(), self.m1(), self.m2(), self.r());
        if n == 0 {
            out.push(Diagnostic::Dimension("state dimension n must be positive".into()));
        }
        let shape = |name: String, m: &Matrix, rows: usize, cols: usize| {
            (m.shape() != (rows, cols)).then(|| {
                Diagnostic::Dimension(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    m.nrows(),
                    m.ncols()
                ))
            })
        };
        let mut dims = vec![shape("A".into(), &self.a, n, n)];
        for (l, c) in self.c.iter().enumerate() {
            dims.push(shape(format!("C[{}]", l + 1), c, n, n));
        }
        dims.push(shape("B1".into(), &self.b1, n, m1));
        dims.push(shape("B2".into(), &self.b2, n, m2));
        for (name, list, m) in [("D1", &self.d1, m1), ("D2", &self.d2, m2)] {
            if list.len() != r {
                dims.push(Some(Diagnostic::Dimension(format!(
                    "{name} has {} matrices, expected r = {r}",
                    list.len()
                ))));
            }
            for (l, d) in list.iter().enumerate() {
                dims.push(shape(format!("{name}[{}]", l + 1), d, n, m));
            }
        }
        dims.push(shape("Q".into(), &self.q, n, n));
        dims.push(shape("S1".into(), &self.s1, m1, n));
        dims.push(shape("S2".into(), &self.s2, m2, n));
        dims.push(shape("R11".into(), &self.r11, m1, m1));
        dims.push(shape("R12".into(), &self.r12, m1, m2));
        dims.push(shape("R22".into(), &self.r22, m2, m2));
        out.extend(dims.into_iter().flatten());

        for (field, m) in [("Q", &self.q), ("R11", &self.r11), ("R22", &self.r22)] {
            if m.is_square() {
                if let Err(NumericsError::NotSymmetric { asymmetry, .. }) =
                    SymMatrix::new(m.clone())
                {
                    out.push(Diagnostic::Asymmetric { field, asymmetry });
                }
            }
        }

        let mut finite = |name: String, m: &Matrix| {
            if m.iter().any(|x| !x.is_finite()) {
                out.push(Diagnostic::NonFinite { field: name });
            }
        };
        for (name, m) in [
            ("A", &self.a),
            ("B1", &self.b1),
            ("B2", &self.b2),
            ("Q", &self.q),
            ("S1", &self.s1),
            ("S2", &self.s2),
            ("R11", &self.r11),
            ("R12", &self.r12),
            ("R22", &self.r22),
        ] {
            finite(name.into(), m);
        }
        for (name, list) in [("C", &self.c), ("D1", &self.d1), ("D2", &self.d2)] {
            for (l, m) in list.iter().enumerate() {
                finite(format!("{name}[{}]", l + 1), m);
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let diagnostics = self.validate();
        if diagnostics.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidProblem(diagnostics))
        }
    }

    /// Rejects problems whose `R = R(0)` is rank deficient.
    pub fn ensure_full_rank_r(&self) -> Result<()> {
        match Factorized::new(self.r_full().as_matrix(), &Tolerances::DEFAULT) {
            Err(NumericsError::SingularMatrix { .. }) => Err(Error::UnsupportedRankDeficientR),
            _ => Ok(()),
        }
    }

    /// `[B1 B2]`.
    pub fn b(&self) -> Matrix {
        stack_cols(&self.b1, &self.b2)
    }

    /// `[D_{l,1} D_{l,2}]` for each `l`.
    pub fn d(&self) -> Vec<Matrix> {
        self.d1
            .iter()
            .zip(&self.d2)
            .map(|(d1, d2)| stack_cols(d1, d2))
            .collect()
    }

    /// `[S1; S2]`.
    pub fn s(&self) -> Matrix {
        stack_rows(&self.s1, &self.s2)
    }

    /// The full constant weight `[[R11, R12], [R12ᵀ, R22]]`.
    pub fn r_full(&self) -> SymMatrix {
        let top = stack_cols(&self.r11, &self.r12);
        let bottom = stack_cols(&self.r12.transpose(), &self.r22);
        SymMatrix::symmetrize(stack_rows(&top, &bottom))
    }

    /// `Q(P) = PA + AᵀP + Σ C_lᵀPC_l + Q`, `S_i(P) = B_iᵀP + Σ D_{l,i}ᵀPC_l + S_i`,
    /// `R_ij(P) = R_ij + Σ D_{l,i}ᵀPD_{l,j}`.
    pub fn blocks(&self, p: &SymMatrix) -> CoefficientBlocks {
        let b = self.b();
        let d = self.d();
        let mut qp = p.as_matrix() * &self.a + self.a.transpose() * p.as_matrix() + &self.q;
        let mut sp = b.transpose() * p.as_matrix() + self.s();
        let mut rp = self.r_full().into_matrix();
        for (c, d) in self.c.iter().zip(&d) {
            let pc = p.as_matrix() * c;
            qp += c.transpose() * &pc;
            sp += d.transpose() * &pc;
            rp += d.transpose() * p.as_matrix() * d;
        }
        CoefficientBlocks {
            m1: self.m1(),
            qp: SymMatrix::symmetrize(qp),
            sp,
            rp: SymMatrix::symmetrize(rp),
        }
    }

    fn factor_rp(blocks: &CoefficientBlocks) -> Result<Factorized> {
        Factorized::new(blocks.rp.as_matrix(), &Tolerances::DEFAULT).map_err(|e| match e {
            NumericsError::SingularMatrix { rcond } => Error::SingularRP {
                cond: if rcond > 0.0 { 1.0 / rcond } else { f64::INFINITY },
            },
            other => other.into(),
        })
    }

    pub fn gains(&self, p: &SymMatrix) -> Result<Gains> {
        let blocks = self.blocks(p);
        let f = Self::factor_rp(&blocks)?;
        Ok(Gains::split(-f.solve(&blocks.sp), self.m1()))
    }

    /// `G(P) = Q(P) − S(P)ᵀ R(P)⁻¹ S(P)`.
    pub fn residual(&self, p: &SymMatrix) -> Result<SymMatrix> {
        let blocks = self.blocks(p);
        let f = Self::factor_rp(&blocks)?;
        let x = f.solve(&blocks.sp);
        Ok(SymMatrix::symmetrize(
            blocks.qp.as_matrix() - blocks.sp.transpose() * x,
        ))
    }

    /// `(eig_min(R22(P)), eig_max(R11(P)))`.
    pub fn domain_margins(&self, p: &SymMatrix) -> (f64, f64) {
        let blocks = self.blocks(p);
        (blocks.r22().eig_min(), blocks.r11().eig_max())
    }

    /// Membership in `Dom G`: `R22(P) ≻ 0` and `R11(P) ≺ 0`.
    pub fn in_dom(&self, p: &SymMatrix, psd_tol: f64) -> bool {
        let (r22_min, r11_max) = self.domain_margins(p);
        r22_min > psd_tol && r11_max < -psd_tol
    }

    /// `R♯(P) = R11(P) − R12(P) R22(P)⁻¹ R21(P)`.
    pub fn schur_r22(&self, p: &SymMatrix) -> Result<SymMatrix> {
        schur_of_blocks(&self.blocks(p))
    }

    /// `N_i(P, Z) = B_iᵀZ + Σ D_{l,i}ᵀ Z (C_l + D_{l,1}K1(P) + D_{l,2}K2(P))`, stacked.
    pub fn n_matrix(&self, p: &SymMatrix, z: &SymMatrix) -> Result<Matrix> {
        let cl = self.closed_loop(p)?;
        Ok(self.n_matrix_with(&cl, z))
    }

    /// [`n_matrix`](Self::n_matrix) for an already computed closed loop.
    pub fn n_matrix_with(&self, cl: &ClosedLoop, z: &SymMatrix) -> Matrix {
        let mut n = self.b().transpose() * z.as_matrix();
        for (d, c) in self.d().iter().zip(&cl.c) {
            n += d.transpose() * z.as_matrix() * c;
        }
        n
    }

    /// Closed loop under `K(P)`.
    pub fn closed_loop(&self, p: &SymMatrix) -> Result<ClosedLoop> {
        Ok(self.closed_loop_with(&self.gains(p)?))
    }

    /// `(A + B1Θ1 + B2Θ2, C_l + D_{l,1}Θ1 + D_{l,2}Θ2)`.
    pub fn closed_loop_with(&self, gains: &Gains) -> ClosedLoop {
        let a = &self.a + &self.b1 * &gains.k1 + &self.b2 * &gains.k2;
        let c = self
            .c
            .iter()
            .zip(self.d1.iter().zip(&self.d2))
            .map(|(c, (d1, d2))| c + d1 * &gains.k1 + d2 * &gains.k2)
            .collect();
        ClosedLoop { a, c }
    }

    /// Right-hand side of the completion-of-squares identity: for any
    /// `Θ = [Θ1; Θ2]` this equals `G(P)`.
    pub fn completion_of_squares(&self, p: &SymMatrix, theta: &Gains) -> Result<SymMatrix> {
        let blocks = self.blocks(p);
        let k = -Self::factor_rp(&blocks)?.solve(&blocks.sp);
        let th = theta.stacked();
        let cl = self.closed_loop_with(theta);
        let mut g = apply_lyapunov(&cl, p.as_matrix()) + &self.q;
        g += th.transpose() * self.r_full().as_matrix() * &th;
        let st = th.transpose() * self.s();
        g += &st + st.transpose();
        let gap = &k - &th;
        g -= gap.transpose() * blocks.rp.as_matrix() * &gap;
        Ok(SymMatrix::symmetrize(g))
    }

    /// Right-hand side of the increment identity:
    /// `G(P) + ℒ*_{A_cl}(Z) − N(P,Z)ᵀ R(P+Z)⁻¹ N(P,Z)`, which equals `G(P + Z)`.
    pub fn residual_expansion(&self, p: &SymMatrix, z: &SymMatrix) -> Result<SymMatrix> {
        let cl = self.closed_loop(p)?;
        let n = self.n_matrix_with(&cl, z);
        let pz = p + z;
        let f = Self::factor_rp(&self.blocks(&pz))?;
        let g = self.residual(p)?.into_matrix() + apply_lyapunov(&cl, z.as_matrix())
            - n.transpose() * f.solve(&n);
        Ok(SymMatrix::symmetrize(g))
    }

    /// Stage cost weight of the closed loop under `Θ`:
    /// `[I; Θ]ᵀ [[Q, Sᵀ], [S, R]] [I; Θ]`.
    pub fn closed_loop_weight(&self, gains: &Gains) -> SymMatrix {
        let th = gains.stacked();
        let st = th.transpose() * self.s();
        SymMatrix::symmetrize(&self.q + &st + st.transpose() + th.transpose() * self.r_full().as_matrix() * &th)
    }
}

pub(crate) fn schur_of_blocks(blocks: &CoefficientBlocks) -> Result<SymMatrix> {
    let r22 = blocks.r22();
    let f = Factorized::new(r22.as_matrix(), &Tolerances::DEFAULT).map_err(|e| match e {
        NumericsError::SingularMatrix { .. } => Error::SingularR22,
        other => other.into(),
    })?;
    let r12 = blocks.r12();
    let x = f.solve(&r12.transpose());
    Ok(SymMatrix::symmetrize(blocks.r11().as_matrix() - r12 * x))
}

/// `Y ↦ YA + AᵀY + Σ C_lᵀ Y C_l` for a closed loop.
pub(crate) fn apply_lyapunov(cl: &ClosedLoop, y: &Matrix) -> Matrix {
    let mut out = y * &cl.a + cl.a.transpose() * y;
    for c in &cl.c {
        out += c.transpose() * y * c;
    }
    out
}
