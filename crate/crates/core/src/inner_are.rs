//! Stabilizing solutions of stochastic Riccati equations with a definite
//! quadratic term,
//!
//! ```text
//! ℒ*(Z) + Qc − (BᵀZ + Σ D_lᵀ Z C_l + Sc)ᵀ (Rc + Σ D_lᵀ Z D_l)⁻¹ (BᵀZ + Σ D_lᵀ Z C_l + Sc) = 0,
//! ```
//!
//! computed by Newton–Kleinman iteration: every step solves one generalized
//! Lyapunov equation for the closed loop of the current gain.
//!
//! Negatively oriented equations (`Rc ≺ 0`) are solved by negating
//! `(Qc, Sc, Rc, Z)`, which turns them into positively oriented ones with the
//! same gain map.

use crate::error::{Error, Result};
use crate::numerics::{Factorized, Matrix, NumericsError, SymMatrix, Tolerances};
use crate::stability::LyapOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `Rc + Σ DᵀZD ≻ 0` along the iteration (a minimization problem).
    Positive,
    /// `Rc + Σ DᵀZD ≺ 0` along the iteration (a maximization problem).
    Negative,
}

impl Orientation {
    fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }
}

/// One Riccati equation with a definite quadratic term.
#[derive(Debug, Clone)]
pub struct DefiniteAre {
    pub a: Matrix,
    pub c: Vec<Matrix>,
    pub b: Matrix,
    pub d: Vec<Matrix>,
    pub qc: SymMatrix,
    pub sc: Matrix,
    pub rc: SymMatrix,
    pub orientation: Orientation,
}

#[derive(Debug, Clone)]
pub struct InnerSolveReport {
    pub z: SymMatrix,
    /// Final gain `T(Z)`.
    pub t: Matrix,
    pub newton_iters: usize,
    pub residual_norm: f64,
    /// Worst violation of `Z_j ⪰ Z_{j+1}` (j ≥ 1) in the positive frame; 0 when monotone.
    pub monotone_violation: f64,
    /// Spectral abscissa of the closed loop under `t`.
    pub closed_loop_abscissa: f64,
}

/// Newton–Kleinman controls.
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub inner_tol: f64,
    pub max_iters: usize,
    pub tol: Tolerances,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            inner_tol: 1e-11,
            max_iters: 50,
            tol: Tolerances::DEFAULT,
        }
    }
}

impl DefiniteAre {
    /// Checks dimensions and the definiteness of `Rc` required by `orientation`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: Matrix,
        c: Vec<Matrix>,
        b: Matrix,
        d: Vec<Matrix>,
        qc: SymMatrix,
        sc: Matrix,
        rc: SymMatrix,
        orientation: Orientation,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        let bad = |msg: String| Err(Error::InvalidAre(msg));
        if !a.is_square() {
            return bad("A is not square".into());
        }
        if c.iter().any(|c| c.shape() != (n, n)) {
            return bad("C_l must be n×n".into());
        }
        if b.nrows() != n {
            return bad("B must have n rows".into());
        }
        if d.len() != c.len() || d.iter().any(|d| d.shape() != (n, m)) {
            return bad("need one n×m D_l per C_l".into());
        }
        if qc.dim() != n || sc.shape() != (m, n) || rc.dim() != m {
            return bad("Qc, Sc, Rc dimensions do not match (n, m)".into());
        }
        let psd_tol = Tolerances::DEFAULT.psd_tol;
        let definite = match orientation {
            Orientation::Positive => rc.is_positive_definite(psd_tol),
            Orientation::Negative => rc.is_negative_definite(psd_tol),
        };
        if !definite {
            return bad(format!("Rc is not definite with {orientation:?} orientation"));
        }
        Ok(DefiniteAre {
            a,
            c,
            b,
            d,
            qc,
            sc,
            rc,
            orientation,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// The positively oriented equivalent: identity for `Positive`,
    /// `(−Qc, −Sc, −Rc)` for `Negative`. Its solution is `±Z`.
    pub fn normalized(&self) -> DefiniteAre {
        match self.orientation {
            Orientation::Positive => self.clone(),
            Orientation::Negative => DefiniteAre {
                qc: -&self.qc,
                sc: -&self.sc,
                rc: -&self.rc,
                orientation: Orientation::Positive,
                ..self.clone()
            },
        }
    }

    /// `Rc + Σ D_lᵀ Z D_l`.
    pub fn quadratic_weight(&self, z: &SymMatrix) -> SymMatrix {
        let mut w = self.rc.as_matrix().clone();
        for d in &self.d {
            w += d.transpose() * z.as_matrix() * d;
        }
        SymMatrix::symmetrize(w)
    }

    /// `BᵀZ + Σ D_lᵀ Z C_l + Sc`.
    pub fn cross_term(&self, z: &SymMatrix) -> Matrix {
        let mut s = self.b.transpose() * z.as_matrix() + &self.sc;
        for (d, c) in self.d.iter().zip(&self.c) {
            s += d.transpose() * z.as_matrix() * c;
        }
        s
    }

    /// Gain map `T(Z) = −(Rc + ΣDᵀZD)⁻¹ (BᵀZ + ΣDᵀZC + Sc)`.
    pub fn gain(&self, z: &SymMatrix) -> Result<Matrix> {
        let f = Factorized::new(self.quadratic_weight(z).as_matrix(), &Tolerances::DEFAULT)
            .map_err(|e| match e {
                NumericsError::SingularMatrix { .. } => Error::OrientationLost {
                    iteration: 0,
                    margin: 0.0,
                },
                other => other.into(),
            })?;
        Ok(-f.solve(&self.cross_term(z)))
    }

    /// Left-hand side of the equation at `Z`.
    pub fn residual(&self, z: &SymMatrix) -> Result<SymMatrix> {
        let s = self.cross_term(z);
        let f = Factorized::new(self.quadratic_weight(z).as_matrix(), &Tolerances::DEFAULT)?;
        let lz = crate::stability::apply(&self.a, &self.c, z);
        Ok(SymMatrix::symmetrize(
            lz.as_matrix() + self.qc.as_matrix() - s.transpose() * f.solve(&s),
        ))
    }

    /// `(A + BT, C_l + D_l T)`.
    pub fn closed_loop(&self, t: &Matrix) -> (Matrix, Vec<Matrix>) {
        let a = &self.a + &self.b * t;
        let c = self.c.iter().zip(&self.d).map(|(c, d)| c + d * t).collect();
        (a, c)
    }

    pub fn closed_loop_abscissa(&self, t: &Matrix) -> f64 {
        let (a, c) = self.closed_loop(t);
        LyapOperator::new(&a, &c).spectral_abscissa()
    }

    /// Constant term of the Newton step for gain `T`:
    /// `Qc + TᵀRcT + ScᵀT + TᵀSc`.
    fn policy_weight(&self, t: &Matrix) -> SymMatrix {
        let st = self.sc.transpose() * t;
        SymMatrix::symmetrize(
            self.qc.as_matrix() + t.transpose() * self.rc.as_matrix() * t + &st + st.transpose(),
        )
    }
}

/// Whether `0` lies in the admissible set: the (orientation-normalized)
/// block matrix `[[Qc, Scᵀ], [Sc, Rc]]` is PSD and `Rc` is definite.
pub fn check_zero_in_gamma(are: &DefiniteAre) -> bool {
    let are = are.normalized();
    let psd_tol = Tolerances::DEFAULT.psd_tol;
    if !are.rc.is_positive_definite(psd_tol) {
        return false;
    }
    let n = are.n();
    let m = are.m();
    let mut block = Matrix::zeros(n + m, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(are.qc.as_matrix());
    block.view_mut((n, 0), (m, n)).copy_from(&are.sc);
    block.view_mut((0, n), (n, m)).copy_from(&are.sc.transpose());
    block.view_mut((n, n), (m, m)).copy_from(are.rc.as_matrix());
    SymMatrix::symmetrize(block).is_psd(psd_tol)
}

/// First mean-square stabilizing gain among the zero gain and `hints`, in order.
pub fn find_initial_gain(are: &DefiniteAre, hints: &[Matrix]) -> Result<Matrix> {
    let stab_tol = Tolerances::DEFAULT.stab_tol;
    let zero = Matrix::zeros(are.m(), are.n());
    std::iter::once(&zero)
        .chain(hints.iter())
        .filter(|t| t.shape() == (are.m(), are.n()))
        .find(|t| are.closed_loop_abscissa(t) < -stab_tol)
        .cloned()
        .ok_or(Error::StabilizerNotFound)
}

/// Newton–Kleinman iteration from a stabilizing gain `t0`.
pub fn newton_kleinman(are: &DefiniteAre, t0: &Matrix, opts: &NewtonOptions) -> Result<InnerSolveReport> {
    let sign = are.orientation.sign();
    let pos = are.normalized();
    let tol = &opts.tol;

    let abscissa0 = pos.closed_loop_abscissa(t0);
    if abscissa0 >= -tol.stab_tol {
        return Err(Error::UnstableInitialGain { abscissa: abscissa0 });
    }

    let mut t = t0.clone();
    let mut z_prev: Option<SymMatrix> = None;
    let mut monotone_violation = 0.0f64;
    let mut last_residual = f64::INFINITY;

    for iter in 1..=opts.max_iters {
        let (acl, ccl) = pos.closed_loop(&t);
        let z = LyapOperator::new(&acl, &ccl).solve_with(&pos.policy_weight(&t), tol)?;

        let weight = pos.quadratic_weight(&z);
        let margin = weight.eig_min();
        if margin <= tol.psd_tol {
            return Err(Error::OrientationLost {
                iteration: iter,
                margin: sign * margin,
            });
        }
        let f = Factorized::new(weight.as_matrix(), tol)?;
        t = -f.solve(&pos.cross_term(&z));

        let scale = z.norm().max(1.0);
        let step = z_prev.as_ref().map_or(f64::INFINITY, |zp| (&z - zp).norm());
        if let Some(zp) = &z_prev {
            // The first Newton iterate may sit below the later ones; monotone
            // decrease holds from the second iterate on.
            if iter > 2 {
                monotone_violation = monotone_violation.max(-(zp - &z).eig_min());
            }
        }
        if step <= opts.inner_tol * scale {
            last_residual = pos.residual(&z)?.norm();
            if last_residual <= opts.inner_tol * scale {
                let closed_loop_abscissa = pos.closed_loop_abscissa(&t);
                if closed_loop_abscissa >= -tol.stab_tol {
                    return Err(Error::NotStabilizing {
                        abscissa: closed_loop_abscissa,
                    });
                }
                let z = if sign < 0.0 { -z } else { z };
                return Ok(InnerSolveReport {
                    z,
                    t,
                    newton_iters: iter,
                    residual_norm: last_residual,
                    monotone_violation: monotone_violation.max(0.0),
                    closed_loop_abscissa,
                });
            }
        }
        z_prev = Some(z);
    }
    if let Some(z) = &z_prev {
        last_residual = pos.residual(z).map(|r| r.norm()).unwrap_or(f64::NAN);
    }
    Err(Error::MaxItersExceeded {
        iterations: opts.max_iters,
        residual: last_residual,
    })
}

/// Initial gain from [`find_initial_gain`] followed by [`newton_kleinman`].
pub fn solve_stabilizing(are: &DefiniteAre, hints: &[Matrix], opts: &NewtonOptions) -> Result<InnerSolveReport> {
    let t0 = find_initial_gain(are, hints)?;
    newton_kleinman(are, &t0, opts)
}

/// Deterministic stabilizer for `(A, C; B, D)` by shift continuation.
///
/// Solves the equation with drift `A − σI`, starting from a `σ` large enough
/// that the zero gain stabilizes, then lowers `σ` as far as the current gain
/// still stabilizes the shifted system with margin, re-solving each time.
/// Fails with `StabilizerNotFound` when `σ` stalls above zero.
pub fn stabilize_by_continuation(are: &DefiniteAre, opts: &NewtonOptions) -> Result<Matrix> {
    let stab_tol = opts.tol.stab_tol;
    let n = are.n();
    let zero = Matrix::zeros(are.m(), n);
    let open = are.closed_loop_abscissa(&zero);
    if open < -stab_tol {
        return Ok(zero);
    }
    let mut sigma = open.max(0.0) / 2.0 + 1.0;
    let mut t = zero;
    for _ in 0..200 {
        let mut shifted = are.clone();
        shifted.a -= Matrix::identity(n, n) * sigma;
        t = newton_kleinman(&shifted, &t, opts)
            .map_err(|_| Error::StabilizerNotFound)?
            .t;
        let unshifted = are.closed_loop_abscissa(&t);
        if unshifted < -stab_tol {
            return Ok(t);
        }
        let shifted_abscissa = unshifted - 2.0 * sigma;
        let next = (sigma + 0.45 * shifted_abscissa).max(0.0);
        if sigma - next < 1e-10 * sigma.max(1.0) {
            break;
        }
        sigma = next;
    }
    Err(Error::StabilizerNotFound)
}
