//! Certificate gains for the minimizer.
//!
//! A gain `L` on the minimizer's channel decouples the game: with player 2
//! playing `K₂(0) + L`, player 1 faces a single maximization problem whose
//! Riccati equation (negative quadratic weight `R11`) yields `P̃_L`. When the
//! `L` closed loop is stable, that equation has a stabilizing solution and
//! the sign condition `R11 + Σ D_{l,1}ᵀ P̃_L D_{l,1} ≺ 0` holds, `P̃_L` bounds
//! every iterate of the outer solver from above.

use std::fmt;

use crate::error::{Error, Result};
use crate::inner_are::{self, DefiniteAre, NewtonOptions, Orientation};
use crate::model::GtareProblem;
use crate::numerics::{Matrix, SymMatrix, Tolerances};
use crate::stability::LyapOperator;

/// Why a candidate gain was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    ClosedLoopUnstable,
    AreSolveFailed,
    SignConditionViolated,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureReason::ClosedLoopUnstable => "ClosedLoopUnstable",
            FailureReason::AreSolveFailed => "AreSolveFailed",
            FailureReason::SignConditionViolated => "SignConditionViolated",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub l: Matrix,
    pub admissible: bool,
    pub p_tilde: Option<SymMatrix>,
    pub failure_reason: Option<FailureReason>,
    /// Abscissa of `(A_L, C_{l,L})`.
    pub closed_loop_abscissa: f64,
    /// `eig_max(R11 + Σ D_{l,1}ᵀ P̃_L D_{l,1})` when `P̃_L` exists.
    pub sign_margin: Option<f64>,
}

/// `(A_L, C_{l,L}, Q_L, S_L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoupledData {
    pub a_l: Matrix,
    pub c_l: Vec<Matrix>,
    pub q_l: SymMatrix,
    pub s_l: Matrix,
}

/// `A_L = A + B K(0) + B2 L`, `C_{l,L} = C_l + D_l K(0) + D_{l,2} L`,
/// `Q_L = G(0) + Lᵀ R22 L`, `S_L = R12 L`.
pub fn decoupled_data(problem: &GtareProblem, l: &Matrix) -> Result<DecoupledData> {
    if l.shape() != (problem.m2(), problem.n()) {
        return Err(Error::InvalidConfig(format!(
            "certificate L is {}x{}, expected {}x{}",
            l.nrows(),
            l.ncols(),
            problem.m2(),
            problem.n()
        )));
    }
    let zero = SymMatrix::zeros(problem.n());
    let cl = problem.closed_loop(&zero)?;
    let a_l = cl.a + &problem.b2 * l;
    let c_l = cl.c.iter().zip(&problem.d2).map(|(c, d2)| c + d2 * l).collect();
    let q_l = SymMatrix::symmetrize(
        problem.residual(&zero)?.into_matrix() + l.transpose() * &problem.r22 * l,
    );
    let s_l = &problem.r12 * l;
    Ok(DecoupledData { a_l, c_l, q_l, s_l })
}

/// The maximizer's equation for `L`: dynamics `(A_L, C_{l,L})`, inputs
/// `(B1, D_{l,1})`, weights `(Q_L, S_L, R11)`, negative orientation.
pub fn certificate_are(problem: &GtareProblem, data: &DecoupledData) -> Result<DefiniteAre> {
    DefiniteAre::new(
        data.a_l.clone(),
        data.c_l.clone(),
        problem.b1.clone(),
        problem.d1.clone(),
        data.q_l.clone(),
        data.s_l.clone(),
        SymMatrix::symmetrize(problem.r11.clone()),
        Orientation::Negative,
    )
}

pub fn check_certificate(problem: &GtareProblem, l: &Matrix) -> CertificateReport {
    check_certificate_from(problem, l, None)
}

/// As [`check_certificate`], starting the Newton iteration from `t0`
/// instead of the zero gain.
pub fn check_certificate_from(problem: &GtareProblem, l: &Matrix, t0: Option<&Matrix>) -> CertificateReport {
    let tol = Tolerances::DEFAULT;
    let reject = |reason, abscissa, p_tilde, sign_margin| CertificateReport {
        l: l.clone(),
        admissible: false,
        p_tilde,
        failure_reason: Some(reason),
        closed_loop_abscissa: abscissa,
        sign_margin,
    };
    let data = match decoupled_data(problem, l) {
        Ok(d) => d,
        Err(_) => return reject(FailureReason::AreSolveFailed, f64::NAN, None, None),
    };
    let abscissa = LyapOperator::new(&data.a_l, &data.c_l).spectral_abscissa();
    if abscissa >= -tol.stab_tol {
        return reject(FailureReason::ClosedLoopUnstable, abscissa, None, None);
    }
    let solved = certificate_are(problem, &data).and_then(|are| {
        let zero = Matrix::zeros(problem.m1(), problem.n());
        inner_are::newton_kleinman(&are, t0.unwrap_or(&zero), &NewtonOptions::default())
    });
    let p_tilde = match solved {
        Ok(rep) => rep.z,
        Err(e) => {
            log::debug!("certificate equation failed: {e}");
            return reject(FailureReason::AreSolveFailed, abscissa, None, None);
        }
    };
    let mut weight = problem.r11.clone();
    for d1 in &problem.d1 {
        weight += d1.transpose() * p_tilde.as_matrix() * d1;
    }
    let sign_margin = SymMatrix::symmetrize(weight).eig_max();
    if sign_margin >= -tol.psd_tol {
        return reject(
            FailureReason::SignConditionViolated,
            abscissa,
            Some(p_tilde),
            Some(sign_margin),
        );
    }
    CertificateReport {
        l: l.clone(),
        admissible: true,
        p_tilde: Some(p_tilde),
        failure_reason: None,
        closed_loop_abscissa: abscissa,
        sign_margin: Some(sign_margin),
    }
}

/// `eig_min(P̃_L − P_k − Z_k)`; the outer iterates stay below the bound when
/// this is nonnegative.
pub fn upper_bound_check(p_tilde: &SymMatrix, p_k: &SymMatrix, z_k: &SymMatrix) -> f64 {
    (&(p_tilde - p_k) - z_k).eig_min()
}

/// Scales `s` of the state weight `s·I` used by [`candidate_certificates`].
pub const CANDIDATE_SCALES: [f64; 3] = [1.0, 10.0, 100.0];

/// `L = 0` followed by LQR-type gains for `(A_0, C_{l,0}; B2, D_{l,2})`
/// with weights `(s·I, I)`, `s` in [`CANDIDATE_SCALES`].
///
/// The LQR solves start from a stabilizer found by shift continuation.
/// Scales for which no stabilizer is found are skipped.
pub fn candidate_certificates(problem: &GtareProblem) -> Result<Vec<Matrix>> {
    let (n, m2) = (problem.n(), problem.m2());
    let cl = problem.closed_loop(&SymMatrix::zeros(n))?;
    let opts = NewtonOptions::default();
    let mut out = vec![Matrix::zeros(m2, n)];
    for s in CANDIDATE_SCALES {
        let are = DefiniteAre::new(
            cl.a.clone(),
            cl.c.clone(),
            problem.b2.clone(),
            problem.d2.clone(),
            &SymMatrix::identity(n) * s,
            Matrix::zeros(m2, n),
            SymMatrix::identity(m2),
            Orientation::Positive,
        )?;
        let gain = inner_are::stabilize_by_continuation(&are, &opts)
            .and_then(|t0| inner_are::newton_kleinman(&are, &t0, &opts));
        match gain {
            Ok(rep) => out.push(rep.t),
            Err(e) => log::debug!("candidate scale {s}: {e}"),
        }
    }
    Ok(out)
}

/// First admissible gain among [`candidate_certificates`].
pub fn search_certificate(problem: &GtareProblem) -> Result<Option<CertificateReport>> {
    Ok(candidate_certificates(problem)?
        .iter()
        .map(|l| check_certificate(problem, l))
        .find(|r| r.admissible))
}
