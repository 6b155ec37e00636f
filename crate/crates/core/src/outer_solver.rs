//! The dual-layer iteration for the game-theoretic Riccati equation.
//!
//! Starting from `P⁽⁰⁾ = 0`, each outer step freezes both players' gains at
//! `K(P⁽ᵏ⁾)`, solves a definite Riccati equation on the minimizer's channel
//! for the increment `Z⁽ᵏ⁾ ⪰ 0`, and accumulates `P⁽ᵏ⁺¹⁾ = P⁽ᵏ⁾ + Z⁽ᵏ⁾`.
//! The sequence is nondecreasing and converges to the stabilizing solution.
//!
//! The iteration count reported as `outer_iters` is the number of inner
//! solves; the returned solution is `P⁽ᴷ⁾ + Z⁽ᴷ⁾` where `Z⁽ᴷ⁾` is the first
//! increment below the stopping threshold.

use log::{debug, info};

use crate::certify;
use crate::error::{Error, Result};
use crate::inner_are::{self, DefiniteAre, InnerSolveReport, NewtonOptions, Orientation};
use crate::model::{schur_of_blocks, Gains, GtareProblem};
use crate::numerics::{Factorized, Matrix, NumericsError, SymMatrix, Tolerances};
use crate::stability::LyapOperator;

/// Tolerance below which a constant term `M₍ₖ₎` counts as negative.
const CONSTANT_TERM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub outer_tol: f64,
    pub max_outer: usize,
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    /// Certificate gain `L` (`m2 × n`), used as an inner-gain hint and for
    /// upper-bound audits.
    pub certificate: Option<Matrix>,
    pub tol: Tolerances,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            outer_tol: 1e-7,
            max_outer: 100,
            inner_tol: 1e-11,
            inner_max_iters: 50,
            certificate: None,
            tol: Tolerances::DEFAULT,
        }
    }
}

impl SolveOptions {
    fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            inner_tol: self.inner_tol,
            max_iters: self.inner_max_iters,
            tol: self.tol,
        }
    }
}

/// State of one outer step.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub k: usize,
    /// `P⁽ᵏ⁾`.
    pub p: SymMatrix,
    /// `Z⁽ᵏ⁾`.
    pub z: SymMatrix,
    pub a_k: Matrix,
    pub c_k: Vec<Matrix>,
    /// `M₍ₖ₎ = G(P⁽ᵏ⁾)`.
    pub m_k: SymMatrix,
    /// `[N₁; N₂](P⁽ᵏ⁾, Z⁽ᵏ⁾)`.
    pub n_k: Matrix,
    pub z_eigs: Vec<f64>,
    pub m_eigs: Vec<f64>,
    pub z_norm: f64,
    /// `‖G(P⁽ᵏ⁾)‖_F`.
    pub residual_norm: f64,
    pub inner: InnerSolveReport,
    /// Abscissa of `(A₍ₖ₎ + B₂T₍ₖ₎, C₍ₖ₎ + D₂T₍ₖ₎)`.
    pub a_k_abscissa: f64,
    /// Relative deviation in `G(P⁽ᵏ⁾ + Z⁽ᵏ⁾) = −N̂ᵀ R♯(P⁽ᵏ⁾ + Z⁽ᵏ⁾)⁻¹ N̂`.
    pub c_k_deviation: f64,
    /// `eig_min(P̃_L − P⁽ᵏ⁾ − Z⁽ᵏ⁾)` when a certificate is supplied.
    pub bound_slack: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub p_star: SymMatrix,
    pub gains: Gains,
    /// `‖G(P*)‖_F`.
    pub residual_norm: f64,
    pub outer_iters: usize,
    pub history: Vec<IterationRecord>,
    pub certificate_used: Option<Matrix>,
    /// Mean-square abscissa of the closed loop under `K(P*)`.
    pub stability_abscissa: f64,
    /// `(eig_min R22(P*), eig_max R11(P*), eig_max R♯(P*))`.
    pub saddle_margins: (f64, f64, f64),
}

/// Inner equation at `P = 0`.
pub fn init_subproblem(problem: &GtareProblem) -> Result<DefiniteAre> {
    build_subproblem_at(problem, &SymMatrix::zeros(problem.n()), 0)
}

/// Inner equation at `P_k`: drift `A + B·K(P_k)`, diffusion
/// `C_l + D_l·K(P_k)`, constant term `G(P_k)`, weight `R22(P_k)` on
/// `(B2, D_{l,2})`.
pub fn build_subproblem(problem: &GtareProblem, p_k: &SymMatrix) -> Result<DefiniteAre> {
    build_subproblem_at(problem, p_k, 1)
}

fn build_subproblem_at(problem: &GtareProblem, p_k: &SymMatrix, k: usize) -> Result<DefiniteAre> {
    let cl = problem.closed_loop(p_k)?;
    let m_k = problem.residual(p_k)?;
    if k >= 1 {
        let eig_min = m_k.eig_min();
        if eig_min < -CONSTANT_TERM_FLOOR {
            return Err(Error::NegativeConstantTerm { k, eig_min });
        }
    }
    let r22 = problem.blocks(p_k).r22();
    if !r22.is_positive_definite(Tolerances::DEFAULT.psd_tol) {
        let (r22_min, r11_max) = problem.domain_margins(p_k);
        return Err(Error::DomainExit { k, r22_min, r11_max });
    }
    DefiniteAre::new(
        cl.a,
        cl.c,
        problem.b2.clone(),
        problem.d2.clone(),
        m_k,
        Matrix::zeros(problem.m2(), problem.n()),
        r22,
        Orientation::Positive,
    )
}

/// Hints for the inner initial gain, after the zero gain: the previous
/// inner gain, then `L − K̂₂(P_k)` with `K̂₂(P) = K₂(P) − K₂(0)`.
fn inner_hints(
    problem: &GtareProblem,
    p_k: &SymMatrix,
    previous: Option<&Matrix>,
    certificate: Option<&Matrix>,
) -> Result<Vec<Matrix>> {
    let mut hints: Vec<Matrix> = previous.into_iter().cloned().collect();
    if let Some(l) = certificate {
        let k2 = problem.gains(p_k)?.k2;
        let k2_0 = problem.gains(&SymMatrix::zeros(problem.n()))?.k2;
        hints.push(l - (k2 - k2_0));
    }
    Ok(hints)
}

/// Inner solve and bookkeeping at `P⁽ᵏ⁾`.
fn step_at(
    problem: &GtareProblem,
    k: usize,
    p: SymMatrix,
    previous_t: Option<&Matrix>,
    p_tilde: Option<&SymMatrix>,
    options: &SolveOptions,
) -> Result<IterationRecord> {
    let (r22_min, r11_max) = problem.domain_margins(&p);
    if !(r22_min > options.tol.psd_tol && r11_max < -options.tol.psd_tol) {
        return Err(Error::DomainExit { k, r22_min, r11_max });
    }
    let are = build_subproblem_at(problem, &p, k)?;
    let hints = inner_hints(problem, &p, previous_t, options.certificate.as_ref())?;
    let inner = inner_are::solve_stabilizing(&are, &hints, &options.newton())?;
    let z = inner.z.clone();

    let cl = problem.closed_loop(&p)?;
    let n_k = problem.n_matrix_with(&cl, &z);
    let m_eigs = are.qc.eigenvalues();
    let z_eigs = z.eigenvalues();

    // a_k: the closed loop of the inner gain written through N₂.
    let pz = &p + &z;
    let blocks_pz = problem.blocks(&pz);
    let n2 = n_k.rows(problem.m1(), problem.m2()).into_owned();
    let t_k = -Factorized::new(blocks_pz.r22().as_matrix(), &options.tol)
        .map_err(r22_error)?
        .solve(&n2);
    let (acl, ccl) = are.closed_loop(&t_k);
    let a_k_abscissa = LyapOperator::new(&acl, &ccl).spectral_abscissa();

    let c_k_deviation = c_identity_deviation(problem, &pz, &n_k)?;
    let bound_slack = p_tilde.map(|pt| certify::upper_bound_check(pt, &p, &z));

    Ok(IterationRecord {
        k,
        residual_norm: are.qc.norm(),
        z_norm: z.norm(),
        p,
        z,
        a_k: are.a.clone(),
        c_k: are.c.clone(),
        m_k: are.qc.clone(),
        n_k,
        z_eigs,
        m_eigs,
        inner,
        a_k_abscissa,
        c_k_deviation,
        bound_slack,
    })
}

fn r22_error(e: NumericsError) -> Error {
    match e {
        NumericsError::SingularMatrix { .. } => Error::SingularR22,
        other => other.into(),
    }
}

/// `N̂ = N₁ − R₁₂(P)R₂₂(P)⁻¹N₂` evaluated with the blocks of `R(P)`.
fn n_hat(problem: &GtareProblem, p: &SymMatrix, n: &Matrix) -> Result<Matrix> {
    let blocks = problem.blocks(p);
    let n1 = n.rows(0, problem.m1()).into_owned();
    let n2 = n.rows(problem.m1(), problem.m2()).into_owned();
    let f = Factorized::new(blocks.r22().as_matrix(), &Tolerances::DEFAULT).map_err(r22_error)?;
    Ok(n1 - blocks.r12() * f.solve(&n2))
}

/// `−N̂ᵀ R♯(P)⁻¹ N̂`.
fn schur_form(problem: &GtareProblem, p: &SymMatrix, n: &Matrix) -> Result<SymMatrix> {
    let nh = n_hat(problem, p, n)?;
    let sharp = schur_of_blocks(&problem.blocks(p))?;
    let f = Factorized::new(sharp.as_matrix(), &Tolerances::DEFAULT)?;
    Ok(SymMatrix::symmetrize(-(nh.transpose() * f.solve(&nh))))
}

fn c_identity_deviation(problem: &GtareProblem, pz: &SymMatrix, n: &Matrix) -> Result<f64> {
    let g = problem.residual(pz)?;
    let rhs = schur_form(problem, pz, n)?;
    Ok((&g - &rhs).norm() / g.norm().max(1.0))
}

/// Performs the step after `prev`: `P⁽ᵏ⁾ = P⁽ᵏ⁻¹⁾ + Z⁽ᵏ⁻¹⁾` and the inner solve there.
pub fn outer_step(problem: &GtareProblem, prev: &IterationRecord, options: &SolveOptions) -> Result<IterationRecord> {
    let p_tilde = certificate_bound(problem, options)?;
    step_at(
        problem,
        prev.k + 1,
        &prev.p + &prev.z,
        Some(&prev.inner.t),
        p_tilde.as_ref(),
        options,
    )
    .map_err(|e| e.at_iteration(prev.k + 1))
}

fn certificate_bound(problem: &GtareProblem, options: &SolveOptions) -> Result<Option<SymMatrix>> {
    let Some(l) = &options.certificate else {
        return Ok(None);
    };
    if l.shape() != (problem.m2(), problem.n()) {
        return Err(Error::InvalidConfig(format!(
            "certificate L is {}x{}, expected {}x{}",
            l.nrows(),
            l.ncols(),
            problem.m2(),
            problem.n()
        )));
    }
    Ok(certify::check_certificate(problem, l).p_tilde)
}

/// Solves the game Riccati equation with default observer.
pub fn solve_gtare(problem: &GtareProblem, options: &SolveOptions) -> Result<SolveReport> {
    solve_gtare_with_observer(problem, options, |_| {})
}

/// As [`solve_gtare`], calling `observer` once per completed outer step.
pub fn solve_gtare_with_observer<F>(problem: &GtareProblem, options: &SolveOptions, mut observer: F) -> Result<SolveReport>
where
    F: FnMut(&IterationRecord),
{
    problem.ensure_valid()?;
    if problem.m2() == 0 {
        return Err(Error::UnsupportedShape(
            "the minimizing player has no inputs (m2 = 0)".into(),
        ));
    }
    problem.ensure_full_rank_r()?;
    let n = problem.n();
    let zero = SymMatrix::zeros(n);
    let (r22_min, r11_max) = problem.domain_margins(&zero);
    if !(r22_min > options.tol.psd_tol && r11_max < -options.tol.psd_tol) {
        return Err(Error::NotInDomain { r22_min, r11_max });
    }
    let p_tilde = certificate_bound(problem, options)?;
    if options.certificate.is_some() && p_tilde.is_none() {
        log::warn!("supplied certificate is not admissible; using it only as an inner-gain hint");
    }

    let mut history: Vec<IterationRecord> = Vec::new();
    let mut p = zero;
    let mut previous_t: Option<Matrix> = None;
    for k in 0..options.max_outer {
        let record = step_at(problem, k, p, previous_t.as_ref(), p_tilde.as_ref(), options)
            .map_err(|e| e.at_iteration(k))?;
        debug!(
            "outer {k}: |Z| = {:.3e}, |G(P)| = {:.3e}, newton {}",
            record.z_norm, record.residual_norm, record.inner.newton_iters
        );
        observer(&record);
        let done = record.z_norm <= options.outer_tol * record.p.norm().max(1.0);
        p = &record.p + &record.z;
        previous_t = Some(record.inner.t.clone());
        history.push(record);
        if done {
            return finish(problem, p, history, options);
        }
    }
    let z_norm = history.last().map_or(f64::NAN, |r| r.z_norm);
    Err(Error::MaxOuterExceeded {
        iterations: options.max_outer,
        z_norm,
    })
}

fn finish(problem: &GtareProblem, p_star: SymMatrix, history: Vec<IterationRecord>, options: &SolveOptions) -> Result<SolveReport> {
    let k = history.len();
    let gains = problem.gains(&p_star).map_err(|e| e.at_iteration(k))?;
    let residual_norm = problem.residual(&p_star)?.norm();
    let cl = problem.closed_loop_with(&gains);
    let stability_abscissa = LyapOperator::for_closed_loop(&cl).spectral_abscissa();
    if stability_abscissa >= -options.tol.stab_tol {
        return Err(Error::NotStabilizing {
            abscissa: stability_abscissa,
        });
    }
    let (r22_min, r11_max) = problem.domain_margins(&p_star);
    let sharp_max = problem.schur_r22(&p_star)?.eig_max();
    info!(
        "converged after {k} inner solves: |G(P*)| = {residual_norm:.3e}, abscissa {stability_abscissa:.4}"
    );
    Ok(SolveReport {
        p_star,
        gains,
        residual_norm,
        outer_iters: k,
        history,
        certificate_used: options.certificate.clone(),
        stability_abscissa,
        saddle_margins: (r22_min, r11_max, sharp_max),
    })
}

/// Compares the recursive update of `A₍ₖ₎`, `C₍ₖ₎` and `M₍ₖ₎` against the
/// closed forms stored in `curr`. Returns the largest relative deviation.
///
/// The recursion reads `A₍ₖ₎ = A₍ₖ₋₁₎ − B R(P⁽ᵏ⁾)⁻¹ N₍ₖ₋₁₎`,
/// `C₍ₖ₎ = C₍ₖ₋₁₎ − D R(P⁽ᵏ⁾)⁻¹ N₍ₖ₋₁₎` and `M₍ₖ₎ = −N̂ᵀ R♯(P⁽ᵏ⁾)⁻¹ N̂`.
pub fn recursion_audit(problem: &GtareProblem, prev: &IterationRecord, curr: &IterationRecord) -> Result<f64> {
    let rel = |a: &Matrix, b: &Matrix| (a - b).norm() / b.norm().max(1.0);
    let f = Factorized::new(problem.blocks(&curr.p).rp.as_matrix(), &Tolerances::DEFAULT)?;
    let delta = f.solve(&prev.n_k);
    let a_rec = &prev.a_k - problem.b() * &delta;
    let mut dev = rel(&a_rec, &curr.a_k);
    for ((c_prev, c_curr), d) in prev.c_k.iter().zip(&curr.c_k).zip(problem.d()) {
        dev = dev.max(rel(&(c_prev - d * &delta), c_curr));
    }
    let m_rec = schur_form(problem, &curr.p, &prev.n_k)?;
    Ok(dev.max(rel(m_rec.as_matrix(), curr.m_k.as_matrix())))
}
