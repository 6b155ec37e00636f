//! Mean-square stability of `dX = AX dt + Σ C_l X dw_l`.
//!
//! The Lyapunov-type operator `ℒ*(Y) = YA + AᵀY + Σ C_lᵀ Y C_l` maps symmetric
//! matrices to symmetric matrices. In [`svec`] coordinates it is represented
//! by an `N×N` matrix with `N = n(n+1)/2`; because `svec` is an isometry this
//! matrix has exactly the spectrum of the operator. The system is
//! mean-square stable iff that spectrum lies in the open left half-plane.

use crate::error::{Error, Result};
use crate::model::ClosedLoop;
use crate::numerics::{
    svec, svec_len, unsvec, Factorized, Matrix, NumericsError, SpectrumSummary, SymMatrix,
    Tolerances, Vector,
};

/// Matrix representation of `ℒ*` for a pair `(A, C_1..C_r)`.
#[derive(Debug, Clone)]
pub struct LyapOperator {
    pub a: Matrix,
    pub c: Vec<Matrix>,
    pub matrix_rep: Matrix,
}

impl LyapOperator {
    pub fn new(a: &Matrix, c: &[Matrix]) -> Self {
        assert!(a.is_square(), "drift matrix must be square");
        let n = a.nrows();
        assert!(
            c.iter().all(|c| c.shape() == (n, n)),
            "diffusion matrices must match the drift dimension"
        );
        let dim = svec_len(n);
        let mut rep = Matrix::zeros(dim, dim);
        let mut e = vec![0.0; dim];
        for j in 0..dim {
            e[j] = 1.0;
            let basis = unsvec(&e).expect("length is triangular by construction");
            rep.set_column(j, &svec(&apply(a, c, &basis)));
            e[j] = 0.0;
        }
        LyapOperator {
            a: a.clone(),
            c: c.to_vec(),
            matrix_rep: rep,
        }
    }

    pub fn for_closed_loop(cl: &ClosedLoop) -> Self {
        Self::new(&cl.a, &cl.c)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn apply(&self, y: &SymMatrix) -> SymMatrix {
        apply(&self.a, &self.c, y)
    }

    pub fn spectrum(&self) -> SpectrumSummary {
        SpectrumSummary::of(&self.matrix_rep)
    }

    pub fn spectral_abscissa(&self) -> f64 {
        self.spectrum().max_real_part
    }

    /// Solves `ℒ*(Y) + W = 0`.
    pub fn solve(&self, w: &SymMatrix) -> Result<SymMatrix> {
        self.solve_with(w, &Tolerances::DEFAULT)
    }

    pub fn solve_with(&self, w: &SymMatrix, tol: &Tolerances) -> Result<SymMatrix> {
        assert_eq!(w.dim(), self.n(), "right-hand side has the wrong dimension");
        let f = Factorized::new(&self.matrix_rep, tol).map_err(|e| match e {
            NumericsError::SingularMatrix { .. } => Error::SingularLyapunov,
            other => other.into(),
        })?;
        let rhs = Matrix::from_column_slice(svec_len(self.n()), 1, (-svec(w)).as_slice());
        let y = f.solve(&rhs);
        let mut sol = SymMatrix::symmetrize(unsvec(y.as_slice())?.into_matrix());
        // Refine once more in matrix form when the explicit residual is loose.
        let scale = w.norm().max(1.0);
        let res = &self.apply(&sol) + w;
        if res.norm() > tol.lyap_tol * scale {
            let dy = f.solve(&Matrix::from_column_slice(
                svec_len(self.n()),
                1,
                (-svec(&res)).as_slice(),
            ));
            sol = &sol + &unsvec(dy.as_slice())?;
        }
        Ok(sol)
    }
}

/// `YA + AᵀY + Σ C_lᵀ Y C_l`.
pub fn apply(a: &Matrix, c: &[Matrix], y: &SymMatrix) -> SymMatrix {
    let y = y.as_matrix();
    let mut out = y * a + a.transpose() * y;
    for c in c {
        out += c.transpose() * y * c;
    }
    SymMatrix::symmetrize(out)
}

pub fn build_operator(a: &Matrix, c: &[Matrix]) -> LyapOperator {
    LyapOperator::new(a, c)
}

pub fn spectral_abscissa(op: &LyapOperator) -> f64 {
    op.spectral_abscissa()
}

/// Strict test `abscissa < −stab_tol`.
pub fn is_mean_square_stable(a: &Matrix, c: &[Matrix]) -> bool {
    is_mean_square_stable_with(a, c, Tolerances::DEFAULT.stab_tol)
}

pub fn is_mean_square_stable_with(a: &Matrix, c: &[Matrix], stab_tol: f64) -> bool {
    LyapOperator::new(a, c).spectral_abscissa() < -stab_tol
}

/// Solves `YA + AᵀY + Σ C_lᵀ Y C_l + W = 0`.
pub fn solve_generalized_lyapunov(a: &Matrix, c: &[Matrix], w: &SymMatrix) -> Result<SymMatrix> {
    LyapOperator::new(a, c).solve(w)
}

/// Operator of the full `n²` vectorization, `vec(YA + AᵀY + ΣCᵀYC)`.
///
/// Kept for cross-checking the symmetric representation; it carries every
/// eigenvalue of the symmetric operator plus those of its action on
/// skew-symmetric matrices.
pub fn full_vectorized_operator(a: &Matrix, c: &[Matrix]) -> Matrix {
    let n = a.nrows();
    let eye = Matrix::identity(n, n);
    let at = a.transpose();
    let mut op = eye.kronecker(&at) + at.kronecker(&eye);
    for c in c {
        let ct = c.transpose();
        op += ct.kronecker(&ct);
    }
    op
}

/// `vec` in column-major order.
pub fn vec_full(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix_from_rows;
    use crate::random::{gaussian, random_psd, random_sym, with_abscissa};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m1(x: f64) -> Matrix {
        Matrix::from_element(1, 1, x)
    }

    #[test]
    fn scalar_operator_entries() {
        assert_abs_diff_eq!(build_operator(&m1(-1.0), &[m1(0.0)]).matrix_rep[(0, 0)], -2.0);
        assert_abs_diff_eq!(build_operator(&m1(-1.0), &[m1(1.0)]).matrix_rep[(0, 0)], -1.0);
    }

    #[test]
    fn abscissa_examples() {
        assert_abs_diff_eq!(spectral_abscissa(&build_operator(&m1(-1.0), &[m1(0.0)])), -2.0);
        let rot = matrix_from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let zero = Matrix::zeros(2, 2);
        assert_abs_diff_eq!(spectral_abscissa(&build_operator(&rot, &[zero])), 0.0, epsilon = 1e-12);
        assert!(!is_mean_square_stable(&rot, &[]));
        let c = m1(3f64.sqrt());
        assert_abs_diff_eq!(spectral_abscissa(&build_operator(&m1(-1.0), std::slice::from_ref(&c))), 1.0, epsilon = 1e-12);
        assert!(is_mean_square_stable(&m1(-1.0), &[m1(0.0)]));
        assert!(!is_mean_square_stable(&m1(-1.0), &[c]));
    }

    #[test]
    fn scalar_lyapunov_solves() {
        let y = solve_generalized_lyapunov(&m1(-1.0), &[m1(0.0)], &SymMatrix::from_diagonal(&[2.0])).unwrap();
        assert_abs_diff_eq!(y[(0, 0)], 1.0, epsilon = 1e-14);
        let y = solve_generalized_lyapunov(&m1(-1.0), &[m1(1.0)], &SymMatrix::from_diagonal(&[1.0])).unwrap();
        assert_abs_diff_eq!(y[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn boundary_system_is_singular() {
        let res = solve_generalized_lyapunov(&m1(0.0), &[], &SymMatrix::identity(1));
        assert_eq!(res.unwrap_err(), Error::SingularLyapunov);
    }

    #[test]
    fn deterministic_spectrum_is_pairwise_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let a = gaussian(&mut rng, 3, 3);
            let lam: Vec<_> = a.complex_eigenvalues().iter().copied().collect();
            let mut expected = Vec::new();
            for i in 0..3 {
                for j in i..3 {
                    expected.push(lam[i] + lam[j]);
                }
            }
            let got = build_operator(&a, &[Matrix::zeros(3, 3)]).spectrum().eigenvalues;
            // Greedy multiset matching.
            let mut used = vec![false; got.len()];
            for e in &expected {
                let (k, d) = got
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| !used[*k])
                    .map(|(k, g)| (k, (g - e).norm()))
                    .min_by(|x, y| x.1.total_cmp(&y.1))
                    .unwrap();
                assert!(d < 1e-8, "eigen-sum {e} unmatched (closest {d:e})");
                used[k] = true;
            }
        }
    }

    #[test]
    fn adjoint_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = 4;
            let a = gaussian(&mut rng, n, n);
            let c = vec![gaussian(&mut rng, n, n), gaussian(&mut rng, n, n)];
            let op = build_operator(&a, &c);
            let s = random_sym(&mut rng, n, 1.0);
            let t = random_sym(&mut rng, n, 1.0);
            let lhs = svec(&t).dot(&(&op.matrix_rep * svec(&s)));
            let rhs = (t.transpose() * op.apply(&s).as_matrix()).trace();
            assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn operator_columns_match_direct_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = gaussian(&mut rng, 3, 3);
        let c = vec![gaussian(&mut rng, 3, 3)];
        let op = build_operator(&a, &c);
        let s = random_sym(&mut rng, 3, 2.0);
        let via_rep = unsvec((&op.matrix_rep * svec(&s)).as_slice()).unwrap();
        let direct = op.apply(&s);
        assert!((via_rep.as_matrix() - direct.as_matrix()).amax() <= 1e-10 * direct.amax().max(1.0));
    }

    #[test]
    fn stable_systems_give_psd_solutions() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut checked = 0;
        while checked < 30 {
            let a = with_abscissa(&mut rng, 3, -1.0);
            let c = vec![gaussian(&mut rng, 3, 3) * 0.3, gaussian(&mut rng, 3, 3) * 0.3];
            let op = build_operator(&a, &c);
            if op.spectral_abscissa() >= -1e-6 {
                continue;
            }
            let w = random_psd(&mut rng, 3, 1.0);
            let y = op.solve(&w).unwrap();
            assert!(y.eig_min() >= -1e-8);
            let res = &op.apply(&y) + &w;
            assert!(res.norm() <= 1e-10 * w.norm().max(1.0));
            checked += 1;
        }
    }
}
