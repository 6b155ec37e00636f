//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use gtare::cli::problem_file::{read_problem, ProblemFile};
use gtare::model::{GtareProblem, ScalarGame};
use gtare::numerics::SymMatrix;
use gtare::random::{random_problem, random_sym, ProblemShape};
use nalgebra::DMatrix;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn three_state() -> (ProblemFile, GtareProblem) {
    let file = read_problem(&fixture("three_state.toml"), false).expect("fixture parses");
    let problem = file.to_problem().expect("fixture is consistent");
    (file, problem)
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

/// Grid uniform in `asinh`, so fine near zero and coarse far out.
fn sinh_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (ulo, uhi) = (lo.asinh(), hi.asinh());
    (0..points)
        .map(|i| (ulo + (uhi - ulo) * i as f64 / (points - 1) as f64).sinh())
        .collect()
}

fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// All sign-change roots of `f` on the grid inside `(lo, hi)`.
fn roots(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> Vec<f64> {
    let grid = sinh_grid(lo, hi, 40_001);
    let mut out = Vec::new();
    for w in grid.windows(2) {
        let (a, b) = (f(w[0]), f(w[1]));
        if !(a.is_finite() && b.is_finite()) {
            continue;
        }
        if a == 0.0 {
            out.push(w[0]);
        } else if (a < 0.0) != (b < 0.0) {
            out.push(bisect(f, w[0], w[1]));
        }
    }
    out
}

/// Scalar definite Riccati equation
/// `(2a + c²) z + q − (b z + d c z + s)² / (r + d² z) = 0`.
#[derive(Debug, Clone, Copy)]
pub struct ScalarAre {
    pub a: f64,
    pub c: f64,
    pub b: f64,
    pub d: f64,
    pub q: f64,
    pub s: f64,
    pub r: f64,
}

impl ScalarAre {
    pub fn weight(&self, z: f64) -> f64 {
        self.r + self.d * self.d * z
    }

    pub fn residual(&self, z: f64) -> f64 {
        let num = self.b * z + self.d * self.c * z + self.s;
        (2.0 * self.a + self.c * self.c) * z + self.q - num * num / self.weight(z)
    }

    pub fn gain(&self, z: f64) -> f64 {
        -(self.b * z + self.d * self.c * z + self.s) / self.weight(z)
    }

    pub fn stabilizes(&self, t: f64) -> bool {
        let (a, c) = (self.a + self.b * t, self.c + self.d * t);
        2.0 * a + c * c < 0.0
    }

    /// Stabilizing root with the weight keeping the sign of `r`.
    pub fn stabilizing_root(&self) -> Option<f64> {
        let sign = self.r.signum();
        let (mut lo, mut hi) = (-1e4f64, 1e4f64);
        if self.d != 0.0 {
            let pole = -self.r / (self.d * self.d);
            if sign > 0.0 {
                lo = lo.max(pole + 1e-9 * pole.abs().max(1.0));
            } else {
                hi = hi.min(pole - 1e-9 * pole.abs().max(1.0));
            }
        }
        let f = |z: f64| self.residual(z);
        let found: Vec<f64> = roots(&f, lo, hi)
            .into_iter()
            .filter(|z| sign * self.weight(*z) > 0.0 && self.stabilizes(self.gain(*z)))
            .collect();
        match found.as_slice() {
            [z] => Some(*z),
            _ => None,
        }
    }
}

/// Scalar game map with the 2×2 inverse written out.
pub fn scalar_g(g: &ScalarGame, p: f64) -> Option<(f64, [f64; 2])> {
    let qp = (2.0 * g.a + g.c * g.c) * p + g.q;
    let s1 = g.b1 * p + g.d1 * g.c * p + g.s1;
    let s2 = g.b2 * p + g.d2 * g.c * p + g.s2;
    let r11 = g.r11 + g.d1 * g.d1 * p;
    let r12 = g.r12 + g.d1 * g.d2 * p;
    let r22 = g.r22 + g.d2 * g.d2 * p;
    let det = r11 * r22 - r12 * r12;
    if det == 0.0 {
        return None;
    }
    let (i11, i12, i22) = (r22 / det, -r12 / det, r11 / det);
    let k1 = -(i11 * s1 + i12 * s2);
    let k2 = -(i12 * s1 + i22 * s2);
    let quad = s1 * (i11 * s1 + i12 * s2) + s2 * (i12 * s1 + i22 * s2);
    Some((qp - quad, [k1, k2]))
}

/// Stabilizing solution of the scalar game on `[0, 1e3]`: sign changes of
/// the scalar map inside `Dom G`, filtered by `2 a_cl + c_cl² < 0`.
pub fn scalar_game_root(g: &ScalarGame) -> Option<f64> {
    let in_dom = |p: f64| g.r22 + g.d2 * g.d2 * p > 0.0 && g.r11 + g.d1 * g.d1 * p < 0.0;
    let f = |p: f64| {
        if !in_dom(p) {
            return f64::NAN;
        }
        scalar_g(g, p).map_or(f64::NAN, |(v, _)| v)
    };
    let stable = |p: f64| {
        let Some((_, [k1, k2])) = scalar_g(g, p) else { return false };
        let a = g.a + g.b1 * k1 + g.b2 * k2;
        let c = g.c + g.d1 * k1 + g.d2 * k2;
        2.0 * a + c * c < 0.0
    };
    let found: Vec<f64> = roots(&f, 0.0, 1e3)
        .into_iter()
        .chain(std::iter::once(0.0).filter(|p| f(*p) == 0.0))
        .filter(|p| in_dom(*p) && stable(*p))
        .collect();
    found.first().copied()
}

/// Solves `YA + AᵀY + Σ CᵀYC + W = 0` through the full `n²` Kronecker system.
pub fn kronecker_lyapunov(a: &DMatrix<f64>, c: &[DMatrix<f64>], w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let mut op = eye.kronecker(&at) + at.kronecker(&eye);
    for c in c {
        let ct = c.transpose();
        op += ct.kronecker(&ct);
    }
    let rhs = -DMatrix::from_column_slice(n * n, 1, w.as_slice());
    let y = op.lu().solve(&rhs).expect("stable operator is invertible");
    DMatrix::from_column_slice(n, n, y.as_slice())
}

/// Relative difference `‖a − b‖_F / max(1, ‖b‖_F)`.
pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

pub fn random_scalar_are<R: rand::Rng>(rng: &mut R) -> ScalarAre {
    ScalarAre {
        a: rng.random_range(-2.0..1.0),
        c: rng.random_range(0.0..0.8),
        b: rng.random_range(0.5..2.0),
        d: rng.random_range(0.0..0.3),
        q: rng.random_range(0.1..3.0),
        s: rng.random_range(-0.3..0.3),
        r: rng.random_range(0.5..2.0),
    }
}

/// Scalar game with a stable open loop, `R11 < 0 < R22`.
pub fn random_scalar_game<R: rand::Rng>(rng: &mut R) -> ScalarGame {
    ScalarGame {
        a: rng.random_range(-2.0..-0.5),
        c: rng.random_range(0.0..0.6),
        b1: rng.random_range(0.05..0.4),
        b2: rng.random_range(0.5..1.5),
        d1: rng.random_range(0.0..0.15),
        d2: rng.random_range(0.0..0.15),
        q: rng.random_range(0.5..2.0),
        s1: rng.random_range(-0.2..0.2),
        s2: rng.random_range(-0.2..0.2),
        r11: rng.random_range(-3.0..-1.0),
        r12: rng.random_range(-0.2..0.2),
        r22: rng.random_range(0.5..2.0),
    }
}

/// Random `(problem, P, Z)` with `P` and `P + Z` in `Dom G`, `n ≤ 4`, `r ≤ 2`.
pub fn random_triple<R: rand::Rng>(rng: &mut R) -> (GtareProblem, SymMatrix, SymMatrix) {
    loop {
        let shape = ProblemShape::new(
            rng.random_range(1..=4),
            rng.random_range(1..=2),
            rng.random_range(1..=2),
            rng.random_range(0..=2),
        );
        let problem = random_problem(rng, shape);
        let n = shape.n;
        let p = random_sym(rng, n, 0.3);
        let z = random_sym(rng, n, 0.3);
        let tol = 1e-3;
        if problem.in_dom(&p, tol) && problem.in_dom(&(&p + &z), tol) {
            return (problem, p, z);
        }
    }
}

/// `max |lhs − rhs| / max(1, max |lhs|)`.
pub fn rel_max(lhs: &DMatrix<f64>, rhs: &DMatrix<f64>) -> f64 {
    (lhs - rhs).amax() / lhs.amax().max(1.0)
}
