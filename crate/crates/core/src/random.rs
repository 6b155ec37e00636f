//! Random problem instances for property tests and experiments.
//!
//! The magnitudes mirror the published example: a drift with spectral
//! abscissa −1, diffusion matrices of norm at most 0.5, a weak maximizer
//! channel and small control-dependent noise. Random `P` and `P + Z` of
//! moderate size then stay inside `Dom G` with high probability.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::GtareProblem;
use crate::numerics::{Matrix, SpectrumSummary, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemShape {
    pub n: usize,
    pub m1: usize,
    pub m2: usize,
    pub r: usize,
}

impl ProblemShape {
    pub fn new(n: usize, m1: usize, m2: usize, r: usize) -> Self {
        ProblemShape { n, m1, m2, r }
    }
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Symmetric matrix with Gaussian entries times `scale`.
pub fn random_sym<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> SymMatrix {
    SymMatrix::symmetrize(gaussian(rng, n, n) * scale)
}

/// `scale · (F Fᵀ)` with Gaussian `F`.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> SymMatrix {
    let f = gaussian(rng, n, n);
    SymMatrix::symmetrize(&f * f.transpose() * (scale / n as f64))
}

/// Square matrix with spectral abscissa exactly `target`.
pub fn with_abscissa<R: Rng + ?Sized>(rng: &mut R, n: usize, target: f64) -> Matrix {
    let g = gaussian(rng, n, n) / (n as f64).sqrt();
    let alpha = SpectrumSummary::of(&g).max_real_part;
    g - Matrix::identity(n, n) * (alpha - target)
}

pub fn random_problem<R: Rng + ?Sized>(rng: &mut R, shape: ProblemShape) -> GtareProblem {
    let ProblemShape { n, m1, m2, r } = shape;
    let a = with_abscissa(rng, n, -1.0);
    let c = (0..r)
        .map(|_| {
            let m = gaussian(rng, n, n);
            let target = 0.5 * rng.random_range(0.2..1.0);
            let norm = m.norm();
            m * (target / norm)
        })
        .collect();
    let b1 = uniform(rng, n, m1, -0.3, 0.3);
    let b2 = Matrix::identity(n, m2) + uniform(rng, n, m2, -0.3, 0.3);
    let d1 = (0..r).map(|_| uniform(rng, n, m1, 0.0, 0.01)).collect();
    let d2 = (0..r).map(|_| uniform(rng, n, m2, 0.0, 0.01)).collect();
    let q = SymMatrix::identity(n) + random_psd(rng, n, 1.0);
    let s1 = uniform(rng, m1, n, -0.2, 0.2);
    let s2 = uniform(rng, m2, n, -0.2, 0.2);
    let r11 = -(SymMatrix::identity(m1) + random_psd(rng, m1, 0.5));
    let r22 = SymMatrix::identity(m2) + random_psd(rng, m2, 0.5);
    let r12 = uniform(rng, m1, m2, -0.2, 0.2);
    GtareProblem {
        a,
        c,
        b1,
        b2,
        d1,
        d2,
        q: q.into_matrix(),
        s1,
        s2,
        r11: r11.into_matrix(),
        r12,
        r22: r22.into_matrix(),
    }
}
