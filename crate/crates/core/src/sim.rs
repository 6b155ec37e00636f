//! Monte Carlo simulation of the closed-loop game SDE
//!
//! ```text
//! dX = (A + B1K1 + B2K2) X dt + Σ (C_l + D_{l,1}K1 + D_{l,2}K2) X dw_l
//! ```
//!
//! with Euler–Maruyama steps. Each path draws from its own ChaCha8 stream
//! (`seed`, path index), so results do not depend on how paths are spread
//! over threads. Path costs are the trapezoidal integral of the stage cost
//! `Xᵀ W_cl X` up to the horizon.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Gains, GtareProblem};
use crate::numerics::{Matrix, SymMatrix, Vector};
use crate::stability::LyapOperator;

/// Paths per parallel work unit. Fixed so partial sums combine in the same order.
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Initial state; `None` means the all-ones vector.
    pub x0: Option<Vec<f64>>,
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            x0: None,
            dt: 1e-3,
            horizon: 10.0,
            paths: 2000,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn initial_state(&self, n: usize) -> Result<Vector> {
        match &self.x0 {
            None => Ok(Vector::from_element(n, 1.0)),
            Some(x) if x.len() == n => Ok(Vector::from_column_slice(x)),
            Some(x) => Err(Error::InvalidConfig(format!(
                "x0 has {} entries, expected {n}",
                x.len()
            ))),
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        if self.dt > self.horizon {
            return Err(Error::InvalidConfig("dt must not exceed the horizon".into()));
        }
        if self.paths == 0 {
            return Err(Error::InvalidConfig("at least one path is required".into()));
        }
        Ok(())
    }
}

/// Simulation output. Full per-path trajectories are not kept; the batch
/// holds the path mean, path 0 with its controls, the terminal states and
/// the per-path costs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub times: Vec<f64>,
    pub x0: Vector,
    /// Row `i` is the path-mean state at `times[i]`.
    pub mean_states: Matrix,
    /// Path 0, one row per time.
    pub sample_states: Matrix,
    pub sample_u1: Matrix,
    pub sample_u2: Matrix,
    pub terminal_states: Vec<Vector>,
    pub cost_samples: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn paths(&self) -> usize {
        self.cost_samples.len()
    }

    /// Path average of `‖X(horizon)‖²`.
    pub fn mean_terminal_square_norm(&self) -> f64 {
        let total: f64 = self.terminal_states.iter().map(|x| x.norm_squared()).sum();
        total / self.terminal_states.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Closed loop, flattened row-major for the inner loop.
struct Dynamics {
    n: usize,
    a: Vec<f64>,
    c: Vec<Vec<f64>>,
    w: Vec<f64>,
}

impl Dynamics {
    fn new(problem: &GtareProblem, gains: &Gains) -> Self {
        let cl = problem.closed_loop_with(gains);
        let w = problem.closed_loop_weight(gains);
        let flat = |m: &Matrix| m.transpose().as_slice().to_vec();
        Dynamics {
            n: problem.n(),
            a: flat(&cl.a),
            c: cl.c.iter().map(flat).collect(),
            w: flat(w.as_matrix()),
        }
    }

    fn quad(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            let row = &self.w[i * n..(i + 1) * n];
            s += x[i] * row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
        s
    }
}

fn matvec_add(out: &mut [f64], m: &[f64], x: &[f64], scale: f64) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m[i * n..(i + 1) * n];
        *o += scale * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

struct ChunkResult {
    /// `(steps + 1) × n`, row-major sums over the chunk's paths.
    state_sums: Vec<f64>,
    terminal: Vec<Vector>,
    costs: Vec<f64>,
    sample: Option<Vec<f64>>,
}

fn run_chunk(dyn_: &Dynamics, x0: &[f64], cfg: &SimConfig, steps: usize, paths: std::ops::Range<usize>) -> Result<ChunkResult> {
    let n = dyn_.n;
    let sqrt_dt = cfg.dt.sqrt();
    let mut state_sums = vec![0.0; (steps + 1) * n];
    let mut terminal = Vec::with_capacity(paths.len());
    let mut costs = Vec::with_capacity(paths.len());
    let mut sample = None;
    let mut x = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut dw = vec![0.0; dyn_.c.len()];
    for path in paths {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(path as u64);
        x.copy_from_slice(x0);
        let mut record = (path == 0).then(|| Vec::with_capacity((steps + 1) * n));
        if let Some(r) = record.as_mut() {
            r.extend_from_slice(&x);
        }
        for (s, v) in state_sums[..n].iter_mut().zip(&x) {
            *s += v;
        }
        let mut prev = dyn_.quad(&x);
        let mut cost = 0.0;
        for step in 1..=steps {
            for w in dw.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = sqrt_dt * z;
            }
            next.copy_from_slice(&x);
            matvec_add(&mut next, &dyn_.a, &x, cfg.dt);
            for (c, w) in dyn_.c.iter().zip(&dw) {
                matvec_add(&mut next, c, &x, *w);
            }
            std::mem::swap(&mut x, &mut next);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { path, step });
            }
            let cur = dyn_.quad(&x);
            cost += 0.5 * cfg.dt * (prev + cur);
            prev = cur;
            for (s, v) in state_sums[step * n..(step + 1) * n].iter_mut().zip(&x) {
                *s += v;
            }
            if let Some(r) = record.as_mut() {
                r.extend_from_slice(&x);
            }
        }
        if !cost.is_finite() {
            return Err(Error::NonFinite { path, step: steps });
        }
        terminal.push(Vector::from_column_slice(&x));
        costs.push(cost);
        if record.is_some() {
            sample = record;
        }
    }
    Ok(ChunkResult {
        state_sums,
        terminal,
        costs,
        sample,
    })
}

/// Simulates `cfg.paths` closed-loop paths under `gains`.
pub fn simulate(problem: &GtareProblem, gains: &Gains, cfg: &SimConfig) -> Result<TrajectoryBatch> {
    cfg.validate()?;
    let n = problem.n();
    if gains.k1.shape() != (problem.m1(), n) || gains.k2.shape() != (problem.m2(), n) {
        return Err(Error::InvalidConfig("gain dimensions do not match the problem".into()));
    }
    let x0 = cfg.initial_state(n)?;
    let steps = cfg.steps();
    let dyn_ = Dynamics::new(problem, gains);

    let chunks: Vec<_> = (0..cfg.paths.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(cfg.paths))
        .collect();
    let results: Vec<Result<ChunkResult>> = chunks
        .into_par_iter()
        .map(|range| run_chunk(&dyn_, x0.as_slice(), cfg, steps, range))
        .collect();

    let mut sums = vec![0.0; (steps + 1) * n];
    let mut terminal_states = Vec::with_capacity(cfg.paths);
    let mut cost_samples = Vec::with_capacity(cfg.paths);
    let mut sample = None;
    for r in results {
        let r = r?;
        for (s, v) in sums.iter_mut().zip(&r.state_sums) {
            *s += v;
        }
        terminal_states.extend(r.terminal);
        cost_samples.extend(r.costs);
        if sample.is_none() {
            sample = r.sample;
        }
    }
    let scale = 1.0 / cfg.paths as f64;
    let mean_states = Matrix::from_row_slice(steps + 1, n, &sums) * scale;
    let sample_states = Matrix::from_row_slice(steps + 1, n, &sample.expect("path 0 is always simulated"));
    let sample_u1 = &sample_states * gains.k1.transpose();
    let sample_u2 = &sample_states * gains.k2.transpose();
    Ok(TrajectoryBatch {
        times: (0..=steps).map(|i| i as f64 * cfg.dt).collect(),
        x0,
        mean_states,
        sample_states,
        sample_u1,
        sample_u2,
        terminal_states,
        cost_samples,
    })
}

/// Mean and standard error of the per-path truncated costs.
pub fn estimate_cost(batch: &TrajectoryBatch) -> CostEstimate {
    let m = batch.cost_samples.len() as f64;
    let mean = batch.cost_samples.iter().sum::<f64>() / m;
    let stderr = if batch.cost_samples.len() > 1 {
        let var = batch.cost_samples.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    CostEstimate { mean, stderr }
}

/// Infinite-horizon value `x0ᵀ V x0` of the closed loop under `gains`,
/// where `ℒ*_cl(V) + W_cl = 0`.
pub fn closed_loop_value(problem: &GtareProblem, gains: &Gains, x0: &Vector) -> Result<f64> {
    let cl = problem.closed_loop_with(gains);
    let v = LyapOperator::for_closed_loop(&cl).solve(&problem.closed_loop_weight(gains))?;
    Ok(x0.dot(&(v.as_matrix() * x0)))
}

/// Bound on `|∫_T^∞ E[Xᵀ W_cl X] dt|`.
///
/// With `ℒ*_cl(Y) + I = 0`, `V(t) = E[Xᵀ Y X]` decays at least like
/// `exp(−t/λmax(Y))` and `∫_T^∞ E|X|² dt ≤ V(T)`, which gives
/// `‖W_cl‖₂ · x0ᵀ Y x0 · exp(−T/λmax(Y))`. Requires a stable closed loop.
pub fn tail_allowance(problem: &GtareProblem, gains: &Gains, x0: &Vector, horizon: f64) -> Result<f64> {
    let cl = problem.closed_loop_with(gains);
    let op = LyapOperator::for_closed_loop(&cl);
    let abscissa = op.spectral_abscissa();
    if abscissa >= 0.0 {
        return Err(Error::NotStabilizing { abscissa });
    }
    let y = op.solve(&SymMatrix::identity(problem.n()))?;
    let w = problem.closed_loop_weight(gains);
    let w_norm = w.eigenvalues().iter().fold(0.0f64, |a, e| a.max(e.abs()));
    Ok(w_norm * x0.dot(&(y.as_matrix() * x0)) * (-horizon / y.eig_max()).exp())
}

/// Exact expectation of the Euler–Maruyama trapezoidal cost, from the
/// second-moment recursion `Σ⁺ = (I + A dt) Σ (I + A dt)ᵀ + dt Σ_l C_l Σ C_lᵀ`.
pub fn euler_maruyama_expected_cost(problem: &GtareProblem, gains: &Gains, cfg: &SimConfig) -> Result<f64> {
    cfg.validate()?;
    let n = problem.n();
    let x0 = cfg.initial_state(n)?;
    let cl = problem.closed_loop_with(gains);
    let w = problem.closed_loop_weight(gains);
    let step = Matrix::identity(n, n) + &cl.a * cfg.dt;
    let mut sigma = &x0 * x0.transpose();
    let mut prev = (w.as_matrix() * &sigma).trace();
    let mut total = 0.0;
    for _ in 0..cfg.steps() {
        let mut next = &step * &sigma * step.transpose();
        for c in &cl.c {
            next += c * &sigma * c.transpose() * cfg.dt;
        }
        sigma = next;
        let cur = (w.as_matrix() * &sigma).trace();
        total += 0.5 * cfg.dt * (prev + cur);
        prev = cur;
    }
    Ok(total)
}
