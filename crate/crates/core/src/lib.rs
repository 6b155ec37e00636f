//! Stabilizing solutions of the algebraic Riccati equation of a two-player
//! zero-sum stochastic linear quadratic game.
//!
//! [`outer_solver::solve_gtare`] solves `G(P) = 0` by a sequence of definite
//! Riccati equations ([`inner_are`]), each solved by Newton–Kleinman over
//! generalized Lyapunov equations ([`stability`]). [`certify`] checks gains
//! that bound the iterates, and [`sim`] simulates the resulting closed loop.
//!
//! ```
//! use gtare::model::{GtareProblem, ScalarGame};
//! use gtare::outer_solver::{solve_gtare, SolveOptions};
//!
//! let problem = GtareProblem::from(ScalarGame {
//!     a: -1.0, c: 0.5, b1: 0.2, b2: 1.0, d1: 0.1, d2: 0.1,
//!     q: 1.0, r11: -2.0, r22: 1.0,
//!     ..Default::default()
//! });
//! let report = solve_gtare(&problem, &SolveOptions::default()).unwrap();
//! assert!(problem.residual(&report.p_star).unwrap().norm() < 1e-10);
//! ```

pub mod error;
pub mod fixtures;
pub mod inner_are;
pub mod model;
pub mod numerics;
pub mod random;
pub mod stability;
pub mod outer_solver;
pub mod certify;
pub mod sim;
pub mod cli;
