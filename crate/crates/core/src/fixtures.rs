//! Problem files bundled with the crate.

use std::path::Path;

use crate::cli::problem_file::{parse_problem, ProblemFile};

/// Three-state game with six-decimal data, a certificate gain `L` and a
/// reference solution `P_reference` rounded to six decimals.
pub const THREE_STATE: &str = include_str!("../fixtures/three_state.toml");

/// Parsed [`THREE_STATE`].
pub fn three_state() -> ProblemFile {
    parse_problem(Path::new("three_state.toml"), THREE_STATE, false).expect("bundled fixture parses")
}
