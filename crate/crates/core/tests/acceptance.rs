//! Acceptance criteria, one test each. Every test prints a single
//! `PASS`/`FAIL` line straight to stdout so the verdicts show up even when
//! output capture is on.

mod common;

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use gtare::certify::{check_certificate, search_certificate};
use gtare::inner_are::{find_initial_gain, newton_kleinman, DefiniteAre, NewtonOptions, Orientation};
use gtare::model::{GtareProblem, ScalarGame};
use gtare::numerics::{Matrix, SymMatrix};
use gtare::outer_solver::{recursion_audit, solve_gtare, SolveOptions, SolveReport};
use gtare::random::{gaussian, random_problem, random_psd, with_abscissa, ProblemShape};
use gtare::sim::{estimate_cost, simulate, tail_allowance, SimConfig};
use gtare::stability::{is_mean_square_stable, solve_generalized_lyapunov};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(id: &str, pass: bool, detail: String) {
    let line = format!("{} criterion {id}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {id}: {detail}");
}

fn solve_three_state() -> (GtareProblem, SolveReport, Duration) {
    let (file, problem) = common::three_state();
    let options = SolveOptions {
        certificate: file.certificate().unwrap(),
        ..Default::default()
    };
    let start = Instant::now();
    let report = solve_gtare(&problem, &options).expect("fixture solves");
    (problem, report, start.elapsed())
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gtare"))
}

fn toml_float(text: &str, key: &str) -> f64 {
    let table: toml::Table = text.parse().expect("command output is TOML");
    table[key].as_float().unwrap_or_else(|| panic!("{key} is not a float"))
}

#[test]
fn criterion_01_reference_solution() {
    let (file, _) = common::three_state();
    let (_, report, elapsed) = solve_three_state();
    let reference = common::rows_to_matrix(file.p_reference.as_ref().unwrap());
    let dev = (report.p_star.as_matrix() - reference).amax();
    let secs = elapsed.as_secs_f64();
    verdict(
        "1",
        dev <= 1e-4 && secs < 5.0,
        format!("max |P* - P_reference| = {dev:.3e} (<= 1e-4), runtime {secs:.3} s (< 5 s)"),
    );
}

#[test]
fn criterion_02a_residual_at_solution() {
    let (problem, report, _) = solve_three_state();
    let recomputed = problem.residual(&report.p_star).unwrap().norm();
    verdict(
        "2a",
        report.residual_norm <= 1e-5 && recomputed <= 1e-5,
        format!("||G(P*)||_F = {recomputed:.3e} (<= 1e-5)"),
    );
}

#[test]
fn criterion_02b_residual_at_rounded_solution() {
    let out = bin()
        .arg("residual")
        .arg(common::fixture("three_state.toml"))
        .arg(common::fixture("three_state_rounded_p.toml"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let residual = toml_float(&String::from_utf8(out.stdout).unwrap(), "residual_norm");
    verdict(
        "2b",
        residual <= 5e-5,
        format!("residual of the six-decimal reference P* = {residual:.3e} (<= 5e-5)"),
    );
}

#[test]
fn criterion_03_iteration_band() {
    let (_, report, _) = solve_three_state();
    let k = report.outer_iters;
    verdict("3", (8..=25).contains(&k), format!("outer iterations = {k} (in [8, 25])"));
}

#[test]
fn criterion_04_trace_shape() {
    let (_, report, _) = solve_three_state();
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let z_min = report.history.iter().map(|r| min(&r.z_eigs)).fold(f64::INFINITY, f64::min);
    let m_min = report
        .history
        .iter()
        .filter(|r| r.k >= 1)
        .map(|r| min(&r.m_eigs))
        .fold(f64::INFINITY, f64::min);
    let z6 = report
        .history
        .iter()
        .find(|r| r.k == 6)
        .map(|r| r.z_eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let pass = z_min >= -1e-8 && m_min >= -1e-8 && z6.is_some_and(|e| e < 1e-3);
    verdict(
        "4",
        pass,
        format!("min eig Z = {z_min:.3e}, min eig M (k >= 1) = {m_min:.3e} (>= -1e-8), max eig Z(6) = {} (< 1e-3)", z6.map_or("missing".into(), |e| format!("{e:.3e}"))),
    );
}

#[test]
fn criterion_05_saddle_certificate() {
    let (problem, report, _) = solve_three_state();
    let blocks = problem.blocks(&report.p_star);
    let r22 = blocks.r22().eig_min();
    let r11 = blocks.r11().eig_max();
    let sharp = problem.schur_r22(&report.p_star).unwrap().eig_max();
    let abscissa = report.stability_abscissa;
    verdict(
        "5",
        r22 > 0.0 && r11 < 0.0 && sharp < 0.0 && abscissa < -1e-9,
        format!(
            "eig_min R22(P*) = {r22:.4}, eig_max R11(P*) = {r11:.4}, eig_max R#(P*) = {sharp:.4}, abscissa = {abscissa:.4}"
        ),
    );
}

#[test]
fn criterion_06_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut gain_err, mut cos_err, mut exp_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let (problem, p, z) = common::random_triple(&mut rng);
        let pz = &p + &z;
        let k_p = problem.gains(&p).unwrap().stacked();
        let k_pz = problem.gains(&pz).unwrap().stacked();
        let b_pz = problem.blocks(&pz);
        let n = &b_pz.sp + b_pz.rp.as_matrix() * &k_p;
        let rhs = -b_pz.rp.as_matrix().clone().lu().solve(&n).unwrap();
        gain_err = gain_err.max(common::rel_max(&(&k_pz - &k_p), &rhs));
        gain_err = gain_err.max(common::rel_max(&problem.n_matrix(&p, &z).unwrap(), &n));

        let g_p = problem.residual(&p).unwrap();
        for _ in 0..10 {
            let theta = gtare::model::Gains {
                k1: gaussian(&mut rng, problem.m1(), problem.n()),
                k2: gaussian(&mut rng, problem.m2(), problem.n()),
            };
            let cos = problem.completion_of_squares(&p, &theta).unwrap();
            cos_err = cos_err.max(common::rel_max(g_p.as_matrix(), cos.as_matrix()));
        }

        let cl = problem.closed_loop(&p).unwrap();
        let mut expansion = g_p.as_matrix() + z.as_matrix() * &cl.a + cl.a.transpose() * z.as_matrix();
        for c in &cl.c {
            expansion += c.transpose() * z.as_matrix() * c;
        }
        expansion -= n.transpose() * b_pz.rp.as_matrix().clone().lu().solve(&n).unwrap();
        let g_pz = problem.residual(&pz).unwrap();
        exp_err = exp_err.max(common::rel_max(g_pz.as_matrix(), &expansion));
        let lib = problem.residual_expansion(&p, &z).unwrap();
        exp_err = exp_err.max(common::rel_max(g_pz.as_matrix(), lib.as_matrix()));
    }

    let (problem, report, _) = solve_three_state();
    let mut ck = report.history.iter().map(|r| r.c_k_deviation).fold(0.0f64, f64::max);
    for w in report.history.windows(2) {
        ck = ck.max(recursion_audit(&problem, &w[0], &w[1]).unwrap());
    }
    let pass = gain_err <= 1e-9 && cos_err <= 1e-9 && exp_err <= 1e-9 && ck <= 1e-7;
    verdict(
        "6",
        pass,
        format!(
            "gain increment {gain_err:.2e}, completion of squares {cos_err:.2e}, increment expansion {exp_err:.2e} (<= 1e-9); c_k identity and recursion {ck:.2e} (<= 1e-7)"
        ),
    );
}

fn worst_step(report: &SolveReport) -> f64 {
    report.history.iter().map(|r| r.z.eig_min()).fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_07_monotonicity() {
    let (_, report, _) = solve_three_state();
    let mut worst = worst_step(&report);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut solved, mut attempts) = (0, 0);
    while solved < 20 && attempts < 100 {
        attempts += 1;
        let shape = ProblemShape::new(
            rng.random_range(1..=4),
            rng.random_range(1..=2),
            rng.random_range(1..=2),
            rng.random_range(0..=2),
        );
        let problem = random_problem(&mut rng, shape);
        if let Ok(report) = solve_gtare(&problem, &SolveOptions::default()) {
            let mut prev = &report.history[0].p;
            for r in &report.history[1..] {
                worst = worst.min((&r.p - prev).eig_min());
                prev = &r.p;
            }
            worst = worst.min((&report.p_star - prev).eig_min());
            solved += 1;
        }
    }
    verdict(
        "7",
        solved == 20 && worst >= -1e-8,
        format!("min eig(P(k+1) - P(k)) = {worst:.3e} (>= -1e-8) over the fixture and {solved} random instances ({attempts} drawn)"),
    );
}

#[test]
fn criterion_08_inner_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let one = |x: f64| Matrix::from_element(1, 1, x);
    let hints: Vec<Matrix> = (0..12).map(|j| one(-(2f64.powi(j)))).collect();
    let mut are_err = 0.0f64;
    let mut are_count = 0;
    while are_count < 50 {
        let s = common::random_scalar_are(&mut rng);
        let Some(oracle) = s.stabilizing_root() else { continue };
        are_count += 1;
        let are = DefiniteAre::new(
            one(s.a),
            vec![one(s.c)],
            one(s.b),
            vec![one(s.d)],
            SymMatrix::from_diagonal(&[s.q]),
            one(s.s),
            SymMatrix::from_diagonal(&[s.r]),
            Orientation::Positive,
        )
        .unwrap();
        let err = find_initial_gain(&are, &hints)
            .and_then(|t0| newton_kleinman(&are, &t0, &NewtonOptions::default()))
            .map(|rep| (rep.z[(0, 0)] - oracle).abs() / oracle.abs().max(1.0))
            .unwrap_or(f64::INFINITY);
        are_err = are_err.max(err);
    }

    let mut lyap_err = 0.0f64;
    let mut lyap_count = 0;
    while lyap_count < 20 {
        let n = rng.random_range(1..=4);
        let r = rng.random_range(0..=2);
        let target = -rng.random_range(0.5..2.0);
        let a = with_abscissa(&mut rng, n, target);
        let c: Vec<Matrix> = (0..r).map(|_| gaussian(&mut rng, n, n) * 0.4).collect();
        if !is_mean_square_stable(&a, &c) {
            continue;
        }
        lyap_count += 1;
        let w = random_psd(&mut rng, n, 1.0);
        let y = solve_generalized_lyapunov(&a, &c, &w).unwrap();
        let oracle = common::kronecker_lyapunov(&a, &c, w.as_matrix());
        lyap_err = lyap_err.max(common::rel(y.as_matrix(), &oracle));
    }
    verdict(
        "8",
        are_err <= 1e-8 && lyap_err <= 1e-10,
        format!("scalar ARE vs bisection {are_err:.2e} (<= 1e-8, 50 cases); Lyapunov vs Kronecker {lyap_err:.2e} (<= 1e-10, 20 cases)"),
    );
}

#[test]
fn criterion_09_scalar_end_to_end() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut games = vec![ScalarGame {
        a: -1.0,
        c: 0.5,
        b1: 0.2,
        b2: 1.0,
        d1: 0.1,
        d2: 0.1,
        q: 1.0,
        r11: -2.0,
        r22: 1.0,
        ..Default::default()
    }];
    games.extend((0..29).map(|_| common::random_scalar_game(&mut rng)));
    let mut worst = 0.0f64;
    let mut missing = 0;
    for g in &games {
        let Some(oracle) = common::scalar_game_root(g) else {
            missing += 1;
            continue;
        };
        let err = solve_gtare(&GtareProblem::from(*g), &SolveOptions::default())
            .map(|rep| (rep.p_star[(0, 0)] - oracle).abs() / oracle.abs().max(1.0))
            .unwrap_or(f64::INFINITY);
        worst = worst.max(err);
    }
    verdict(
        "9",
        missing == 0 && worst <= 1e-8,
        format!("|p* - oracle| = {worst:.2e} (<= 1e-8) on {} scalar games, {missing} without an oracle root", games.len()),
    );
}

fn simulate_cli(dir: &Path, solution: &Path, name: &str) -> Vec<u8> {
    let out = dir.join(name);
    let status = bin()
        .arg("simulate")
        .arg(common::fixture("three_state.toml"))
        .arg(solution)
        .args(["--x0", "1,1,1", "--dt", "1e-3", "--horizon", "10", "--paths", "2000", "--seed", "0", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    std::fs::read(out).unwrap()
}

#[test]
fn criterion_10_simulation_value() {
    let (problem, report, _) = solve_three_state();
    let cfg = SimConfig {
        x0: Some(vec![1.0; 3]),
        dt: 1e-3,
        horizon: 10.0,
        paths: 2000,
        seed: 0,
    };
    let x0 = DVector::from_element(3, 1.0);
    let value = x0.dot(&(report.p_star.as_matrix() * &x0));
    let batch = simulate(&problem, &report.gains, &cfg).unwrap();
    let est = estimate_cost(&batch);
    let tail = tail_allowance(&problem, &report.gains, &x0, cfg.horizon).unwrap();
    let gap = (est.mean - value).abs();
    let bound = 3.0 * est.stderr + tail;

    let dir = tempfile::tempdir().unwrap();
    let solution = dir.path().join("solution.toml");
    let status = bin()
        .arg("solve")
        .arg(common::fixture("three_state.toml"))
        .arg("--out")
        .arg(&solution)
        .status()
        .unwrap();
    assert!(status.success());
    let first = simulate_cli(dir.path(), &solution, "a.csv");
    let second = simulate_cli(dir.path(), &solution, "b.csv");
    let identical = first == second;
    verdict(
        "10",
        gap <= bound && identical,
        format!(
            "|mean {:.5} - x0'P*x0 {value:.5}| = {gap:.4} <= 3*stderr {:.4} + tail {tail:.2e}; same-seed CSVs identical: {identical}",
            est.mean,
            3.0 * est.stderr
        ),
    );
}

#[test]
fn criterion_11_certificate_audit() {
    let (file, fixture) = common::three_state();
    let mut cases: Vec<(GtareProblem, Matrix)> = vec![(fixture, file.certificate().unwrap().unwrap())];
    let scalar: GtareProblem = ScalarGame {
        a: -1.0,
        c: 0.5,
        b1: 0.2,
        b2: 1.0,
        d1: 0.1,
        d2: 0.1,
        q: 1.0,
        r11: -2.0,
        r22: 1.0,
        ..Default::default()
    }
    .into();
    cases.push((scalar, Matrix::from_element(1, 1, -1.0)));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let problem = random_problem(&mut rng, ProblemShape::new(3, 2, 2, 2));
        if let Ok(Some(rep)) = search_certificate(&problem) {
            cases.push((problem, rep.l));
        }
    }
    let mut worst = f64::INFINITY;
    let mut accepted = 0;
    for (problem, l) in &cases {
        let cert = check_certificate(problem, l);
        if !cert.admissible {
            continue;
        }
        accepted += 1;
        let p_tilde = cert.p_tilde.unwrap();
        let options = SolveOptions {
            certificate: Some(l.clone()),
            ..Default::default()
        };
        match solve_gtare(problem, &options) {
            Ok(report) => {
                for r in &report.history {
                    worst = worst.min((&(&p_tilde - &r.p) - &r.z).eig_min());
                    if let Some(slack) = r.bound_slack {
                        worst = worst.min(slack);
                    }
                }
            }
            Err(_) => worst = f64::NEG_INFINITY,
        }
    }
    verdict(
        "11",
        accepted >= 3 && worst >= -1e-6,
        format!("min eig(P~_L - P(k) - Z(k)) = {worst:.3e} (>= -1e-6) over {accepted} accepted gains"),
    );
}
