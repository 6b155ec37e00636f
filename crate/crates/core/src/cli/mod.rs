//! The `gtare` command-line interface.
//!
//! Exit codes: 0 success, 1 input error, 2 solver error, 3 certificate
//! rejected. Failures print `error_kind` and `message` lines to stderr.
//! Log verbosity is read from `GTARE_LOG` (`error`, `warn`, `info`, `debug`).

pub mod problem_file;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::certify::{self, CertificateReport};
use crate::error::Error;
use crate::model::{Gains, GtareProblem};
use crate::numerics::{Matrix, SymMatrix, Tolerances};
use crate::outer_solver::{self, SolveOptions, SolveReport};
use crate::sim::{self, SimConfig};
use problem_file::{from_matrix, read_matrix, read_optional_matrix, read_problem, read_sym, FileError, ProblemFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_REJECTED: i32 = 3;

pub const LOG_ENV: &str = "GTARE_LOG";

#[derive(Debug, Parser)]
#[command(name = "gtare", version, about = "Stabilizing solutions of stochastic game-theoretic Riccati equations")]
pub struct Cli {
    /// Warn about unknown fields in problem files instead of rejecting them.
    #[arg(long, global = true)]
    pub lax: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the game Riccati equation.
    Solve(SolveArgs),
    /// Evaluate the Riccati map at a given P.
    Residual {
        problem: PathBuf,
        /// File with a matrix `P` (or `P_star`).
        p: PathBuf,
    },
    /// Simulate the closed loop.
    Simulate(SimulateArgs),
    /// Check a certificate gain L, or search for one.
    Certificate {
        problem: PathBuf,
        /// File with a matrix `L`; defaults to the problem file's `L`.
        l: Option<PathBuf>,
        /// Try the built-in candidate gains instead of a given L.
        #[arg(long)]
        search: bool,
    },
    /// Check a problem file.
    Validate { problem: PathBuf },
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub problem: PathBuf,
    /// Relative outer stopping tolerance.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_outer: usize,
    /// Per-iteration CSV trace.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// File with a certificate gain `L`; overrides the problem file's `L`.
    #[arg(long)]
    pub certificate: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub problem: PathBuf,
    /// File with gains `K1`, `K2`, or a matrix `P`/`P_star` to derive them from.
    pub solution: PathBuf,
    /// Comma-separated initial state; defaults to all ones.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 2000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trajectory CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Outcome of a failed command.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Solver(Error),
    Rejected(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => EXIT_INPUT,
            Failure::Solver(_) => EXIT_SOLVER,
            Failure::Rejected(_) => EXIT_REJECTED,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Input(_) => "InputError",
            Failure::Solver(e) => e.kind(),
            Failure::Rejected(_) => "CertificateRejected",
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Input(m) | Failure::Rejected(m) => m.clone(),
            Failure::Solver(e) => e.to_string(),
        }
    }
}

impl From<FileError> for Failure {
    fn from(e: FileError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e.root() {
            Error::InvalidProblem(_) | Error::InvalidConfig(_) => Failure::Input(e.to_string()),
            _ => Failure::Solver(e),
        }
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `std::env::args`, runs the command, and returns the exit code.
pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    run(&cli)
}

pub fn run(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Solve(args) => cmd_solve(args, cli.lax),
        Command::Residual { problem, p } => cmd_residual(problem, p, cli.lax),
        Command::Simulate(args) => cmd_simulate(args, cli.lax),
        Command::Certificate { problem, l, search } => cmd_certificate(problem, l.as_deref(), *search, cli.lax),
        Command::Validate { problem } => cmd_validate(problem, cli.lax),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error_kind = {}", toml_str(f.kind()));
            eprintln!("message = {}", toml_str(&f.message()));
            f.exit_code()
        }
    }
}

fn toml_str(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn load(path: &Path, lax: bool) -> Result<(ProblemFile, GtareProblem), Failure> {
    let file = read_problem(path, lax)?;
    let problem = file.to_problem()?;
    problem.ensure_valid()?;
    Ok((file, problem))
}

fn write_output(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn matrix_toml(key: &str, m: &Matrix) -> String {
    let rows: Vec<String> = from_matrix(m)
        .iter()
        .map(|r| format!("[{}]", r.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("{key} = [\n    {},\n]\n", rows.join(",\n    "))
}

/// Shortest representation that parses back to the same `f64`, always
/// with a decimal point or exponent so TOML reads it as a float.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'E']) {
        s
    } else {
        format!("{s}.0")
    }
}

fn list_toml(key: &str, v: &[f64]) -> String {
    format!("{key} = [{}]\n", v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", "))
}

/// Structured-text rendering of a solve.
pub fn report_toml(report: &SolveReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "outer_iters = {}", report.outer_iters);
    let _ = writeln!(s, "residual_norm = {}", fmt_f64(report.residual_norm));
    let _ = writeln!(s, "stability_abscissa = {}", fmt_f64(report.stability_abscissa));
    let (r22, r11, sharp) = report.saddle_margins;
    let _ = writeln!(s, "r22_eig_min = {}", fmt_f64(r22));
    let _ = writeln!(s, "r11_eig_max = {}", fmt_f64(r11));
    let _ = writeln!(s, "r_sharp_eig_max = {}", fmt_f64(sharp));
    let _ = writeln!(s, "certificate_used = {}", report.certificate_used.is_some());
    s.push_str(&matrix_toml("P_star", report.p_star.as_matrix()));
    s.push_str(&matrix_toml("K1", &report.gains.k1));
    s.push_str(&matrix_toml("K2", &report.gains.k2));
    s
}

/// Trace CSV: one row per inner solve, then a row for `P*` whose `Z`
/// columns are empty and whose `m_eig` columns hold the spectrum of `G(P*)`.
pub fn trace_csv(problem: &GtareProblem, report: &SolveReport) -> Result<String, Failure> {
    let n = problem.n();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["k".to_string(), "z_norm".into(), "residual_norm".into()];
    header.extend((1..=n).map(|i| format!("z_eig_{i}")));
    header.extend((1..=n).map(|i| format!("m_eig_{i}")));
    let csv_err = |e: csv::Error| Failure::Input(format!("trace: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for r in &report.history {
        let mut row = vec![r.k.to_string(), fmt_f64(r.z_norm), fmt_f64(r.residual_norm)];
        row.extend(r.z_eigs.iter().map(|x| fmt_f64(*x)));
        row.extend(r.m_eigs.iter().map(|x| fmt_f64(*x)));
        w.write_record(&row).map_err(csv_err)?;
    }
    let g = problem.residual(&report.p_star)?;
    let mut row = vec![report.history.len().to_string(), String::new(), fmt_f64(report.residual_norm)];
    row.extend(std::iter::repeat_n(String::new(), n));
    row.extend(g.eigenvalues().iter().map(|x| fmt_f64(*x)));
    w.write_record(&row).map_err(csv_err)?;
    let bytes = w.into_inner().map_err(|e| Failure::Input(format!("trace: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn cmd_solve(args: &SolveArgs, lax: bool) -> CmdResult {
    let (file, problem) = load(&args.problem, lax)?;
    let certificate = match &args.certificate {
        Some(path) => Some(read_matrix(path, &["L"])?.1),
        None => file.certificate()?,
    };
    if args.tol.is_nan() || args.tol <= 0.0 {
        return Err(Failure::Input("--tol must be positive".into()));
    }
    let options = SolveOptions {
        outer_tol: args.tol,
        max_outer: args.max_outer,
        certificate,
        ..Default::default()
    };
    let report = outer_solver::solve_gtare(&problem, &options)?;
    if let Some(path) = &args.trace {
        let text = trace_csv(&problem, &report)?;
        write_output(Some(path), &text)?;
    }
    write_output(args.out.as_deref(), &report_toml(&report))
}

fn cmd_residual(problem_path: &Path, p_path: &Path, lax: bool) -> CmdResult {
    let (_, problem) = load(problem_path, lax)?;
    let p = read_sym(p_path, &["P", "P_star", "P_reference"])?;
    if p.dim() != problem.n() {
        return Err(Failure::Input(format!(
            "P is {0}x{0}, the problem has n = {1}",
            p.dim(),
            problem.n()
        )));
    }
    let g = problem.residual(&p)?;
    let (r22_min, r11_max) = problem.domain_margins(&p);
    let tol = Tolerances::DEFAULT;
    let mut s = String::new();
    let _ = writeln!(s, "residual_norm = {}", fmt_f64(g.norm()));
    let _ = writeln!(s, "in_domain = {}", problem.in_dom(&p, tol.psd_tol));
    let _ = writeln!(s, "r22_eig_min = {}", fmt_f64(r22_min));
    let _ = writeln!(s, "r11_eig_max = {}", fmt_f64(r11_max));
    s.push_str(&matrix_toml("G", g.as_matrix()));
    write_output(None, &s)
}

/// Gains from a solution file: `K1` and `K2` if present, else `K(P)`.
fn load_gains(problem: &GtareProblem, path: &Path) -> Result<Gains, Failure> {
    let k1 = read_optional_matrix(path, "K1")?;
    let k2 = read_optional_matrix(path, "K2")?;
    let gains = match (k1, k2) {
        (Some(k1), Some(k2)) => Gains { k1, k2 },
        _ => {
            let p = read_sym(path, &["P_star", "P"])?;
            if p.dim() != problem.n() {
                return Err(Failure::Input("P does not match the problem dimension".into()));
            }
            problem.gains(&p)?
        }
    };
    let n = problem.n();
    if gains.k1.shape() != (problem.m1(), n) || gains.k2.shape() != (problem.m2(), n) {
        return Err(Failure::Input("gain dimensions do not match the problem".into()));
    }
    Ok(gains)
}

/// Trajectory CSV: `t`, path-mean states, sample-path states, and the
/// sample path's `u1`, `u2`.
pub fn trajectory_csv(batch: &sim::TrajectoryBatch) -> Result<String, Failure> {
    let n = batch.x0.len();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("mean_x{i}")));
    header.extend((1..=n).map(|i| format!("sample_x{i}")));
    header.extend((1..=batch.sample_u1.ncols()).map(|i| format!("u1_{i}")));
    header.extend((1..=batch.sample_u2.ncols()).map(|i| format!("u2_{i}")));
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Failure::Input(format!("trajectory: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for (i, t) in batch.times.iter().enumerate() {
        let mut row = vec![fmt_f64(*t)];
        for m in [&batch.mean_states, &batch.sample_states, &batch.sample_u1, &batch.sample_u2] {
            row.extend(m.row(i).iter().map(|x| fmt_f64(*x)));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Input(format!("trajectory: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn cmd_simulate(args: &SimulateArgs, lax: bool) -> CmdResult {
    let (_, problem) = load(&args.problem, lax)?;
    let gains = load_gains(&problem, &args.solution)?;
    let cfg = SimConfig {
        x0: args.x0.clone(),
        dt: args.dt,
        horizon: args.horizon,
        paths: args.paths,
        seed: args.seed,
    };
    cfg.validate()?;
    let x0 = cfg.initial_state(problem.n())?;
    let cl = problem.closed_loop_with(&gains);
    let abscissa = crate::stability::LyapOperator::for_closed_loop(&cl).spectral_abscissa();
    if abscissa >= -Tolerances::DEFAULT.stab_tol {
        log::warn!("closed loop is not mean-square stable (abscissa {abscissa:e}); simulating the finite horizon anyway");
    }
    let batch = sim::simulate(&problem, &gains, &cfg)?;
    let est = sim::estimate_cost(&batch);
    if let Some(path) = &args.out {
        write_output(Some(path), &trajectory_csv(&batch)?)?;
    }
    let mut s = String::new();
    let _ = writeln!(s, "cost_mean = {}", fmt_f64(est.mean));
    let _ = writeln!(s, "cost_stderr = {}", fmt_f64(est.stderr));
    let _ = writeln!(s, "paths = {}", cfg.paths);
    let _ = writeln!(s, "horizon = {}", fmt_f64(cfg.horizon));
    let _ = writeln!(s, "dt = {}", fmt_f64(cfg.dt));
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "closed_loop_abscissa = {}", fmt_f64(abscissa));
    if abscissa < 0.0 {
        let value = sim::closed_loop_value(&problem, &gains, &x0)?;
        let tail = sim::tail_allowance(&problem, &gains, &x0, cfg.horizon)?;
        let em = sim::euler_maruyama_expected_cost(&problem, &gains, &cfg)?;
        let _ = writeln!(s, "value = {}", fmt_f64(value));
        let _ = writeln!(s, "tail_allowance = {}", fmt_f64(tail));
        let _ = writeln!(s, "discretization_bias = {}", fmt_f64(em - value));
    }
    let _ = writeln!(s, "mean_terminal_square_norm = {}", fmt_f64(batch.mean_terminal_square_norm()));
    write_output(None, &s)
}

pub fn certificate_toml(rep: &CertificateReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "admissible = {}", rep.admissible);
    if let Some(r) = rep.failure_reason {
        let _ = writeln!(s, "failure_reason = \"{r}\"");
    }
    let _ = writeln!(s, "closed_loop_abscissa = {}", fmt_f64(rep.closed_loop_abscissa));
    if let Some(m) = rep.sign_margin {
        let _ = writeln!(s, "sign_margin = {}", fmt_f64(m));
    }
    s.push_str(&matrix_toml("L", &rep.l));
    if let Some(p) = &rep.p_tilde {
        s.push_str(&matrix_toml("P_tilde", p.as_matrix()));
        s.push_str(&list_toml("P_tilde_eigenvalues", &p.eigenvalues()));
    }
    s
}

fn cmd_certificate(problem_path: &Path, l_path: Option<&Path>, search: bool, lax: bool) -> CmdResult {
    let (file, problem) = load(problem_path, lax)?;
    let report = if search {
        match certify::search_certificate(&problem)? {
            Some(r) => r,
            None => {
                return Err(Failure::Rejected(
                    "no admissible gain among the candidates".into(),
                ))
            }
        }
    } else {
        let l = match l_path {
            Some(path) => read_matrix(path, &["L"])?.1,
            None => file
                .certificate()?
                .ok_or_else(|| Failure::Input("no L given and the problem file has none".into()))?,
        };
        if l.shape() != (problem.m2(), problem.n()) {
            return Err(Failure::Input(format!(
                "L is {}x{}, expected {}x{}",
                l.nrows(),
                l.ncols(),
                problem.m2(),
                problem.n()
            )));
        }
        certify::check_certificate(&problem, &l)
    };
    write_output(None, &certificate_toml(&report))?;
    if report.admissible {
        Ok(())
    } else {
        Err(Failure::Rejected(format!(
            "certificate rejected: {}",
            report.failure_reason.map(|r| r.to_string()).unwrap_or_default()
        )))
    }
}

fn cmd_validate(problem_path: &Path, lax: bool) -> CmdResult {
    let file = read_problem(problem_path, lax)?;
    let problem = file.to_problem()?;
    let diagnostics = problem.validate();
    let mut s = String::new();
    let _ = writeln!(s, "valid = {}", diagnostics.is_empty());
    let _ = writeln!(s, "n = {}\nm1 = {}\nm2 = {}\nr = {}", problem.n(), problem.m1(), problem.m2(), problem.r());
    let items: Vec<String> = diagnostics.iter().map(|d| toml_str(&d.to_string())).collect();
    let _ = writeln!(s, "diagnostics = [{}]", items.join(", "));
    if diagnostics.is_empty() {
        let zero = SymMatrix::zeros(problem.n());
        let (r22_min, r11_max) = problem.domain_margins(&zero);
        let _ = writeln!(s, "zero_in_domain = {}", problem.in_dom(&zero, Tolerances::DEFAULT.psd_tol));
        let _ = writeln!(s, "r22_eig_min = {}", fmt_f64(r22_min));
        let _ = writeln!(s, "r11_eig_max = {}", fmt_f64(r11_max));
    }
    write_output(None, &s)?;
    if diagnostics.is_empty() {
        Ok(())
    } else {
        Err(Failure::Input(Error::InvalidProblem(diagnostics).to_string()))
    }
}
