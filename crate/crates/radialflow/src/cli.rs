//! Command-line front end. Exit codes: 0 solved, 1 input error,
//! 2 infeasible, 3 inconclusive.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use radialflow_core::analysis::{
    certify_stability, compare_solutions, continuation_scan, reduced_jacobian, voltage_sensitivity,
    ContinuationConfig,
};
use radialflow_core::energy::{solve_energy, EnergyConfig};
use radialflow_core::fixed_point::{solve_fixed_point, FixedPointConfig, FixedPointReport};
use radialflow_core::network::DEFAULT_KAPPA_TOLERANCE;
use radialflow_core::oracle::enumerate_solutions;
use radialflow_core::relaxation::{phase_one, solve_relaxation, RelaxationConfig};
use radialflow_core::{Method, PFSolution, Problem, Verdict};

use crate::format::{load, ParseError, ParseOptions, ParsedNetwork};
use crate::report::*;

#[derive(Debug, Parser)]
#[command(name = "radialflow", version, about = "Power flow on radial networks with homogeneous lines")]
pub struct Cli {
    /// Relative tolerance on the common G/B ratio.
    #[arg(long, global = true, default_value_t = DEFAULT_KAPPA_TOLERANCE)]
    pub kappa_tol: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve with one or all methods.
    Solve {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::All)]
        method: MethodArg,
        /// Largest residual accepted as a solution.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Fixed-point iteration cap.
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve and certify stability, or emit an infeasibility certificate.
    Certify {
        input: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scan the loading ray λ·(p, q) and bracket the solvability boundary.
    Scan {
        input: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 21)]
        samples: usize,
        #[arg(long, default_value_t = 1e-4)]
        bisect_tol: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_iter: usize,
        /// CSV destination; the bracket summary then goes to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force every solution of a small network (at most 4 buses besides the slack).
    Enumerate {
        input: PathBuf,
        #[arg(long, default_value_t = 24)]
        density: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Voltage sensitivity to reactive injections at the solution.
    Sensitivity {
        input: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    FixedPoint,
    Relaxation,
    Energy,
    All,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Core(#[from] radialflow_core::Error),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
}

/// Runs the CLI and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    let options = ParseOptions {
        kappa_tolerance: cli.kappa_tol,
    };
    match cli.command {
        Command::Solve {
            input,
            method,
            tol,
            max_iter,
            out,
        } => {
            let parsed = load(&input, &options)?;
            let (report, verdict) = solve(&parsed, method, tol, max_iter)?;
            emit(&to_json(&report), out.as_deref(), stdout)?;
            Ok(exit_code(verdict))
        }
        Command::Certify { input, max_iter, out } => {
            let parsed = load(&input, &options)?;
            let (report, verdict) = certify(&parsed, max_iter)?;
            emit(&to_json(&report), out.as_deref(), stdout)?;
            Ok(exit_code(verdict))
        }
        Command::Scan {
            input,
            lambda_max,
            samples,
            bisect_tol,
            max_iter,
            out,
        } => {
            let parsed = load(&input, &options)?;
            let cfg = ContinuationConfig {
                lambda_max,
                samples,
                bisection_tol: bisect_tol,
                fixed_point: FixedPointConfig {
                    max_iter,
                    ..FixedPointConfig::default()
                },
            };
            scan(&parsed, &cfg, out.as_deref(), stdout, stderr)
        }
        Command::Enumerate { input, density, out } => {
            let parsed = load(&input, &options)?;
            let report = enumerate(&parsed, density)?;
            let empty = report.solutions.is_empty();
            emit(&to_json(&report), out.as_deref(), stdout)?;
            Ok(if empty { 2 } else { 0 })
        }
        Command::Sensitivity { input, max_iter, out } => {
            let parsed = load(&input, &options)?;
            let (report, verdict) = sensitivity(&parsed, max_iter)?;
            emit(&to_json(&report), out.as_deref(), stdout)?;
            Ok(exit_code(verdict))
        }
    }
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        }),
        None => stdout.write_all(text.as_bytes()).map_err(|source| CliError::Write {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

fn problem(parsed: &ParsedNetwork) -> Result<Problem, CliError> {
    Ok(Problem::new(parsed.network.clone(), parsed.injections.clone())?)
}

fn fixed_point_config(max_iter: usize) -> FixedPointConfig {
    FixedPointConfig {
        max_iter,
        ..FixedPointConfig::default()
    }
}

struct MethodRun {
    verdict: Verdict,
    detail: &'static str,
    iterations: usize,
    seconds: f64,
    solution: Option<PFSolution>,
}

fn run_method(p: &Problem, method: Method, max_iter: usize) -> Result<MethodRun, CliError> {
    let start = Instant::now();
    let (verdict, detail, iterations, solution) = match method {
        Method::FixedPoint => {
            let r = solve_fixed_point(p, &fixed_point_config(max_iter))?;
            (r.verdict(), r.trace.status.name(), r.trace.iter_count, r.solution)
        }
        Method::Relaxation => {
            let r = solve_relaxation(p, &RelaxationConfig::default())?;
            (r.verdict(), r.outcome.status.name(), r.outcome.newton_steps, r.solution)
        }
        Method::Energy => {
            let r = solve_energy(p, &EnergyConfig::default())?;
            (r.status.verdict(), r.status.name(), r.iterations, r.solution)
        }
    };
    Ok(MethodRun {
        verdict,
        detail,
        iterations,
        seconds: start.elapsed().as_secs_f64(),
        solution,
    })
}

fn solve(parsed: &ParsedNetwork, method: MethodArg, tol: f64, max_iter: usize) -> Result<(SolveReport, Verdict), CliError> {
    if !(tol > 0.0) {
        return Err(CliError::Usage(format!("--tol must be positive, got {tol}")));
    }
    let p = problem(parsed)?;
    let methods: &[Method] = match method {
        MethodArg::FixedPoint => &[Method::FixedPoint],
        MethodArg::Relaxation => &[Method::Relaxation],
        MethodArg::Energy => &[Method::Energy],
        MethodArg::All => &[Method::FixedPoint, Method::Relaxation, Method::Energy],
    };
    let mut reports = Vec::new();
    let mut solved = Vec::new();
    let mut verdicts = Vec::new();
    for &m in methods {
        let mut run = run_method(&p, m, max_iter)?;
        if let Some(sol) = &run.solution {
            if sol.residual_inf > tol {
                log::warn!("{}: residual {:e} above --tol {tol:e}", m.name(), sol.residual_inf);
                run.verdict = Verdict::Inconclusive;
                run.detail = "residual_above_tolerance";
                run.solution = None;
            }
        }
        let stable = match &run.solution {
            Some(sol) => Some(certify_stability(&p, sol)?.stable),
            None => None,
        };
        log::info!("{}: {} ({}) in {} iterations", m.name(), verdict_name(run.verdict), run.detail, run.iterations);
        verdicts.push(run.verdict);
        reports.push(MethodReport {
            method: m.name(),
            status: verdict_name(run.verdict),
            detail: run.detail,
            iterations: run.iterations,
            wall_time_s: Num(run.seconds),
            solution: run.solution.as_ref().map(SolutionFields::from),
            stable,
        });
        if let (Some(sol), Some(st)) = (run.solution, stable) {
            solved.push((sol, st));
        }
    }
    let verdict = if verdicts.iter().all(|v| *v == verdicts[0]) {
        verdicts[0]
    } else {
        log::warn!("methods disagree: {verdicts:?}");
        Verdict::Inconclusive
    };
    let mut agreement = None;
    for (i, (a, _)) in solved.iter().enumerate() {
        for (b, _) in &solved[i + 1..] {
            let d = compare_solutions(a, b, 0.0)?.max_deviation;
            agreement = Some(agreement.map_or(d, |m: f64| m.max(d)));
        }
    }
    let stability = (!solved.is_empty()).then(|| solved.iter().all(|(_, st)| *st));
    let report = SolveReport {
        schema: SCHEMA,
        command: "solve",
        instance_digest: parsed.digest.clone(),
        buses: parsed.labels.clone(),
        kappa: Num(parsed.network.kappa()),
        tolerance: Num(tol),
        status: verdict_name(verdict),
        methods: reports,
        agreement: agreement.map(Num),
        stability,
    };
    Ok((report, verdict))
}

fn certify(parsed: &ParsedNetwork, max_iter: usize) -> Result<(CertifyReport, Verdict), CliError> {
    let p = problem(parsed)?;
    let fp: FixedPointReport = solve_fixed_point(&p, &fixed_point_config(max_iter))?;
    let mut report = CertifyReport {
        schema: SCHEMA,
        command: "certify",
        instance_digest: parsed.digest.clone(),
        buses: parsed.labels.clone(),
        status: verdict_name(fp.verdict()),
        v: None,
        certificate: None,
        infeasibility: None,
    };
    if let Some(sol) = &fp.solution {
        let cert = certify_stability(&p, sol)?;
        let jac = reduced_jacobian(&p, &sol.v)?;
        let positive = voltage_sensitivity(&jac, &sol.v).is_ok_and(|s| s.entrywise_positive);
        report.v = Some(nums(&sol.v));
        report.certificate = Some(StabilityFields::new(&cert, positive));
        return Ok((report, Verdict::Solved));
    }
    let (outcome, _) = phase_one(&p, &RelaxationConfig::default())?;
    let phase = PhaseOneFields::from(&outcome);
    let verdict = match (fp.verdict(), phase.outcome) {
        (Verdict::Infeasible, _) | (_, "infeasible") => Verdict::Infeasible,
        _ => Verdict::Inconclusive,
    };
    report.status = verdict_name(verdict);
    report.infeasibility = Some(InfeasibilityFields {
        phase_one: phase,
        fixed_point: FixedPointFields::new(&fp, &parsed.labels),
    });
    Ok((report, verdict))
}

fn scan(
    parsed: &ParsedNetwork,
    cfg: &ContinuationConfig,
    out: Option<&Path>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, CliError> {
    let res = continuation_scan(&parsed.network, &parsed.injections, cfg)?;
    let mut csv_writer = csv::Writer::from_writer(Vec::new());
    for s in &res.samples {
        csv_writer
            .serialize(ScanRow::from(s))
            .map_err(|e| CliError::Usage(format!("CSV encoding failed: {e}")))?;
    }
    let csv_bytes = csv_writer
        .into_inner()
        .map_err(|e| CliError::Usage(format!("CSV encoding failed: {e}")))?;
    let summary = ScanSummary {
        schema: SCHEMA,
        command: "scan",
        instance_digest: parsed.digest.clone(),
        lambda_lower: Num(res.bracket.0),
        lambda_upper: res.bracket.1.map(Num),
        bracket_width: res.bracket_width.map(Num),
        converged: res.converged,
        min_v_nonincreasing: res.min_v_nonincreasing,
        samples: res.samples.len(),
    };
    let summary_text = to_json(&summary);
    match out {
        Some(path) => {
            fs::write(path, &csv_bytes).map_err(|source| CliError::Write {
                path: path.to_path_buf(),
                source,
            })?;
            emit(&summary_text, None, stdout)?;
        }
        None => {
            stdout.write_all(&csv_bytes).map_err(|source| CliError::Write {
                path: PathBuf::from("<stdout>"),
                source,
            })?;
            let _ = stderr.write_all(summary_text.as_bytes());
        }
    }
    // An upper end without convergence means bisection stopped on an
    // undecided sample.
    Ok(if res.bracket.1.is_some() && !res.converged { 3 } else { 0 })
}

fn enumerate(parsed: &ParsedNetwork, density: usize) -> Result<EnumerateReport, CliError> {
    let p = problem(parsed)?;
    let set = enumerate_solutions(&p, density)?;
    let scale = p.system().b_total.iter().fold(1.0_f64, |m, &b| m.max(b));
    let mut solutions = Vec::new();
    for v in &set.solutions {
        let stable = match p.assemble_solution(v, Method::FixedPoint, 1e-8 * scale) {
            Ok(sol) => certify_stability(&p, &sol)?.stable,
            Err(_) => false,
        };
        solutions.push((v.as_slice().to_vec(), stable));
    }
    let dominance: Vec<Vec<bool>> = solutions
        .iter()
        .map(|(a, _)| {
            solutions
                .iter()
                .map(|(b, _)| a.iter().zip(b).all(|(x, y)| *x >= y - 1e-8))
                .collect()
        })
        .collect();
    Ok(EnumerateReport {
        schema: SCHEMA,
        command: "enumerate",
        instance_digest: parsed.digest.clone(),
        buses: parsed.labels.clone(),
        density,
        complete_claim: set.complete_claim,
        solutions: solutions
            .iter()
            .zip(&dominance)
            .map(|((v, stable), row)| EnumeratedSolution {
                v: nums(v),
                stable: *stable,
                dominant: row.iter().all(|d| *d),
            })
            .collect(),
        dominance,
    })
}

fn sensitivity(parsed: &ParsedNetwork, max_iter: usize) -> Result<(SensitivityReport, Verdict), CliError> {
    let p = problem(parsed)?;
    let fp = solve_fixed_point(&p, &fixed_point_config(max_iter))?;
    let mut report = SensitivityReport {
        schema: SCHEMA,
        command: "sensitivity",
        instance_digest: parsed.digest.clone(),
        buses: parsed.labels.clone(),
        status: verdict_name(fp.verdict()),
        v: None,
        dv_dq: None,
        entrywise_positive: None,
    };
    let Some(sol) = &fp.solution else {
        return Ok((report, fp.verdict()));
    };
    let jac = reduced_jacobian(&p, &sol.v)?;
    let sens = voltage_sensitivity(&jac, &sol.v)?;
    report.v = Some(nums(&sol.v));
    report.dv_dq = Some(matrix(&sens.dv_dq));
    report.entrywise_positive = Some(sens.entrywise_positive);
    Ok((report, Verdict::Solved))
}
