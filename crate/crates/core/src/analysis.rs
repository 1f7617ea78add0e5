//! Jacobians, sensitivities, stability certificates and loading scans.
//!
//! With `γ = log v` the reduced equations read `h(γ) = q(eᵞ) − q̃ = 0` where
//! `qᵢ(v) = B̃ᵢ vᵢ − Σ_k B̃_ik c_ik`. Their Jacobian
//!
//! ```text
//! J_ik = −(B̃_ik/2) vᵢ v_k / c_ik                 (k ~ i)
//! J_ii = B̃ᵢ vᵢ − Σ_k (B̃_ik/2) vᵢ v_k / c_ik
//! ```
//!
//! is symmetric with nonpositive off-diagonals, and equals `(∂q/∂v) diag(v)`.
//! At the high-voltage solution it is positive definite, so `J⁻¹` is
//! entrywise positive and `∂v/∂q̃ = diag(v) J⁻¹ > 0`.

use alloc::vec::Vec;

use crate::energy::{check_convexity_domain, ConvexityCheck};
use crate::fixed_point::{solve_fixed_point, FixedPointConfig};
use crate::homogeneous::{v_at, PFSolution, Problem};
use crate::linalg::{min_eigenvalue, DenseMatrix, Lu};
use crate::math::{exp, ln};
use crate::network::{Injections, RadialNetwork};
use crate::{DomainViolation, Error, Verdict};

/// `∂q/∂v` with `qᵢ(v) = B̃ᵢ vᵢ − Σ_k B̃_ik √(vᵢ v_k − s_ik²)`.
pub fn reactive_jacobian(problem: &Problem, v: &[f64]) -> Result<DenseMatrix, Error> {
    let c = positive_c(problem, v)?;
    let n = problem.n();
    let sys = problem.system();
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = sys.b_total[i];
    }
    for bus in 1..=n {
        let parent = problem.network().parent(bus).unwrap();
        let (b, cl) = (sys.b_line[bus - 1], c[bus - 1]);
        let (va, vb) = (v[bus - 1], v_at(v, parent));
        m[(bus - 1, bus - 1)] -= b * vb / (2.0 * cl);
        if parent != 0 {
            let p = parent - 1;
            m[(p, p)] -= b * va / (2.0 * cl);
            m[(bus - 1, p)] -= b * va / (2.0 * cl);
            m[(p, bus - 1)] -= b * vb / (2.0 * cl);
        }
    }
    Ok(m)
}

fn positive_c(problem: &Problem, v: &[f64]) -> Result<Vec<f64>, Error> {
    let c = problem.line_c(v)?;
    let bad: Vec<usize> = c
        .iter()
        .enumerate()
        .filter(|(_, &x)| !(x > 0.0))
        .map(|(i, _)| i + 1)
        .collect();
    if bad.is_empty() {
        Ok(c)
    } else {
        Err(DomainViolation { lines: bad }.into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedJacobian {
    pub j: DenseMatrix,
    /// Nonpositive off-diagonals.
    pub is_z: bool,
    pub is_pd: bool,
    pub min_eig: f64,
}

/// The Jacobian of the reduced equations in `γ = log v`.
pub fn reduced_jacobian(problem: &Problem, v: &[f64]) -> Result<ReducedJacobian, Error> {
    let c = positive_c(problem, v)?;
    let n = problem.n();
    let sys = problem.system();
    let mut j = DenseMatrix::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = sys.b_total[i] * v[i];
    }
    for bus in 1..=n {
        let parent = problem.network().parent(bus).unwrap();
        let w = sys.b_line[bus - 1] * v[bus - 1] * v_at(v, parent) / (2.0 * c[bus - 1]);
        j[(bus - 1, bus - 1)] -= w;
        if parent != 0 {
            let p = parent - 1;
            j[(p, p)] -= w;
            j[(bus - 1, p)] = -w;
            j[(p, bus - 1)] = -w;
        }
    }
    let is_z = (0..n).all(|i| (0..n).all(|k| i == k || j[(i, k)] <= 0.0));
    let min_eig = min_eigenvalue(&j);
    Ok(ReducedJacobian {
        is_pd: min_eig > 0.0,
        j,
        is_z,
        min_eig,
    })
}

/// Finite-difference check of [`reduced_jacobian`] and of the identity
/// `J = (∂q/∂v) diag(v)`, both to `rel_tol` in the max norm.
pub fn verify_jacobian_identity(problem: &Problem, v: &[f64], rel_tol: f64) -> Result<bool, Error> {
    const H: f64 = 1e-6;
    let n = problem.n();
    let jac = reduced_jacobian(problem, v)?;
    let dq = reactive_jacobian(problem, v)?;
    let scale = jac.j.max_abs().max(1.0);

    let mut fd_gamma = DenseMatrix::zeros(n, n);
    let mut fd_v = DenseMatrix::zeros(n, n);
    let gamma: Vec<f64> = v.iter().map(|&x| ln(x)).collect();
    for k in 0..n {
        let mut plus = gamma.clone();
        let mut minus = gamma.clone();
        plus[k] += H;
        minus[k] -= H;
        let qp = problem.reactive_injection(&plus.iter().map(|&g| exp(g)).collect::<Vec<_>>())?;
        let qm = problem.reactive_injection(&minus.iter().map(|&g| exp(g)).collect::<Vec<_>>())?;
        let hv = H * v[k];
        let mut vp = v.to_vec();
        let mut vm = v.to_vec();
        vp[k] += hv;
        vm[k] -= hv;
        let rp = problem.reactive_injection(&vp)?;
        let rm = problem.reactive_injection(&vm)?;
        for i in 0..n {
            fd_gamma[(i, k)] = (qp[i] - qm[i]) / (2.0 * H);
            fd_v[(i, k)] = (rp[i] - rm[i]) / (2.0 * hv) * v[k];
        }
    }
    let mut scaled = dq.clone();
    for i in 0..n {
        for k in 0..n {
            scaled[(i, k)] *= v[k];
        }
    }
    Ok(jac.j.max_abs_diff(&fd_gamma) <= rel_tol * scale
        && scaled.max_abs_diff(&fd_v) <= rel_tol * scale
        && scaled.max_abs_diff(&jac.j) <= 1e-12 * scale)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrix {
    /// `∂v/∂q̃`.
    pub dv_dq: DenseMatrix,
    pub entrywise_positive: bool,
}

/// `∂v/∂q̃ = diag(v) J⁻¹`.
pub fn voltage_sensitivity(jac: &ReducedJacobian, v: &[f64]) -> Result<SensitivityMatrix, Error> {
    if !jac.is_pd {
        return Err(Error::NotPositiveDefinite { min_eig: jac.min_eig });
    }
    let mut m = Lu::factor(&jac.j)?.inverse();
    let n = v.len();
    for i in 0..n {
        for k in 0..n {
            m[(i, k)] *= v[i];
        }
    }
    let entrywise_positive = (0..n).all(|i| (0..n).all(|k| m[(i, k)] > 0.0));
    Ok(SensitivityMatrix {
        dv_dq: m,
        entrywise_positive,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate {
    pub convexity: ConvexityCheck,
    pub jacobian_min_eig: f64,
    pub jacobian_is_z: bool,
    /// Both the convexity matrix and `J` are positive definite with margin.
    pub stable: bool,
}

/// Relative eigenvalue margin for the strict stability test.
pub const STABILITY_MARGIN: f64 = 1e-12;

/// Whether `solution` lies strictly inside the convexity domain of the energy
/// function with a positive definite reduced Jacobian.
pub fn certify_stability(problem: &Problem, solution: &PFSolution) -> Result<StabilityCertificate, Error> {
    let v = solution.v.as_slice();
    let convexity = check_convexity_domain(problem, v, &solution.theta);
    let (jmin, is_z, jscale) = match reduced_jacobian(problem, v) {
        Ok(j) => (j.min_eig, j.is_z, j.j.max_abs().max(1.0)),
        Err(_) => (f64::NAN, false, 1.0),
    };
    let stable = convexity.in_domain
        && convexity.min_eigenvalue > STABILITY_MARGIN * convexity.scale.max(1.0)
        && jmin > STABILITY_MARGIN * jscale;
    Ok(StabilityCertificate {
        convexity,
        jacobian_min_eig: jmin,
        jacobian_is_z: is_z,
        stable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub agree: bool,
    pub max_deviation: f64,
}

/// Largest deviation between two solutions of the same instance: relative
/// per component for `v`, relative to `max(‖a‖∞, ‖b‖∞, 1)` for `θ`, `s`, `c`.
pub fn compare_solutions(a: &PFSolution, b: &PFSolution, rel_tol: f64) -> Result<Comparison, Error> {
    if a.instance_id != b.instance_id || a.v.len() != b.v.len() {
        return Err(Error::InstanceMismatch);
    }
    let mut dev = a
        .v
        .iter()
        .zip(b.v.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    for (x, y) in [
        (&a.theta[..], &b.theta[..]),
        (a.s.as_slice(), b.s.as_slice()),
        (&a.c[..], &b.c[..]),
    ] {
        let scale = x
            .iter()
            .chain(y)
            .fold(1.0_f64, |m, z| m.max(z.abs()));
        let d = x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        dev = dev.max(d / scale);
    }
    Ok(Comparison {
        agree: dev <= rel_tol,
        max_deviation: dev,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationConfig {
    pub lambda_max: f64,
    /// Evenly spaced samples on `[0, lambda_max]`, at least 2.
    pub samples: usize,
    pub bisection_tol: f64,
    pub fixed_point: FixedPointConfig,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            lambda_max: 2.0,
            samples: 21,
            bisection_tol: 1e-4,
            fixed_point: FixedPointConfig {
                max_iter: 1_000_000,
                ..FixedPointConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationSample {
    pub lambda: f64,
    pub verdict: Verdict,
    pub status: &'static str,
    pub min_v: Option<f64>,
    pub residual: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    /// Sorted by `lambda`, grid and bisection samples together.
    pub samples: Vec<ContinuationSample>,
    pub solutions: Vec<(f64, PFSolution)>,
    /// `(λ_lo, λ_hi)`; `λ_hi` is `None` when no infeasible sample was found.
    pub bracket: (f64, Option<f64>),
    pub bracket_width: Option<f64>,
    /// Whether the bracket reached `bisection_tol`.
    pub converged: bool,
    /// `min v` never increases along the feasible samples.
    pub min_v_nonincreasing: bool,
}

impl ContinuationResult {
    pub fn lambdas(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.lambda).collect()
    }

    /// The feasible sample closest to the boundary.
    pub fn last_feasible(&self) -> Option<&ContinuationSample> {
        self.samples
            .iter()
            .filter(|s| s.verdict == Verdict::Solved)
            .max_by(|a, b| a.lambda.total_cmp(&b.lambda))
    }
}

/// Scans the ray `λ (p, q)` with the fixed-point solver and brackets the
/// solvability boundary by bisection.
///
/// Only hard certificates count as infeasible. An inconclusive midpoint
/// stops the bisection and leaves the bracket wider than requested.
pub fn continuation_scan(
    network: &RadialNetwork,
    base: &Injections,
    config: &ContinuationConfig,
) -> Result<ContinuationResult, Error> {
    if config.samples < 2 {
        return Err(Error::InvalidConfig("samples must be at least 2"));
    }
    if !(config.lambda_max > 0.0) || !(config.bisection_tol > 0.0) {
        return Err(Error::InvalidConfig("lambda_max and bisection_tol must be positive"));
    }
    let base_problem = Problem::new(network.clone(), base.clone())?;
    let mut samples = Vec::new();
    let mut solutions = Vec::new();
    let mut run = |lambda: f64| -> Result<Verdict, Error> {
        let problem = base_problem.scaled(lambda);
        let report = solve_fixed_point(&problem, &config.fixed_point)?;
        let verdict = report.verdict();
        let (min_v, residual) = match &report.solution {
            Some(sol) => (
                Some(sol.v.iter().copied().fold(f64::INFINITY, f64::min)),
                Some(sol.residual_inf),
            ),
            None => (None, None),
        };
        samples.push(ContinuationSample {
            lambda,
            verdict,
            status: report.trace.status.name(),
            min_v,
            residual,
            iterations: report.trace.iter_count,
        });
        if let Some(sol) = report.solution {
            solutions.push((lambda, sol));
        }
        Ok(verdict)
    };

    let mut lo = 0.0;
    let mut hi = None;
    for j in 0..config.samples {
        let lambda = config.lambda_max * j as f64 / (config.samples - 1) as f64;
        match run(lambda)? {
            Verdict::Solved if hi.is_none() => lo = lambda,
            Verdict::Infeasible if hi.is_none() => hi = Some(lambda),
            _ => {}
        }
    }
    let mut converged = hi.is_none();
    if let Some(mut h) = hi {
        while h - lo > config.bisection_tol {
            let mid = 0.5 * (lo + h);
            match run(mid)? {
                Verdict::Solved => lo = mid,
                Verdict::Infeasible => h = mid,
                Verdict::Inconclusive => {
                    log::warn!("continuation: inconclusive sample at lambda = {mid}; bracket left open at [{lo}, {h}]");
                    break;
                }
            }
        }
        converged = h - lo <= config.bisection_tol;
        hi = Some(h);
    }

    samples.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    solutions.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mins: Vec<f64> = samples.iter().filter_map(|s| s.min_v).collect();
    let min_v_nonincreasing = mins.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Ok(ContinuationResult {
        samples,
        solutions,
        bracket: (lo, hi),
        bracket_width: hi.map(|h| h - lo),
        converged,
        min_v_nonincreasing,
    })
}
