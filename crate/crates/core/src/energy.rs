//! Energy function in `(γ, θ) = (log v, θ)`.
//!
//! ```text
//! E(v, θ) = Σ_lines B̃_ik (vᵢ + v_k − 2√(vᵢ v_k) cos(θᵢ − θ_k)) − 2 Σᵢ p̃ᵢ θᵢ − Σᵢ q̃ᵢ log vᵢ
//! ```
//!
//! With these linear terms the gradient is exactly the power flow mismatch:
//!
//! ```text
//! ∂E/∂γᵢ = B̃ᵢ vᵢ − Σ_k B̃_ik c_ik − q̃ᵢ          (reactive mismatch)
//! ∂E/∂θᵢ = 2 (Σ_k B̃_ik s_ik − p̃ᵢ)                (twice the active mismatch)
//! ```
//!
//! where `c_ik = √(vᵢ v_k) cos φ_ik`, `s_ik = √(vᵢ v_k) sin φ_ik`. Eliminating
//! θ from the Hessian (Schur complement on the θθ block) leaves exactly the
//! reduced Jacobian `J` of [`crate::analysis`], so the convexity matrix
//!
//! ```text
//! M = Σᵢ 2B̃ᵢ vᵢ eᵢeᵢᵀ − Σ_lines (B̃_ik vᵢ v_k / c_ik)(eᵢ + e_k)(eᵢ + e_k)ᵀ = 2J
//! ```
//!
//! together with `c > 0` characterises where `E` is strictly convex. The
//! flat point `γ = 0, θ = 0` always lies inside (`M` is the reduced
//! Laplacian there), so the solver starts from it.

use alloc::vec;
use alloc::vec::Vec;

use crate::homogeneous::{v_at, Method, PFSolution, Problem};
use crate::linalg::{min_eigenvalue, Cholesky, DenseMatrix};
use crate::math::{cos, exp, ln, norm_inf, sin, sqrt};
use crate::{Error, Verdict};

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyConfig {
    pub grad_tol: f64,
    pub max_newton: usize,
    /// Trial points need `M − eig_floor·I` to factor.
    pub eig_floor: f64,
    /// Trial points need every `c_ik` above this.
    pub c_floor: f64,
    pub armijo: f64,
    pub shrink: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_newton: 500,
            eig_floor: 1e-12,
            c_floor: 1e-12,
            armijo: 0.01,
            shrink: 0.5,
        }
    }
}

impl EnergyConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.grad_tol > 0.0 && self.eig_floor >= 0.0 && self.c_floor >= 0.0) {
            return Err(Error::InvalidConfig("energy tolerances must be positive"));
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5 && self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidConfig("line search parameters out of range"));
        }
        if self.max_newton == 0 {
            return Err(Error::InvalidConfig("max_newton must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyState {
    pub gamma: Vec<f64>,
    /// Angles at all buses, `θ₀ = 0`.
    pub theta: Vec<f64>,
    pub energy: f64,
    /// `(∂E/∂γ₁..ₙ, ∂E/∂θ₁..ₙ)`.
    pub grad: Vec<f64>,
    pub hess: DenseMatrix,
    pub in_domain: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityCheck {
    pub in_domain: bool,
    pub min_eigenvalue: f64,
    pub min_c: f64,
    /// `max |Mᵢₖ|`, for relative comparisons.
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyStep {
    pub energy: f64,
    /// The step met the Armijo condition (as opposed to being accepted in
    /// the roundoff regime).
    pub armijo: bool,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyStatus {
    Converged,
    /// Newton steps collapsed against the domain boundary with the gradient
    /// still above tolerance.
    BoundaryStall { grad_inf: f64 },
    MaxNewtonExceeded,
    NumericalBreakdown,
}

impl EnergyStatus {
    pub fn verdict(self) -> Verdict {
        match self {
            EnergyStatus::Converged => Verdict::Solved,
            EnergyStatus::BoundaryStall { .. } => Verdict::Infeasible,
            EnergyStatus::MaxNewtonExceeded | EnergyStatus::NumericalBreakdown => Verdict::Inconclusive,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnergyStatus::Converged => "converged",
            EnergyStatus::BoundaryStall { .. } => "boundary_stall",
            EnergyStatus::MaxNewtonExceeded => "max_newton_exceeded",
            EnergyStatus::NumericalBreakdown => "numerical_breakdown",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub solution: Option<PFSolution>,
    pub state: EnergyState,
    pub status: EnergyStatus,
    pub iterations: usize,
    /// Energy after each accepted step, starting with the initial value.
    pub trace: Vec<EnergyStep>,
}

impl EnergyReport {
    pub fn verdict(&self) -> Verdict {
        self.status.verdict()
    }
}

struct LineTerms {
    child: usize,
    parent: usize,
    b: f64,
    c: f64,
    s: f64,
}

fn line_terms<'a>(problem: &'a Problem, v: &'a [f64], theta: &'a [f64]) -> impl Iterator<Item = LineTerms> + 'a {
    let net = problem.network();
    let b_line = &problem.system().b_line;
    (1..=problem.n()).map(move |child| {
        let parent = net.parent(child).unwrap();
        let r = sqrt(v_at(v, child) * v_at(v, parent));
        let phi = theta[child] - theta[parent];
        LineTerms {
            child,
            parent,
            b: b_line[child - 1],
            c: r * cos(phi),
            s: r * sin(phi),
        }
    })
}

pub fn energy_value(problem: &Problem, v: &[f64], theta: &[f64]) -> f64 {
    let sys = problem.system();
    let mut e = 0.0;
    for l in line_terms(problem, v, theta) {
        e += l.b * (v_at(v, l.child) + v_at(v, l.parent) - 2.0 * l.c);
    }
    for i in 0..problem.n() {
        e -= 2.0 * sys.p_tilde[i] * theta[i + 1] + sys.q_tilde[i] * ln(v[i]);
    }
    e
}

/// Sum of the magnitudes of the terms of `E`, which bounds its roundoff.
fn energy_magnitude(problem: &Problem, v: &[f64], theta: &[f64]) -> f64 {
    let sys = problem.system();
    let mut m = 0.0;
    for l in line_terms(problem, v, theta) {
        m += l.b * (v_at(v, l.child) + v_at(v, l.parent) + 2.0 * l.c.abs());
    }
    for i in 0..problem.n() {
        m += (2.0 * sys.p_tilde[i] * theta[i + 1]).abs() + (sys.q_tilde[i] * ln(v[i])).abs();
    }
    m
}

pub fn energy_gradient(problem: &Problem, v: &[f64], theta: &[f64]) -> Vec<f64> {
    let n = problem.n();
    let sys = problem.system();
    let mut g = vec![0.0; 2 * n];
    for i in 0..n {
        g[i] = -sys.q_tilde[i];
        g[n + i] = -2.0 * sys.p_tilde[i];
    }
    for l in line_terms(problem, v, theta) {
        let a = l.child - 1;
        g[a] += l.b * (v[a] - l.c);
        g[n + a] += 2.0 * l.b * l.s;
        if l.parent != 0 {
            let p = l.parent - 1;
            g[p] += l.b * (v[p] - l.c);
            g[n + p] -= 2.0 * l.b * l.s;
        }
    }
    g
}

pub fn energy_hessian(problem: &Problem, v: &[f64], theta: &[f64]) -> DenseMatrix {
    let n = problem.n();
    let mut h = DenseMatrix::zeros(2 * n, 2 * n);
    for l in line_terms(problem, v, theta) {
        let a = l.child - 1;
        let (b, c, s) = (l.b, l.c, l.s);
        h[(a, a)] += b * (v[a] - c / 2.0);
        h[(n + a, n + a)] += 2.0 * b * c;
        h[(a, n + a)] += b * s;
        h[(n + a, a)] += b * s;
        if l.parent != 0 {
            let p = l.parent - 1;
            h[(p, p)] += b * (v[p] - c / 2.0);
            h[(a, p)] -= b * c / 2.0;
            h[(p, a)] -= b * c / 2.0;
            h[(n + p, n + p)] += 2.0 * b * c;
            h[(n + a, n + p)] -= 2.0 * b * c;
            h[(n + p, n + a)] -= 2.0 * b * c;
            // ∂²/∂γ_a∂θ_p, ∂²/∂γ_p∂θ_a, ∂²/∂γ_p∂θ_p
            h[(a, n + p)] -= b * s;
            h[(n + p, a)] -= b * s;
            h[(p, n + a)] += b * s;
            h[(n + a, p)] += b * s;
            h[(p, n + p)] -= b * s;
            h[(n + p, p)] -= b * s;
        }
    }
    h
}

/// `H_γγ − H_γθ H_θθ⁻¹ H_θγ`, which equals the reduced Jacobian.
pub fn reduced_hessian(hess: &DenseMatrix) -> Result<DenseMatrix, Error> {
    let n = hess.rows() / 2;
    let hgg = hess.block(0, 0, n, n);
    let hgt = hess.block(0, n, n, n);
    let htt = hess.block(n, n, n, n);
    let chol = Cholesky::factor(&htt)?;
    let mut out = hgg;
    for col in 0..n {
        let rhs: Vec<f64> = (0..n).map(|k| hess[(n + k, col)]).collect();
        let x = chol.solve(&rhs);
        let y = hgt.mul_vec(&x);
        for row in 0..n {
            out[(row, col)] -= y[row];
        }
    }
    Ok(out)
}

/// The convexity matrix `M` at `(v, θ)`, with `c_ik = √(vᵢ v_k) cos φ_ik`.
pub fn convexity_matrix(problem: &Problem, v: &[f64], theta: &[f64]) -> DenseMatrix {
    let n = problem.n();
    let sys = problem.system();
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 2.0 * sys.b_total[i] * v[i];
    }
    for l in line_terms(problem, v, theta) {
        let a = l.child - 1;
        let w = l.b * v_at(v, l.child) * v_at(v, l.parent) / l.c;
        m[(a, a)] -= w;
        if l.parent != 0 {
            let p = l.parent - 1;
            m[(p, p)] -= w;
            m[(a, p)] -= w;
            m[(p, a)] -= w;
        }
    }
    m
}

/// Whether `(v, θ)` lies in the convexity domain: every `c_ik` above the
/// floor and `M ⪰ 0` up to `−1e-12`.
pub fn check_convexity_domain(problem: &Problem, v: &[f64], theta: &[f64]) -> ConvexityCheck {
    const C_FLOOR: f64 = 1e-12;
    const EIG_FLOOR: f64 = -1e-12;
    let min_c = line_terms(problem, v, theta).map(|l| l.c).fold(f64::INFINITY, f64::min);
    if !(min_c > C_FLOOR) || v.iter().any(|&x| !(x > 0.0)) {
        return ConvexityCheck {
            in_domain: false,
            min_eigenvalue: f64::NAN,
            min_c,
            scale: f64::NAN,
        };
    }
    let m = convexity_matrix(problem, v, theta);
    let min_eigenvalue = min_eigenvalue(&m);
    ConvexityCheck {
        in_domain: min_eigenvalue >= EIG_FLOOR,
        min_eigenvalue,
        min_c,
        scale: m.max_abs(),
    }
}

fn in_guarded_domain(problem: &Problem, v: &[f64], theta: &[f64], config: &EnergyConfig) -> bool {
    if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return false;
    }
    if !line_terms(problem, v, theta).all(|l| l.c > config.c_floor) {
        return false;
    }
    let m = convexity_matrix(problem, v, theta);
    Cholesky::factor_shifted(&m, config.eig_floor).is_ok()
}

fn state_at(problem: &Problem, gamma: Vec<f64>, theta: Vec<f64>, config: &EnergyConfig) -> EnergyState {
    let v: Vec<f64> = gamma.iter().map(|&g| exp(g)).collect();
    EnergyState {
        energy: energy_value(problem, &v, &theta),
        grad: energy_gradient(problem, &v, &theta),
        hess: energy_hessian(problem, &v, &theta),
        in_domain: in_guarded_domain(problem, &v, &theta, config),
        gamma,
        theta,
    }
}

/// Damped Newton on `E` from the flat start, with backtracking that keeps
/// every iterate inside the convexity domain.
pub fn solve_energy(problem: &Problem, config: &EnergyConfig) -> Result<EnergyReport, Error> {
    config.validate()?;
    let n = problem.n();
    let mut state = state_at(problem, vec![0.0; n], vec![0.0; n + 1], config);
    debug_assert!(state.in_domain);
    let mut trace = vec![EnergyStep {
        energy: state.energy,
        armijo: true,
        alpha: 0.0,
    }];
    let finish = |state, status, iterations, trace| EnergyReport {
        solution: None,
        state,
        status,
        iterations,
        trace,
    };

    for iter in 0..config.max_newton {
        let grad_inf = norm_inf(&state.grad);
        if grad_inf <= config.grad_tol {
            let v: Vec<f64> = state.gamma.iter().map(|&g| exp(g)).collect();
            let scale = problem.system().b_total.iter().fold(1.0_f64, |m, &b| m.max(b));
            return match problem.assemble_solution(&v, Method::Energy, 1e-8 * scale) {
                Ok(solution) => {
                    log::debug!("energy: converged after {iter} Newton steps");
                    Ok(EnergyReport {
                        solution: Some(solution),
                        state,
                        status: EnergyStatus::Converged,
                        iterations: iter,
                        trace,
                    })
                }
                Err(e) => {
                    log::warn!("energy: stationary point failed verification: {e}");
                    Ok(finish(state, EnergyStatus::NumericalBreakdown, iter, trace))
                }
            };
        }
        let chol = match Cholesky::factor(&state.hess) {
            Ok(c) => c,
            Err(_) => return Ok(finish(state, EnergyStatus::NumericalBreakdown, iter, trace)),
        };
        let neg: Vec<f64> = state.grad.iter().map(|g| -g).collect();
        let dir = chol.solve(&neg);
        let slope: f64 = state.grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        // Below this decrement, energy differences are lost to roundoff and
        // steps are judged by the gradient instead.
        let v_now: Vec<f64> = state.gamma.iter().map(|&g| exp(g)).collect();
        let roundoff = -slope <= 1e3 * f64::EPSILON * energy_magnitude(problem, &v_now, &state.theta);

        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= 1.0 / (1u64 << 60) as f64 {
            let gamma: Vec<f64> = state.gamma.iter().zip(&dir[..n]).map(|(g, d)| g + alpha * d).collect();
            let theta: Vec<f64> = core::iter::once(0.0)
                .chain(state.theta[1..].iter().zip(&dir[n..]).map(|(t, d)| t + alpha * d))
                .collect();
            let v: Vec<f64> = gamma.iter().map(|&g| exp(g)).collect();
            if in_guarded_domain(problem, &v, &theta, config) {
                let e = energy_value(problem, &v, &theta);
                let armijo = e <= state.energy + config.armijo * alpha * slope;
                if armijo || (roundoff && norm_inf(&energy_gradient(problem, &v, &theta)) < grad_inf) {
                    accepted = Some((gamma, theta, armijo));
                    break;
                }
            }
            alpha *= config.shrink;
        }
        let step_len = alpha * norm_inf(&dir);
        match accepted {
            Some((gamma, theta, armijo)) if step_len > 1e-13 * (1.0 + norm_inf(&state.gamma)) => {
                state = state_at(problem, gamma, theta, config);
                trace.push(EnergyStep {
                    energy: state.energy,
                    armijo,
                    alpha,
                });
            }
            _ => {
                log::debug!("energy: stalled at the domain boundary, gradient {grad_inf:e}");
                return Ok(finish(state, EnergyStatus::BoundaryStall { grad_inf }, iter, trace));
            }
        }
    }
    Ok(finish(state, EnergyStatus::MaxNewtonExceeded, config.max_newton, trace))
}
