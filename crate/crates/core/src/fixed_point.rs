//! Monotone fixed-point iteration `v ← g(v)` from the upper bound `v_max`.
//!
//! `g` is monotone and `g(v_max) ≤ v_max`, so the iterates decrease
//! componentwise. If a solution exists they converge to the largest one;
//! otherwise the sequence eventually leaves the domain of `g` or the
//! positive orthant.

use alloc::vec::Vec;

use crate::homogeneous::{Method, PFSolution, Problem, VoltageProfile};
use crate::math::norm_inf;
use crate::{DomainViolation, Error, Verdict};

/// Slack allowed when comparing `g(v)` against `v`.
pub const SUBSOLUTION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointConfig {
    /// Stop once `‖v⁽ⁱ⁺¹⁾ − v⁽ⁱ⁾‖∞` drops below this.
    pub tol: f64,
    /// Required `‖g(v) − v‖∞` at the stopping point.
    pub residual_tol: f64,
    pub max_iter: usize,
    /// Keep every iterate in the trace.
    pub record_trace: bool,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            residual_tol: 1e-10,
            max_iter: 10_000,
            record_trace: false,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive"));
        }
        if !(self.residual_tol >= self.tol) {
            return Err(Error::InvalidConfig("residual_tol must be at least tol"));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FixedPointStatus {
    Converged,
    /// Some `vᵢ v_k − s_ik²` went negative.
    DomainViolation { lines: Vec<usize> },
    /// Some `vᵢ ≤ 0` (bus index).
    NonpositiveVoltage { bus: usize },
    VmaxNonpositive { buses: Vec<usize> },
    /// The step vanished but `g(v) ≠ v`.
    NotAFixedPoint { residual: f64 },
    MaxIterExceeded,
}

impl FixedPointStatus {
    pub fn verdict(&self) -> Verdict {
        match self {
            FixedPointStatus::Converged => Verdict::Solved,
            FixedPointStatus::MaxIterExceeded => Verdict::Inconclusive,
            _ => Verdict::Infeasible,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FixedPointStatus::Converged => "converged",
            FixedPointStatus::DomainViolation { .. } => "domain_violation",
            FixedPointStatus::NonpositiveVoltage { .. } => "nonpositive_voltage",
            FixedPointStatus::VmaxNonpositive { .. } => "vmax_nonpositive",
            FixedPointStatus::NotAFixedPoint { .. } => "not_a_fixed_point",
            FixedPointStatus::MaxIterExceeded => "max_iter_exceeded",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointTrace {
    /// `v⁽⁰⁾ = v_max, v⁽¹⁾, …` when recording is on.
    pub iterates: Option<Vec<Vec<f64>>>,
    pub iter_count: usize,
    pub final_step: f64,
    pub status: FixedPointStatus,
}

impl FixedPointTrace {
    /// True when the recorded iterates never increase by more than `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        match &self.iterates {
            None => true,
            Some(it) => it.windows(2).all(|w| {
                w[1].iter().zip(&w[0]).all(|(next, prev)| *next <= prev + slack)
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointReport {
    pub solution: Option<PFSolution>,
    /// Last iterate, whether or not it is a solution.
    pub last: Option<VoltageProfile>,
    pub trace: FixedPointTrace,
}

impl FixedPointReport {
    pub fn verdict(&self) -> Verdict {
        self.trace.status.verdict()
    }
}

pub fn solve_fixed_point(problem: &Problem, config: &FixedPointConfig) -> Result<FixedPointReport, Error> {
    config.validate()?;
    let mut iterates = config.record_trace.then(Vec::new);
    let finish = |status, last: Option<Vec<f64>>, iterates, iter_count, final_step| FixedPointReport {
        solution: None,
        last: last.map(VoltageProfile::new),
        trace: FixedPointTrace {
            iterates,
            iter_count,
            final_step,
            status,
        },
    };

    let mut v = match problem.vmax() {
        Ok(v) => v.into_inner(),
        Err(Error::VmaxNonpositive { buses, vmax }) => {
            log::debug!("fixed point: v_max nonpositive at {buses:?}");
            return Ok(finish(
                FixedPointStatus::VmaxNonpositive { buses },
                Some(vmax),
                iterates,
                0,
                f64::NAN,
            ));
        }
        Err(e) => return Err(e),
    };
    if let Some(it) = iterates.as_mut() {
        it.push(v.clone());
    }

    let mut step = f64::INFINITY;
    for k in 1..=config.max_iter {
        let next = match problem.eval_g(&v) {
            Ok(g) => g,
            Err(DomainViolation { lines }) => {
                log::debug!("fixed point: domain violation on {lines:?} at iteration {k}");
                return Ok(finish(
                    FixedPointStatus::DomainViolation { lines },
                    Some(v),
                    iterates,
                    k - 1,
                    step,
                ));
            }
        };
        step = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if let Some(it) = iterates.as_mut() {
            it.push(v.clone());
        }
        if let Some(i) = v.iter().position(|&x| !(x > 0.0)) {
            return Ok(finish(
                FixedPointStatus::NonpositiveVoltage { bus: i + 1 },
                Some(v),
                iterates,
                k,
                step,
            ));
        }
        if step < config.tol {
            let gap = match problem.eval_g(&v) {
                Ok(g) => norm_inf(&g.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>()),
                Err(DomainViolation { lines }) => {
                    return Ok(finish(
                        FixedPointStatus::DomainViolation { lines },
                        Some(v),
                        iterates,
                        k,
                        step,
                    ))
                }
            };
            if gap > config.residual_tol {
                return Ok(finish(
                    FixedPointStatus::NotAFixedPoint { residual: gap },
                    Some(v),
                    iterates,
                    k,
                    step,
                ));
            }
            let scale = problem.system().b_total.iter().fold(1.0_f64, |m, &b| m.max(b));
            let solution = problem.assemble_solution(&v, Method::FixedPoint, config.residual_tol * scale)?;
            log::debug!("fixed point: converged after {k} iterations");
            return Ok(FixedPointReport {
                solution: Some(solution),
                last: Some(VoltageProfile::new(v)),
                trace: FixedPointTrace {
                    iterates,
                    iter_count: k,
                    final_step: step,
                    status: FixedPointStatus::Converged,
                },
            });
        }
    }
    log::debug!("fixed point: no convergence in {} iterations (last step {step:e})", config.max_iter);
    Ok(finish(
        FixedPointStatus::MaxIterExceeded,
        Some(v),
        iterates,
        config.max_iter,
        step,
    ))
}

/// Whether `g(v) ≥ v` componentwise, i.e. `v` is feasible for the relaxation.
pub fn check_subsolution(problem: &Problem, v: &[f64]) -> Result<bool, DomainViolation> {
    let g = problem.eval_g(v)?;
    Ok(g.iter().zip(v).all(|(gi, vi)| *gi >= vi - SUBSOLUTION_SLACK))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homogeneous::test_support::{path, two_bus};

    #[test]
    fn two_bus_converges_to_high_root() {
        let p = two_bus(1.0, 0.0, -0.1);
        let r = solve_fixed_point(&p, &FixedPointConfig::default()).unwrap();
        assert_eq!(r.verdict(), Verdict::Solved);
        let u = (1.0 + libm::sqrt(0.6)) / 2.0;
        assert!((r.solution.unwrap().v[0] - u * u).abs() < 1e-10);
    }

    #[test]
    fn flat_converges_immediately() {
        let p = path(&[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]);
        let r = solve_fixed_point(&p, &FixedPointConfig::default()).unwrap();
        assert_eq!(r.trace.status, FixedPointStatus::Converged);
        assert_eq!(r.trace.iter_count, 1);
        assert_eq!(r.solution.unwrap().v.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn two_bus_past_boundary_is_infeasible() {
        let p = two_bus(1.0, 0.0, -0.3);
        let r = solve_fixed_point(&p, &FixedPointConfig::default()).unwrap();
        assert_eq!(r.verdict(), Verdict::Infeasible, "{:?}", r.trace.status);
        let p = two_bus(1.0, 0.0, -0.6);
        let r = solve_fixed_point(&p, &FixedPointConfig::default()).unwrap();
        assert!(matches!(r.trace.status, FixedPointStatus::VmaxNonpositive { .. }));
    }

    #[test]
    fn trace_is_monotone() {
        let p = path(&[1.0, 2.0, 0.7], &[0.05, -0.1, 0.02], &[-0.05, -0.02, -0.04]);
        let cfg = FixedPointConfig {
            record_trace: true,
            ..Default::default()
        };
        let r = solve_fixed_point(&p, &cfg).unwrap();
        assert_eq!(r.verdict(), Verdict::Solved);
        assert!(r.trace.is_monotone(1e-14));
        let it = r.trace.iterates.as_ref().unwrap();
        assert_eq!(it.len(), r.trace.iter_count + 1);
    }

    #[test]
    fn max_iter_is_inconclusive() {
        let p = two_bus(1.0, 0.0, -0.2499);
        let cfg = FixedPointConfig {
            max_iter: 3,
            ..Default::default()
        };
        let r = solve_fixed_point(&p, &cfg).unwrap();
        assert_eq!(r.trace.status, FixedPointStatus::MaxIterExceeded);
        assert_eq!(r.verdict(), Verdict::Inconclusive);
        assert!(r.last.is_some());
    }

    #[test]
    fn subsolution_examples() {
        let p = two_bus(1.0, 0.0, -0.1);
        assert!(check_subsolution(&p, &[0.5]).unwrap());
        assert!(!check_subsolution(&p, &[0.9]).unwrap());
        let sol = solve_fixed_point(&p, &FixedPointConfig::default()).unwrap().solution.unwrap();
        assert!(check_subsolution(&p, &sol.v).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let p = two_bus(1.0, 0.0, -0.1);
        let cfg = FixedPointConfig {
            residual_tol: 1e-14,
            ..Default::default()
        };
        assert!(solve_fixed_point(&p, &cfg).is_err());
    }
}
