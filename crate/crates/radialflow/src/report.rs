//! JSON report types. Floats are written with 17 significant digits.

use radialflow_core::analysis::{ContinuationSample, StabilityCertificate};
use radialflow_core::fixed_point::{FixedPointReport, FixedPointStatus};
use radialflow_core::linalg::DenseMatrix;
use radialflow_core::relaxation::PhaseOneOutcome;
use radialflow_core::{PFSolution, Verdict};
use serde::ser::Error as _;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

pub const SCHEMA: &str = "radialflow/1";

/// A float serialized as `d.dddddddddddddddde±x`; non-finite values become `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(S::Error::custom)?;
        raw.serialize(s)
    }
}

pub fn nums(x: &[f64]) -> Vec<Num> {
    x.iter().copied().map(Num).collect()
}

pub fn matrix(m: &DenseMatrix) -> Vec<Vec<Num>> {
    (0..m.rows()).map(|i| nums(m.row(i))).collect()
}

pub fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Solved => "Solved",
        Verdict::Infeasible => "Infeasible",
        Verdict::Inconclusive => "Inconclusive",
    }
}

/// Process exit code for a verdict.
pub fn exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::Solved => 0,
        Verdict::Infeasible => 2,
        Verdict::Inconclusive => 3,
    }
}

#[derive(Debug, Serialize)]
pub struct SolutionFields {
    pub v: Vec<Num>,
    /// All buses, slack first.
    pub theta: Vec<Num>,
    /// Per line, indexed by child bus.
    pub s: Vec<Num>,
    pub c: Vec<Num>,
    pub residual_inf: Num,
}

impl From<&PFSolution> for SolutionFields {
    fn from(sol: &PFSolution) -> Self {
        Self {
            v: nums(&sol.v),
            theta: nums(&sol.theta),
            s: nums(sol.s.as_slice()),
            c: nums(&sol.c),
            residual_inf: Num(sol.residual_inf),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct MethodReport {
    pub method: &'static str,
    pub status: &'static str,
    /// Solver specific termination reason.
    pub detail: &'static str,
    pub iterations: usize,
    pub wall_time_s: Num,
    pub solution: Option<SolutionFields>,
    pub stable: Option<bool>,
}

#[derive(Debug, Serialize)]
pub struct SolveReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub instance_digest: String,
    pub buses: Vec<String>,
    pub kappa: Num,
    pub tolerance: Num,
    pub status: &'static str,
    pub methods: Vec<MethodReport>,
    /// Largest pairwise deviation when several methods solved the instance.
    pub agreement: Option<Num>,
    pub stability: Option<bool>,
}

#[derive(Debug, Serialize)]
pub struct StabilityFields {
    pub min_eig: Num,
    pub z_matrix: bool,
    pub sensitivity_positive: bool,
    pub convexity_domain: bool,
    pub convexity_min_eig: Num,
    pub stable: bool,
}

impl StabilityFields {
    pub fn new(cert: &StabilityCertificate, sensitivity_positive: bool) -> Self {
        Self {
            min_eig: Num(cert.jacobian_min_eig),
            z_matrix: cert.jacobian_is_z,
            sensitivity_positive,
            convexity_domain: cert.convexity.in_domain,
            convexity_min_eig: Num(cert.convexity.min_eigenvalue),
            stable: cert.stable,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct PhaseOneFields {
    pub outcome: &'static str,
    /// Best `max h` reached.
    pub tau: Num,
    /// Lower bound on the optimal `τ`.
    pub tau_lower: Option<Num>,
}

impl From<&PhaseOneOutcome> for PhaseOneFields {
    fn from(p: &PhaseOneOutcome) -> Self {
        match p {
            PhaseOneOutcome::Feasible { tau, .. } => Self {
                outcome: "feasible",
                tau: Num(*tau),
                tau_lower: None,
            },
            PhaseOneOutcome::Infeasible { tau, tau_lower, .. } => Self {
                outcome: "infeasible",
                tau: Num(*tau),
                tau_lower: Some(Num(*tau_lower)),
            },
            PhaseOneOutcome::Inconclusive { tau, tau_lower, .. } => Self {
                outcome: "inconclusive",
                tau: Num(*tau),
                tau_lower: Some(Num(*tau_lower)),
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FixedPointFields {
    pub status: &'static str,
    pub iterations: usize,
    /// Buses (file labels) involved in the failure: child buses of the lines
    /// that left the domain, or buses with a nonpositive voltage.
    pub buses: Vec<String>,
    pub last_iterate: Option<Vec<Num>>,
}

impl FixedPointFields {
    pub fn new(rep: &FixedPointReport, labels: &[String]) -> Self {
        let idx: Vec<usize> = match &rep.trace.status {
            FixedPointStatus::DomainViolation { lines } => lines.clone(),
            FixedPointStatus::NonpositiveVoltage { bus } => vec![*bus],
            FixedPointStatus::VmaxNonpositive { buses } => buses.clone(),
            _ => Vec::new(),
        };
        Self {
            status: rep.trace.status.name(),
            iterations: rep.trace.iter_count,
            buses: idx.iter().map(|&i| labels.get(i).cloned().unwrap_or_else(|| i.to_string())).collect(),
            last_iterate: rep.last.as_ref().map(|v| nums(v)),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct InfeasibilityFields {
    pub phase_one: PhaseOneFields,
    pub fixed_point: FixedPointFields,
}

#[derive(Debug, Serialize)]
pub struct CertifyReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub instance_digest: String,
    pub buses: Vec<String>,
    pub status: &'static str,
    pub v: Option<Vec<Num>>,
    pub certificate: Option<StabilityFields>,
    pub infeasibility: Option<InfeasibilityFields>,
}

#[derive(Debug, Serialize)]
pub struct EnumeratedSolution {
    pub v: Vec<Num>,
    pub stable: bool,
    /// Dominates every other listed solution componentwise.
    pub dominant: bool,
}

#[derive(Debug, Serialize)]
pub struct EnumerateReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub instance_digest: String,
    pub buses: Vec<String>,
    pub density: usize,
    pub complete_claim: bool,
    pub solutions: Vec<EnumeratedSolution>,
    /// `dominance[i][j]`: solution `i` is componentwise at least solution `j`.
    pub dominance: Vec<Vec<bool>>,
}

#[derive(Debug, Serialize)]
pub struct SensitivityReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub instance_digest: String,
    pub buses: Vec<String>,
    pub status: &'static str,
    pub v: Option<Vec<Num>>,
    /// `∂v/∂q̃`, rows by voltage, columns by injection.
    pub dv_dq: Option<Vec<Vec<Num>>>,
    pub entrywise_positive: Option<bool>,
}

#[derive(Debug, Serialize)]
pub struct ScanSummary {
    pub schema: &'static str,
    pub command: &'static str,
    pub instance_digest: String,
    pub lambda_lower: Num,
    /// `null` when no infeasible sample was found.
    pub lambda_upper: Option<Num>,
    pub bracket_width: Option<Num>,
    pub converged: bool,
    pub min_v_nonincreasing: bool,
    pub samples: usize,
}

/// One row of the scan CSV.
#[derive(Debug, Serialize)]
pub struct ScanRow {
    pub lambda: String,
    pub feasible: bool,
    pub status: &'static str,
    pub min_v: String,
    pub residual: String,
    pub iterations: usize,
}

fn sig17(x: Option<f64>) -> String {
    x.filter(|v| v.is_finite()).map(|v| format!("{v:.16e}")).unwrap_or_default()
}

impl From<&ContinuationSample> for ScanRow {
    fn from(s: &ContinuationSample) -> Self {
        Self {
            lambda: sig17(Some(s.lambda)),
            feasible: s.verdict == Verdict::Solved,
            status: s.status,
            min_v: sig17(s.min_v),
            residual: sig17(s.residual),
            iterations: s.iterations,
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_with_17_digits() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 0.787298334620742, 1e22] {
            let s = serde_json::to_string(&Num(x)).unwrap();
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
            let back: f64 = serde_json::from_str(&s).unwrap();
            assert_eq!(back, x);
        }
        assert_eq!(serde_json::to_string(&Num(f64::NAN)).unwrap(), "null");
        assert_eq!(serde_json::to_string(&nums(&[1.0, 0.5])).unwrap(), "[1.0000000000000000e0,5.0000000000000000e-1]");
    }
}
