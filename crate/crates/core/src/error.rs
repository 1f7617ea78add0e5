use alloc::vec::Vec;

/// Structural or data problems found while building a [`crate::RadialNetwork`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("network has no buses")]
    Empty,
    #[error("line {line} references bus {bus}, but only {num_buses} buses exist")]
    BusOutOfRange {
        line: usize,
        bus: usize,
        num_buses: usize,
    },
    #[error("line {line} between buses {from} and {to} duplicates an earlier line")]
    DuplicateLine { line: usize, from: usize, to: usize },
    #[error("line set contains a cycle")]
    Cycle,
    #[error("network is disconnected: {unreached} bus(es) unreachable from the slack bus")]
    Disconnected { unreached: usize },
    #[error("bus {bus} has more than one parent line")]
    MultipleParents { bus: usize },
    #[error("line {line} ({from} -> {to}) is not oriented away from the slack bus")]
    WrongOrientation { line: usize, from: usize, to: usize },
    #[error("line {line} has nonpositive susceptance {b}")]
    NonpositiveSusceptance { line: usize, b: f64 },
    #[error("line {line} has negative conductance {g}")]
    NegativeConductance { line: usize, g: f64 },
    #[error("line {line} has G/B ratio {ratio}, deviating from the common ratio {kappa} by more than {tolerance} (relative)")]
    NonuniformRatio {
        line: usize,
        ratio: f64,
        kappa: f64,
        tolerance: f64,
    },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("expected {expected} injections per vector, got p: {p}, q: {q}")]
    InjectionLength { expected: usize, p: usize, q: usize },
    #[error("slack voltage magnitude {0} is not supported; only 1.0 p.u.")]
    NonUnitSlackVoltage(f64),
}

/// Lines whose squared-voltage product falls below the squared flow, i.e.
/// `vᵢ v_k < s_ik²`, so `c_ik = √(vᵢ v_k − s_ik²)` is undefined.
///
/// Lines are identified by their child bus.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("domain violation on {} line(s), first at child bus {}", .lines.len(), .lines.first().copied().unwrap_or(0))]
pub struct DomainViolation {
    pub lines: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Domain(#[from] DomainViolation),
    #[error("v_max is nonpositive at {} bus(es); no solution can exist", .buses.len())]
    VmaxNonpositive { buses: Vec<usize>, vmax: Vec<f64> },
    #[error("residual {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("matrix is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("solutions belong to different instances")]
    InstanceMismatch,
    #[error("dimension {n} exceeds the limit {max}")]
    DimensionTooLarge { n: usize, max: usize },
    #[error("vector length {got} does not match {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}
