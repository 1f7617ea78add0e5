//! The homogeneous rotation and the reduced power flow equations.
//!
//! Substituting `G = κB` into the active/reactive balance and forming
//! `p − κq` and `q + κp` gives
//!
//! ```text
//! p̃ᵢ = pᵢ − κqᵢ = Σ_k B̃_ik s_ik
//! q̃ᵢ = qᵢ + κpᵢ = B̃ᵢ vᵢ − Σ_k B̃_ik c_ik,      B̃_ik = (1 + κ²) B_ik
//! ```
//!
//! (the cross terms `κ B v` and `κ B c` cancel; the `s` and `c` terms pick up
//! `1 + κ²`). The first system is linear on the tree and fixes the flows
//! `s(p̃)`; eliminating `c_ik = √(vᵢ v_k − s_ik²)` leaves `n` equations in `v`,
//! written as the fixed point `v = g(v)` with
//! `gᵢ(v) = q̃ᵢ/B̃ᵢ + Σ_k (B̃_ik/B̃ᵢ) √(vᵢ v_k − s_ik²)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{asin, norm_inf, sqrt};
use crate::network::{Injections, RadialNetwork, ReducedLaplacian};
use crate::{DomainViolation, Error};

/// Slack below zero tolerated in `vᵢ v_k − s_ik²` before it counts as a violation.
pub const DOMAIN_SLACK: f64 = 1e-14;
/// Slack beyond ±1 tolerated in the arcsin argument of angle recovery.
pub const ARCSIN_SLACK: f64 = 1e-12;

/// Injections and susceptances after the κ-rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedSystem {
    pub kappa: f64,
    /// `p̃ᵢ = pᵢ − κqᵢ`, index `i - 1` for bus `i`.
    pub p_tilde: Vec<f64>,
    /// `q̃ᵢ = qᵢ + κpᵢ`.
    pub q_tilde: Vec<f64>,
    /// `(1 + κ²) B` per line, in child order.
    pub b_line: Vec<f64>,
    /// `B̃ᵢ = Σ_k B̃_ik` per non-slack bus.
    pub b_total: Vec<f64>,
}

pub fn transform(network: &RadialNetwork, injections: &Injections) -> TransformedSystem {
    let kappa = network.kappa();
    let p_tilde = injections
        .p
        .iter()
        .zip(&injections.q)
        .map(|(p, q)| p - kappa * q)
        .collect();
    let q_tilde = injections
        .q
        .iter()
        .zip(&injections.p)
        .map(|(q, p)| q + kappa * p)
        .collect();
    let scale = 1.0 + kappa * kappa;
    let b_line: Vec<f64> = network
        .lines()
        .iter()
        .map(|l| scale * l.susceptance)
        .collect();
    let b_total = bus_totals(network, &b_line);
    TransformedSystem {
        kappa,
        p_tilde,
        q_tilde,
        b_line,
        b_total,
    }
}

fn bus_totals(network: &RadialNetwork, b_line: &[f64]) -> Vec<f64> {
    let n = network.n();
    let mut total = vec![0.0; n];
    for bus in 1..=n {
        let b = b_line[bus - 1];
        total[bus - 1] += b;
        let p = network.parent(bus).unwrap();
        if p != 0 {
            total[p - 1] += b;
        }
    }
    total
}

/// Flow variables `s_{i,π(i)} = √(vᵢ v_π) sin(θᵢ − θ_π)` per line, oriented
/// from child to parent; `s_ki = −s_ik`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFlows {
    s: Vec<f64>,
}

impl LineFlows {
    pub fn new(s: Vec<f64>) -> Self {
        Self { s }
    }

    /// `s_{i,π(i)}` for non-slack bus `child`.
    pub fn into_parent(&self, child: usize) -> f64 {
        self.s[child - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.s
    }

    /// Signed `s_ik` for adjacent buses `i`, `k`.
    pub fn between(&self, network: &RadialNetwork, i: usize, k: usize) -> f64 {
        if i != 0 && network.parent(i) == Some(k) {
            self.s[i - 1]
        } else if k != 0 && network.parent(k) == Some(i) {
            -self.s[k - 1]
        } else {
            panic!("buses {i} and {k} are not adjacent")
        }
    }
}

/// Solves `Σ_k B̃_ik s_ik = p̃ᵢ` with one post-order pass:
/// `B̃_{i,π(i)} s_{i,π(i)}` equals the sum of `p̃` over the subtree of `i`.
pub fn solve_line_flows(network: &RadialNetwork, system: &TransformedSystem) -> LineFlows {
    let n = network.n();
    let mut subtree = vec![0.0; n + 1];
    subtree[1..].copy_from_slice(&system.p_tilde);
    for &bus in network.postorder() {
        if bus == 0 {
            continue;
        }
        let p = network.parent(bus).unwrap();
        if p != 0 {
            subtree[p] += subtree[bus];
        }
    }
    let s = (1..=n).map(|bus| subtree[bus] / system.b_line[bus - 1]).collect();
    LineFlows { s }
}

/// Squared voltage magnitudes at buses `1..=n`; bus 0 is implicitly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageProfile(Vec<f64>);

impl VoltageProfile {
    pub fn new(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn flat(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    /// Value at `bus`, with `v₀ = 1`.
    #[inline]
    pub fn at(&self, bus: usize) -> f64 {
        v_at(&self.0, bus)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl core::ops::Deref for VoltageProfile {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub(crate) fn v_at(v: &[f64], bus: usize) -> f64 {
    if bus == 0 {
        1.0
    } else {
        v[bus - 1]
    }
}

/// `v_max = 1 + 2 L_red⁻¹ q̃` with the `B̃`-weighted reduced Laplacian.
///
/// Every `v` with `g(v) ≥ v` satisfies `v ≤ v_max`, so a nonpositive entry
/// rules out any solution with positive voltages.
pub fn compute_vmax(
    laplacian: &ReducedLaplacian,
    system: &TransformedSystem,
) -> Result<VoltageProfile, Error> {
    let vmax = vmax_unchecked(laplacian, system)?;
    let bad: Vec<usize> = vmax
        .iter()
        .enumerate()
        .filter(|(_, &x)| !(x > 0.0))
        .map(|(i, _)| i + 1)
        .collect();
    if bad.is_empty() {
        Ok(VoltageProfile(vmax))
    } else {
        Err(Error::VmaxNonpositive { buses: bad, vmax })
    }
}

pub(crate) fn vmax_unchecked(
    laplacian: &ReducedLaplacian,
    system: &TransformedSystem,
) -> Result<Vec<f64>, Error> {
    let x = laplacian.solve(&system.q_tilde)?;
    Ok(x.into_iter().map(|xi| 1.0 + 2.0 * xi).collect())
}

/// Angles with `θ₀ = 0` and `θᵢ = θ_π + arcsin(s_{i,π}/√(vᵢ v_π))`.
pub fn recover_angles(
    network: &RadialNetwork,
    flows: &LineFlows,
    v: &[f64],
) -> Result<Vec<f64>, DomainViolation> {
    let mut theta = vec![0.0; network.num_buses()];
    let mut bad = Vec::new();
    for bus in network.preorder() {
        if bus == 0 {
            continue;
        }
        let p = network.parent(bus).unwrap();
        let denom = sqrt(v_at(v, bus) * v_at(v, p));
        let mut arg = flows.into_parent(bus) / denom;
        if !arg.is_finite() || arg.abs() > 1.0 + ARCSIN_SLACK {
            bad.push(bus);
            continue;
        }
        arg = arg.clamp(-1.0, 1.0);
        theta[bus] = theta[p] + asin(arg);
    }
    if bad.is_empty() {
        Ok(theta)
    } else {
        Err(DomainViolation { lines: bad })
    }
}

/// Which solver produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    FixedPoint,
    Relaxation,
    Energy,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::FixedPoint => "fixed_point",
            Method::Relaxation => "relaxation",
            Method::Energy => "energy",
        }
    }
}

/// A verified power flow solution.
#[derive(Debug, Clone, PartialEq)]
pub struct PFSolution {
    pub v: VoltageProfile,
    /// Angles at all `n + 1` buses in radians, `θ₀ = 0`.
    pub theta: Vec<f64>,
    pub s: LineFlows,
    /// `c_ik = √(vᵢ v_k − s_ik²)` per line in child order.
    pub c: Vec<f64>,
    /// `‖B̃ᵢ vᵢ − Σ B̃_ik c_ik − q̃ᵢ‖∞`.
    pub residual_inf: f64,
    pub method: Method,
    pub instance_id: u64,
}

/// A network with fixed injections plus everything derived from them.
#[derive(Debug, Clone)]
pub struct Problem {
    network: RadialNetwork,
    injections: Injections,
    system: TransformedSystem,
    flows: LineFlows,
    laplacian: ReducedLaplacian,
    instance_id: u64,
}

impl Problem {
    pub fn new(network: RadialNetwork, injections: Injections) -> Result<Self, Error> {
        injections.check(network.n())?;
        let system = transform(&network, &injections);
        Ok(Self::assemble_parts(network, injections, system))
    }

    /// Builds a problem directly from rotated quantities, recovering the
    /// original injections by inverting the rotation.
    pub fn from_transformed(network: RadialNetwork, system: TransformedSystem) -> Result<Self, Error> {
        let n = network.n();
        if system.p_tilde.len() != n || system.q_tilde.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: system.p_tilde.len().min(system.q_tilde.len()),
            });
        }
        let k = network.kappa();
        let d = 1.0 + k * k;
        let p = system
            .p_tilde
            .iter()
            .zip(&system.q_tilde)
            .map(|(pt, qt)| (pt + k * qt) / d)
            .collect();
        let q = system
            .q_tilde
            .iter()
            .zip(&system.p_tilde)
            .map(|(qt, pt)| (qt - k * pt) / d)
            .collect();
        let injections = Injections::new(p, q);
        injections.check(n)?;
        Ok(Self::assemble_parts(network, injections, system))
    }

    fn assemble_parts(network: RadialNetwork, injections: Injections, system: TransformedSystem) -> Self {
        let flows = solve_line_flows(&network, &system);
        let laplacian = ReducedLaplacian::from_line_weights(&network, &system.b_line);
        let instance_id = fingerprint(&network, &system);
        Self {
            network,
            injections,
            system,
            flows,
            laplacian,
            instance_id,
        }
    }

    /// Same network, new injections.
    pub fn with_injections(&self, injections: Injections) -> Result<Self, Error> {
        Self::new(self.network.clone(), injections)
    }

    /// Same network with every injection multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        self.with_injections(self.injections.scaled(lambda))
            .expect("scaling preserves lengths")
    }

    pub fn network(&self) -> &RadialNetwork {
        &self.network
    }

    pub fn injections(&self) -> &Injections {
        &self.injections
    }

    pub fn system(&self) -> &TransformedSystem {
        &self.system
    }

    pub fn flows(&self) -> &LineFlows {
        &self.flows
    }

    pub fn laplacian(&self) -> &ReducedLaplacian {
        &self.laplacian
    }

    pub fn instance_id(&self) -> u64 {
        self.instance_id
    }

    /// Number of non-slack buses.
    pub fn n(&self) -> usize {
        self.network.n()
    }

    pub fn vmax(&self) -> Result<VoltageProfile, Error> {
        compute_vmax(&self.laplacian, &self.system)
    }

    pub(crate) fn vmax_unchecked(&self) -> Vec<f64> {
        vmax_unchecked(&self.laplacian, &self.system).expect("validated tree is nonsingular")
    }

    /// `vᵢ v_k − s_ik²` per line (child order).
    pub fn line_gaps(&self, v: &[f64]) -> Vec<f64> {
        (1..=self.n())
            .map(|bus| {
                let p = self.network.parent(bus).unwrap();
                let s = self.flows.into_parent(bus);
                v_at(v, bus) * v_at(v, p) - s * s
            })
            .collect()
    }

    /// `c_ik = √(vᵢ v_k − s_ik²)` per line, failing where the radicand is
    /// below `−DOMAIN_SLACK`.
    pub fn line_c(&self, v: &[f64]) -> Result<Vec<f64>, DomainViolation> {
        assert_eq!(v.len(), self.n());
        let gaps = self.line_gaps(v);
        let bad: Vec<usize> = gaps
            .iter()
            .enumerate()
            .filter(|(_, &d)| !(d >= -DOMAIN_SLACK))
            .map(|(i, _)| i + 1)
            .collect();
        if !bad.is_empty() {
            return Err(DomainViolation { lines: bad });
        }
        Ok(gaps.into_iter().map(|d| sqrt(d.max(0.0))).collect())
    }

    /// `B̃ᵢ vᵢ − Σ_k B̃_ik c_ik`: the rotated reactive injection implied by `v`.
    pub fn reactive_injection(&self, v: &[f64]) -> Result<Vec<f64>, DomainViolation> {
        let c = self.line_c(v)?;
        Ok(self.reactive_with_c(v, &c))
    }

    pub(crate) fn reactive_with_c(&self, v: &[f64], c: &[f64]) -> Vec<f64> {
        let n = self.n();
        let sys = &self.system;
        let mut out: Vec<f64> = (0..n).map(|i| sys.b_total[i] * v[i]).collect();
        for bus in 1..=n {
            let flow = sys.b_line[bus - 1] * c[bus - 1];
            out[bus - 1] -= flow;
            let p = self.network.parent(bus).unwrap();
            if p != 0 {
                out[p - 1] -= flow;
            }
        }
        out
    }

    /// The fixed-point map `g`.
    pub fn eval_g(&self, v: &[f64]) -> Result<Vec<f64>, DomainViolation> {
        let c = self.line_c(v)?;
        let n = self.n();
        let sys = &self.system;
        let mut acc = sys.q_tilde.clone();
        for bus in 1..=n {
            let flow = sys.b_line[bus - 1] * c[bus - 1];
            acc[bus - 1] += flow;
            let p = self.network.parent(bus).unwrap();
            if p != 0 {
                acc[p - 1] += flow;
            }
        }
        Ok(acc.iter().zip(&sys.b_total).map(|(a, b)| a / b).collect())
    }

    /// Reduced equation residuals `rᵢ = B̃ᵢ vᵢ − Σ_k B̃_ik c_ik − q̃ᵢ`, which
    /// equal `B̃ᵢ (vᵢ − gᵢ(v))`.
    pub fn residuals(&self, v: &[f64]) -> Result<Vec<f64>, DomainViolation> {
        let q = self.reactive_injection(v)?;
        Ok(q.iter().zip(&self.system.q_tilde).map(|(a, b)| a - b).collect())
    }

    pub fn residual_inf(&self, v: &[f64]) -> Result<f64, DomainViolation> {
        Ok(norm_inf(&self.residuals(v)?))
    }

    pub fn recover_angles(&self, v: &[f64]) -> Result<Vec<f64>, DomainViolation> {
        recover_angles(&self.network, &self.flows, v)
    }

    /// Packages `v` as a [`PFSolution`], rejecting it when the residual
    /// exceeds `tolerance`.
    pub fn assemble_solution(&self, v: &[f64], method: Method, tolerance: f64) -> Result<PFSolution, Error> {
        if v.len() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                got: v.len(),
            });
        }
        let c = self.line_c(v)?;
        let residual_inf = norm_inf(
            &self
                .reactive_with_c(v, &c)
                .iter()
                .zip(&self.system.q_tilde)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        if !(residual_inf <= tolerance) || v.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::ResidualTooLarge {
                residual: residual_inf,
                tolerance,
            });
        }
        let theta = self.recover_angles(v)?;
        Ok(PFSolution {
            v: VoltageProfile(v.to_vec()),
            theta,
            s: self.flows.clone(),
            c,
            residual_inf,
            method,
            instance_id: self.instance_id,
        })
    }
}

// FNV-1a over the data that defines the reduced equations.
fn fingerprint(network: &RadialNetwork, system: &TransformedSystem) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut eat = |x: u64| {
        for byte in x.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(network.num_buses() as u64);
    for bus in 1..network.num_buses() {
        eat(network.parent(bus).unwrap() as u64);
    }
    for x in system
        .b_line
        .iter()
        .chain(&system.p_tilde)
        .chain(&system.q_tilde)
    {
        eat(x.to_bits());
    }
    h
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::network::Line;

    /// Lossless two-bus instance with the given `B̃`, flow `s` and `q̃`.
    pub fn two_bus(b: f64, s: f64, q: f64) -> Problem {
        let net = RadialNetwork::new(2, alloc::vec![Line::lossless(0, 1, b)]).unwrap();
        Problem::new(net, Injections::new(alloc::vec![s * b], alloc::vec![q])).unwrap()
    }

    pub fn path(weights: &[f64], p: &[f64], q: &[f64]) -> Problem {
        let lines = weights
            .iter()
            .enumerate()
            .map(|(i, &b)| Line::lossless(i, i + 1, b))
            .collect();
        let net = RadialNetwork::new(weights.len() + 1, lines).unwrap();
        Problem::new(net, Injections::new(p.to_vec(), q.to_vec())).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::network::Line;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rotation_example() {
        let net = RadialNetwork::new(2, alloc::vec![Line::new(0, 1, 0.5, 1.0)]).unwrap();
        let ts = transform(&net, &Injections::new(alloc::vec![0.1], alloc::vec![-0.2]));
        assert!(close(ts.p_tilde[0], 0.2, 1e-15));
        assert!(close(ts.q_tilde[0], -0.15, 1e-15));
        assert!(close(ts.b_line[0], 1.25, 1e-15));
    }

    #[test]
    fn rotation_scaling_rederived_from_balance_equations() {
        // Evaluate the original balance at an arbitrary (v, θ) and check the
        // rotated identities hold with B̃ = (1 + κ²)B.
        let (b, kappa) = (1.7, 0.35);
        let g = kappa * b;
        let (v1, th1) = (0.93_f64, -0.12_f64);
        let c = sqrt(v1) * crate::math::cos(th1);
        let s = sqrt(v1) * crate::math::sin(th1);
        let p = g * v1 + (b * s - g * c);
        let q = b * v1 + (-g * s - b * c);
        let net = RadialNetwork::new(2, alloc::vec![Line::new(0, 1, g, b)]).unwrap();
        let ts = transform(&net, &Injections::new(alloc::vec![p], alloc::vec![q]));
        assert!(close(ts.p_tilde[0], ts.b_line[0] * s, 1e-14));
        assert!(close(ts.q_tilde[0], ts.b_total[0] * v1 - ts.b_line[0] * c, 1e-14));
    }

    #[test]
    fn zero_kappa_is_identity() {
        let p = path(&[1.3, 0.4], &[0.1, -0.2], &[0.3, -0.4]);
        let ts = p.system();
        assert_eq!(ts.p_tilde, alloc::vec![0.1, -0.2]);
        assert_eq!(ts.q_tilde, alloc::vec![0.3, -0.4]);
        assert_eq!(ts.b_line, alloc::vec![1.3, 0.4]);
        assert_eq!(ts.b_total, alloc::vec![1.3 + 0.4, 0.4]);
    }

    #[test]
    fn line_flow_examples() {
        let p = two_bus(1.0, 0.2, 0.0);
        assert!(close(p.flows().into_parent(1), 0.2, 1e-16));
        let p = path(&[1.0, 1.0], &[0.1, 0.3], &[0.0, 0.0]);
        assert!(close(p.flows().into_parent(2), 0.3, 1e-16));
        assert!(close(p.flows().into_parent(1), 0.4, 1e-16));
        let p = path(&[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]);
        assert!(p.flows().as_slice().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn flow_conservation_at_every_bus() {
        let lines = alloc::vec![
            Line::new(0, 1, 0.2, 1.0),
            Line::new(1, 2, 0.4, 2.0),
            Line::new(1, 3, 0.1, 0.5),
            Line::new(3, 4, 0.6, 3.0),
        ];
        let net = RadialNetwork::new(5, lines).unwrap();
        let prob = Problem::new(
            net,
            Injections::new(alloc::vec![0.1, -0.3, 0.2, -0.5], alloc::vec![-0.1, 0.05, -0.2, 0.1]),
        )
        .unwrap();
        let (net, ts, fl) = (prob.network(), prob.system(), prob.flows());
        for i in 1..5 {
            let lhs: f64 = net
                .neighbors(i)
                .map(|k| {
                    let line_b = if net.parent(i) == Some(k) { ts.b_line[i - 1] } else { ts.b_line[k - 1] };
                    line_b * fl.between(net, i, k)
                })
                .sum();
            assert!(close(lhs, ts.p_tilde[i - 1], 1e-14));
        }
    }

    #[test]
    fn vmax_examples() {
        let v = two_bus(1.0, 0.0, -0.1).vmax().unwrap();
        assert!(close(v[0], 0.8, 1e-15));
        let v = path(&[1.0, 2.0], &[0.0, 0.0], &[0.0, 0.0]).vmax().unwrap();
        assert_eq!(v.as_slice(), &[1.0, 1.0]);
        match two_bus(1.0, 0.0, -0.6).vmax() {
            Err(Error::VmaxNonpositive { buses, vmax }) => {
                assert_eq!(buses, alloc::vec![1]);
                assert!(close(vmax[0], -0.2, 1e-15));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn g_examples() {
        let p = two_bus(1.0, 0.0, -0.1);
        let g = p.eval_g(&[0.8]).unwrap();
        assert!(close(g[0], -0.1 + sqrt(0.8), 1e-15));
        assert!(close(g[0], 0.794427, 1e-6));

        let flat = path(&[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(flat.eval_g(&[1.0, 1.0]).unwrap(), alloc::vec![1.0, 1.0]);

        let p = two_bus(1.0, 0.2, 0.0);
        assert_eq!(p.eval_g(&[0.03]).unwrap_err().lines, alloc::vec![1]);
    }

    #[test]
    fn residual_examples() {
        let flat = path(&[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(flat.residuals(&[1.0, 1.0]).unwrap(), alloc::vec![0.0, 0.0]);
        let p = two_bus(1.0, 0.2, -0.05);
        assert!(close(p.residuals(&[0.85]).unwrap()[0], 0.0, 1e-15));
        let p = two_bus(1.0, 0.0, -0.1);
        let r = p.residuals(&[0.8]).unwrap()[0];
        assert!(close(r, 0.8 - sqrt(0.8) + 0.1, 1e-15));
        assert!(close(r, 0.005573, 1e-6));
    }

    #[test]
    fn residual_is_scaled_fixed_point_gap() {
        let p = path(&[1.0, 2.0], &[0.1, -0.2], &[-0.1, -0.3]);
        let v = [0.9, 0.8];
        let g = p.eval_g(&v).unwrap();
        let r = p.residuals(&v).unwrap();
        for i in 0..2 {
            assert!(close(r[i], p.system().b_total[i] * (v[i] - g[i]), 1e-14));
        }
    }

    #[test]
    fn angle_examples() {
        let p = path(&[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(p.recover_angles(&[0.7, 1.3]).unwrap(), alloc::vec![0.0, 0.0, 0.0]);
        let p = two_bus(1.0, 0.2, -0.05);
        let th = p.recover_angles(&[0.85]).unwrap();
        assert!(close(th[1], asin(0.2 / sqrt(0.85)), 1e-15));
        assert!(close(th[1], 0.218669, 1e-6));
        assert!(p.recover_angles(&[0.03]).is_err());
    }

    #[test]
    fn assemble_examples() {
        let flat = path(&[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]);
        let sol = flat.assemble_solution(&[1.0, 1.0], Method::FixedPoint, 1e-12).unwrap();
        assert_eq!(sol.theta, alloc::vec![0.0; 3]);
        assert_eq!(sol.c, alloc::vec![1.0, 1.0]);
        assert_eq!(sol.residual_inf, 0.0);

        let p = two_bus(1.0, 0.2, -0.05);
        let sol = p.assemble_solution(&[0.85], Method::FixedPoint, 1e-12).unwrap();
        assert!(close(sol.c[0], 0.9, 1e-15));
        assert!(close(sol.theta[1], 0.218669, 1e-6));
        let v = sol.v.at(1);
        assert!(close(sol.c[0] * sol.c[0] + 0.04, v, 1e-15));

        let p = two_bus(1.0, 0.0, -0.1);
        // residual ≈ 1e-3 at this point
        let v = 0.787298 + 0.0045;
        assert!(matches!(
            p.assemble_solution(&[v], Method::FixedPoint, 1e-8),
            Err(Error::ResidualTooLarge { .. })
        ));
    }

    #[test]
    fn from_transformed_round_trips_injections() {
        let net = RadialNetwork::new(3, alloc::vec![Line::new(0, 1, 0.3, 1.0), Line::new(1, 2, 0.6, 2.0)]).unwrap();
        let inj = Injections::new(alloc::vec![0.1, -0.2], alloc::vec![0.3, -0.05]);
        let a = Problem::new(net.clone(), inj.clone()).unwrap();
        let b = Problem::from_transformed(net, a.system().clone()).unwrap();
        for (x, y) in a.injections().p.iter().zip(&b.injections().p) {
            assert!(close(*x, *y, 1e-15));
        }
        assert_eq!(a.instance_id(), b.instance_id());
    }
}
