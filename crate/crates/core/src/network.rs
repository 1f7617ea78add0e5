//! Rooted radial networks, bus injections and the reduced Laplacian.
//!
//! Bus 0 is the slack bus (voltage 1∠0 p.u.). Every other bus has exactly
//! one parent line, oriented away from the slack bus, so a network with
//! `n + 1` buses has `n` lines. After validation lines are stored in child
//! order: `lines()[i - 1]` is the line feeding bus `i`.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, ValidationError};

/// Default relative tolerance on the spread of `G/B` ratios.
pub const DEFAULT_KAPPA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bus {
    pub id: usize,
    pub is_slack: bool,
}

/// Series admittance `G − jB` between a parent bus and its child.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    /// Bus closer to the slack bus.
    pub from: usize,
    /// Child bus.
    pub to: usize,
    pub conductance: f64,
    pub susceptance: f64,
}

impl Line {
    pub fn new(from: usize, to: usize, conductance: f64, susceptance: f64) -> Self {
        Self {
            from,
            to,
            conductance,
            susceptance,
        }
    }

    /// Lossless line with susceptance `b`.
    pub fn lossless(from: usize, to: usize, b: f64) -> Self {
        Self::new(from, to, 0.0, b)
    }

    /// Converts a series impedance `r + jx` into `G = r/(r²+x²)`, `B = x/(r²+x²)`.
    pub fn from_impedance(from: usize, to: usize, r: f64, x: f64) -> Self {
        let z2 = r * r + x * x;
        Self::new(from, to, r / z2, x / z2)
    }
}

/// Parent/child structure of a validated tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    /// Children before parents; the slack bus is last.
    pub postorder: Vec<usize>,
}

/// Checks that `lines` form a spanning tree on `0..num_buses` rooted at bus 0
/// with every line oriented away from the root.
pub fn validate_tree(num_buses: usize, lines: &[Line]) -> Result<Tree, ValidationError> {
    if num_buses == 0 {
        return Err(ValidationError::Empty);
    }
    for (idx, line) in lines.iter().enumerate() {
        for bus in [line.from, line.to] {
            if bus >= num_buses {
                return Err(ValidationError::BusOutOfRange {
                    line: idx,
                    bus,
                    num_buses,
                });
            }
        }
        if line.from == line.to {
            return Err(ValidationError::Cycle);
        }
    }
    let mut seen: Vec<(usize, usize)> = Vec::with_capacity(lines.len());
    for (idx, line) in lines.iter().enumerate() {
        let key = (line.from.min(line.to), line.from.max(line.to));
        if seen.contains(&key) {
            return Err(ValidationError::DuplicateLine {
                line: idx,
                from: line.from,
                to: line.to,
            });
        }
        seen.push(key);
    }

    let expected = num_buses - 1;
    if lines.len() > expected {
        return Err(ValidationError::Cycle);
    }
    if lines.len() < expected {
        // undirected reachability only for the error message
        let mut adj = vec![Vec::new(); num_buses];
        for l in lines {
            adj[l.from].push(l.to);
            adj[l.to].push(l.from);
        }
        let reached = reach_count(&adj);
        return Err(ValidationError::Disconnected {
            unreached: num_buses - reached,
        });
    }

    let mut parent = vec![None; num_buses];
    let mut children = vec![Vec::new(); num_buses];
    for (idx, line) in lines.iter().enumerate() {
        if line.to == 0 {
            return Err(ValidationError::WrongOrientation {
                line: idx,
                from: line.from,
                to: line.to,
            });
        }
        if parent[line.to].is_some() {
            return Err(ValidationError::MultipleParents { bus: line.to });
        }
        parent[line.to] = Some(line.from);
        children[line.from].push(line.to);
    }

    let reached = reach_count(&children);
    if reached != num_buses {
        // n lines, one parent each, yet unreachable: the rest closes a cycle
        return Err(ValidationError::Cycle);
    }

    let mut postorder = Vec::with_capacity(num_buses);
    let mut stack = vec![(0usize, 0usize)];
    while let Some((bus, next)) = stack.pop() {
        if next < children[bus].len() {
            stack.push((bus, next + 1));
            stack.push((children[bus][next], 0));
        } else {
            postorder.push(bus);
        }
    }

    Ok(Tree {
        parent,
        children,
        postorder,
    })
}

fn reach_count(adj: &[Vec<usize>]) -> usize {
    let mut visited = vec![false; adj.len()];
    let mut stack = vec![0usize];
    visited[0] = true;
    let mut count = 1;
    while let Some(b) = stack.pop() {
        for &k in &adj[b] {
            if !visited[k] {
                visited[k] = true;
                count += 1;
                stack.push(k);
            }
        }
    }
    count
}

/// A validated radial network with a common `κ = G/B` on every line.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialNetwork {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    kappa: f64,
    tree: Tree,
}

impl RadialNetwork {
    pub fn new(num_buses: usize, lines: Vec<Line>) -> Result<Self, ValidationError> {
        Self::with_tolerance(num_buses, lines, DEFAULT_KAPPA_TOLERANCE)
    }

    /// Like [`RadialNetwork::new`] with an explicit relative tolerance on the
    /// deviation of each `G/B` from the (lower) median ratio.
    pub fn with_tolerance(
        num_buses: usize,
        lines: Vec<Line>,
        kappa_tolerance: f64,
    ) -> Result<Self, ValidationError> {
        let tree = validate_tree(num_buses, &lines)?;

        let mut ratios = Vec::with_capacity(lines.len());
        for (idx, l) in lines.iter().enumerate() {
            if !l.susceptance.is_finite() || !l.conductance.is_finite() {
                return Err(ValidationError::NonFinite {
                    what: "line admittance",
                });
            }
            if l.susceptance <= 0.0 {
                return Err(ValidationError::NonpositiveSusceptance {
                    line: idx,
                    b: l.susceptance,
                });
            }
            if l.conductance < 0.0 {
                return Err(ValidationError::NegativeConductance {
                    line: idx,
                    g: l.conductance,
                });
            }
            ratios.push(l.conductance / l.susceptance);
        }

        let kappa = if ratios.is_empty() {
            0.0
        } else {
            let mut sorted = ratios.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            sorted[(sorted.len() - 1) / 2]
        };
        for (idx, &r) in ratios.iter().enumerate() {
            let dev = if kappa > 0.0 {
                (r - kappa).abs() / kappa
            } else {
                r.abs()
            };
            if dev > kappa_tolerance {
                return Err(ValidationError::NonuniformRatio {
                    line: idx,
                    ratio: r,
                    kappa,
                    tolerance: kappa_tolerance,
                });
            }
        }

        let mut sorted_lines = lines;
        sorted_lines.sort_by_key(|l| l.to);

        let buses = (0..num_buses)
            .map(|id| Bus {
                id,
                is_slack: id == 0,
            })
            .collect();

        Ok(Self {
            buses,
            lines: sorted_lines,
            kappa,
            tree,
        })
    }

    /// Total number of buses including the slack bus.
    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    /// Number of non-slack (PQ) buses, which equals the number of lines.
    pub fn n(&self) -> usize {
        self.buses.len() - 1
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    /// Lines in child order.
    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    /// The line feeding non-slack bus `bus`.
    pub fn line_into(&self, bus: usize) -> &Line {
        &self.lines[bus - 1]
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn parent(&self, bus: usize) -> Option<usize> {
        self.tree.parent[bus]
    }

    pub fn children(&self, bus: usize) -> &[usize] {
        &self.tree.children[bus]
    }

    pub fn postorder(&self) -> &[usize] {
        &self.tree.postorder
    }

    /// Parents before children, slack bus first.
    pub fn preorder(&self) -> impl Iterator<Item = usize> + '_ {
        self.tree.postorder.iter().rev().copied()
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    /// Neighbours of `bus`: its parent (if any) followed by its children.
    pub fn neighbors(&self, bus: usize) -> impl Iterator<Item = usize> + '_ {
        self.tree.parent[bus]
            .into_iter()
            .chain(self.tree.children[bus].iter().copied())
    }
}

/// Net injections at the non-slack buses; index `i` is bus `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Injections {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl Injections {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Self {
        Self { p, q }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            p: vec![0.0; n],
            q: vec![0.0; n],
        }
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            p: self.p.iter().map(|x| x * lambda).collect(),
            q: self.q.iter().map(|x| x * lambda).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Lengths match `n` and every value is finite.
    pub fn check(&self, n: usize) -> Result<(), ValidationError> {
        if self.p.len() != n || self.q.len() != n {
            return Err(ValidationError::InjectionLength {
                expected: n,
                p: self.p.len(),
                q: self.q.len(),
            });
        }
        if self.p.iter().chain(&self.q).any(|x| !x.is_finite()) {
            return Err(ValidationError::NonFinite { what: "injections" });
        }
        Ok(())
    }
}

/// The bus Laplacian with the slack row and column removed, stored as a
/// weighted tree together with its leaf-elimination pivots.
///
/// Entries: `L_ii` is the total weight incident to bus `i` (slack line
/// included), `L_ik = −w_ik` for adjacent non-slack buses.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedLaplacian {
    parent: Vec<Option<usize>>,
    postorder: Vec<usize>,
    // indexed by bus; entry 0 unused
    weight: Vec<f64>,
    diagonal: Vec<f64>,
    pivot: Vec<f64>,
}

/// Builds the reduced Laplacian with weights `B` (or `(1+κ²)B` when `scaled`).
pub fn build_reduced_laplacian(network: &RadialNetwork, scaled: bool) -> ReducedLaplacian {
    let factor = if scaled {
        1.0 + network.kappa() * network.kappa()
    } else {
        1.0
    };
    let weights: Vec<f64> = network
        .lines()
        .iter()
        .map(|l| factor * l.susceptance)
        .collect();
    ReducedLaplacian::from_line_weights(network, &weights)
}

impl ReducedLaplacian {
    /// `weights[i - 1]` is the weight of the line feeding bus `i`.
    pub fn from_line_weights(network: &RadialNetwork, weights: &[f64]) -> Self {
        let nb = network.num_buses();
        assert_eq!(weights.len(), nb - 1);
        let mut weight = vec![0.0; nb];
        let mut diagonal = vec![0.0; nb];
        for bus in 1..nb {
            let w = weights[bus - 1];
            weight[bus] = w;
            diagonal[bus] += w;
            let p = network.parent(bus).expect("non-slack bus has a parent");
            diagonal[p] += w;
        }
        // leaf elimination: the Schur complement stays a tree, no fill-in
        let mut pivot = diagonal.clone();
        for &bus in network.postorder() {
            if bus == 0 {
                continue;
            }
            let p = network.parent(bus).unwrap();
            if p != 0 {
                let w = weight[bus];
                pivot[p] -= w * w / pivot[bus];
            }
        }
        Self {
            parent: network.tree().parent.clone(),
            postorder: network.postorder().to_vec(),
            weight,
            diagonal,
            pivot,
        }
    }

    /// Dimension `n` (number of non-slack buses).
    pub fn dim(&self) -> usize {
        self.weight.len() - 1
    }

    /// Diagonal entries `L_ii` for buses `1..=n`.
    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal[1..]
    }

    /// Solves `L x = rhs` in O(n) by eliminating leaves towards the root.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, Error> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        let mut r = vec![0.0; n + 1];
        r[1..].copy_from_slice(rhs);
        for &bus in &self.postorder {
            if bus == 0 {
                continue;
            }
            if !(self.pivot[bus] > 0.0) {
                return Err(Error::SingularMatrix);
            }
            let p = self.parent[bus].unwrap();
            if p != 0 {
                r[p] += self.weight[bus] * r[bus] / self.pivot[bus];
            }
        }
        let mut x = vec![0.0; n + 1];
        for &bus in self.postorder.iter().rev() {
            if bus == 0 {
                continue;
            }
            let p = self.parent[bus].unwrap();
            x[bus] = (r[bus] + self.weight[bus] * x[p]) / self.pivot[bus];
        }
        x.remove(0);
        Ok(x)
    }

    /// `L x` without materialising the matrix.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(x.len(), n);
        let mut y: Vec<f64> = (0..n).map(|i| self.diagonal[i + 1] * x[i]).collect();
        for bus in 1..=n {
            let p = self.parent[bus].unwrap();
            if p != 0 {
                let w = self.weight[bus];
                y[bus - 1] -= w * x[p - 1];
                y[p - 1] -= w * x[bus - 1];
            }
        }
        y
    }

    pub fn to_dense(&self) -> crate::linalg::DenseMatrix {
        let n = self.dim();
        let mut m = crate::linalg::DenseMatrix::zeros(n, n);
        for bus in 1..=n {
            m[(bus - 1, bus - 1)] = self.diagonal[bus];
            let p = self.parent[bus].unwrap();
            if p != 0 {
                m[(bus - 1, p - 1)] = -self.weight[bus];
                m[(p - 1, bus - 1)] = -self.weight[bus];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(weights: &[f64]) -> RadialNetwork {
        let lines = weights
            .iter()
            .enumerate()
            .map(|(i, &b)| Line::lossless(i, i + 1, b))
            .collect();
        RadialNetwork::new(weights.len() + 1, lines).unwrap()
    }

    #[test]
    fn two_bus_kappa() {
        let net = RadialNetwork::new(2, vec![Line::new(0, 1, 0.5, 1.0)]).unwrap();
        assert_eq!(net.kappa(), 0.5);
        assert_eq!(net.n(), 1);
    }

    #[test]
    fn kappa_tolerance_boundary() {
        let lines = vec![Line::new(0, 1, 0.5, 1.0), Line::new(1, 2, 0.500000001, 1.0)];
        let err = RadialNetwork::new(3, lines.clone()).unwrap_err();
        assert!(matches!(err, ValidationError::NonuniformRatio { .. }));
        let net = RadialNetwork::with_tolerance(3, lines, 1e-8).unwrap();
        assert_eq!(net.kappa(), 0.5);
    }

    #[test]
    fn three_lines_on_three_buses_is_a_cycle() {
        let lines = vec![
            Line::lossless(0, 1, 1.0),
            Line::lossless(0, 2, 1.0),
            Line::lossless(1, 2, 1.0),
        ];
        assert_eq!(RadialNetwork::new(3, lines).unwrap_err(), ValidationError::Cycle);
    }

    #[test]
    fn path_postorder() {
        let tree = validate_tree(3, &[Line::lossless(0, 1, 1.0), Line::lossless(1, 2, 1.0)]).unwrap();
        assert_eq!(tree.postorder, vec![2, 1, 0]);
        assert_eq!(tree.parent, vec![None, Some(0), Some(1)]);
    }

    #[test]
    fn star_postorder_ends_at_root() {
        let lines: Vec<_> = (1..4).map(|k| Line::lossless(0, k, 1.0)).collect();
        let tree = validate_tree(4, &lines).unwrap();
        assert_eq!(tree.postorder.len(), 4);
        assert_eq!(*tree.postorder.last().unwrap(), 0);
        let mut sorted = tree.postorder.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn disconnected_edges() {
        let err = validate_tree(4, &[Line::lossless(0, 1, 1.0), Line::lossless(2, 3, 1.0)]).unwrap_err();
        assert_eq!(err, ValidationError::Disconnected { unreached: 2 });
    }

    #[test]
    fn orientation_and_parents() {
        let err = validate_tree(2, &[Line::lossless(1, 0, 1.0)]).unwrap_err();
        assert!(matches!(err, ValidationError::WrongOrientation { .. }));
        let err = validate_tree(3, &[Line::lossless(0, 1, 1.0), Line::lossless(2, 1, 1.0)]).unwrap_err();
        assert_eq!(err, ValidationError::MultipleParents { bus: 1 });
    }

    #[test]
    fn detached_cycle_with_right_line_count() {
        // 0 isolated from the 1→2→3→1 loop, line count still n
        let lines = [
            Line::lossless(1, 2, 1.0),
            Line::lossless(2, 3, 1.0),
            Line::lossless(3, 1, 1.0),
        ];
        assert_eq!(validate_tree(4, &lines).unwrap_err(), ValidationError::Cycle);
    }

    #[test]
    fn duplicate_and_bad_admittance() {
        let err = RadialNetwork::new(2, vec![Line::lossless(0, 1, 1.0), Line::lossless(1, 0, 1.0)]).unwrap_err();
        assert!(matches!(err, ValidationError::DuplicateLine { .. }));
        let err = RadialNetwork::new(2, vec![Line::lossless(0, 1, 0.0)]).unwrap_err();
        assert!(matches!(err, ValidationError::NonpositiveSusceptance { .. }));
        let err = RadialNetwork::new(2, vec![Line::new(0, 1, -0.1, 1.0)]).unwrap_err();
        assert!(matches!(err, ValidationError::NegativeConductance { .. }));
    }

    #[test]
    fn impedance_form() {
        let l = Line::from_impedance(0, 1, 0.1, 0.2);
        assert!((l.conductance / l.susceptance - 0.5).abs() < 1e-15);
        assert!((l.conductance - 0.1 / 0.05).abs() < 1e-12);
    }

    #[test]
    fn laplacian_entries() {
        let l = build_reduced_laplacian(&path(&[1.0]), false).to_dense();
        assert_eq!(l.row(0), &[1.0]);
        let l = build_reduced_laplacian(&path(&[1.0, 1.0]), false).to_dense();
        assert_eq!(l.row(0), &[2.0, -1.0]);
        assert_eq!(l.row(1), &[-1.0, 1.0]);
        let star = RadialNetwork::new(3, vec![Line::lossless(0, 1, 1.0), Line::lossless(0, 2, 1.0)]).unwrap();
        let l = build_reduced_laplacian(&star, false).to_dense();
        assert_eq!(l.row(0), &[1.0, 0.0]);
        assert_eq!(l.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn scaled_laplacian_uses_one_plus_kappa_squared() {
        let net = RadialNetwork::new(2, vec![Line::new(0, 1, 0.5, 2.0)]).unwrap();
        let l = build_reduced_laplacian(&net, true).to_dense();
        // κ = 0.25
        assert!((l[(0, 0)] - 2.0 * 1.0625).abs() < 1e-15);
    }

    #[test]
    fn tree_solve_examples() {
        let x = build_reduced_laplacian(&path(&[1.0]), false).solve(&[-0.1]).unwrap();
        assert!((x[0] + 0.1).abs() < 1e-16);
        let x = build_reduced_laplacian(&path(&[1.0, 1.0]), false).solve(&[0.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn tree_solve_residual_on_branching_tree() {
        let lines = vec![
            Line::lossless(0, 1, 1.5),
            Line::lossless(1, 2, 0.7),
            Line::lossless(1, 3, 2.0),
            Line::lossless(3, 4, 0.9),
            Line::lossless(0, 5, 3.1),
        ];
        let net = RadialNetwork::new(6, lines).unwrap();
        let l = build_reduced_laplacian(&net, false);
        let rhs = [0.3, -1.0, 0.25, 2.0, -0.7];
        let x = l.solve(&rhs).unwrap();
        let r = l.apply(&x);
        for (a, b) in r.iter().zip(&rhs) {
            assert!((a - b).abs() <= 1e-12 * 2.0);
        }
        assert_eq!(l.to_dense().mul_vec(&x), r);
    }

    #[test]
    fn injections_length_checked() {
        let inj = Injections::new(vec![0.1], vec![0.1, 0.2]);
        assert!(inj.check(1).is_err());
        assert!(Injections::zeros(3).check(3).is_ok());
    }
}
