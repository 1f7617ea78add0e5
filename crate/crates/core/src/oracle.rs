//! Reference solutions: the two-bus closed form, brute-force multistart
//! enumeration on tiny networks, and a dense linear solve.

use alloc::vec;
use alloc::vec::Vec;

use crate::analysis::reactive_jacobian;
use crate::homogeneous::{Problem, VoltageProfile};
use crate::linalg::{DenseMatrix, Lu};
use crate::math::{norm_inf, sqrt};
use crate::Error;

/// Largest network (non-slack buses) accepted by [`enumerate_solutions`].
pub const MAX_ENUMERATION_DIM: usize = 4;
/// Residual needed for a multistart end point to count as a solution.
pub const ACCEPT_RESIDUAL: f64 = 1e-9;
/// Residual targeted by the final polish.
pub const POLISH_RESIDUAL: f64 = 1e-12;
/// Smallest voltage explored by enumeration; end points below it are dropped.
pub const EPS: f64 = 1e-6;
/// Relative distance under which two solutions are merged.
pub const DEDUP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet {
    /// Highest first for the closed form; enumeration sorts by decreasing `Σ v`.
    pub solutions: Vec<VoltageProfile>,
    /// True only when the set is known to be complete.
    pub complete_claim: bool,
}

impl SolutionSet {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }
}

/// All solutions of `B̃v − B̃√(v − s²) = q̃` (slack at `v₀ = 1`).
///
/// With `a = q̃/B̃` the equation reads `√(v − s²) = v − a`; squaring gives
/// `v² − (2a + 1)v + a² + s² = 0` with discriminant `1 + 4a − 4s²`. Only
/// roots with `v − a = (1 ± √D)/2 ≥ 0` solve the unsquared equation.
pub fn two_bus_closed_form(b_tilde: f64, s: f64, q_tilde: f64) -> SolutionSet {
    assert!(b_tilde > 0.0, "susceptance must be positive");
    let a = q_tilde / b_tilde;
    let disc = 1.0 + 4.0 * a - 4.0 * s * s;
    let mut solutions = Vec::new();
    if disc >= 0.0 {
        let r = sqrt(disc);
        let branches: &[f64] = if disc == 0.0 { &[1.0] } else { &[1.0, -1.0] };
        for &sign in branches {
            let lift = (1.0 + sign * r) / 2.0;
            let v = a + lift;
            if lift >= 0.0 && v > 0.0 && v >= s * s {
                solutions.push(VoltageProfile::new(vec![v]));
            }
        }
    }
    SolutionSet {
        solutions,
        complete_claim: true,
    }
}

/// Dense LU solve with partial pivoting.
pub fn dense_solve(a: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>, Error> {
    if !a.is_square() || a.rows() != rhs.len() {
        return Err(Error::LengthMismatch {
            expected: a.rows(),
            got: rhs.len(),
        });
    }
    Ok(Lu::factor(a)?.solve(rhs))
}

/// Damped Newton on the reduced residuals `r(v) = 0` from `start`.
///
/// Returns the end point and its residual, or `None` when the start lies
/// outside the domain or the iteration breaks down.
pub fn newton_solve(problem: &Problem, start: &[f64], target: f64, max_iter: usize) -> Option<(Vec<f64>, f64)> {
    let mut v = start.to_vec();
    if v.iter().any(|&x| !(x > 0.0)) {
        return None;
    }
    let mut r = problem.residuals(&v).ok()?;
    let mut norm = norm_inf(&r);
    for _ in 0..max_iter {
        if norm <= target {
            break;
        }
        let jac = reactive_jacobian(problem, &v).ok()?;
        let lu = Lu::factor(&jac).ok()?;
        let step = lu.solve(&r);
        let mut alpha = 1.0;
        let mut moved = false;
        while alpha > 1e-12 {
            let trial: Vec<f64> = v.iter().zip(&step).map(|(x, d)| x - alpha * d).collect();
            if trial.iter().all(|&x| x > 0.0) {
                if let Ok(rt) = problem.residuals(&trial) {
                    let nt = norm_inf(&rt);
                    if nt < norm {
                        v = trial;
                        r = rt;
                        norm = nt;
                        moved = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Some((v, norm))
}

/// Heuristic search for every solution on a small network.
///
/// Starts damped Newton from each point of a `density`ⁿ grid over
/// `(ε, v_maxᵢ + margin]`, keeps end points with residual at most
/// [`ACCEPT_RESIDUAL`], polishes them and merges near duplicates.
pub fn enumerate_solutions(problem: &Problem, density: usize) -> Result<SolutionSet, Error> {
    let n = problem.n();
    if n > MAX_ENUMERATION_DIM {
        return Err(Error::DimensionTooLarge {
            n,
            max: MAX_ENUMERATION_DIM,
        });
    }
    if density == 0 {
        return Err(Error::InvalidConfig("density must be at least 1"));
    }
    let vmax = problem.vmax_unchecked();
    let empty = SolutionSet {
        solutions: Vec::new(),
        complete_claim: false,
    };
    // Every solution satisfies 0 < v ≤ v_max.
    if vmax.iter().any(|&x| !(x > 0.0)) {
        return Ok(empty);
    }
    const MARGIN: f64 = 0.05;
    let axes: Vec<Vec<f64>> = vmax
        .iter()
        .map(|&hi| {
            let top = hi + MARGIN;
            (1..=density)
                .map(|j| EPS + (top - EPS) * j as f64 / density as f64)
                .collect()
        })
        .collect();

    let mut found: Vec<Vec<f64>> = Vec::new();
    let mut idx = vec![0usize; n];
    let total = density.pow(n as u32);
    for _ in 0..total {
        let start: Vec<f64> = idx.iter().zip(&axes).map(|(&j, ax)| ax[j]).collect();
        if problem.line_c(&start).is_ok() {
            if let Some((v, res)) = newton_solve(problem, &start, POLISH_RESIDUAL, 100) {
                // Newton can creep towards the degenerate limit v → 0, where
                // the residual vanishes without a solution; drop those.
                if res <= ACCEPT_RESIDUAL && v.iter().all(|&x| x >= EPS) {
                    let (v, _) = newton_solve(problem, &v, POLISH_RESIDUAL * 1e-2, 20).unwrap_or((v, res));
                    let scale = norm_inf(&v).max(1.0);
                    let dup = found.iter().any(|u| {
                        u.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) <= DEDUP_TOL * scale
                    });
                    if !dup {
                        found.push(v);
                    }
                }
            }
        }
        for d in 0..n {
            idx[d] += 1;
            if idx[d] < density {
                break;
            }
            idx[d] = 0;
        }
    }
    found.sort_by(|a, b| {
        let sa: f64 = a.iter().sum();
        let sb: f64 = b.iter().sum();
        sb.total_cmp(&sa)
    });
    Ok(SolutionSet {
        solutions: found.into_iter().map(VoltageProfile::new).collect(),
        complete_claim: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homogeneous::test_support::{path, two_bus};
    use proptest::prelude::*;

    #[test]
    fn closed_form_examples() {
        let set = two_bus_closed_form(1.0, 0.0, -0.1);
        assert_eq!(set.len(), 2);
        let hi = ((1.0 + sqrt(0.6)) / 2.0).powi(2);
        let lo = ((1.0 - sqrt(0.6)) / 2.0).powi(2);
        assert!((set.solutions[0][0] - hi).abs() < 1e-15);
        assert!((set.solutions[1][0] - lo).abs() < 1e-15);
        assert!((hi - 0.787298).abs() < 1e-6 && (lo - 0.012702).abs() < 1e-6);

        let set = two_bus_closed_form(1.0, 0.2, -0.05);
        assert!((set.solutions[0][0] - 0.85).abs() < 1e-15);
        assert!((set.solutions[1][0] - 0.05).abs() < 1e-15);

        let set = two_bus_closed_form(1.0, 0.0, -0.25);
        assert_eq!(set.len(), 1);
        assert_eq!(set.solutions[0][0], 0.25);
        assert!(two_bus_closed_form(1.0, 0.0, -0.3).is_empty());
    }

    #[test]
    fn closed_form_drops_spurious_branch() {
        // a > s² puts the lower squared root on the negative branch of √.
        let set = two_bus_closed_form(2.0, 0.1, 0.3);
        assert_eq!(set.len(), 1);
        let p = two_bus(2.0, 0.1, 0.3);
        assert!(p.residuals(&set.solutions[0]).unwrap()[0].abs() < 1e-14);
    }

    #[test]
    fn dense_solve_examples() {
        let id = DenseMatrix::identity(3);
        assert_eq!(dense_solve(&id, &[1.0, -2.0, 3.0]).unwrap(), vec![1.0, -2.0, 3.0]);
        let a = DenseMatrix::from_rows(&[&[2.0, -1.0], &[-1.0, 1.0]]);
        let x = dense_solve(&a, &[0.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        let sing = DenseMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(dense_solve(&sing, &[1.0, 1.0]), Err(Error::SingularMatrix)));
    }

    #[test]
    fn enumeration_matches_closed_form_on_examples() {
        for q in [-0.1, -0.2, 0.0, 0.1] {
            let set = enumerate_solutions(&two_bus(1.0, 0.0, q), 64).unwrap();
            let exact = two_bus_closed_form(1.0, 0.0, q);
            assert_eq!(set.len(), exact.len(), "q = {q}");
            for (a, b) in set.solutions.iter().zip(&exact.solutions) {
                assert!((a[0] - b[0]).abs() < 1e-9);
            }
        }
        assert!(enumerate_solutions(&two_bus(1.0, 0.0, -0.3), 64).unwrap().is_empty());
    }

    #[test]
    fn enumeration_finds_flat_point() {
        let p = path(&[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]);
        let set = enumerate_solutions(&p, 16).unwrap();
        assert!(set
            .solutions
            .iter()
            .any(|v| v.iter().all(|x| (x - 1.0).abs() < 1e-9)));
    }

    #[test]
    fn enumeration_rejects_large_networks() {
        let p = path(&[1.0; 5], &[0.0; 5], &[0.0; 5]);
        assert!(matches!(enumerate_solutions(&p, 4), Err(Error::DimensionTooLarge { n: 5, max: 4 })));
    }

    proptest! {
        #[test]
        fn closed_form_roots_solve_the_equation(
            b in 0.2f64..5.0, s in -0.4f64..0.4, q in -1.5f64..0.5,
        ) {
            let p = two_bus(b, s, q);
            for v in two_bus_closed_form(b, s, q).solutions {
                prop_assert!(p.residuals(&v).unwrap()[0].abs() <= 1e-12 * b.max(1.0));
            }
        }
    }
}
