#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use radialflow_core::fixed_point::{solve_fixed_point, FixedPointConfig};
use radialflow_core::{Injections, Line, Problem, RadialNetwork, Verdict};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Random recursive tree: bus `i` hangs off a uniformly chosen earlier bus.
pub fn random_network(rng: &mut StdRng, n: usize) -> RadialNetwork {
    let kappa: f64 = rng.gen_range(0.0..=1.0);
    let lines = (1..=n)
        .map(|to| {
            let from = rng.gen_range(0..to);
            let b: f64 = rng.gen_range(0.5..=5.0);
            Line::new(from, to, kappa * b, b)
        })
        .collect();
    RadialNetwork::new(n + 1, lines).unwrap()
}

/// Mostly loads, a few injections.
pub fn random_direction(rng: &mut StdRng, n: usize) -> Injections {
    let p = (0..n).map(|_| rng.gen_range(-1.0..0.3)).collect();
    let q = (0..n).map(|_| rng.gen_range(-1.0..0.3)).collect();
    Injections::new(p, q)
}

pub fn fixed_point_verdict(problem: &Problem, max_iter: usize) -> Verdict {
    let cfg = FixedPointConfig {
        max_iter,
        ..FixedPointConfig::default()
    };
    solve_fixed_point(problem, &cfg).unwrap().verdict()
}

/// Loading multiplier at the solvability boundary along `dir`, to `rel_tol`.
///
/// Doubles until the fixed point certifies infeasibility, then bisects.
/// Inconclusive samples are treated as infeasible, which can only shrink the
/// estimate.
pub fn lambda_star(network: &RadialNetwork, dir: &Injections, rel_tol: f64) -> Option<f64> {
    let base = Problem::new(network.clone(), dir.clone()).unwrap();
    let feasible = |lambda: f64| fixed_point_verdict(&base.scaled(lambda), 200_000) == Verdict::Solved;
    let mut lo = 0.0;
    let mut hi = 0.01;
    while feasible(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return None;
        }
    }
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub network: RadialNetwork,
    pub direction: Injections,
    pub lambda_star: f64,
}

impl Instance {
    pub fn at(&self, factor: f64) -> Problem {
        Problem::new(self.network.clone(), self.direction.scaled(factor * self.lambda_star)).unwrap()
    }
}

pub fn random_instance(rng: &mut StdRng, n_range: std::ops::RangeInclusive<usize>) -> Instance {
    loop {
        let n = rng.gen_range(n_range.clone());
        let network = random_network(rng, n);
        let direction = random_direction(rng, n);
        if let Some(lambda_star) = lambda_star(&network, &direction, 1e-3) {
            return Instance {
                network,
                direction,
                lambda_star,
            };
        }
    }
}

pub fn rel_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()))
        .fold(0.0, f64::max)
}

/// The child of the slack bus whose subtree contains `bus`.
pub fn feeder_of(network: &RadialNetwork, mut bus: usize) -> usize {
    while let Some(p) = network.parent(bus) {
        if p == 0 {
            return bus;
        }
        bus = p;
    }
    bus
}

/// Checks the sign pattern an inverse M-matrix of a grounded tree must have:
/// positive for buses on the same feeder, zero across feeders. Entries are
/// indexed by non-slack bus minus one.
pub fn feeder_sign_pattern(network: &RadialNetwork, entry: impl Fn(usize, usize) -> f64) -> bool {
    let n = network.n();
    (1..=n).all(|i| {
        (1..=n).all(|k| {
            let x = entry(i - 1, k - 1);
            if feeder_of(network, i) == feeder_of(network, k) {
                x > 0.0
            } else {
                x == 0.0
            }
        })
    })
}
