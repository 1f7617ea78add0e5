mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use radialflow_core::analysis::{reactive_jacobian, reduced_jacobian};
use radialflow_core::analysis::certify_stability;
use radialflow_core::energy::{check_convexity_domain, energy_gradient, energy_hessian, solve_energy, EnergyConfig};
use radialflow_core::oracle::two_bus_closed_form;
use radialflow_core::{Injections, Line, Method, RadialNetwork};
use radialflow_core::fixed_point::{check_subsolution, solve_fixed_point, FixedPointConfig};
use radialflow_core::homogeneous::solve_line_flows;
use radialflow_core::relaxation::{kkt_check, solve_relaxation, RelaxationConfig};
use radialflow_core::{Problem, Verdict};

/// A lightly loaded random problem, feasible in practice.
fn light_problem(seed: u64, n: usize) -> Problem {
    let mut r = rng(seed);
    let network = random_network(&mut r, n);
    let dir = random_direction(&mut r, n);
    let scale: f64 = r.gen_range(0.01..=0.15);
    Problem::new(network, dir.scaled(scale)).unwrap()
}

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(48)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn g_is_monotone(seed in any::<u64>(), n in 1usize..12, lo in 0.6f64..0.9, spread in 0.0f64..0.3) {
        let p = light_problem(seed, n);
        let mut r = rng(seed ^ 0xa5a5);
        let v: Vec<f64> = (0..n).map(|_| r.gen_range(lo..=lo + 0.05)).collect();
        let w: Vec<f64> = v.iter().map(|x| x + r.gen_range(0.0..=spread)).collect();
        if let (Ok(gv), Ok(gw)) = (p.eval_g(&v), p.eval_g(&w)) {
            for (a, b) in gv.iter().zip(&gw) {
                prop_assert!(a <= &(b + 1e-14));
            }
        }
    }

    #[test]
    fn line_flows_balance_injections(seed in any::<u64>(), n in 1usize..30) {
        let p = light_problem(seed, n);
        let net = p.network();
        let sys = p.system();
        let flows = solve_line_flows(net, sys);
        for bus in 1..=n {
            let out: f64 = net.children(bus).iter().map(|&c| flows.into_parent(c)).sum();
            let b = sys.b_line[bus - 1];
            // B̃ s into the parent equals the injection plus what the children push up.
            let lhs = b * flows.into_parent(bus);
            let rhs = sys.p_tilde[bus - 1] + net.children(bus).iter().map(|&c| sys.b_line[c - 1] * flows.into_parent(c)).sum::<f64>();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()), "bus {bus}: {lhs} vs {rhs} ({out})");
        }
    }

    #[test]
    fn solution_is_bounded_and_solves(seed in any::<u64>(), n in 1usize..25) {
        let p = light_problem(seed, n);
        let rep = solve_fixed_point(&p, &FixedPointConfig::default()).unwrap();
        prop_assume!(rep.verdict() == Verdict::Solved);
        let sol = rep.solution.unwrap();
        let vmax = p.vmax().unwrap();
        for (v, m) in sol.v.iter().zip(vmax.iter()) {
            prop_assert!(*v <= m + 1e-12 && *v > 0.0);
        }
        let g = p.eval_g(&vmax).unwrap();
        prop_assert!(g.iter().zip(vmax.iter()).all(|(a, b)| *a <= b + 1e-12));
        prop_assert!(check_subsolution(&p, &sol.v).unwrap());
        prop_assert!(p.residual_inf(&sol.v).unwrap() <= 1e-10 * p.system().b_total.iter().fold(1.0_f64, |m, &b| m.max(b)));
    }

    #[test]
    fn angles_reproduce_flows(seed in any::<u64>(), n in 1usize..25) {
        let p = light_problem(seed, n);
        let rep = solve_fixed_point(&p, &FixedPointConfig::default()).unwrap();
        prop_assume!(rep.verdict() == Verdict::Solved);
        let sol = rep.solution.unwrap();
        let net = p.network();
        for bus in 1..=n {
            let parent = net.parent(bus).unwrap();
            let vp = if parent == 0 { 1.0 } else { sol.v[parent - 1] };
            let s = (sol.v[bus - 1] * vp).sqrt() * (sol.theta[bus] - sol.theta[parent]).sin();
            prop_assert!((s - p.flows().into_parent(bus)).abs() <= 1e-12);
        }
    }

    #[test]
    fn jacobians_have_z_structure(seed in any::<u64>(), n in 1usize..20) {
        let p = light_problem(seed, n);
        let rep = solve_fixed_point(&p, &FixedPointConfig::default()).unwrap();
        prop_assume!(rep.verdict() == Verdict::Solved);
        let v = rep.solution.unwrap().v;
        let jac = reduced_jacobian(&p, &v).unwrap();
        prop_assert!(jac.is_z && jac.is_pd && jac.j.is_symmetric());
        let dq = reactive_jacobian(&p, &v).unwrap();
        for i in 0..n {
            for k in 0..n {
                if i != k {
                    prop_assert!(dq[(i, k)] <= 0.0);
                }
            }
        }
    }

    #[test]
    fn energy_descends_and_agrees(seed in any::<u64>(), n in 1usize..15) {
        let p = light_problem(seed, n);
        let rep = solve_energy(&p, &EnergyConfig::default()).unwrap();
        for w in rep.trace.windows(2) {
            if w[1].armijo {
                prop_assert!(w[1].energy <= w[0].energy);
            }
        }
        let cfg = FixedPointConfig { max_iter: 1_000_000, ..FixedPointConfig::default() };
        let fp = solve_fixed_point(&p, &cfg).unwrap();
        prop_assert_eq!(rep.status.verdict(), fp.verdict());
        if let (Some(a), Some(b)) = (rep.solution, fp.solution) {
            prop_assert!(rel_dev(&a.v, &b.v) <= 1e-8);
        }
    }

    #[test]
    fn relaxation_is_tight_with_valid_multipliers(seed in any::<u64>(), n in 1usize..10) {
        let p = light_problem(seed, n);
        let rep = solve_relaxation(&p, &RelaxationConfig::default()).unwrap();
        prop_assume!(rep.verdict() == Verdict::Solved);
        let sol = rep.solution.unwrap();
        let jac = reduced_jacobian(&p, &sol.v).unwrap();
        prop_assert!(kkt_check(&rep.outcome, &jac));
    }

    #[test]
    fn midpoint_of_feasible_injections_is_feasible(seed in any::<u64>(), n in 1usize..8) {
        let mut r = rng(seed);
        let network = random_network(&mut r, n);
        let base = Problem::new(network, Injections::zeros(n)).unwrap();
        // Pull each endpoint towards zero injection until it is feasible.
        let feasible_draw = |r: &mut rand::rngs::StdRng| {
            let mut d = random_direction(r, n).scaled(r.gen_range(0.0..=2.0));
            while fixed_point_verdict(&base.with_injections(d.clone()).unwrap(), 200_000) != Verdict::Solved {
                d = d.scaled(0.7);
            }
            d
        };
        let a = feasible_draw(&mut r);
        let b = feasible_draw(&mut r);
        let mid = Injections::new(
            a.p.iter().zip(&b.p).map(|(x, y)| 0.5 * (x + y)).collect(),
            a.q.iter().zip(&b.q).map(|(x, y)| 0.5 * (x + y)).collect(),
        );
        prop_assert_eq!(fixed_point_verdict(&base.with_injections(mid).unwrap(), 1_000_000), Verdict::Solved);
    }

    #[test]
    fn scaling_past_the_boundary_stays_infeasible(seed in any::<u64>(), n in 1usize..8, k in 1.05f64..3.0) {
        let mut r = rng(seed);
        let network = random_network(&mut r, n);
        let dir = random_direction(&mut r, n);
        let ls = lambda_star(&network, &dir, 1e-3);
        prop_assume!(ls.is_some());
        let p = Problem::new(network, dir.scaled(k * ls.unwrap())).unwrap();
        prop_assert_ne!(fixed_point_verdict(&p, 1_000_000), Verdict::Solved);
    }

    #[test]
    fn solvers_agree_across_the_boundary(seed in any::<u64>(), n in 1usize..8, factor in 0.5f64..1.5) {
        prop_assume!((factor - 1.0).abs() > 0.01);
        let mut r = rng(seed);
        let network = random_network(&mut r, n);
        let dir = random_direction(&mut r, n);
        let ls = lambda_star(&network, &dir, 1e-4);
        prop_assume!(ls.is_some());
        let p = Problem::new(network, dir.scaled(factor * ls.unwrap())).unwrap();
        let cfg = FixedPointConfig { max_iter: 1_000_000, ..FixedPointConfig::default() };
        let fp = solve_fixed_point(&p, &cfg).unwrap().verdict();
        let rx = solve_relaxation(&p, &RelaxationConfig::default()).unwrap().verdict();
        let en = solve_energy(&p, &EnergyConfig::default()).unwrap().status.verdict();
        let expected = if factor < 1.0 { Verdict::Solved } else { Verdict::Infeasible };
        prop_assert_eq!([fp, rx, en], [expected; 3]);
    }

    #[test]
    fn hessian_matches_gradient_differences(seed in any::<u64>(), n in 1usize..10) {
        let p = light_problem(seed, n);
        let mut r = rng(seed ^ 0x5a5a);
        let v: Vec<f64> = (0..n).map(|_| r.gen_range(0.7..=1.2)).collect();
        let theta: Vec<f64> = std::iter::once(0.0).chain((0..n).map(|_| r.gen_range(-0.2..=0.2))).collect();
        let h = 1e-5;
        let hess = energy_hessian(&p, &v, &theta);
        let scale = hess.max_abs().max(1.0);
        let grad_at = |k: usize, step: f64| {
            let (mut v, mut t) = (v.clone(), theta.clone());
            if k < n {
                v[k] *= step.exp();
            } else {
                t[k - n + 1] += step;
            }
            energy_gradient(&p, &v, &t)
        };
        for k in 0..2 * n {
            let (gp, gm) = (grad_at(k, h), grad_at(k, -h));
            for i in 0..2 * n {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                prop_assert!((fd - hess[(i, k)]).abs() <= 1e-5 * scale, "H[{i},{k}] = {} vs {fd}", hess[(i, k)]);
            }
        }
        prop_assert!(hess.is_symmetric());
    }
}

fn lossless_two_bus(b: f64, s: f64, q: f64) -> Problem {
    let net = RadialNetwork::new(2, vec![Line::lossless(0, 1, b)]).unwrap();
    Problem::new(net, Injections::new(vec![s * b], vec![q])).unwrap()
}

#[test]
fn low_root_lies_outside_the_convexity_domain() {
    let mut distinct = 0;
    for k in 0..=400 {
        let q = -0.2499 * k as f64 / 400.0 - 0.0001;
        for s in [0.0, 0.05, 0.15] {
            let p = lossless_two_bus(1.0, s, q);
            let set = two_bus_closed_form(1.0, s, q);
            if set.len() < 2 {
                continue;
            }
            distinct += 1;
            let (hi, lo) = (&set.solutions[0], &set.solutions[1]);
            let sol_hi = p.assemble_solution(hi, Method::FixedPoint, 1e-12).unwrap();
            assert!(certify_stability(&p, &sol_hi).unwrap().stable, "q = {q}, s = {s}");
            let theta_lo = p.recover_angles(lo).unwrap();
            assert!(!check_convexity_domain(&p, lo, &theta_lo).in_domain, "q = {q}, s = {s}");
        }
    }
    assert!(distinct > 1000);
}
