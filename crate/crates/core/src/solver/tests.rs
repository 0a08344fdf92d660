use super::*;
use crate::layers::build_layers;
use crate::mdp::InstanceBuilder;
use crate::oracle::enumerate_optimal;

fn two_leaf(mode: Mode, budget: f64) -> MdpInstance {
    let b = InstanceBuilder::new(mode)
        .horizon(1)
        .initial("s0")
        .transition("s0", "a1", "safe", 1.0)
        .transition("s0", "a2", "risky", 1.0)
        .utility("s0", "a1", 5.0)
        .utility("s0", "a2", 10.0)
        .budget(budget);
    match mode {
        Mode::ChanceConstrained => b.risk("risky", 0.3),
        Mode::CostConstrained => b.cost("s0", "a1", 1.0).cost("s0", "a2", 5.0),
    }
    .build()
    .unwrap()
}

const ALL: [Algorithm; 3] = [Algorithm::Lim, Algorithm::Dis, Algorithm::Local];

#[test]
fn tight_budget_picks_safe_action() {
    let inst = two_leaf(Mode::ChanceConstrained, 0.2);
    let g = build_layers(&inst);
    for alg in ALL {
        let sol = solve(&inst, &g, &SolverConfig::with_eps(0.1), alg).unwrap();
        assert_eq!(sol.policy.get(0, inst.initial), Some(0), "{alg}");
        assert_eq!(sol.eval.value, 5.0);
    }
}

#[test]
fn loose_budget_picks_risky_action() {
    let inst = two_leaf(Mode::ChanceConstrained, 0.5);
    let g = build_layers(&inst);
    for alg in ALL {
        let sol = solve(&inst, &g, &SolverConfig::with_eps(0.1), alg).unwrap();
        assert_eq!(sol.eval.value, 10.0, "{alg}");
        assert!(sol.eval.feasible);
    }
}

#[test]
fn zero_budget_with_risky_leaves_is_infeasible() {
    let mut inst = two_leaf(Mode::ChanceConstrained, 0.0);
    let safe = inst.state_index("safe").unwrap();
    inst.risk[safe] = 0.1;
    let g = build_layers(&inst);
    for alg in ALL {
        assert!(matches!(solve(&inst, &g, &SolverConfig::with_eps(0.1), alg), Err(Error::Infeasible(_))));
        let cfg = SolverConfig { trim_umax: false, ..SolverConfig::with_eps(0.1) };
        assert!(matches!(solve(&inst, &g, &cfg, alg), Err(Error::Infeasible(_))));
    }
}

#[test]
fn cost_mode_mirror() {
    for (budget, value) in [(1.0, 5.0), (5.0, 10.0)] {
        let inst = two_leaf(Mode::CostConstrained, budget);
        let g = build_layers(&inst);
        for alg in ALL {
            let sol = solve(&inst, &g, &SolverConfig::with_eps(0.1), alg).unwrap();
            assert_eq!(sol.eval.value, value, "{alg} budget {budget}");
        }
    }
}

#[test]
fn eps_endpoints_rejected() {
    let inst = two_leaf(Mode::ChanceConstrained, 0.5);
    let g = build_layers(&inst);
    for eps in [0.0, 1.0] {
        assert!(matches!(solve_dis(&inst, &g, &SolverConfig::with_eps(eps)), Err(Error::InvalidArgument(_))));
    }
}

fn shared_pair() -> MdpInstance {
    InstanceBuilder::new(Mode::ChanceConstrained)
        .horizon(2)
        .initial("s0")
        .transition("s0", "a", "p", 0.5)
        .transition("s0", "a", "q", 0.5)
        .transition("s0", "b", "p", 1.0)
        .transition("p", "a", "shared", 1.0)
        .transition("p", "b", "x", 1.0)
        .transition("q", "a", "shared", 1.0)
        .transition("q", "b", "y", 1.0)
        .utility("s0", "a", 1.0)
        .utility("p", "a", 4.0)
        .utility("p", "b", 2.0)
        .utility("q", "a", 3.0)
        .utility("q", "b", 1.0)
        .risk("shared", 0.4)
        .risk("y", 0.1)
        .budget(0.25)
        .build()
        .unwrap()
}

#[test]
fn structure_preconditions() {
    let inst = shared_pair();
    let g = build_layers(&inst);
    let cfg = SolverConfig::with_eps(0.2);
    assert!(matches!(solve_lim(&inst, &g, &cfg), Err(Error::StructureViolation(_))));
    assert!(matches!(solve_dis(&inst, &g, &cfg), Err(Error::StructureViolation(_))));
    let tight = SolverConfig { cluster_cap: 1, ..cfg };
    match solve_local(&inst, &g, &tight) {
        Err(Error::ClusterTooLarge { level: 1, members, cap: 1 }) => assert_eq!(members, vec!["p", "q"]),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(select_algorithm(&g, &cfg), Algorithm::Local);
}

#[test]
fn local_on_shared_successor() {
    let inst = shared_pair();
    let g = build_layers(&inst);
    let opt = enumerate_optimal(&inst, &g).unwrap();
    for eps in [0.1, 0.3, 0.5] {
        let sol = solve_local(&inst, &g, &SolverConfig::with_eps(eps)).unwrap();
        assert!(sol.eval.feasible);
        assert!(sol.eval.value >= (1.0 - eps) * opt.optimal_value - 1e-9, "eps {eps}: {} vs {}", sol.eval.value, opt.optimal_value);
        assert!(sol.eval.value + 1e-9 >= sol.discretized_value);
    }
}

#[test]
fn single_action_everywhere() {
    let inst = InstanceBuilder::new(Mode::ChanceConstrained)
        .horizon(2)
        .initial("s0")
        .transition("s0", "a", "s1", 0.3)
        .transition("s0", "a", "s2", 0.7)
        .transition("s1", "a", "s3", 1.0)
        .transition("s2", "a", "s4", 1.0)
        .utility("s0", "a", 1.0)
        .utility("s1", "a", 2.0)
        .utility("s2", "a", 3.0)
        .risk("s3", 0.5)
        .budget(1.0)
        .build()
        .unwrap();
    let g = build_layers(&inst);
    for alg in ALL {
        let sol = solve(&inst, &g, &SolverConfig::with_eps(0.2), alg).unwrap();
        assert_eq!(sol.policy.len(), 3);
        assert!((sol.eval.value - (1.0 + 0.3 * 2.0 + 0.7 * 3.0)).abs() < 1e-12);
    }
}

#[test]
fn huge_immediate_utility_makes_demand_vacuous() {
    let inst = InstanceBuilder::new(Mode::ChanceConstrained)
        .horizon(2)
        .initial("s0")
        .transition("s0", "a", "s1", 1.0)
        .transition("s0", "b", "s1", 1.0)
        .transition("s1", "a", "x", 1.0)
        .transition("s1", "b", "y", 1.0)
        .utility("s0", "a", 1000.0)
        .utility("s1", "b", 1.0)
        .risk("x", 0.1)
        .risk("y", 0.3)
        .budget(1.0)
        .build()
        .unwrap();
    let g = build_layers(&inst);
    let table = table_dis(&inst, &g, &SolverConfig::with_eps(0.5)).unwrap();
    let cell = table.levels[1][0].cells[0].as_ref().unwrap();
    assert_eq!(cell.actions, vec![0]);
    assert!((cell.er[0] - 0.1).abs() < 1e-15);
}

#[test]
fn risk_is_monotone_in_grid_index() {
    let inst = shared_pair();
    let g = build_layers(&inst);
    let table = table_local(&inst, &g, &SolverConfig::with_eps(0.2)).unwrap();
    for lv in &table.levels {
        for ct in lv {
            if ct.members.len() != 1 {
                continue;
            }
            let ers: Vec<Option<f64>> = ct.cells.iter().map(|c| c.as_ref().map(|c| c.er[0])).collect();
            for w in ers.windows(2) {
                if let (Some(a), Some(b)) = (w[0], w[1]) {
                    assert!(a <= b + 1e-15);
                }
                if w[0].is_none() {
                    assert!(w[1].is_none());
                }
            }
        }
    }
}

#[test]
fn fetch_prefers_largest_feasible_grid_value() {
    let inst = two_leaf(Mode::ChanceConstrained, 0.5);
    let g = build_layers(&inst);
    let table = table_lim(&inst, &g, &SolverConfig::with_eps(0.1)).unwrap();
    let (pi, v) = fetch_policy(&inst, &g, &table).unwrap();
    let top = table.levels[0][0].cells.iter().rposition(|c| c.is_some()).unwrap();
    assert_eq!(v, table.grids[0].value(top));
    assert_eq!(pi.get(0, 0), Some(1));
}

#[test]
fn algorithm_names_round_trip() {
    for a in [Algorithm::Lim, Algorithm::Dis, Algorithm::Local, Algorithm::Auto] {
        assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
    }
    assert!("fast".parse::<Algorithm>().is_err());
}
