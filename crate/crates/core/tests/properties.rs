use ccmdp::discretize::{level_step, GridScheme};
use ccmdp::generate::{generate_layered, risk_bounds, Budget, GeneratorParams};
use ccmdp::io::{parse_instance, serialize_instance};
use ccmdp::oracle::unconstrained_value;
use ccmdp::{
    build_layers, enumerate_optimal, evaluate_policy, exact_mcminks, solve, solve_mcminks, solve_mmcminks, Algorithm,
    Choice, Error, InstanceBuilder, KnapsackInstance, MdpInstance, Mode, SolverConfig,
};
use proptest::prelude::*;

fn knapsack() -> impl Strategy<Value = KnapsackInstance> {
    let choice = (0.0..=10.0f64, 0.0..=10.0f64);
    let cats = prop::collection::vec(prop::collection::vec(choice, 1..=5), 1..=6);
    (cats, 0.0..=1.0f64, prop::bool::ANY).prop_map(|(cats, frac, coarse)| {
        let max: f64 = cats.iter().map(|c| c.iter().map(|x| x.1).fold(0.0, f64::max)).sum();
        let cats = cats
            .into_iter()
            .map(|c| c.into_iter().map(|(w, v)| Choice::scalar(w, v)).collect())
            .collect();
        KnapsackInstance::new(cats, vec![frac * max], if coarse { 1.0 } else { 0.25 })
    })
}

fn with_demand(inst: &KnapsackInstance, d: f64) -> KnapsackInstance {
    KnapsackInstance::new(inst.categories.clone(), vec![d], inst.rounding)
}

fn small_instance(mode: Mode) -> impl Strategy<Value = MdpInstance> {
    (2usize..=3, 2usize..=3, 1usize..=3, 1usize..=2, 0.1..0.9f64, any::<u64>()).prop_map(
        move |(n, acts, h, gamma, frac, seed)| {
            generate_layered(&GeneratorParams {
                n_states_per_level: n,
                n_actions: acts,
                horizon: h,
                gamma_target: gamma,
                risk_range: if mode == Mode::ChanceConstrained { (0.0, 0.3) } else { (0.0, 0.0) },
                cost_range: if mode == Mode::CostConstrained { (0.0, 5.0) } else { (0.0, 0.0) },
                budget: Budget::Fraction(frac),
                mode,
                seed,
                ..Default::default()
            })
            .expect("generator")
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rounded_value_covers_demand(inst in knapsack()) {
        if let Ok(a) = solve_mcminks(&inst) {
            prop_assert!(a.rho[0] + 1e-9 * inst.rounding >= inst.demand[0]);
            prop_assert!(a.true_value[0] >= a.rho[0] - 1e-9);
        }
    }

    #[test]
    fn weight_never_above_any_allocation_with_slack(inst in knapsack()) {
        let n = inst.categories.len() as f64;
        let padded = with_demand(&inst, inst.demand[0] + n * inst.rounding);
        if let Ok(e) = exact_mcminks(&padded) {
            let a = solve_mcminks(&inst).expect("padded demand is met, so the rounded one is too");
            prop_assert!(a.total_weight <= e.total_weight + 1e-9);
        }
    }

    #[test]
    fn weight_monotone_in_demand(inst in knapsack(), lower in 0.0..=1.0f64) {
        let small = with_demand(&inst, inst.demand[0] * lower);
        if let Ok(big) = solve_mcminks(&inst) {
            let s = solve_mcminks(&small).expect("smaller demand stays satisfiable");
            prop_assert!(s.total_weight <= big.total_weight);
        }
    }

    #[test]
    fn one_dimension_matches_scalar(inst in knapsack()) {
        match (solve_mcminks(&inst), solve_mmcminks(&inst)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(Error::DemandUnsatisfiable), Err(Error::DemandUnsatisfiable)) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn grid_steps_sum_below_eps_u(h in 1usize..=64, eps in 0.001..0.999f64, u in 0.001..1e4f64) {
        let sum: f64 = (0..h).map(|k| level_step(k, h, eps, u, GridScheme::OnePart)).sum();
        prop_assert!(sum <= eps * u * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn solvers_feasible_and_within_bound(inst in small_instance(Mode::ChanceConstrained), eps in 0.05..0.5f64) {
        let g = build_layers(&inst);
        let opt = enumerate_optimal(&inst, &g).unwrap().optimal_value;
        for alg in [Algorithm::Lim, Algorithm::Dis, Algorithm::Local] {
            let sol = solve(&inst, &g, &SolverConfig::with_eps(eps), alg).unwrap();
            prop_assert!(sol.eval.feasible);
            prop_assert!(sol.eval.value >= (1.0 - eps) * opt - 1e-9, "{alg}: {} vs {opt}", sol.eval.value);
            prop_assert!(sol.eval.value <= opt + 1e-9);
            prop_assert!(sol.discretized_value <= sol.eval.value + 1e-9);
        }
    }

    #[test]
    fn cost_mode_within_bound(inst in small_instance(Mode::CostConstrained), eps in 0.05..0.5f64) {
        let g = build_layers(&inst);
        let opt = enumerate_optimal(&inst, &g).unwrap().optimal_value;
        let sol = solve(&inst, &g, &SolverConfig::with_eps(eps), Algorithm::Auto).unwrap();
        prop_assert!(sol.eval.risk_or_cost <= inst.budget + 1e-12);
        prop_assert!(sol.eval.value >= (1.0 - eps) * opt - 1e-9);
    }

    #[test]
    fn full_budget_oracle_equals_backward_induction(inst in small_instance(Mode::ChanceConstrained)) {
        let mut inst = inst;
        inst.budget = 1.0;
        let g = build_layers(&inst);
        let opt = enumerate_optimal(&inst, &g).unwrap();
        prop_assert!((opt.optimal_value - unconstrained_value(&inst, &g)).abs() <= 1e-9);
        prop_assert_eq!(opt.feasible_count, opt.total_count);
    }

    #[test]
    fn oracle_policy_evaluates_to_reported_optimum(inst in small_instance(Mode::ChanceConstrained)) {
        let g = build_layers(&inst);
        let opt = enumerate_optimal(&inst, &g).unwrap();
        let pi = opt.optimal_policy;
        let r = evaluate_policy(&inst, &g, &pi).unwrap();
        prop_assert!(r.feasible);
        prop_assert!((r.value - opt.optimal_value).abs() <= 1e-12);
    }

    #[test]
    fn oracle_ignores_state_names(inst in small_instance(Mode::ChanceConstrained)) {
        let renamed = parse_instance(
            &serialize_instance(&inst).lines().map(|l| {
                l.split(' ').map(|w| if w.starts_with('s') && w.contains('_') { format!("z{}", w.chars().rev().collect::<String>()) } else { w.to_string() })
                    .collect::<Vec<_>>().join(" ")
            }).collect::<Vec<_>>().join("\n"),
        ).unwrap();
        let a = enumerate_optimal(&inst, &build_layers(&inst)).unwrap().optimal_value;
        let b = enumerate_optimal(&renamed, &build_layers(&renamed)).unwrap().optimal_value;
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn tighter_budget_never_helps(inst in small_instance(Mode::ChanceConstrained), shrink in 0.0..1.0f64) {
        let g = build_layers(&inst);
        let (lo, _) = risk_bounds(&inst);
        let mut tight = inst.clone();
        tight.budget = lo + shrink * (inst.budget - lo).max(0.0);
        let a = enumerate_optimal(&inst, &g).unwrap().optimal_value;
        let b = enumerate_optimal(&tight, &g).unwrap().optimal_value;
        prop_assert!(b <= a + 1e-12);
    }

    #[test]
    fn text_format_round_trips(inst in small_instance(Mode::CostConstrained)) {
        let text = serialize_instance(&inst);
        let back = parse_instance(&text).unwrap();
        prop_assert_eq!(serialize_instance(&back), text);
        prop_assert_eq!(back.budget.to_bits(), inst.budget.to_bits());
    }

    #[test]
    fn generator_respects_targets(seed in any::<u64>(), gamma in 2usize..=4, psi in 1usize..=3) {
        let inst = generate_layered(&GeneratorParams { gamma_target: gamma, psi_target: psi, seed, ..Default::default() }).unwrap();
        let g = build_layers(&inst);
        prop_assert!(g.gamma <= gamma);
        prop_assert!(g.psi_inclusive <= psi);
        prop_assert_eq!(g.psi_inclusive, g.psi_exclusive + 1);
        let (lo, hi) = risk_bounds(&inst);
        prop_assert!(lo <= inst.budget && inst.budget <= hi);
    }
}

#[test]
fn removing_the_optimal_action_cannot_raise_the_optimum() {
    let full = InstanceBuilder::new(Mode::ChanceConstrained)
        .horizon(1)
        .initial("s")
        .transition("s", "a", "x", 1.0)
        .transition("s", "b", "y", 1.0)
        .utility("s", "a", 3.0)
        .utility("s", "b", 2.0)
        .budget(1.0)
        .build()
        .unwrap();
    let restricted = InstanceBuilder::new(Mode::ChanceConstrained)
        .horizon(1)
        .initial("s")
        .transition("s", "b", "y", 1.0)
        .utility("s", "b", 2.0)
        .budget(1.0)
        .build()
        .unwrap();
    let a = enumerate_optimal(&full, &build_layers(&full)).unwrap().optimal_value;
    let b = enumerate_optimal(&restricted, &build_layers(&restricted)).unwrap().optimal_value;
    assert_eq!((a, b), (3.0, 2.0));
}
