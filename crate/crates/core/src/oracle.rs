//! Ground truth by exhaustive enumeration of deterministic policies, and the
//! stochastic shortest path reduction by horizon search.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::generate::unroll;
use crate::layers::{build_layers, LayeredGraph};
use crate::mdp::{ActionId, MdpInstance, Mode, Policy, StateId};
use crate::solver::{solve, Algorithm, Solution, SolverConfig};
use crate::{Error, Result, FEASIBILITY_SLACK};

/// Largest number of policies [`enumerate_optimal`] will evaluate.
pub const ORACLE_LIMIT: u64 = 10_000_000;

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub optimal_value: f64,
    pub optimal_policy: Policy,
    pub feasible_count: u64,
    pub total_count: u64,
}

struct Search<'a> {
    inst: &'a MdpInstance,
    g: &'a LayeredGraph,
    counter: &'a AtomicU64,
    limit: u64,
    /// Per level, (ordinal, action) of every reached state.
    assignment: Vec<Vec<(usize, ActionId)>>,
    best: Option<(f64, Vec<Vec<(usize, ActionId)>>)>,
    feasible: u64,
    total: u64,
    value: Vec<Vec<f64>>,
    risk: Vec<Vec<f64>>,
}

impl<'a> Search<'a> {
    fn new(inst: &'a MdpInstance, g: &'a LayeredGraph, counter: &'a AtomicU64, limit: u64) -> Self {
        let h = inst.horizon;
        let value = g.levels.iter().map(|lv| vec![0.0; lv.len()]).collect();
        let mut risk: Vec<Vec<f64>> = g.levels.iter().map(|lv| vec![0.0; lv.len()]).collect();
        if inst.mode == Mode::ChanceConstrained {
            for (o, &s) in g.levels[h].iter().enumerate() {
                risk[h][o] = inst.risk[s];
            }
        }
        Search {
            inst,
            g,
            counter,
            limit,
            assignment: vec![Vec::new(); h],
            best: None,
            feasible: 0,
            total: 0,
            value,
            risk,
        }
    }

    fn leaf(&mut self) -> Result<()> {
        if self.counter.fetch_add(1, Ordering::Relaxed) >= self.limit {
            return Err(Error::TooLarge(format!("more than {} policies", self.limit)));
        }
        self.total += 1;
        let (inst, g) = (self.inst, self.g);
        for k in (0..inst.horizon).rev() {
            let (head, tail) = self.value.split_at_mut(k + 1);
            let (rhead, rtail) = self.risk.split_at_mut(k + 1);
            for &(o, a) in &self.assignment[k] {
                let s = g.state(k, o);
                let mut ev = 0.0;
                let mut er = 0.0;
                for &(t, p) in g.succ(k, o, a) {
                    ev += p * tail[0][t];
                    er += p * rtail[0][t];
                }
                head[k][o] = ev + inst.utility[s][a];
                rhead[k][o] = match inst.mode {
                    Mode::ChanceConstrained => {
                        let r = inst.risk[s];
                        r + (1.0 - r) * er
                    }
                    Mode::CostConstrained => er + inst.cost[s][a],
                };
            }
        }
        if self.risk[0][0] <= inst.budget + FEASIBILITY_SLACK {
            self.feasible += 1;
            let v = self.value[0][0];
            if self.best.as_ref().map_or(true, |(b, _)| v > *b) {
                self.best = Some((v, self.assignment.clone()));
            }
        }
        Ok(())
    }

    /// Enumerate all action vectors for the reached ordinals of level `k`.
    fn level(&mut self, k: usize, reached: &[usize]) -> Result<()> {
        if k == self.inst.horizon {
            return self.leaf();
        }
        let m = self.inst.n_actions();
        let mut idx = vec![0usize; reached.len()];
        loop {
            self.assignment[k] = reached.iter().zip(&idx).map(|(&o, &a)| (o, a)).collect();
            let next = self.successors(k);
            self.level(k + 1, &next)?;
            let mut i = reached.len();
            loop {
                if i == 0 {
                    return Ok(());
                }
                i -= 1;
                idx[i] += 1;
                if idx[i] < m {
                    break;
                }
                idx[i] = 0;
            }
        }
    }

    fn successors(&self, k: usize) -> Vec<usize> {
        let mut next: Vec<usize> = self.assignment[k]
            .iter()
            .flat_map(|&(o, a)| self.g.succ(k, o, a).iter().map(|e| e.0))
            .collect();
        next.sort_unstable();
        next.dedup();
        next
    }
}

/// Best feasible deterministic policy over the states it reaches. Policies
/// are enumerated level by level, states by ordinal and actions ascending;
/// among equal values the first enumerated wins.
pub fn enumerate_optimal(inst: &MdpInstance, g: &LayeredGraph) -> Result<OracleResult> {
    enumerate_with_limit(inst, g, ORACLE_LIMIT)
}

pub fn enumerate_with_limit(inst: &MdpInstance, g: &LayeredGraph, limit: u64) -> Result<OracleResult> {
    let counter = AtomicU64::new(0);
    let m = inst.n_actions();
    let branches = (0..m)
        .into_par_iter()
        .map(|a0| {
            let mut search = Search::new(inst, g, &counter, limit);
            search.assignment[0] = vec![(0, a0)];
            let next = search.successors(0);
            search.level(1, &next)?;
            Ok((search.best, search.feasible, search.total))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best: Option<(f64, Vec<Vec<(usize, ActionId)>>)> = None;
    let (mut feasible_count, mut total_count) = (0, 0);
    for (b, f, t) in branches {
        feasible_count += f;
        total_count += t;
        if let Some((v, asg)) = b {
            if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
                best = Some((v, asg));
            }
        }
    }
    let (optimal_value, asg) = best.ok_or(Error::NoFeasiblePolicy)?;
    let mut optimal_policy = Policy::new();
    for (k, lv) in asg.iter().enumerate() {
        for &(o, a) in lv {
            optimal_policy.insert(k, g.state(k, o), a);
        }
    }
    Ok(OracleResult { optimal_value, optimal_policy, feasible_count, total_count })
}

/// Unconstrained optimum by backward induction.
pub fn unconstrained_value(inst: &MdpInstance, g: &LayeredGraph) -> f64 {
    let h = inst.horizon;
    let mut next = vec![0.0; g.levels[h].len()];
    for k in (0..h).rev() {
        next = (0..g.levels[k].len())
            .map(|o| {
                let s = g.state(k, o);
                (0..inst.n_actions())
                    .map(|a| {
                        let mut ev = 0.0;
                        for &(t, p) in g.succ(k, o, a) {
                            ev += p * next[t];
                        }
                        ev + inst.utility[s][a]
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    next[0]
}

#[derive(Clone, Debug)]
pub struct SspResult {
    pub horizon: usize,
    pub instance: MdpInstance,
    pub solution: Solution,
}

/// Smallest horizon up to `h_max` at which the solver finds a policy reaching
/// a goal with probability at least `threshold`.
pub fn ssp_solve(
    base: &MdpInstance,
    goals: &[StateId],
    threshold: f64,
    h_max: usize,
    cfg: &SolverConfig,
    algorithm: Algorithm,
) -> Result<SspResult> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    for &s in goals {
        let absorbing = base.transitions[s].iter().all(|edges| edges.iter().all(|&(t, p)| t == s || p == 0.0));
        if !absorbing {
            return Err(Error::InvalidInstance(format!("goal state {} is not absorbing", base.states[s])));
        }
    }
    let budget = 1.0 - threshold;
    for h in 1..=h_max {
        let inst = unroll(base, goals, h, budget)?;
        let g = build_layers(&inst);
        match solve(&inst, &g, cfg, algorithm) {
            Ok(solution) => return Ok(SspResult { horizon: h, instance: inst, solution }),
            Err(Error::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoFeasibleHorizon(h_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::evaluate_policy;
    use crate::mdp::InstanceBuilder;

    fn two_leaf(budget: f64) -> MdpInstance {
        InstanceBuilder::new(Mode::ChanceConstrained)
            .horizon(1)
            .initial("s0")
            .transition("s0", "a1", "safe", 1.0)
            .transition("s0", "a2", "risky", 1.0)
            .utility("s0", "a1", 5.0)
            .utility("s0", "a2", 10.0)
            .risk("risky", 0.3)
            .budget(budget)
            .build()
            .unwrap()
    }

    #[test]
    fn two_action_optimum() {
        let inst = two_leaf(0.2);
        let g = build_layers(&inst);
        let r = enumerate_optimal(&inst, &g).unwrap();
        assert_eq!(r.optimal_value, 5.0);
        assert_eq!(r.total_count, 2);
        assert_eq!(r.feasible_count, 1);
        assert_eq!(r.optimal_policy.get(0, inst.initial), Some(0));

        let inst = two_leaf(0.5);
        let r = enumerate_optimal(&inst, &build_layers(&inst)).unwrap();
        assert_eq!(r.optimal_value, 10.0);
    }

    #[test]
    fn no_feasible_policy() {
        let mut inst = two_leaf(0.0);
        let safe = inst.state_index("safe").unwrap();
        inst.risk[safe] = 0.1;
        let g = build_layers(&inst);
        assert!(matches!(enumerate_optimal(&inst, &g), Err(Error::NoFeasiblePolicy)));
    }

    #[test]
    fn size_guard() {
        let inst = two_leaf(1.0);
        let g = build_layers(&inst);
        assert!(matches!(enumerate_with_limit(&inst, &g, 1), Err(Error::TooLarge(_))));
    }

    #[test]
    fn optimal_policy_evaluates_to_optimal_value() {
        let inst = two_leaf(0.5);
        let g = build_layers(&inst);
        let r = enumerate_optimal(&inst, &g).unwrap();
        let e = evaluate_policy(&inst, &g, &r.optimal_policy).unwrap();
        assert_eq!(e.value, r.optimal_value);
        assert!(e.feasible);
    }

    #[test]
    fn full_budget_matches_backward_induction() {
        let inst = two_leaf(1.0);
        let g = build_layers(&inst);
        assert_eq!(enumerate_optimal(&inst, &g).unwrap().optimal_value, unconstrained_value(&inst, &g));
    }

    fn retry(p: f64) -> (MdpInstance, Vec<StateId>) {
        let inst = InstanceBuilder::new(Mode::ChanceConstrained)
            .horizon(1)
            .initial("start")
            .transition("start", "go", "goal", p)
            .transition("start", "go", "start", 1.0 - p)
            .transition("goal", "go", "goal", 1.0)
            .build_unchecked()
            .unwrap();
        let goal = inst.state_index("goal").unwrap();
        (inst, vec![goal])
    }

    #[test]
    fn ssp_retry_needs_two_steps() {
        let (base, goals) = retry(0.5);
        let cfg = SolverConfig::with_eps(0.1);
        let r = ssp_solve(&base, &goals, 0.7, 5, &cfg, Algorithm::Auto).unwrap();
        assert_eq!(r.horizon, 2);
        assert!((r.solution.eval.risk_or_cost - 0.25).abs() < 1e-12);
    }

    #[test]
    fn ssp_deterministic_path() {
        let base = InstanceBuilder::new(Mode::ChanceConstrained)
            .horizon(1)
            .initial("a")
            .transition("a", "go", "b", 1.0)
            .transition("b", "go", "c", 1.0)
            .transition("c", "go", "c", 1.0)
            .build_unchecked()
            .unwrap();
        let goal = base.state_index("c").unwrap();
        let r = ssp_solve(&base, &[goal], 1.0, 5, &SolverConfig::default(), Algorithm::Auto).unwrap();
        assert_eq!(r.horizon, 2);
    }

    #[test]
    fn ssp_unreachable_goal() {
        let base = InstanceBuilder::new(Mode::ChanceConstrained)
            .horizon(1)
            .initial("a")
            .transition("a", "go", "a", 1.0)
            .transition("g", "go", "g", 1.0)
            .build_unchecked()
            .unwrap();
        let goal = base.state_index("g").unwrap();
        assert!(matches!(
            ssp_solve(&base, &[goal], 0.5, 4, &SolverConfig::default(), Algorithm::Auto),
            Err(Error::NoFeasibleHorizon(4))
        ));
    }
}
