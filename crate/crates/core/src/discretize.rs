//! Utility grids, floor rounding on integer grid indices, and the `U_max`
//! trimming preprocessing.

use crate::eval::policy_reachable;
use crate::layers::LayeredGraph;
use crate::mdp::{ActionId, MdpInstance, Mode, Policy, StateId};
use crate::{Error, Result, FEASIBILITY_SLACK};

/// Relative guard so that exact multiples of a step never slip one cell down.
const FLOOR_GUARD: f64 = 1e-12;

/// Step size of the utility grids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridScheme {
    /// `L_k = eps * U_max / ((h - k)(ln h + 1))`.
    OnePart,
    /// One third of the one-part step, leaving room for knapsack rounding.
    ThreePart,
}

/// Uniform grid `{0, step, 2 step, ..., (count - 1) step}`; values are
/// handled as indices into it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueGrid {
    pub step: f64,
    pub count: usize,
}

impl ValueGrid {
    /// The single-point grid `{0}` used at the horizon.
    pub fn zero() -> Self {
        ValueGrid { step: 1.0, count: 1 }
    }

    pub fn value(&self, index: usize) -> f64 {
        index as f64 * self.step
    }

    pub fn max_index(&self) -> usize {
        self.count - 1
    }

    /// Largest grid index not above `x`, saturating at the top of the grid.
    pub fn floor_index(&self, x: f64) -> usize {
        round_down(x, self.step).min(self.max_index())
    }
}

/// Largest `i` with `i * step <= x + 1e-12 * step`.
pub fn round_down(x: f64, step: f64) -> usize {
    if x <= 0.0 {
        return 0;
    }
    (x / step + FLOOR_GUARD).floor() as usize
}

/// Smallest `i` with `i * step >= x - 1e-12 * step`; zero for `x <= 0`.
pub fn round_up(x: f64, step: f64) -> usize {
    if x <= 0.0 {
        return 0;
    }
    (x / step - FLOOR_GUARD).ceil().max(0.0) as usize
}

pub fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("eps must lie in (0, 1), got {eps}")))
    }
}

/// Grid step for step `k` of an `h`-step problem.
pub fn level_step(k: usize, h: usize, eps: f64, u_max: f64, scheme: GridScheme) -> f64 {
    let one_part = eps * u_max / ((h - k) as f64 * ((h as f64).ln() + 1.0));
    match scheme {
        GridScheme::OnePart => one_part,
        GridScheme::ThreePart => one_part / 3.0,
    }
}

/// Utility grid for decision step `k < h`, covering `[0, u_max (h - k)]`.
pub fn grid_for_level(k: usize, h: usize, eps: f64, u_max: f64, scheme: GridScheme) -> Result<ValueGrid> {
    check_eps(eps)?;
    if k >= h {
        return Err(Error::InvalidArgument(format!("step {k} is not below the horizon {h}")));
    }
    if !(u_max >= 0.0) || !u_max.is_finite() {
        return Err(Error::InvalidArgument(format!("u_max must be finite and non-negative, got {u_max}")));
    }
    if u_max == 0.0 {
        return Ok(ValueGrid::zero());
    }
    let step = level_step(k, h, eps, u_max, scheme);
    let count = round_down(u_max * (h - k) as f64, step) + 1;
    Ok(ValueGrid { step, count })
}

/// Grids for steps `0..=h`; the last one is `{0}`.
pub fn grids(h: usize, eps: f64, u_max: f64, scheme: GridScheme) -> Result<Vec<ValueGrid>> {
    let mut out = (0..h)
        .map(|k| grid_for_level(k, h, eps, u_max, scheme))
        .collect::<Result<Vec<_>>>()?;
    out.push(ValueGrid::zero());
    Ok(out)
}

/// Floor-discretized value of a policy: the utility recursion with every
/// level rounded down onto its grid step.
pub fn discretized_value(inst: &MdpInstance, g: &LayeredGraph, pi: &Policy, grids: &[ValueGrid]) -> Result<f64> {
    let h = inst.horizon;
    let visited = policy_reachable(inst, g, pi)?;
    let mut below = vec![0.0; g.levels[h].len()];
    for k in (0..h).rev() {
        let mut cur = vec![0.0; g.levels[k].len()];
        for &o in &visited[k] {
            let s = g.state(k, o);
            let a = pi.get(k, s).expect("visited pairs are assigned");
            let sum: f64 = g.succ(k, o, a).iter().map(|&(t, p)| p * below[t]).sum::<f64>() + inst.utility[s][a];
            cur[o] = grids[k].value(round_down(sum, grids[k].step));
        }
        below = cur;
    }
    Ok(below[0])
}

/// Per (state, action) availability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionMask {
    allowed: Vec<Vec<bool>>,
}

impl ActionMask {
    pub fn all(inst: &MdpInstance) -> Self {
        ActionMask {
            allowed: vec![vec![true; inst.n_actions()]; inst.n_states()],
        }
    }

    pub fn is_allowed(&self, s: StateId, a: ActionId) -> bool {
        self.allowed[s][a]
    }

    pub fn remove(&mut self, s: StateId, a: ActionId) {
        self.allowed[s][a] = false;
    }

    pub fn allowed_actions(&self, s: StateId) -> impl Iterator<Item = ActionId> + '_ {
        self.allowed[s].iter().enumerate().filter(|(_, &b)| b).map(|(a, _)| a)
    }

    pub fn removed(&self) -> Vec<(StateId, ActionId)> {
        let mut out = Vec::new();
        for (s, row) in self.allowed.iter().enumerate() {
            for (a, &b) in row.iter().enumerate() {
                if !b {
                    out.push((s, a));
                }
            }
        }
        out
    }
}

/// Largest utility over allowed actions of states with a decision.
pub fn decision_u_max(inst: &MdpInstance, g: &LayeredGraph, mask: &ActionMask) -> f64 {
    let mut u = 0.0f64;
    for lv in &g.levels[..inst.horizon] {
        for &s in lv {
            for a in mask.allowed_actions(s) {
                u = u.max(inst.utility[s][a]);
            }
        }
    }
    u
}

#[derive(Clone, Debug)]
pub struct TrimResult {
    pub mask: ActionMask,
    pub u_max: f64,
    pub removed: Vec<(StateId, ActionId)>,
}

/// One step of the risk (or cost) recursion for action `a` at level-`k`
/// ordinal `o`, given the next level's values.
fn backup(inst: &MdpInstance, g: &LayeredGraph, k: usize, o: usize, a: ActionId, next: &[f64]) -> f64 {
    let s = g.state(k, o);
    let sum: f64 = g.succ(k, o, a).iter().map(|&(t, p)| p * next[t]).sum();
    match inst.mode {
        Mode::ChanceConstrained => {
            let r = inst.risk[s];
            r + (1.0 - r) * sum
        }
        Mode::CostConstrained => sum + inst.cost[s][a],
    }
}

/// Minimum achievable risk (or cost) at the initial state over allowed
/// actions, with the action at `forced = (k, ordinal, a)` fixed.
fn min_risk(inst: &MdpInstance, g: &LayeredGraph, mask: &ActionMask, forced: Option<(usize, usize, ActionId)>) -> f64 {
    let h = inst.horizon;
    let mut next: Vec<f64> = g.levels[h]
        .iter()
        .map(|&s| match inst.mode {
            Mode::ChanceConstrained => inst.risk[s],
            Mode::CostConstrained => 0.0,
        })
        .collect();
    for k in (0..h).rev() {
        let cur: Vec<f64> = (0..g.levels[k].len())
            .map(|o| {
                if let Some((fk, fo, fa)) = forced {
                    if fk == k && fo == o {
                        return backup(inst, g, k, o, fa, &next);
                    }
                }
                let s = g.state(k, o);
                mask.allowed_actions(s)
                    .map(|a| backup(inst, g, k, o, a, &next))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        next = cur;
    }
    next[0]
}

/// Remove actions whose utility exceeds what any feasible policy can earn.
///
/// Repeatedly takes the allowed (state, action) pair of largest utility and
/// tries every step at which the state occurs: the action is fixed there and
/// every other state takes its minimum-risk action. If no placement is
/// feasible the action is removed at that state and the next largest utility
/// is examined; otherwise its utility is the effective `U_max`.
pub fn trim_umax(inst: &MdpInstance, g: &LayeredGraph) -> Result<TrimResult> {
    let h = inst.horizon;
    let mut mask = ActionMask::all(inst);
    let mut placements: Vec<Vec<(usize, usize)>> = vec![Vec::new(); inst.n_states()];
    for (k, lv) in g.levels[..h].iter().enumerate() {
        for (o, &s) in lv.iter().enumerate() {
            placements[s].push((k, o));
        }
    }
    let mut candidates: Vec<(StateId, ActionId)> = (0..inst.n_states())
        .filter(|&s| !placements[s].is_empty())
        .flat_map(|s| (0..inst.n_actions()).map(move |a| (s, a)))
        .collect();
    // Largest utility first; ties in (state, action) order.
    candidates.sort_by(|x, y| {
        inst.utility[y.0][y.1]
            .total_cmp(&inst.utility[x.0][x.1])
            .then(x.cmp(y))
    });

    let mut u_max = 0.0;
    for (s, a) in candidates {
        let u = inst.utility[s][a];
        if u <= 0.0 {
            break;
        }
        let feasible = placements[s]
            .iter()
            .any(|&(k, o)| min_risk(inst, g, &mask, Some((k, o, a))) <= inst.budget + FEASIBILITY_SLACK);
        if feasible {
            u_max = u;
            break;
        }
        mask.remove(s, a);
        if mask.allowed_actions(s).next().is_none() {
            return Err(Error::Infeasible(format!(
                "every action at state {} was trimmed",
                inst.states[s]
            )));
        }
    }
    let removed = mask.removed();
    Ok(TrimResult { mask, u_max, removed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::build_layers;
    use crate::mdp::InstanceBuilder;

    #[test]
    fn zero_utility_gives_single_point_grid() {
        let g = grid_for_level(0, 3, 0.2, 0.0, GridScheme::OnePart).unwrap();
        assert_eq!(g.count, 1);
    }

    #[test]
    fn one_part_grid_values() {
        let g = grid_for_level(0, 2, 0.3, 10.0, GridScheme::OnePart).unwrap();
        let expected = 3.0 / (2.0 * (2f64.ln() + 1.0));
        assert!((g.step - 0.885_924_163_724_461_8).abs() < 1e-12);
        assert_eq!(g.step, expected);
        assert_eq!(g.count, 23);
    }

    #[test]
    fn three_part_grid_is_one_third() {
        let one = grid_for_level(0, 2, 0.3, 10.0, GridScheme::OnePart).unwrap();
        let three = grid_for_level(0, 2, 0.3, 10.0, GridScheme::ThreePart).unwrap();
        assert!((three.step - 0.295_308_054_574_820_6).abs() < 1e-12);
        assert_eq!(three.step, one.step / 3.0);
    }

    #[test]
    fn eps_outside_open_interval_is_rejected() {
        for eps in [0.0, 1.0, -0.5, 1.5] {
            assert!(grid_for_level(0, 2, eps, 1.0, GridScheme::OnePart).is_err());
        }
    }

    #[test]
    fn floor_rounding() {
        assert_eq!(round_down(0.0, 0.7), 0);
        assert_eq!(round_down(2.5, 1.0), 2);
        let step = 0.1;
        assert_eq!(round_down(3.0 * step, step), 3);
        assert_eq!(round_down(0.1 + 0.2, 0.1), 3);
        assert_eq!(round_up(0.3, 0.1), 3);
        assert_eq!(round_up(0.31, 0.1), 4);
        assert_eq!(round_up(-1.0, 0.1), 0);
    }

    fn two_action(budget: f64) -> MdpInstance {
        InstanceBuilder::new(Mode::ChanceConstrained)
            .horizon(1)
            .initial("s0")
            .transition("s0", "a1", "bad", 1.0)
            .transition("s0", "a2", "good", 1.0)
            .utility("s0", "a1", 10.0)
            .utility("s0", "a2", 5.0)
            .risk("bad", 1.0)
            .budget(budget)
            .build()
            .unwrap()
    }

    #[test]
    fn trimming_drops_the_infeasible_high_utility_action() {
        let inst = two_action(0.5);
        let g = build_layers(&inst);
        let t = trim_umax(&inst, &g).unwrap();
        assert_eq!(t.u_max, 5.0);
        assert_eq!(t.removed, vec![(0, 0)]);
    }

    #[test]
    fn full_budget_trims_nothing() {
        let inst = two_action(1.0);
        let g = build_layers(&inst);
        let t = trim_umax(&inst, &g).unwrap();
        assert_eq!(t.u_max, 10.0);
        assert!(t.removed.is_empty());
    }

    #[test]
    fn zero_risk_trims_nothing() {
        let mut inst = two_action(0.0);
        inst.risk = vec![0.0; inst.n_states()];
        let g = build_layers(&inst);
        let t = trim_umax(&inst, &g).unwrap();
        assert_eq!(t.u_max, 10.0);
        assert!(t.removed.is_empty());
    }

    #[test]
    fn trimming_everything_reports_infeasible() {
        let mut inst = two_action(0.1);
        let good = inst.state_index("good").unwrap();
        inst.risk[good] = 0.5;
        let g = build_layers(&inst);
        assert!(matches!(trim_umax(&inst, &g), Err(Error::Infeasible(_))));
    }

    #[test]
    fn harmonic_bound_on_one_part_steps() {
        for h in 1..=64usize {
            let total: f64 = (0..h).map(|k| level_step(k, h, 0.25, 8.0, GridScheme::OnePart)).sum();
            assert!(total <= 0.25 * 8.0, "h = {h}: {total}");
        }
    }
}
