//! Seeded instance generators: layered DAGs with controlled branching and
//! cluster size, and gridworld navigation with cliffs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::build_layers;
use crate::mdp::{InstanceBuilder, MdpInstance, Mode, StateId};
use crate::{Error, Result};

const MAX_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Budget {
    Absolute(f64),
    /// Interpolates between the least and the largest risk (or cost)
    /// attainable by a deterministic policy.
    Fraction(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Soft cap on the number of states per level; every state still gets at
    /// least one successor.
    pub n_states_per_level: usize,
    pub n_actions: usize,
    pub horizon: usize,
    /// Largest number of successors of any (state, action).
    pub gamma_target: usize,
    /// Largest cluster size, counting the state itself.
    pub psi_target: usize,
    pub risk_range: (f64, f64),
    pub utility_range: (f64, f64),
    pub cost_range: (f64, f64),
    pub budget: Budget,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            n_states_per_level: 4,
            n_actions: 2,
            horizon: 3,
            gamma_target: 2,
            psi_target: 1,
            risk_range: (0.0, 0.2),
            utility_range: (0.0, 10.0),
            cost_range: (0.0, 5.0),
            budget: Budget::Fraction(0.5),
            mode: Mode::ChanceConstrained,
            seed: 0,
        }
    }
}

fn check_range(name: &str, r: (f64, f64), lo: f64, hi: f64) -> Result<()> {
    if r.0.is_finite() && r.1.is_finite() && lo <= r.0 && r.0 <= r.1 && r.1 <= hi {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} range {r:?} must be ordered within [{lo}, {hi}]")))
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_states_per_level == 0 || self.n_actions == 0 || self.horizon == 0 {
            return Err(Error::InvalidArgument("states per level, actions and horizon must be positive".into()));
        }
        if self.gamma_target == 0 || self.psi_target == 0 {
            return Err(Error::InvalidArgument("gamma and psi targets must be at least 1".into()));
        }
        if self.psi_target > 1 && self.gamma_target < 2 {
            return Err(Error::InvalidArgument(
                "shared successors need gamma at least 2 so that each state keeps a private child".into(),
            ));
        }
        check_range("risk", self.risk_range, 0.0, 1.0)?;
        check_range("utility", self.utility_range, 0.0, f64::MAX)?;
        check_range("cost", self.cost_range, 0.0, f64::MAX)?;
        match self.budget {
            Budget::Absolute(b) if b >= 0.0 => Ok(()),
            Budget::Fraction(f) if (0.0..=1.0).contains(&f) => Ok(()),
            b => Err(Error::InvalidArgument(format!("invalid budget {b:?}"))),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.gen_range(r.0..r.1)
    }
}

/// Least and largest risk (or cost) at the initial state over deterministic
/// policies.
pub fn risk_bounds(inst: &MdpInstance) -> (f64, f64) {
    let g = build_layers(inst);
    let h = inst.horizon;
    let terminal: Vec<f64> = g.levels[h]
        .iter()
        .map(|&s| if inst.mode == Mode::ChanceConstrained { inst.risk[s] } else { 0.0 })
        .collect();
    let (mut lo, mut hi) = (terminal.clone(), terminal);
    for k in (0..h).rev() {
        let mut nlo = Vec::with_capacity(g.levels[k].len());
        let mut nhi = Vec::with_capacity(g.levels[k].len());
        for o in 0..g.levels[k].len() {
            let s = g.state(k, o);
            let (mut best_lo, mut best_hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for a in 0..inst.n_actions() {
                let (mut sl, mut sh) = (0.0, 0.0);
                for &(t, p) in g.succ(k, o, a) {
                    sl += p * lo[t];
                    sh += p * hi[t];
                }
                let f = |x: f64| match inst.mode {
                    Mode::ChanceConstrained => inst.risk[s] + (1.0 - inst.risk[s]) * x,
                    Mode::CostConstrained => x + inst.cost[s][a],
                };
                best_lo = best_lo.min(f(sl));
                best_hi = best_hi.max(f(sh));
            }
            nlo.push(best_lo);
            nhi.push(best_hi);
        }
        lo = nlo;
        hi = nhi;
    }
    (lo[0], hi[0])
}

fn draw_layered(p: &GeneratorParams, rng: &mut ChaCha8Rng) -> Result<MdpInstance> {
    let name = |k: usize, i: usize| format!("s{k}_{i}");
    let mut b = InstanceBuilder::new(p.mode);
    b.set_horizon(p.horizon).set_initial(&name(0, 0));
    let actions: Vec<String> = (0..p.n_actions).map(|a| format!("a{a}")).collect();
    for a in &actions {
        b.action(a);
    }

    // parent[i]: index of the parent of state i at the current level.
    let mut parent: Vec<usize> = vec![0];
    let mut sizes = vec![1usize];
    for k in 0..p.horizon {
        let n = parent.len();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut created = 0usize;

        // Siblings are chunked into groups of at most psi that share a child.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| parent[i]);
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j < n && parent[order[j]] == parent[order[i]] {
                j += 1;
            }
            let mut sib: Vec<usize> = order[i..j].to_vec();
            sib.shuffle(rng);
            let mut start = 0;
            while start < sib.len() {
                let size = rng.gen_range(1..=p.psi_target).min(sib.len() - start);
                if size >= 2 {
                    for &m in &sib[start..start + size] {
                        children[m].push(created);
                    }
                    created += 1;
                }
                start += size;
            }
            i = j;
        }
        // Shared children are counted against gamma; every state keeps at
        // least one private child so that its actions can avoid the shared one.
        for ch in children.iter_mut() {
            let mut own = rng.gen_range(1..=p.gamma_target - ch.len());
            let room = p.n_states_per_level.saturating_sub(created);
            if own > room {
                own = room.max(1);
            }
            for _ in 0..own {
                ch.push(created);
                created += 1;
            }
        }

        let mut next_parent = vec![0; created];
        for (i, ch) in children.iter().enumerate() {
            for &c in ch {
                next_parent[c] = i;
            }
        }
        for (i, ch) in children.iter().enumerate() {
            let from = name(k, i);
            for a in &actions {
                let mut subset: Vec<usize> = ch.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
                if subset.is_empty() {
                    subset.push(*ch.choose(rng).expect("every state has a child"));
                }
                let weights: Vec<f64> = subset.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
                let total: f64 = weights.iter().sum();
                for (&c, w) in subset.iter().zip(&weights) {
                    b.add_transition(&from, a, &name(k + 1, c), w / total)?;
                }
                b.set_utility(&from, a, uniform(rng, p.utility_range));
                b.set_cost(&from, a, uniform(rng, p.cost_range));
            }
        }
        sizes.push(created);
        parent = next_parent;
    }
    for (k, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            let r = uniform(rng, p.risk_range);
            b.set_risk(&name(k, i), r);
        }
    }
    let mut inst = b.build()?;
    inst.budget = match p.budget {
        Budget::Absolute(x) => x,
        Budget::Fraction(f) => {
            let (lo, hi) = risk_bounds(&inst);
            lo + f * (hi - lo)
        }
    };
    Ok(inst)
}

/// Random layered instance whose measured branching and cluster size respect
/// the targets. Deterministic for a fixed seed.
pub fn generate_layered(p: &GeneratorParams) -> Result<MdpInstance> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    for _ in 0..MAX_ATTEMPTS {
        let inst = draw_layered(p, &mut rng)?;
        let g = build_layers(&inst);
        if g.gamma <= p.gamma_target && g.max_cluster_size() <= p.psi_target && g.psi_inclusive <= p.psi_target {
            return Ok(inst);
        }
    }
    Err(Error::InvalidArgument(format!(
        "no instance meeting gamma <= {} and psi <= {} after {MAX_ATTEMPTS} attempts",
        p.gamma_target, p.psi_target
    )))
}

/// Time-unrolled chance-constrained instance of a stochastic shortest path
/// problem: state `s` at step `k` becomes `s@k`, and every non-goal state at
/// the horizon fails with certainty.
pub fn unroll(base: &MdpInstance, goals: &[StateId], horizon: usize, budget: f64) -> Result<MdpInstance> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let name = |s: StateId, k: usize| format!("{}@{k}", base.states[s]);
    let mut b = InstanceBuilder::new(Mode::ChanceConstrained);
    b.set_horizon(horizon).set_budget(budget).set_initial(&name(base.initial, 0));
    for a in &base.actions {
        b.action(a);
    }
    let mut frontier = vec![base.initial];
    for k in 0..horizon {
        let mut next = Vec::new();
        for &s in &frontier {
            let from = name(s, k);
            b.set_risk(&from, base.risk[s]);
            for (a, aname) in base.actions.iter().enumerate() {
                if base.transitions[s][a].is_empty() {
                    return Err(Error::InvalidInstance(format!(
                        "action {aname} has no successors at state {}",
                        base.states[s]
                    )));
                }
                for &(t, p) in &base.transitions[s][a] {
                    if p > 0.0 {
                        b.add_transition(&from, aname, &name(t, k + 1), p)?;
                        next.push(t);
                    }
                }
                b.set_utility(&from, aname, base.utility[s][a]);
                b.set_cost(&from, aname, base.cost[s][a]);
            }
        }
        next.sort_unstable();
        next.dedup();
        frontier = next;
    }
    for &s in &frontier {
        let r = if goals.contains(&s) { base.risk[s] } else { 1.0 };
        b.set_risk(&name(s, horizon), r);
    }
    b.build()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub width: usize,
    pub height: usize,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub cliffs: Vec<(usize, usize)>,
    /// Probability of drifting to each side of the intended move is half of
    /// this.
    pub slip: f64,
    pub cliff_risk: f64,
    /// Chance that a free cell carries a science bonus.
    pub science_density: f64,
    pub horizon: usize,
    /// Allowed probability of not ending at the goal.
    pub budget: f64,
    pub seed: u64,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            width: 3,
            height: 3,
            start: (0, 0),
            goal: (2, 2),
            cliffs: Vec::new(),
            slip: 0.1,
            cliff_risk: 1.0,
            science_density: 0.3,
            horizon: 4,
            budget: 0.2,
            seed: 0,
        }
    }
}

pub fn cell_name(x: usize, y: usize) -> String {
    format!("x{x}y{y}")
}

/// Cyclic gridworld with moves `N`, `S`, `E`, `W`. The goal and cliffs are
/// absorbing; a blocked move stays in place. Utilities: the goal pays 1 per
/// step, science cells pay a seeded bonus below 0.5.
pub fn gridworld_base(p: &GridParams) -> Result<MdpInstance> {
    let inside = |c: (usize, usize)| c.0 < p.width && c.1 < p.height;
    if p.width == 0 || p.height == 0 || !inside(p.start) || !inside(p.goal) || !p.cliffs.iter().all(|&c| inside(c)) {
        return Err(Error::InvalidArgument("grid coordinates out of range".into()));
    }
    if p.cliffs.contains(&p.goal) {
        return Err(Error::InvalidArgument("goal lies on a cliff".into()));
    }
    if !(0.0..=1.0).contains(&p.slip) || !(0.0..=1.0).contains(&p.cliff_risk) {
        return Err(Error::InvalidArgument("slip and cliff risk must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let moves: [(&str, (i64, i64)); 4] = [("N", (0, 1)), ("S", (0, -1)), ("E", (1, 0)), ("W", (-1, 0))];
    let step = |c: (usize, usize), d: (i64, i64)| -> (usize, usize) {
        let (x, y) = (c.0 as i64 + d.0, c.1 as i64 + d.1);
        if x < 0 || y < 0 || x >= p.width as i64 || y >= p.height as i64 {
            c
        } else {
            (x as usize, y as usize)
        }
    };

    let mut b = InstanceBuilder::new(Mode::ChanceConstrained);
    b.set_initial(&cell_name(p.start.0, p.start.1)).set_horizon(p.horizon).set_budget(p.budget);
    for (m, _) in &moves {
        b.action(m);
    }
    for y in 0..p.height {
        for x in 0..p.width {
            let c = (x, y);
            let from = cell_name(x, y);
            b.state(&from);
            let absorbing = c == p.goal || p.cliffs.contains(&c);
            if p.cliffs.contains(&c) {
                b.set_risk(&from, p.cliff_risk);
            }
            let bonus = if !absorbing && rng.gen_bool(p.science_density.clamp(0.0, 1.0)) {
                rng.gen_range(0.0..0.5)
            } else {
                0.0
            };
            for (m, d) in &moves {
                let mut out: Vec<((usize, usize), f64)> = Vec::new();
                let mut push = |t: (usize, usize), q: f64| {
                    if q <= 0.0 {
                        return;
                    }
                    match out.iter_mut().find(|(u, _)| *u == t) {
                        Some(e) => e.1 += q,
                        None => out.push((t, q)),
                    }
                };
                if absorbing {
                    push(c, 1.0);
                } else {
                    let side = (d.1, d.0);
                    push(step(c, *d), 1.0 - p.slip);
                    push(step(c, side), p.slip / 2.0);
                    push(step(c, (-side.0, -side.1)), p.slip / 2.0);
                }
                for (t, q) in out {
                    b.add_transition(&from, m, &cell_name(t.0, t.1), q)?;
                }
                let u = if c == p.goal { 1.0 } else { bonus };
                b.set_utility(&from, m, u);
            }
        }
    }
    b.build_unchecked()
}

/// Finite-horizon chance-constrained gridworld: the run fails on a cliff or
/// when it has not reached the goal by the horizon.
pub fn generate_gridworld(p: &GridParams) -> Result<MdpInstance> {
    let base = gridworld_base(p)?;
    let goal = base.state_index(&cell_name(p.goal.0, p.goal.1)).expect("goal cell exists");
    unroll(&base, &[goal], p.horizon, p.budget)
}
