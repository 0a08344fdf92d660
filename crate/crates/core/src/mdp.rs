//! Problem representation: states, actions, transitions, utilities,
//! risks/costs, horizon and budget.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, PROBABILITY_TOLERANCE};

pub type StateId = usize;
pub type ActionId = usize;

/// Which constraint the budget bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Probability that any visited state fails is at most the budget.
    ChanceConstrained,
    /// Expected total cost is at most the budget.
    CostConstrained,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::ChanceConstrained => "cc",
            Mode::CostConstrained => "c",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "cc" | "chance" | "chance-constrained" => Some(Mode::ChanceConstrained),
            "c" | "cost" | "cost-constrained" => Some(Mode::CostConstrained),
            _ => None,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A finite-horizon (chance-)constrained MDP.
///
/// States and actions are addressed by dense indices into `states` /
/// `actions`. `transitions[s][a]` lists `(successor, probability)` pairs; an
/// empty list marks a terminal action, legal only at the last decision step.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpInstance {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub transitions: Vec<Vec<Vec<(StateId, f64)>>>,
    pub utility: Vec<Vec<f64>>,
    pub cost: Vec<Vec<f64>>,
    pub risk: Vec<f64>,
    pub initial: StateId,
    pub horizon: usize,
    pub budget: f64,
    pub mode: Mode,
}

impl MdpInstance {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn state_index(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name)
    }

    pub fn action_index(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().position(|a| a == name)
    }

    /// Switch between chance-constrained and cost-constrained semantics.
    ///
    /// Risks and costs are kept; only the interpretation of the budget and
    /// the recursion used by evaluation and the solvers change.
    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.set_mode(mode);
        self
    }

    /// Largest utility over all (state, action) pairs.
    pub fn max_utility(&self) -> f64 {
        self.utility
            .iter()
            .flatten()
            .copied()
            .fold(0.0, f64::max)
    }

    pub fn validate(self) -> Result<Self> {
        validate_instance(self)
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInstance(msg.into())
}

/// Check every instance invariant; returns the instance unchanged on success
/// and the first violation otherwise.
pub fn validate_instance(inst: MdpInstance) -> Result<MdpInstance> {
    let n = inst.n_states();
    let m = inst.n_actions();
    if n == 0 {
        return Err(invalid("no states"));
    }
    if m == 0 {
        return Err(invalid("no actions"));
    }
    if inst.horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    if inst.initial >= n {
        return Err(invalid("unknown initial state"));
    }
    if !(inst.budget >= 0.0) || !inst.budget.is_finite() && inst.mode == Mode::ChanceConstrained {
        return Err(invalid(format!("budget must be non-negative, got {}", inst.budget)));
    }
    if inst.transitions.len() != n
        || inst.utility.len() != n
        || inst.cost.len() != n
        || inst.risk.len() != n
    {
        return Err(invalid("table sizes do not match the number of states"));
    }
    let mut names = BTreeSet::new();
    for s in &inst.states {
        if !names.insert(s) {
            return Err(invalid(format!("duplicate state {s}")));
        }
    }
    let mut names = BTreeSet::new();
    for a in &inst.actions {
        if !names.insert(a) {
            return Err(invalid(format!("duplicate action {a}")));
        }
    }
    for s in 0..n {
        let sname = &inst.states[s];
        if inst.transitions[s].len() != m || inst.utility[s].len() != m || inst.cost[s].len() != m {
            return Err(invalid(format!("table sizes for state {sname} do not match the number of actions")));
        }
        let r = inst.risk[s];
        if !(0.0..=1.0).contains(&r) {
            return Err(invalid(format!("risk of {sname} outside [0,1]: {r}")));
        }
        for a in 0..m {
            let aname = &inst.actions[a];
            let u = inst.utility[s][a];
            if !(u >= 0.0) || !u.is_finite() {
                return Err(invalid(format!("negative utility {u} at ({sname}, {aname})")));
            }
            let c = inst.cost[s][a];
            if !(c >= 0.0) || !c.is_finite() {
                return Err(invalid(format!("negative cost {c} at ({sname}, {aname})")));
            }
            let succ = &inst.transitions[s][a];
            if succ.is_empty() {
                continue;
            }
            let mut seen = BTreeSet::new();
            let mut sum = 0.0;
            for &(t, p) in succ {
                if t >= n {
                    return Err(invalid(format!("unknown successor state index {t} at ({sname}, {aname})")));
                }
                if !seen.insert(t) {
                    return Err(invalid(format!(
                        "duplicate successor {} at ({sname}, {aname})",
                        inst.states[t]
                    )));
                }
                if !(0.0..=1.0).contains(&p) {
                    return Err(invalid(format!("probability {p} outside [0,1] at ({sname}, {aname})")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
                let shown = (sum * 1e9).round() / 1e9;
                return Err(invalid(format!("probabilities sum to {shown} at ({sname}, {aname})")));
            }
        }
    }

    // Terminal actions are only allowed where the next level is the last.
    let mut frontier: BTreeSet<StateId> = BTreeSet::from([inst.initial]);
    for k in 0..inst.horizon {
        let mut next = BTreeSet::new();
        for &s in &frontier {
            for a in 0..m {
                let succ = &inst.transitions[s][a];
                if succ.is_empty() && k + 1 < inst.horizon {
                    return Err(invalid(format!(
                        "action {} at state {} has no successors at step {k} < h-1",
                        inst.actions[a], inst.states[s]
                    )));
                }
                next.extend(succ.iter().filter(|(_, p)| *p > 0.0).map(|(t, _)| *t));
            }
        }
        frontier = next;
    }
    Ok(inst)
}

/// Name-based construction of an [`MdpInstance`]; states and actions are
/// interned in first-use order.
#[derive(Clone, Debug)]
pub struct InstanceBuilder {
    mode: Mode,
    states: Vec<String>,
    state_ix: HashMap<String, StateId>,
    actions: Vec<String>,
    action_ix: HashMap<String, ActionId>,
    transitions: BTreeMap<(StateId, ActionId), Vec<(StateId, f64)>>,
    utility: HashMap<(StateId, ActionId), f64>,
    cost: HashMap<(StateId, ActionId), f64>,
    risk: HashMap<StateId, f64>,
    initial: Option<String>,
    horizon: usize,
    budget: f64,
}

impl InstanceBuilder {
    pub fn new(mode: Mode) -> Self {
        InstanceBuilder {
            mode,
            states: Vec::new(),
            state_ix: HashMap::new(),
            actions: Vec::new(),
            action_ix: HashMap::new(),
            transitions: BTreeMap::new(),
            utility: HashMap::new(),
            cost: HashMap::new(),
            risk: HashMap::new(),
            initial: None,
            horizon: 1,
            budget: 0.0,
        }
    }

    pub fn state(&mut self, name: &str) -> StateId {
        if let Some(&i) = self.state_ix.get(name) {
            return i;
        }
        let i = self.states.len();
        self.states.push(name.to_string());
        self.state_ix.insert(name.to_string(), i);
        i
    }

    pub fn action(&mut self, name: &str) -> ActionId {
        if let Some(&i) = self.action_ix.get(name) {
            return i;
        }
        let i = self.actions.len();
        self.actions.push(name.to_string());
        self.action_ix.insert(name.to_string(), i);
        i
    }

    pub fn has_state(&self, name: &str) -> bool {
        self.state_ix.contains_key(name)
    }

    pub fn has_action(&self, name: &str) -> bool {
        self.action_ix.contains_key(name)
    }

    pub fn set_mode(&mut self, mode: Mode) -> &mut Self {
        self.mode = mode;
        self
    }

    pub fn set_horizon(&mut self, h: usize) -> &mut Self {
        self.horizon = h;
        self
    }

    pub fn set_budget(&mut self, b: f64) -> &mut Self {
        self.budget = b;
        self
    }

    pub fn set_initial(&mut self, s: &str) -> &mut Self {
        self.state(s);
        self.initial = Some(s.to_string());
        self
    }

    /// Add `s --a--> t` with probability `p`. Repeating a triple is an error.
    pub fn add_transition(&mut self, s: &str, a: &str, t: &str, p: f64) -> Result<&mut Self> {
        let (si, ai, ti) = (self.state(s), self.action(a), self.state(t));
        let list = self.transitions.entry((si, ai)).or_default();
        if list.iter().any(|(x, _)| *x == ti) {
            return Err(invalid(format!("duplicate transition ({s}, {a}, {t})")));
        }
        list.push((ti, p));
        Ok(self)
    }

    pub fn set_utility(&mut self, s: &str, a: &str, u: f64) -> &mut Self {
        let k = (self.state(s), self.action(a));
        self.utility.insert(k, u);
        self
    }

    pub fn set_cost(&mut self, s: &str, a: &str, c: f64) -> &mut Self {
        let k = (self.state(s), self.action(a));
        self.cost.insert(k, c);
        self
    }

    pub fn set_risk(&mut self, s: &str, r: f64) -> &mut Self {
        let k = self.state(s);
        self.risk.insert(k, r);
        self
    }

    // Chaining conveniences for tests and generators.

    pub fn horizon(mut self, h: usize) -> Self {
        self.set_horizon(h);
        self
    }

    pub fn budget(mut self, b: f64) -> Self {
        self.set_budget(b);
        self
    }

    pub fn initial(mut self, s: &str) -> Self {
        self.set_initial(s);
        self
    }

    pub fn transition(mut self, s: &str, a: &str, t: &str, p: f64) -> Self {
        self.add_transition(s, a, t, p).expect("duplicate transition");
        self
    }

    pub fn utility(mut self, s: &str, a: &str, u: f64) -> Self {
        self.set_utility(s, a, u);
        self
    }

    pub fn cost(mut self, s: &str, a: &str, c: f64) -> Self {
        self.set_cost(s, a, c);
        self
    }

    pub fn risk(mut self, s: &str, r: f64) -> Self {
        self.set_risk(s, r);
        self
    }

    /// Assemble without validating.
    pub fn build_unchecked(&self) -> Result<MdpInstance> {
        let n = self.states.len();
        let m = self.actions.len();
        let initial = match &self.initial {
            Some(s) => self.state_ix[s],
            None if n > 0 => 0,
            None => return Err(invalid("no states")),
        };
        let mut transitions = vec![vec![Vec::new(); m]; n];
        for (&(s, a), list) in &self.transitions {
            transitions[s][a] = list.clone();
        }
        let mut utility = vec![vec![0.0; m]; n];
        for (&(s, a), &u) in &self.utility {
            utility[s][a] = u;
        }
        let mut cost = vec![vec![0.0; m]; n];
        for (&(s, a), &c) in &self.cost {
            cost[s][a] = c;
        }
        let mut risk = vec![0.0; n];
        for (&s, &r) in &self.risk {
            risk[s] = r;
        }
        Ok(MdpInstance {
            states: self.states.clone(),
            actions: self.actions.clone(),
            transitions,
            utility,
            cost,
            risk,
            initial,
            horizon: self.horizon,
            budget: self.budget,
            mode: self.mode,
        })
    }

    pub fn build(&self) -> Result<MdpInstance> {
        validate_instance(self.build_unchecked()?)
    }
}

/// A deterministic, time-dependent policy: `(step, state) -> action`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Policy {
    assignment: BTreeMap<(usize, StateId), ActionId>,
}

impl Policy {
    pub fn new() -> Self {
        Self::default()
    }

    /// Assign `action` at `(state, step)`, returning the previous assignment.
    pub fn insert(&mut self, step: usize, state: StateId, action: ActionId) -> Option<ActionId> {
        self.assignment.insert((step, state), action)
    }

    pub fn get(&self, step: usize, state: StateId) -> Option<ActionId> {
        self.assignment.get(&(step, state)).copied()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// `(step, state, action)` triples in `(step, state)` order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, StateId, ActionId)> + '_ {
        self.assignment.iter().map(|(&(k, s), &a)| (k, s, a))
    }

    /// Policy file text: one `state step action` line per assignment, sorted
    /// by step and then state name.
    pub fn to_text(&self, inst: &MdpInstance) -> String {
        let mut lines: Vec<(usize, &str, &str)> = self
            .iter()
            .map(|(k, s, a)| (k, inst.states[s].as_str(), inst.actions[a].as_str()))
            .collect();
        lines.sort();
        let mut out = String::new();
        for (k, s, a) in lines {
            out.push_str(&format!("{s} {k} {a}\n"));
        }
        out
    }

    pub fn parse(inst: &MdpInstance, text: &str) -> Result<Policy> {
        let mut pi = Policy::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(err(format!("expected `state step action`, got {line:?}")));
            }
            let s = inst.state_index(f[0]).ok_or_else(|| err(format!("unknown state {}", f[0])))?;
            let k: usize = f[1].parse().map_err(|_| err(format!("bad step {}", f[1])))?;
            let a = inst.action_index(f[2]).ok_or_else(|| err(format!("unknown action {}", f[2])))?;
            if pi.insert(k, s, a).is_some() {
                return Err(err(format!("duplicate assignment for ({}, {k})", f[0])));
            }
        }
        Ok(pi)
    }
}
