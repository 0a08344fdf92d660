//! Dynamic programs over (state, utility grid index) tables.
//!
//! All three variants fill the same table shape: per level, per cluster of
//! states, per joint grid vector, the least execution risk (or expected cost)
//! reaching at least the indexed utility, together with the chosen actions and
//! the successor cells that realise it. `lim` and `dis` use singleton
//! clusters; `local` uses the reachability clusters of the layered graph.

mod dis;
mod fetch;
mod lim;
mod local;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::discretize::{decision_u_max, grids, trim_umax, ActionMask, GridScheme, ValueGrid};
use crate::eval::{evaluate_policy, EvalReport};
use crate::layers::LayeredGraph;
use crate::mdp::{ActionId, MdpInstance, Mode, Policy};
use crate::{Error, Result};

pub use fetch::fetch_policy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Lim,
    Dis,
    Local,
    Auto,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Lim => "lim",
            Algorithm::Dis => "dis",
            Algorithm::Local => "local",
            Algorithm::Auto => "auto",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lim" => Ok(Algorithm::Lim),
            "dis" => Ok(Algorithm::Dis),
            "local" => Ok(Algorithm::Local),
            "auto" => Ok(Algorithm::Auto),
            _ => Err(Error::InvalidArgument(format!("unknown algorithm {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub eps: f64,
    /// Largest branching factor `lim` will enumerate over.
    pub gamma_cap: usize,
    /// Largest cluster `local` accepts.
    pub cluster_cap: usize,
    pub trim_umax: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { eps: 0.1, gamma_cap: 3, cluster_cap: 3, trim_umax: true }
    }
}

impl SolverConfig {
    pub fn with_eps(eps: f64) -> Self {
        SolverConfig { eps, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub policy: Policy,
    pub eval: EvalReport,
    /// Grid value `l_0 * L_0` selected at the initial state.
    pub discretized_value: f64,
    /// Number of reachable table cells.
    pub table_cells: usize,
    pub u_max: f64,
    pub algorithm: Algorithm,
}

/// One joint table entry of a cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    /// Risk (or cost) per cluster member.
    pub er: Vec<f64>,
    /// Action per cluster member.
    pub actions: Vec<ActionId>,
    /// `(child cluster, child cell)` per category of the allocation.
    pub picks: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct ClusterTable {
    /// Ordinals of the member states.
    pub members: Vec<usize>,
    /// Grid size per member.
    pub count: usize,
    /// Row-major over the members' grid indices; `None` is unreachable.
    pub cells: Vec<Option<Cell>>,
}

impl ClusterTable {
    pub fn index(&self, ells: &[usize]) -> usize {
        ells.iter().fold(0, |acc, &l| acc * self.count + l)
    }

    pub fn coords(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.members.len()];
        for x in out.iter_mut().rev() {
            *x = idx % self.count;
            idx /= self.count;
        }
        out
    }
}

/// Partition of each level into the clusters a solver works on.
#[derive(Clone, Debug)]
pub struct Partition {
    pub clusters: Vec<Vec<Vec<usize>>>,
    pub cluster_of: Vec<Vec<usize>>,
    pub position: Vec<Vec<usize>>,
}

impl Partition {
    pub fn singletons(g: &LayeredGraph) -> Self {
        let clusters = g.levels.iter().map(|lv| (0..lv.len()).map(|o| vec![o]).collect()).collect();
        let cluster_of = g.levels.iter().map(|lv| (0..lv.len()).collect()).collect();
        let position = g.levels.iter().map(|lv| vec![0; lv.len()]).collect();
        Partition { clusters, cluster_of, position }
    }

    pub fn from_graph(g: &LayeredGraph) -> Self {
        Partition {
            clusters: g.clusters.clone(),
            cluster_of: g.cluster_of.clone(),
            position: g.position.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DpTable {
    pub grids: Vec<ValueGrid>,
    pub partition: Partition,
    pub levels: Vec<Vec<ClusterTable>>,
    pub mode: Mode,
    pub u_max: f64,
}

impl DpTable {
    pub fn reachable_cells(&self) -> usize {
        self.levels
            .iter()
            .flatten()
            .map(|t| t.cells.iter().filter(|c| c.is_some()).count())
            .sum()
    }
}

/// Grids, action mask and `U_max` shared by the variants.
pub(crate) struct Prepared {
    pub mask: ActionMask,
    pub u_max: f64,
    pub grids: Vec<ValueGrid>,
}

pub(crate) fn prepare(inst: &MdpInstance, g: &LayeredGraph, cfg: &SolverConfig, scheme: GridScheme) -> Result<Prepared> {
    crate::discretize::check_eps(cfg.eps)?;
    let (mask, u_max) = if cfg.trim_umax {
        let t = trim_umax(inst, g)?;
        (t.mask, t.u_max)
    } else {
        let mask = ActionMask::all(inst);
        let u = decision_u_max(inst, g, &mask);
        (mask, u)
    };
    let grids = grids(inst.horizon, cfg.eps, u_max, scheme)?;
    Ok(Prepared { mask, u_max, grids })
}

/// Tables at the horizon: one cell per cluster holding the terminal risk (or
/// zero cost) of every member.
pub(crate) fn terminal_tables(inst: &MdpInstance, g: &LayeredGraph, part: &Partition) -> Vec<ClusterTable> {
    let h = inst.horizon;
    part.clusters[h]
        .iter()
        .map(|members| {
            let er = members
                .iter()
                .map(|&o| match inst.mode {
                    Mode::ChanceConstrained => inst.risk[g.state(h, o)],
                    Mode::CostConstrained => 0.0,
                })
                .collect();
            ClusterTable {
                members: members.clone(),
                count: 1,
                cells: vec![Some(Cell { er, actions: Vec::new(), picks: Vec::new() })],
            }
        })
        .collect()
}

/// Risk (or cost) of taking `a` at state `s` given the expected successor
/// risk (or cost) `sum`.
#[inline]
pub(crate) fn combine(inst: &MdpInstance, s: usize, a: ActionId, sum: f64) -> f64 {
    match inst.mode {
        Mode::ChanceConstrained => {
            let r = inst.risk[s];
            r + (1.0 - r) * sum
        }
        Mode::CostConstrained => sum + inst.cost[s][a],
    }
}

fn require_disjoint(g: &LayeredGraph, name: &str) -> Result<()> {
    if g.is_disjoint() {
        Ok(())
    } else {
        Err(Error::StructureViolation(format!(
            "{name} needs disjoint transitions, found a cluster of {} states",
            g.max_cluster_size()
        )))
    }
}

pub fn table_lim(inst: &MdpInstance, g: &LayeredGraph, cfg: &SolverConfig) -> Result<DpTable> {
    require_disjoint(g, "lim")?;
    if g.gamma > cfg.gamma_cap {
        return Err(Error::StructureViolation(format!(
            "lim enumerates allocations only up to {} successors, found {}",
            cfg.gamma_cap, g.gamma
        )));
    }
    let prep = prepare(inst, g, cfg, GridScheme::OnePart)?;
    Ok(lim::fill(inst, g, &prep))
}

pub fn table_dis(inst: &MdpInstance, g: &LayeredGraph, cfg: &SolverConfig) -> Result<DpTable> {
    require_disjoint(g, "dis")?;
    let prep = prepare(inst, g, cfg, GridScheme::ThreePart)?;
    dis::fill(inst, g, &prep)
}

pub fn table_local(inst: &MdpInstance, g: &LayeredGraph, cfg: &SolverConfig) -> Result<DpTable> {
    for (k, lv) in g.clusters.iter().enumerate() {
        if let Some(big) = lv.iter().find(|c| c.len() > cfg.cluster_cap) {
            return Err(Error::ClusterTooLarge {
                level: k,
                members: big.iter().map(|&o| inst.states[g.state(k, o)].clone()).collect(),
                cap: cfg.cluster_cap,
            });
        }
    }
    let prep = prepare(inst, g, cfg, GridScheme::ThreePart)?;
    local::fill(inst, g, &prep, Partition::from_graph(g))
}

/// Same as [`table_local`] but over an explicit partition. Singleton
/// partitions reproduce [`table_dis`].
pub fn table_local_with(inst: &MdpInstance, g: &LayeredGraph, cfg: &SolverConfig, part: Partition) -> Result<DpTable> {
    let prep = prepare(inst, g, cfg, GridScheme::ThreePart)?;
    local::fill(inst, g, &prep, part)
}

fn finish(inst: &MdpInstance, g: &LayeredGraph, table: &DpTable, algorithm: Algorithm) -> Result<Solution> {
    let (policy, discretized_value) = fetch_policy(inst, g, table)?;
    let eval = evaluate_policy(inst, g, &policy)?;
    Ok(Solution {
        policy,
        eval,
        discretized_value,
        table_cells: table.reachable_cells(),
        u_max: table.u_max,
        algorithm,
    })
}

pub fn solve_lim(inst: &MdpInstance, g: &LayeredGraph, cfg: &SolverConfig) -> Result<Solution> {
    finish(inst, g, &table_lim(inst, g, cfg)?, Algorithm::Lim)
}

pub fn solve_dis(inst: &MdpInstance, g: &LayeredGraph, cfg: &SolverConfig) -> Result<Solution> {
    finish(inst, g, &table_dis(inst, g, cfg)?, Algorithm::Dis)
}

pub fn solve_local(inst: &MdpInstance, g: &LayeredGraph, cfg: &SolverConfig) -> Result<Solution> {
    finish(inst, g, &table_local(inst, g, cfg)?, Algorithm::Local)
}

/// Variant picked by [`Algorithm::Auto`]: `lim` for disjoint instances with
/// small branching, `dis` for other disjoint instances, `local` otherwise.
pub fn select_algorithm(g: &LayeredGraph, cfg: &SolverConfig) -> Algorithm {
    if !g.is_disjoint() {
        Algorithm::Local
    } else if g.gamma <= cfg.gamma_cap {
        Algorithm::Lim
    } else {
        Algorithm::Dis
    }
}

pub fn solve(inst: &MdpInstance, g: &LayeredGraph, cfg: &SolverConfig, algorithm: Algorithm) -> Result<Solution> {
    match algorithm {
        Algorithm::Lim => solve_lim(inst, g, cfg),
        Algorithm::Dis => solve_dis(inst, g, cfg),
        Algorithm::Local => solve_local(inst, g, cfg),
        Algorithm::Auto => solve(inst, g, cfg, select_algorithm(g, cfg)),
    }
}

#[cfg(test)]
mod tests;
