//! Knapsack reduction of the allocation step for disjoint transitions.

use rayon::prelude::*;

use super::{combine, terminal_tables, Cell, ClusterTable, DpTable, Partition, Prepared};
use crate::discretize::round_up;
use crate::knapsack::{Choice, McTable};
use crate::layers::LayeredGraph;
use crate::mdp::MdpInstance;
use crate::{Error, Result};

fn state_table(
    inst: &MdpInstance,
    g: &LayeredGraph,
    prep: &Prepared,
    k: usize,
    o: usize,
    next: &[ClusterTable],
    rounding: f64,
) -> Result<ClusterTable> {
    let s = g.state(k, o);
    let grid = prep.grids[k];
    let step_next = prep.grids[k + 1].step;
    let mut best: Vec<Option<Cell>> = vec![None; grid.count];

    for a in prep.mask.allowed_actions(s) {
        let edges = g.succ(k, o, a);
        let mut ells: Vec<Vec<usize>> = Vec::with_capacity(edges.len());
        let mut cats: Vec<Vec<Choice>> = Vec::with_capacity(edges.len());
        for &(t, p) in edges {
            let mut e = Vec::new();
            let mut c = Vec::new();
            for (l, cell) in next[t].cells.iter().enumerate() {
                if let Some(cell) = cell {
                    e.push(l);
                    c.push(Choice { weight: p * cell.er[0], value: vec![p * (l as f64 * step_next)] });
                }
            }
            ells.push(e);
            cats.push(c);
        }
        if cats.iter().any(|c| c.is_empty()) {
            continue;
        }
        let u = inst.utility[s][a];
        let top = round_up(grid.value(grid.max_index()) - u, rounding);
        let table = McTable::build(&cats, rounding, top);
        for (l, slot) in best.iter_mut().enumerate() {
            let alloc = match table.allocate(&cats, grid.value(l) - u) {
                Ok(x) => x,
                Err(Error::DemandUnsatisfiable) => continue,
                Err(e) => return Err(e),
            };
            let er = combine(inst, s, a, alloc.total_weight);
            if slot.as_ref().map_or(true, |c| er < c.er[0]) {
                let picks = edges
                    .iter()
                    .zip(&alloc.chosen)
                    .enumerate()
                    .map(|(i, (&(t, _), &j))| (t, ells[i][j]))
                    .collect();
                *slot = Some(Cell { er: vec![er], actions: vec![a], picks });
            }
        }
    }
    Ok(ClusterTable { members: vec![o], count: grid.count, cells: best })
}

pub(super) fn fill(inst: &MdpInstance, g: &LayeredGraph, prep: &Prepared) -> Result<DpTable> {
    let h = inst.horizon;
    let part = Partition::singletons(g);
    let gamma = g.gamma.max(1) as f64;
    let mut levels: Vec<Vec<ClusterTable>> = vec![Vec::new(); h + 1];
    levels[h] = terminal_tables(inst, g, &part);
    for k in (0..h).rev() {
        let rounding = prep.grids[k].step / gamma;
        let next = &levels[k + 1];
        let cur = (0..g.levels[k].len())
            .into_par_iter()
            .map(|o| state_table(inst, g, prep, k, o, next, rounding))
            .collect::<Result<Vec<_>>>()?;
        levels[k] = cur;
    }
    Ok(DpTable {
        grids: prep.grids.clone(),
        partition: part,
        levels,
        mode: inst.mode,
        u_max: prep.u_max,
    })
}
