//! Cluster-joint tables for local transitions: each cluster picks a joint
//! action and one joint successor cell per child cluster through a
//! vector-valued knapsack with one demand per member.

use rayon::prelude::*;

use super::{combine, terminal_tables, Cell, ClusterTable, DpTable, Partition, Prepared};
use crate::discretize::round_up;
use crate::knapsack::{Choice, MultiTable};
use crate::layers::LayeredGraph;
use crate::mdp::{ActionId, MdpInstance};
use crate::{Error, Result};

struct Category {
    cluster: usize,
    /// Child cell index per choice.
    cells: Vec<usize>,
    /// Risk contribution to each member per choice.
    member_weight: Vec<Vec<f64>>,
    choices: Vec<Choice>,
}

#[allow(clippy::too_many_arguments)]
fn categories(
    g: &LayeredGraph,
    part: &Partition,
    k: usize,
    members: &[usize],
    actions: &[ActionId],
    next: &[ClusterTable],
    step_next: f64,
) -> Option<Vec<Category>> {
    let d = members.len();
    let mut touched: Vec<usize> = members
        .iter()
        .zip(actions)
        .flat_map(|(&o, &a)| g.succ(k, o, a).iter().map(|e| part.cluster_of[k + 1][e.0]))
        .collect();
    touched.sort_unstable();
    touched.dedup();

    let mut out = Vec::with_capacity(touched.len());
    for q in touched {
        let child = &next[q];
        let width = child.members.len();
        // tw[c][pos]: probability that member c moves to child member pos.
        let mut tw = vec![vec![0.0; width]; d];
        for (c, (&o, &a)) in members.iter().zip(actions).enumerate() {
            for &(t, p) in g.succ(k, o, a) {
                if part.cluster_of[k + 1][t] == q {
                    tw[c][part.position[k + 1][t]] = p;
                }
            }
        }
        let col: Vec<f64> = (0..width)
            .map(|pos| {
                let mut x = 0.0;
                for row in &tw {
                    x += row[pos];
                }
                x
            })
            .collect();

        let mut cat = Category { cluster: q, cells: Vec::new(), member_weight: Vec::new(), choices: Vec::new() };
        for (idx, cell) in child.cells.iter().enumerate() {
            let Some(cell) = cell else { continue };
            let ells = child.coords(idx);
            let mut weight = 0.0;
            for pos in 0..width {
                weight += col[pos] * cell.er[pos];
            }
            let mut value = vec![0.0; d];
            let mut mw = vec![0.0; d];
            for c in 0..d {
                for pos in 0..width {
                    value[c] += tw[c][pos] * (ells[pos] as f64 * step_next);
                    mw[c] += tw[c][pos] * cell.er[pos];
                }
            }
            cat.cells.push(idx);
            cat.member_weight.push(mw);
            cat.choices.push(Choice { weight, value });
        }
        if cat.choices.is_empty() {
            return None;
        }
        out.push(cat);
    }
    Some(out)
}

fn cluster_table(
    inst: &MdpInstance,
    g: &LayeredGraph,
    prep: &Prepared,
    part: &Partition,
    k: usize,
    members: &[usize],
    next: &[ClusterTable],
    rounding: f64,
) -> Result<ClusterTable> {
    let d = members.len();
    let grid = prep.grids[k];
    let step_next = prep.grids[k + 1].step;
    let states: Vec<usize> = members.iter().map(|&o| g.state(k, o)).collect();
    let allowed: Vec<Vec<ActionId>> = states.iter().map(|&s| prep.mask.allowed_actions(s).collect()).collect();
    let n_cells = grid.count.pow(d as u32);
    let mut best: Vec<Option<(f64, Cell)>> = vec![None; n_cells];
    let mut table = ClusterTable { members: members.to_vec(), count: grid.count, cells: Vec::new() };

    if allowed.iter().any(|v| v.is_empty()) {
        table.cells = vec![None; n_cells];
        return Ok(table);
    }
    let mut aidx = vec![0usize; d];
    loop {
        let actions: Vec<ActionId> = (0..d).map(|c| allowed[c][aidx[c]]).collect();
        if let Some(cats) = categories(g, part, k, members, &actions, next, step_next) {
            let utils: Vec<f64> = (0..d).map(|c| inst.utility[states[c]][actions[c]]).collect();
            let targets: Vec<usize> = utils
                .iter()
                .map(|&u| round_up(grid.value(grid.max_index()) - u, rounding))
                .collect();
            let choices: Vec<Vec<Choice>> = cats.iter().map(|c| c.choices.clone()).collect();
            let mt = MultiTable::build(&choices, rounding, &targets)?;
            for (idx, slot) in best.iter_mut().enumerate() {
                let ells = table.coords(idx);
                let demand: Vec<f64> = (0..d).map(|c| grid.value(ells[c]) - utils[c]).collect();
                let alloc = match mt.allocate(&choices, &demand) {
                    Ok(x) => x,
                    Err(Error::DemandUnsatisfiable) => continue,
                    Err(e) => return Err(e),
                };
                let er: Vec<f64> = (0..d)
                    .map(|c| {
                        let mut sum = 0.0;
                        for (cat, &j) in cats.iter().zip(&alloc.chosen) {
                            sum += cat.member_weight[j][c];
                        }
                        combine(inst, states[c], actions[c], sum)
                    })
                    .collect();
                let mut total = 0.0;
                for &x in &er {
                    total += x;
                }
                if slot.as_ref().map_or(true, |(t, _)| total < *t) {
                    let picks = cats.iter().zip(&alloc.chosen).map(|(cat, &j)| (cat.cluster, cat.cells[j])).collect();
                    *slot = Some((total, Cell { er, actions: actions.clone(), picks }));
                }
            }
        }
        let mut c = d;
        let done = loop {
            if c == 0 {
                break true;
            }
            c -= 1;
            aidx[c] += 1;
            if aidx[c] < allowed[c].len() {
                break false;
            }
            aidx[c] = 0;
        };
        if done {
            break;
        }
    }
    table.cells = best.into_iter().map(|b| b.map(|(_, c)| c)).collect();
    Ok(table)
}

pub(super) fn fill(inst: &MdpInstance, g: &LayeredGraph, prep: &Prepared, part: Partition) -> Result<DpTable> {
    let h = inst.horizon;
    let gamma = g.gamma.max(1) as f64;
    let mut levels: Vec<Vec<ClusterTable>> = vec![Vec::new(); h + 1];
    levels[h] = terminal_tables(inst, g, &part);
    for k in (0..h).rev() {
        let rounding = prep.grids[k].step / gamma;
        let next = &levels[k + 1];
        let cur = part.clusters[k]
            .par_iter()
            .map(|members| cluster_table(inst, g, prep, &part, k, members, next, rounding))
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
