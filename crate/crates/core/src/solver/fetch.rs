use std::collections::BTreeMap;

use super::DpTable;
use crate::layers::LayeredGraph;
use crate::mdp::{MdpInstance, Policy};
use crate::{Error, Result, FEASIBILITY_SLACK};

/// Select the largest initial grid index whose risk (or cost) fits the budget
/// and follow the recorded actions and successor cells forward. Returns the
/// policy on the states it reaches and the selected grid value.
pub fn fetch_policy(inst: &MdpInstance, g: &LayeredGraph, table: &DpTable) -> Result<(Policy, f64)> {
    let h = inst.horizon;
    let part = &table.partition;
    let root_cluster = part.cluster_of[0][0];
    let root = &table.levels[0][root_cluster];
    let root_pos = part.position[0][0];

    let chosen = root
        .cells
        .iter()
        .enumerate()
        .rev()
        .find(|(_, c)| c.as_ref().is_some_and(|c| c.er[root_pos] <= inst.budget + FEASIBILITY_SLACK))
        .map(|(idx, _)| idx)
        .ok_or_else(|| Error::Infeasible(format!("no grid value at the initial state fits budget {}", inst.budget)))?;
    let ell0 = root.coords(chosen)[root_pos];
    let value = table.grids[0].value(ell0);

    let mut policy = Policy::new();
    // Cluster -> selected cell, and the member ordinals actually reached.
    let mut frontier: BTreeMap<usize, usize> = BTreeMap::from([(root_cluster, chosen)]);
    let mut reached = vec![0usize];
    for k in 0..h {
        let mut next_frontier: BTreeMap<usize, usize> = BTreeMap::new();
        let mut next_reached = Vec::new();
        for &o in &reached {
            let q = part.cluster_of[k][o];
            let idx = frontier[&q];
            let cell = table.levels[k][q].cells[idx]
                .as_ref()
                .ok_or_else(|| Error::StructureViolation(format!("selected cell at step {k} is unreachable")))?;
            let a = cell.actions[part.position[k][o]];
            let s = g.state(k, o);
            if policy.insert(k, s, a).is_some() {
                return Err(Error::StructureViolation(format!(
                    "state {} assigned twice at step {k}",
                    inst.states[s]
                )));
            }
            for &(child, child_idx) in &cell.picks {
                match next_frontier.insert(child, child_idx) {
                    Some(prev) if prev != child_idx => {
                        return Err(Error::StructureViolation(format!(
                            "child cluster {child} at step {} given two cells",
                            k + 1
                        )))
                    }
                    _ => {}
                }
            }
            next_reached.extend(g.succ(k, o, a).iter().map(|e| e.0));
        }
        next_reached.sort_unstable();
        next_reached.dedup();
        for &t in &next_reached {
            if !next_frontier.contains_key(&part.cluster_of[k + 1][t]) {
                return Err(Error::StructureViolation(format!("no cell selected for a successor at step {}", k + 1)));
            }
        }
        frontier = next_frontier;
        reached = next_reached;
    }
    Ok((policy, value))
}
