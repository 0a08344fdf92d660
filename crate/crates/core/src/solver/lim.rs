//! Allocation enumeration for instances with disjoint transitions and a small
//! branching factor.

use rayon::prelude::*;

use super::{combine, terminal_tables, Cell, ClusterTable, DpTable, Partition, Prepared};
use crate::discretize::round_down;
use crate::layers::LayeredGraph;
use crate::mdp::MdpInstance;

struct Entry {
    er: f64,
    seq: u64,
    alloc: Vec<usize>,
}

fn state_table(inst: &MdpInstance, g: &LayeredGraph, prep: &Prepared, k: usize, o: usize, next: &[ClusterTable]) -> ClusterTable {
    let s = g.state(k, o);
    let grid = prep.grids[k];
    let step_next = prep.grids[k + 1].step;
    let mut best: Vec<Option<(f64, usize, Vec<usize>)>> = vec![None; grid.count];

    for a in prep.mask.allowed_actions(s) {
        let edges = g.succ(k, o, a);
        let opts: Vec<Vec<(usize, f64)>> = edges
            .iter()
            .map(|&(t, _)| {
                next[t]
                    .cells
                    .iter()
                    .enumerate()
                    .filter_map(|(l, c)| c.as_ref().map(|c| (l, c.er[0])))
                    .collect()
            })
            .collect();
        if opts.iter().any(|v| v.is_empty()) {
            continue;
        }
        let u = inst.utility[s][a];

        let mut bucket: Vec<Option<Entry>> = (0..grid.count).map(|_| None).collect();
        let mut idx = vec![0usize; edges.len()];
        let mut seq = 0u64;
        loop {
            let mut val = 0.0;
            let mut risk = 0.0;
            for (i, &(_, p)) in edges.iter().enumerate() {
                let (l, er) = opts[i][idx[i]];
                val += p * (l as f64 * step_next);
                risk += p * er;
            }
            let vbar = round_down(val + u, grid.step).min(grid.max_index());
            let er = combine(inst, s, a, risk);
            if bucket[vbar].as_ref().map_or(true, |e| er < e.er) {
                let alloc = idx.iter().enumerate().map(|(i, &j)| opts[i][j].0).collect();
                bucket[vbar] = Some(Entry { er, seq, alloc });
            }
            seq += 1;
            let mut i = edges.len();
            let done = loop {
                if i == 0 {
                    break true;
                }
                i -= 1;
                idx[i] += 1;
                if idx[i] < opts[i].len() {
                    break false;
                }
                idx[i] = 0;
            };
            if done {
                break;
            }
        }

        // Entry for l: best over all buckets with grid value >= l.
        let mut run: Option<&Entry> = None;
        for l in (0..grid.count).rev() {
            if let Some(e) = &bucket[l] {
                if run.map_or(true, |r| e.er < r.er || (e.er == r.er && e.seq < r.seq)) {
                    run = Some(e);
                }
            }
            if let Some(r) = run {
                if best[l].as_ref().map_or(true, |b| r.er < b.0) {
                    best[l] = Some((r.er, a, r.alloc.clone()));
                }
            }
        }
    }

    let cells = best
        .into_iter()
        .map(|b| {
            b.map(|(er, a, alloc)| Cell {
                er: vec![er],
                actions: vec![a],
                picks: g.succ(k, o, a).iter().map(|e| e.0).zip(alloc).collect(),
            })
        })
        .collect();
    ClusterTable { members: vec![o], count: grid.count, cells }
}

pub(super) fn fill(inst: &MdpInstance, g: &LayeredGraph, prep: &Prepared) -> DpTable {
    let h = inst.horizon;
    let part = Partition::singletons(g);
    let mut levels: Vec<Vec<ClusterTable>> = vec![Vec::new(); h + 1];
    levels[h] = terminal_tables(inst, g, &part);
    for k in (0..h).rev() {
        let next = &levels[k + 1];
        let cur: Vec<ClusterTable> = (0..g.levels[k].len())
            .into_par_iter()
            .map(|o| state_table(inst, g, prep, k, o, next))
            .collect();
        levels[k] = cur;
    }
    DpTable {
        grids: prep.grids.clone(),
        partition: part,
        levels,
        mode: inst.mode,
        u_max: prep.u_max,
    }
}
