//! Time-layered And-Or graph: reachable state sets per step, successor sets,
//! reachability into the last level, clusters, and the measured `gamma` /
//! `psi` constants.

use std::collections::{BTreeSet, HashMap};

use petgraph::unionfind::UnionFind;

use crate::mdp::{ActionId, MdpInstance, StateId};

/// Successor `(ordinal at level k+1, probability)`.
pub type Edge = (usize, f64);

#[derive(Clone, Debug)]
pub struct LayeredGraph {
    /// `levels[k]` holds the states reachable at step `k`, sorted by id.
    pub levels: Vec<Vec<StateId>>,
    ordinal: Vec<HashMap<StateId, usize>>,
    /// `successors[k][ord][a]`, sorted by successor ordinal, positive
    /// probabilities only. Empty at level `h`.
    pub successors: Vec<Vec<Vec<Vec<Edge>>>>,
    /// `reach[k][ord]`: sorted ordinals of level-`h` states reachable from the
    /// state.
    pub reach: Vec<Vec<Vec<usize>>>,
    /// `clusters[k]`: partition of level `k` into sorted ordinal lists,
    /// ordered by smallest member.
    pub clusters: Vec<Vec<Vec<usize>>>,
    /// `cluster_of[k][ord]`: index into `clusters[k]`.
    pub cluster_of: Vec<Vec<usize>>,
    /// `position[k][ord]`: position of the state inside its cluster.
    pub position: Vec<Vec<usize>>,
    /// Largest successor set over all reachable (state, action) pairs.
    pub gamma: usize,
    /// Largest number of same-level states (the state itself included) whose
    /// reach sets intersect a given state's.
    pub psi_inclusive: usize,
    /// As `psi_inclusive`, excluding the state itself.
    pub psi_exclusive: usize,
}

impl LayeredGraph {
    pub fn horizon(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn ordinal(&self, k: usize, s: StateId) -> Option<usize> {
        self.ordinal.get(k)?.get(&s).copied()
    }

    pub fn state(&self, k: usize, ord: usize) -> StateId {
        self.levels[k][ord]
    }

    pub fn succ(&self, k: usize, ord: usize, a: ActionId) -> &[Edge] {
        &self.successors[k][ord][a]
    }

    /// True when no two same-level states share reachable futures.
    pub fn is_disjoint(&self) -> bool {
        self.max_cluster_size() <= 1
    }

    pub fn max_cluster_size(&self) -> usize {
        self.clusters
            .iter()
            .flatten()
            .map(Vec::len)
            .max()
            .unwrap_or(1)
    }

    /// Number of reachable (state, step) pairs with a decision, i.e. `k < h`.
    pub fn decision_pairs(&self) -> usize {
        self.levels[..self.horizon()].iter().map(Vec::len).sum()
    }

    /// Reachable level-`h` ordinals found by depth-first search, independent
    /// of the stored backward recursion.
    pub fn reach_by_search(&self, k: usize, ord: usize) -> Vec<usize> {
        let h = self.horizon();
        let mut out = BTreeSet::new();
        let mut seen = BTreeSet::new();
        let mut stack = vec![(k, ord)];
        while let Some((l, o)) = stack.pop() {
            if !seen.insert((l, o)) {
                continue;
            }
            if l == h {
                out.insert(o);
                continue;
            }
            for edges in &self.successors[l][o] {
                for &(t, _) in edges {
                    stack.push((l + 1, t));
                }
            }
        }
        out.into_iter().collect()
    }
}

fn intersects(a: &[usize], b: &[usize]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

fn union_sorted(into: &mut Vec<usize>, other: &[usize]) {
    if other.is_empty() {
        return;
    }
    let mut merged = Vec::with_capacity(into.len() + other.len());
    let (mut i, mut j) = (0, 0);
    while i < into.len() || j < other.len() {
        let next = match (into.get(i), other.get(j)) {
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(&x), Some(&y)) if x > y => {
                j += 1;
                y
            }
            (Some(&x), Some(_)) => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        merged.push(next);
    }
    *into = merged;
}

/// Build the layered graph of a validated instance.
pub fn build_layers(inst: &MdpInstance) -> LayeredGraph {
    let h = inst.horizon;
    let m = inst.n_actions();

    let mut levels: Vec<Vec<StateId>> = vec![vec![inst.initial]];
    for k in 0..h {
        let mut next = BTreeSet::new();
        for &s in &levels[k] {
            for a in 0..m {
                next.extend(inst.transitions[s][a].iter().filter(|(_, p)| *p > 0.0).map(|(t, _)| *t));
            }
        }
        levels.push(next.into_iter().collect());
    }
    let ordinal: Vec<HashMap<StateId, usize>> = levels
        .iter()
        .map(|lv| lv.iter().enumerate().map(|(o, &s)| (s, o)).collect())
        .collect();

    let mut gamma = 0;
    let mut successors = Vec::with_capacity(h + 1);
    for k in 0..=h {
        let mut lv = Vec::with_capacity(levels[k].len());
        for &s in &levels[k] {
            let mut per_action = Vec::with_capacity(m);
            for a in 0..m {
                let mut edges: Vec<Edge> = if k < h {
                    inst.transitions[s][a]
                        .iter()
                        .filter(|(_, p)| *p > 0.0)
                        .map(|&(t, p)| (ordinal[k + 1][&t], p))
                        .collect()
                } else {
                    Vec::new()
                };
                edges.sort_by_key(|e| e.0);
                gamma = gamma.max(edges.len());
                per_action.push(edges);
            }
            lv.push(per_action);
        }
        successors.push(lv);
    }

    // Reach(s_h) = {s_h}; Reach(s_k) = union of successors' reach sets.
    let mut reach: Vec<Vec<Vec<usize>>> = vec![Vec::new(); h + 1];
    reach[h] = (0..levels[h].len()).map(|o| vec![o]).collect();
    for k in (0..h).rev() {
        let mut lv = Vec::with_capacity(levels[k].len());
        for o in 0..levels[k].len() {
            let mut r = Vec::new();
            for edges in &successors[k][o] {
                for &(t, _) in edges {
                    union_sorted(&mut r, &reach[k + 1][t]);
                }
            }
            lv.push(r);
        }
        reach[k] = lv;
    }

    let mut psi_exclusive = 0;
    let mut clusters = Vec::with_capacity(h + 1);
    let mut cluster_of = Vec::with_capacity(h + 1);
    let mut position = Vec::with_capacity(h + 1);
    for k in 0..=h {
        let n = levels[k].len();
        let mut uf = UnionFind::<usize>::new(n);
        let mut overlap = vec![0usize; n];
        let next_sets: Vec<Vec<usize>> = (0..n)
            .map(|o| {
                let mut v: Vec<usize> = successors[k][o].iter().flatten().map(|e| e.0).collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let shared_reach = intersects(&reach[k][i], &reach[k][j]);
                if shared_reach {
                    overlap[i] += 1;
                    overlap[j] += 1;
                }
                if shared_reach || intersects(&next_sets[i], &next_sets[j]) {
                    uf.union(i, j);
                }
            }
        }
        psi_exclusive = psi_exclusive.max(overlap.iter().copied().max().unwrap_or(0));

        let mut by_root: HashMap<usize, usize> = HashMap::new();
        let mut cl: Vec<Vec<usize>> = Vec::new();
        let mut of = vec![0; n];
        for o in 0..n {
            let root = uf.find(o);
            let idx = *by_root.entry(root).or_insert_with(|| {
                cl.push(Vec::new());
                cl.len() - 1
            });
            cl[idx].push(o);
            of[o] = idx;
        }
        let mut pos = vec![0; n];
        for members in &cl {
            for (p, &o) in members.iter().enumerate() {
                pos[o] = p;
            }
        }
        clusters.push(cl);
        cluster_of.push(of);
        position.push(pos);
    }

    LayeredGraph {
        levels,
        ordinal,
        successors,
        reach,
        clusters,
        cluster_of,
        position,
        gamma,
        psi_inclusive: psi_exclusive + 1,
        psi_exclusive,
    }
}
