//! Exact policy evaluation (expected utility, execution risk, expected cost)
//! and a seeded Monte Carlo estimator of the failure probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::layers::LayeredGraph;
use crate::mdp::{MdpInstance, Mode, Policy};
use crate::{Error, Result, FEASIBILITY_SLACK};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    /// Expected total utility from the initial state.
    pub value: f64,
    /// Execution risk (chance-constrained) or expected total cost.
    pub risk_or_cost: f64,
    pub feasible: bool,
}

/// Per-level lists of ordinals visited with positive probability under `pi`.
pub(crate) fn policy_reachable(
    inst: &MdpInstance,
    g: &LayeredGraph,
    pi: &Policy,
) -> Result<Vec<Vec<usize>>> {
    let h = inst.horizon;
    let mut visited = vec![Vec::new(); h + 1];
    let mut mark = vec![false; g.levels[0].len()];
    mark[0] = true;
    for k in 0..=h {
        let cur: Vec<usize> = (0..mark.len()).filter(|&o| mark[o]).collect();
        if k == h {
            visited[k] = cur;
            break;
        }
        let mut next = vec![false; g.levels[k + 1].len()];
        for &o in &cur {
            let s = g.state(k, o);
            let a = pi.get(k, s).ok_or_else(|| Error::PolicyUndefined {
                state: inst.states[s].clone(),
                step: k,
            })?;
            for &(t, _) in g.succ(k, o, a) {
                next[t] = true;
            }
        }
        visited[k] = cur;
        mark = next;
    }
    Ok(visited)
}

/// Value and risk/cost of `pi` by backward recursion over the states it
/// actually visits.
pub fn evaluate_policy(inst: &MdpInstance, g: &LayeredGraph, pi: &Policy) -> Result<EvalReport> {
    let h = inst.horizon;
    let visited = policy_reachable(inst, g, pi)?;
    let cc = inst.mode == Mode::ChanceConstrained;

    let mut value = vec![0.0; g.levels[h].len()];
    let mut rc: Vec<f64> = g.levels[h]
        .iter()
        .map(|&s| if cc { inst.risk[s] } else { 0.0 })
        .collect();
    for k in (0..h).rev() {
        let mut v_k = vec![0.0; g.levels[k].len()];
        let mut rc_k = vec![0.0; g.levels[k].len()];
        for &o in &visited[k] {
            let s = g.state(k, o);
            let a = pi.get(k, s).expect("checked by policy_reachable");
            let mut ev = 0.0;
            let mut erc = 0.0;
            for &(t, p) in g.succ(k, o, a) {
                ev += p * value[t];
                erc += p * rc[t];
            }
            v_k[o] = ev + inst.utility[s][a];
            rc_k[o] = if cc {
                let r = inst.risk[s];
                r + (1.0 - r) * erc
            } else {
                erc + inst.cost[s][a]
            };
        }
        value = v_k;
        rc = rc_k;
    }
    let risk_or_cost = rc[0];
    Ok(EvalReport {
        value: value[0],
        risk_or_cost,
        feasible: risk_or_cost <= inst.budget + FEASIBILITY_SLACK,
    })
}

const CHUNK: usize = 4096;

/// Fraction of `samples` simulated runs in which some visited state fails,
/// each state `s` failing independently with probability `r(s)`.
///
/// Samples are split into fixed-size chunks, each driven by its own ChaCha
/// stream derived from `seed`, so the estimate does not depend on the
/// number of worker threads.
pub fn simulate_risk(
    inst: &MdpInstance,
    g: &LayeredGraph,
    pi: &Policy,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    // Fail early on undefined reachable pairs rather than inside workers.
    policy_reachable(inst, g, pi)?;
    let h = inst.horizon;
    let chunks = samples.div_ceil(CHUNK);
    let failures: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(samples - c * CHUNK);
            let mut fails = 0;
            for _ in 0..n {
                let mut o = 0;
                for k in 0..=h {
                    let s = g.state(k, o);
                    if rng.gen::<f64>() < inst.risk[s] {
                        fails += 1;
                        break;
                    }
                    if k == h {
                        break;
                    }
                    let a = pi.get(k, s).expect("checked by policy_reachable");
                    let edges = g.succ(k, o, a);
                    if edges.is_empty() {
                        break;
                    }
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    o = edges[edges.len() - 1].0;
                    for &(t, p) in edges {
                        acc += p;
                        if u < acc {
                            o = t;
                            break;
                        }
                    }
                }
            }
            fails
        })
        .sum();
    Ok(failures as f64 / samples as f64)
}
