//! Multiple-choice minimum knapsack: pick one choice per category so that the
//! total value covers a demand at minimum total weight.
//!
//! Values are rounded down to multiples of a rounding factor and the cover
//! table `TB(i, rho)` (least weight whose rounded value reaches `rho` using
//! categories `1..=i`) is filled over integer indices. A table can be queried
//! for any demand up to the bound it was built for.

use std::collections::HashMap;

use crate::discretize::{round_down, round_up};
use crate::{Error, Result};

pub const DEFAULT_DIM_CAP: usize = 3;

/// Largest number of allocations [`exact_mcminks`] will enumerate.
pub const EXACT_LIMIT: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub weight: f64,
    /// One entry per dimension.
    pub value: Vec<f64>,
}

impl Choice {
    pub fn scalar(weight: f64, value: f64) -> Self {
        Choice { weight, value: vec![value] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnapsackInstance {
    pub categories: Vec<Vec<Choice>>,
    /// One demand per dimension.
    pub demand: Vec<f64>,
    pub rounding: f64,
    pub dim_cap: usize,
}

impl KnapsackInstance {
    pub fn new(categories: Vec<Vec<Choice>>, demand: Vec<f64>, rounding: f64) -> Self {
        KnapsackInstance { categories, demand, rounding, dim_cap: DEFAULT_DIM_CAP }
    }

    /// Scalar instance from `(weight, value)` pairs.
    pub fn scalar(categories: &[&[(f64, f64)]], demand: f64, rounding: f64) -> Self {
        let cats = categories
            .iter()
            .map(|c| c.iter().map(|&(w, v)| Choice::scalar(w, v)).collect())
            .collect();
        Self::new(cats, vec![demand], rounding)
    }

    pub fn dims(&self) -> usize {
        self.demand.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        if d == 0 {
            return Err(Error::InvalidArgument("knapsack needs at least one dimension".into()));
        }
        if d > self.dim_cap {
            return Err(Error::DimensionCapExceeded { dim: d, cap: self.dim_cap });
        }
        if !(self.rounding > 0.0) || !self.rounding.is_finite() {
            return Err(Error::InvalidArgument(format!("rounding factor must be positive, got {}", self.rounding)));
        }
        if self.demand.iter().any(|x| x.is_nan()) {
            return Err(Error::InvalidArgument("demand is NaN".into()));
        }
        for (i, cat) in self.categories.iter().enumerate() {
            if cat.is_empty() {
                return Err(Error::InvalidArgument(format!("category {i} has no choices")));
            }
            for ch in cat {
                if ch.value.len() != d {
                    return Err(Error::InvalidArgument(format!(
                        "category {i}: value has {} dimensions, demand has {d}",
                        ch.value.len()
                    )));
                }
                let bad = |x: f64| !(x >= 0.0) || !x.is_finite();
                if bad(ch.weight) || ch.value.iter().any(|&v| bad(v)) {
                    return Err(Error::InvalidArgument(format!("category {i}: negative or non-finite entry")));
                }
            }
        }
        Ok(())
    }

    /// Grid index each demand must reach.
    fn targets(&self) -> Vec<usize> {
        self.demand.iter().map(|&x| round_up(x, self.rounding)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Allocation {
    /// Choice index per category.
    pub chosen: Vec<usize>,
    pub total_weight: f64,
    /// Sum of rounded chosen values, per dimension.
    pub rho: Vec<f64>,
    /// Sum of unrounded chosen values, per dimension.
    pub true_value: Vec<f64>,
}

fn summarize(categories: &[Vec<Choice>], chosen: Vec<usize>, total_weight: f64, rounding: f64) -> Allocation {
    let d = categories.first().map_or(0, |c| c[0].value.len());
    let mut rho_idx = vec![0usize; d];
    let mut true_value = vec![0.0; d];
    for (cat, &j) in categories.iter().zip(&chosen) {
        for c in 0..d {
            rho_idx[c] += round_down(cat[j].value[c], rounding);
            true_value[c] += cat[j].value[c];
        }
    }
    Allocation {
        chosen,
        total_weight,
        rho: rho_idx.iter().map(|&i| i as f64 * rounding).collect(),
        true_value,
    }
}

/// Choice indices worth scanning: among choices with equal rounded values only
/// the lightest (earliest on ties) can win under ascending strict comparison.
fn representatives<K: std::hash::Hash + Eq>(cat: &[Choice], key: impl Fn(usize) -> K) -> Vec<usize> {
    let mut rep: HashMap<K, usize> = HashMap::with_capacity(cat.len());
    for j in 0..cat.len() {
        rep.entry(key(j))
            .and_modify(|r| {
                if cat[j].weight < cat[*r].weight {
                    *r = j;
                }
            })
            .or_insert(j);
    }
    let mut out: Vec<usize> = rep.into_values().collect();
    out.sort_unstable();
    out
}

/// Scalar cover table.
#[derive(Clone, Debug)]
pub struct McTable {
    vbar: Vec<Vec<usize>>,
    last: Vec<Option<f64>>,
    alc: Vec<Vec<u32>>,
    rounding: f64,
}

impl McTable {
    /// Fill `TB(i, rho)` for `rho` in `0..=max_target`. `TB(0, 0) = 0` and
    /// `TB(0, rho > 0)` is unreachable.
    pub fn build(categories: &[Vec<Choice>], rounding: f64, max_target: usize) -> Self {
        let vbar: Vec<Vec<usize>> = categories
            .iter()
            .map(|cat| cat.iter().map(|ch| round_down(ch.value[0], rounding)).collect())
            .collect();
        let width = max_target + 1;
        let mut prev: Vec<Option<f64>> = vec![None; width];
        prev[0] = Some(0.0);
        let mut alc = Vec::with_capacity(categories.len());
        for (cat, vb) in categories.iter().zip(&vbar) {
            let mut cur: Vec<Option<f64>> = vec![None; width];
            let mut arg = vec![0u32; width];
            let reps = representatives(cat, |j| vb[j]);
            for rho in 0..width {
                let mut best: Option<f64> = None;
                for &j in &reps {
                    let ch = &cat[j];
                    if let Some(w) = prev[rho.saturating_sub(vb[j])] {
                        let cand = w + ch.weight;
                        if best.map_or(true, |b| cand < b) {
                            best = Some(cand);
                            arg[rho] = j as u32;
                        }
                    }
                }
                cur[rho] = best;
            }
            alc.push(arg);
            prev = cur;
        }
        McTable { vbar, last: prev, alc, rounding }
    }

    pub fn max_target(&self) -> usize {
        self.last.len() - 1
    }

    /// Least-weight entry at the smallest grid point covering `demand`.
    pub fn allocate(&self, categories: &[Vec<Choice>], demand: f64) -> Result<Allocation> {
        let t = round_up(demand, self.rounding);
        if t > self.max_target() {
            return Err(Error::InvalidArgument(format!(
                "demand index {t} beyond table bound {}",
                self.max_target()
            )));
        }
        let weight = self.last[t].ok_or(Error::DemandUnsatisfiable)?;
        let n = self.alc.len();
        let mut chosen = vec![0; n];
        let mut rho = t;
        for i in (0..n).rev() {
            let j = self.alc[i][rho] as usize;
            chosen[i] = j;
            rho = rho.saturating_sub(self.vbar[i][j]);
        }
        Ok(summarize(categories, chosen, weight, self.rounding))
    }
}

/// Vector-valued cover table, stored flat in row-major order over
/// `(rho^1, ..., rho^d)`.
#[derive(Clone, Debug)]
pub struct MultiTable {
    vbar: Vec<Vec<Vec<usize>>>,
    bounds: Vec<usize>,
    strides: Vec<usize>,
    last: Vec<Option<f64>>,
    alc: Vec<Vec<u32>>,
    rounding: f64,
}

impl MultiTable {
    pub fn build(categories: &[Vec<Choice>], rounding: f64, max_target: &[usize]) -> Result<Self> {
        let d = max_target.len();
        if d == 0 {
            return Err(Error::InvalidArgument("knapsack table needs at least one dimension".into()));
        }
        let bounds: Vec<usize> = max_target.iter().map(|&t| t + 1).collect();
        let mut strides = vec![1usize; d];
        for c in (0..d.saturating_sub(1)).rev() {
            strides[c] = strides[c + 1] * bounds[c + 1];
        }
        let size = bounds
            .iter()
            .try_fold(1usize, |acc, &b| acc.checked_mul(b))
            .filter(|&s| s <= 1 << 28)
            .ok_or_else(|| Error::TooLarge(format!("knapsack table with bounds {bounds:?}")))?;
        let vbar: Vec<Vec<Vec<usize>>> = categories
            .iter()
            .map(|cat| {
                cat.iter()
                    .map(|ch| ch.value.iter().map(|&v| round_down(v, rounding)).collect())
                    .collect()
            })
            .collect();

        // Unreachable entries are infinite; `inf + w` stays infinite and never
        // wins a strict comparison, matching the scalar table.
        let mut prev = vec![f64::INFINITY; size];
        prev[0] = 0.0;
        let mut alc = Vec::with_capacity(categories.len());
        let last_dim = d - 1;
        let row_len = bounds[last_dim];
        let rows = size / row_len;
        let mut prefix = vec![0usize; last_dim];
        for (cat, vb) in categories.iter().zip(&vbar) {
            let mut cur = vec![f64::INFINITY; size];
            let mut arg = vec![0u32; size];
            // Values beyond the table bound cover the same targets as the bound.
            let reps = representatives(cat, |j| {
                vb[j].iter().zip(&bounds).map(|(&v, &b)| v.min(b)).collect::<Vec<_>>()
            });
            for &j in &reps {
                let w = cat[j].weight;
                let v = vb[j][last_dim].min(row_len);
                prefix.iter_mut().for_each(|x| *x = 0);
                for r in 0..rows {
                    let dst = r * row_len;
                    let src: usize = (0..last_dim).map(|c| prefix[c].saturating_sub(vb[j][c]) * strides[c]).sum();
                    let cur_row = &mut cur[dst..dst + row_len];
                    let arg_row = &mut arg[dst..dst + row_len];
                    let base = prev[src] + w;
                    for x in 0..v {
                        if base < cur_row[x] {
                            cur_row[x] = base;
                            arg_row[x] = j as u32;
                        }
                    }
                    let src_row = &prev[src..src + row_len - v];
                    for ((c, a), &p) in cur_row[v..].iter_mut().zip(&mut arg_row[v..]).zip(src_row) {
                        let cand = p + w;
                        if cand < *c {
                            *c = cand;
                            *a = j as u32;
                        }
                    }
                    for c in (0..last_dim).rev() {
                        prefix[c] += 1;
                        if prefix[c] < bounds[c] {
                            break;
                        }
                        prefix[c] = 0;
                    }
                }
            }
            alc.push(arg);
            prev = cur;
        }
        let last = prev.into_iter().map(|w| if w.is_finite() { Some(w) } else { None }).collect();
        Ok(MultiTable { vbar, bounds, strides, last, alc, rounding })
    }

    pub fn allocate(&self, categories: &[Vec<Choice>], demand: &[f64]) -> Result<Allocation> {
        let t: Vec<usize> = demand.iter().map(|&x| round_up(x, self.rounding)).collect();
        self.allocate_index(categories, &t)
    }

    /// Query by target grid indices.
    pub fn allocate_index(&self, categories: &[Vec<Choice>], target: &[usize]) -> Result<Allocation> {
        if target.len() != self.bounds.len() || target.iter().zip(&self.bounds).any(|(&t, &b)| t >= b) {
            return Err(Error::InvalidArgument(format!(
                "demand indices {target:?} beyond table bounds {:?}",
                self.bounds
            )));
        }
        let flat = |r: &[usize]| -> usize { r.iter().zip(&self.strides).map(|(x, s)| x * s).sum() };
        let weight = self.last[flat(target)].ok_or(Error::DemandUnsatisfiable)?;
        let n = self.alc.len();
        let mut chosen = vec![0; n];
        let mut rho = target.to_vec();
        for i in (0..n).rev() {
            let j = self.alc[i][flat(&rho)] as usize;
            chosen[i] = j;
            for (r, &v) in rho.iter_mut().zip(&self.vbar[i][j]) {
                *r = r.saturating_sub(v);
            }
        }
        Ok(summarize(categories, chosen, weight, self.rounding))
    }

    /// Least weight covering `target`, without backtracking.
    pub fn weight_at(&self, target: &[usize]) -> Option<f64> {
        let flat: usize = target.iter().zip(&self.strides).map(|(x, s)| x * s).sum();
        self.last[flat]
    }
}

/// Rounded dynamic program for a scalar instance.
pub fn solve_mcminks(inst: &KnapsackInstance) -> Result<Allocation> {
    inst.validate()?;
    if inst.dims() != 1 {
        return Err(Error::InvalidArgument(format!("expected a scalar instance, got {} dimensions", inst.dims())));
    }
    let t = inst.targets()[0];
    McTable::build(&inst.categories, inst.rounding, t).allocate(&inst.categories, inst.demand[0])
}

/// Rounded dynamic program for a vector-valued instance.
pub fn solve_mmcminks(inst: &KnapsackInstance) -> Result<Allocation> {
    inst.validate()?;
    let t = inst.targets();
    MultiTable::build(&inst.categories, inst.rounding, &t)?.allocate_index(&inst.categories, &t)
}

/// Exhaustive search over all allocations on unrounded values; ties go to
/// the lexicographically smallest allocation.
pub fn exact_mcminks(inst: &KnapsackInstance) -> Result<Allocation> {
    inst.validate()?;
    let total: f64 = inst.categories.iter().map(|c| c.len() as f64).product();
    if total > EXACT_LIMIT {
        return Err(Error::TooLarge(format!("{total} allocations")));
    }
    let n = inst.categories.len();
    let d = inst.dims();
    let mut idx = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut w = 0.0;
        let mut v = vec![0.0; d];
        for (cat, &j) in inst.categories.iter().zip(&idx) {
            w += cat[j].weight;
            for c in 0..d {
                v[c] += cat[j].value[c];
            }
        }
        let covers = v.iter().zip(&inst.demand).all(|(x, dem)| x >= dem);
        if covers && best.as_ref().map_or(true, |(bw, _)| w < *bw) {
            best = Some((w, idx.clone()));
        }
        let mut i = n;
        loop {
            if i == 0 {
                let (w, chosen) = best.ok_or(Error::DemandUnsatisfiable)?;
                return Ok(summarize(&inst.categories, chosen, w, inst.rounding));
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < inst.categories[i].len() {
                break;
            }
            idx[i] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two(demand: f64) -> KnapsackInstance {
        KnapsackInstance::scalar(&[&[(1.0, 5.0), (3.0, 9.0)], &[(2.0, 4.0), (4.0, 8.0)]], demand, 1.0)
    }

    #[test]
    fn forced_single_choice() {
        let inst = KnapsackInstance::scalar(&[&[(1.0, 5.0)]], 5.0, 1.0);
        let a = solve_mcminks(&inst).unwrap();
        assert_eq!(a.chosen, vec![0]);
        assert_eq!(a.total_weight, 1.0);
        assert_eq!(a.rho, vec![5.0]);
    }

    #[test]
    fn two_categories() {
        let inst = two_by_two(12.0);
        let a = solve_mcminks(&inst).unwrap();
        assert_eq!(a.total_weight, 5.0);
        assert!(a.true_value[0] >= 10.0);
        let e = exact_mcminks(&inst).unwrap();
        assert_eq!(e.total_weight, 5.0);
        assert_eq!(e.chosen, vec![0, 1]);
    }

    #[test]
    fn unsatisfiable_demand() {
        let inst = two_by_two(18.0);
        assert!(matches!(solve_mcminks(&inst), Err(Error::DemandUnsatisfiable)));
        assert!(matches!(exact_mcminks(&inst), Err(Error::DemandUnsatisfiable)));
    }

    #[test]
    fn zero_demand_takes_lightest() {
        let inst = two_by_two(0.0);
        let e = exact_mcminks(&inst).unwrap();
        assert_eq!(e.chosen, vec![0, 0]);
        assert_eq!(e.total_weight, 3.0);
        assert_eq!(solve_mcminks(&inst).unwrap().chosen, vec![0, 0]);
    }

    #[test]
    fn negative_demand_is_vacuous() {
        let inst = two_by_two(-4.0);
        assert_eq!(solve_mcminks(&inst).unwrap().total_weight, 3.0);
    }

    #[test]
    fn two_dimensional() {
        let cats = vec![vec![
            Choice { weight: 1.0, value: vec![3.0, 3.0] },
            Choice { weight: 2.0, value: vec![5.0, 5.0] },
        ]];
        let inst = KnapsackInstance::new(cats.clone(), vec![4.0, 4.0], 1.0);
        let a = solve_mmcminks(&inst).unwrap();
        assert_eq!(a.chosen, vec![1]);
        assert_eq!(a.total_weight, 2.0);

        let only_second = vec![vec![Choice { weight: 1.0, value: vec![0.0, 9.0] }]];
        let inst = KnapsackInstance::new(only_second, vec![4.0, 0.0], 1.0);
        assert!(matches!(solve_mmcminks(&inst), Err(Error::DemandUnsatisfiable)));
    }

    #[test]
    fn dimension_cap() {
        let cats = vec![vec![Choice { weight: 1.0, value: vec![1.0; 4] }]];
        let inst = KnapsackInstance::new(cats, vec![0.0; 4], 1.0);
        assert!(matches!(solve_mmcminks(&inst), Err(Error::DimensionCapExceeded { dim: 4, cap: 3 })));
    }

    #[test]
    fn invalid_inputs() {
        let mut inst = two_by_two(1.0);
        inst.rounding = 0.0;
        assert!(solve_mcminks(&inst).is_err());
        let inst = KnapsackInstance::scalar(&[&[]], 1.0, 1.0);
        assert!(solve_mcminks(&inst).is_err());
    }

    #[test]
    fn table_answers_smaller_demands() {
        let inst = two_by_two(17.0);
        let table = McTable::build(&inst.categories, 1.0, 17);
        for d in 0..=17 {
            let a = table.allocate(&inst.categories, d as f64).unwrap();
            let b = solve_mcminks(&two_by_two(d as f64)).unwrap();
            assert_eq!(a, b);
        }
        assert!(table.allocate(&inst.categories, 18.0).is_err());
    }
}
