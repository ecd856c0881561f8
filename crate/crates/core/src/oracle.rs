//! Exact solvers used to verify the heuristics.
//!
//! [`solve_exact`] enumerates per-slot cache states depth first. The best
//! completion from a slot depends only on the state of the previous slot, so
//! completions are memoized on `(slot, previous state)`.

use std::collections::HashMap;

use thiserror::Error;

use crate::model::{
    best_recommendation_column, CachePlan, CostCurve, Instance, Relation, Solution,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleLimits {
    /// Upper bound on the product over slots of per-slot state counts.
    pub max_states: f64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self { max_states: 1e7 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("search space of about {estimate:.3e} states exceeds the limit {limit:.3e}")]
    SearchSpaceTooLarge { estimate: f64, limit: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactSolution {
    pub solution: Solution,
    pub cost: f64,
}

/// Product over slots of `prod_i (1 + |A_ti|)`.
pub fn search_space(inst: &Instance) -> f64 {
    (0..inst.num_slots)
        .flat_map(|t| (0..inst.num_contents).map(move |i| (t, i)))
        .map(|(t, i)| (inst.max_aoi(t, i) + 2) as f64)
        .product()
}

pub fn fits_oracle(inst: &Instance, limits: &OracleLimits) -> bool {
    search_space(inst) <= limits.max_states
}

type State = Vec<Option<usize>>;

struct Search<'a, F> {
    inst: &'a Instance,
    cost: F,
    memo: HashMap<(usize, State), (f64, State)>,
    slot_cost: HashMap<(usize, State), f64>,
}

impl<'a, F: FnMut(usize, &[Option<usize>]) -> f64> Search<'a, F> {
    /// States reachable in slot `t` from `prev`, contents by id, "not cached"
    /// first and AoIs ascending.
    fn successors(&self, t: usize, prev: &State) -> Vec<State> {
        let inst = self.inst;
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(inst.num_contents);
        fn rec(
            inst: &Instance,
            t: usize,
            prev: &State,
            cur: &mut State,
            cached: u64,
            downloaded: u64,
            out: &mut Vec<State>,
        ) {
            let i = cur.len();
            if i == inst.num_contents {
                out.push(cur.clone());
                return;
            }
            let s = inst.sizes[i];
            cur.push(None);
            rec(inst, t, prev, cur, cached, downloaded, out);
            cur.pop();
            if cached + s > inst.cache_capacity {
                return;
            }
            if downloaded + s <= inst.backhaul_capacity {
                cur.push(Some(0));
                rec(inst, t, prev, cur, cached + s, downloaded + s, out);
                cur.pop();
            }
            if let Some(a) = prev.get(i).copied().flatten() {
                if a < inst.max_aoi(t, i) {
                    cur.push(Some(a + 1));
                    rec(inst, t, prev, cur, cached + s, downloaded, out);
                    cur.pop();
                }
            }
        }
        rec(inst, t, prev, &mut cur, 0, 0, &mut out);
        out
    }

    fn cost_of(&mut self, t: usize, state: &State) -> f64 {
        if let Some(&c) = self.slot_cost.get(&(t, state.clone())) {
            return c;
        }
        let c = (self.cost)(t, state);
        self.slot_cost.insert((t, state.clone()), c);
        c
    }

    /// Cheapest cost of slots `t..` given the state of slot `t - 1`.
    fn best_from(&mut self, t: usize, prev: &State) -> f64 {
        if t == self.inst.num_slots {
            return 0.0;
        }
        let key = (t, prev.clone());
        if let Some((v, _)) = self.memo.get(&key) {
            return *v;
        }
        let mut best = (f64::INFINITY, Vec::new());
        for state in self.successors(t, prev) {
            let here = self.cost_of(t, &state);
            if here >= best.0 {
                continue;
            }
            let v = here + self.best_from(t + 1, &state);
            if v < best.0 {
                best = (v, state);
            }
        }
        let v = best.0;
        self.memo.insert(key, best);
        v
    }
}

/// Cost of one slot given its cache state, misses served by their best column.
pub fn slot_cost(inst: &Instance, t: usize, state: &[Option<usize>]) -> f64 {
    (0..inst.num_contents)
        .map(|i| match state[i] {
            Some(a) => inst.holding_cost(t, i, a),
            None => inst.column_cost(
                t,
                i,
                best_recommendation_column(inst, t, i, state).miss_prob,
            ),
        })
        .sum()
}

/// Cheapest feasible cache plan under a per-slot cost, which must be
/// nonnegative.
pub fn min_cost_plan(
    inst: &Instance,
    limits: &OracleLimits,
    cost: impl FnMut(usize, &[Option<usize>]) -> f64,
) -> Result<(f64, CachePlan), OracleError> {
    let estimate = search_space(inst);
    if estimate > limits.max_states {
        return Err(OracleError::SearchSpaceTooLarge {
            estimate,
            limit: limits.max_states,
        });
    }
    let mut search = Search {
        inst,
        cost,
        memo: HashMap::new(),
        slot_cost: HashMap::new(),
    };
    let start: State = vec![None; inst.num_contents];
    let value = search.best_from(0, &start);
    let mut rows = Vec::with_capacity(inst.num_slots);
    let mut prev = start;
    for t in 0..inst.num_slots {
        let state = search.memo[&(t, prev)].1.clone();
        rows.push(state.clone());
        prev = state;
    }
    Ok((value, CachePlan::from_rows(rows)))
}

pub fn solve_exact(inst: &Instance, limits: &OracleLimits) -> Result<ExactSolution, OracleError> {
    let (cost, plan) = min_cost_plan(inst, limits, |t, state| slot_cost(inst, t, state))?;
    Ok(ExactSolution {
        solution: Solution::from_plan(inst, plan),
        cost,
    })
}

/// Single-slot instance whose unit-size contents fall into categories.
#[derive(Clone, Debug, PartialEq)]
pub struct CatInstance {
    /// Request counts per content, grouped by category.
    pub categories: Vec<Vec<u64>>,
    /// Acceptance probability between categories; only the diagonal is used.
    pub accept: Vec<Vec<f64>>,
    pub cache_size: u64,
    pub cost_server: f64,
    pub cost_cache: f64,
    pub rec_limit: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CatSolution {
    pub cost: f64,
    /// Items cached per category.
    pub allocation: Vec<usize>,
    /// Number of `w` entries evaluated inside the minimization.
    pub table_fills: usize,
}

impl CatInstance {
    /// Contents of category `k`, ids in the embedded instance, most requested
    /// first (ties by id).
    fn ranked(&self, k: usize) -> Vec<usize> {
        let offset: usize = self.categories[..k].iter().map(Vec::len).sum();
        let reqs = &self.categories[k];
        let mut ids: Vec<usize> = (0..reqs.len()).collect();
        ids.sort_by(|&a, &b| reqs[b].cmp(&reqs[a]).then(a.cmp(&b)));
        ids.into_iter().map(|j| offset + j).collect()
    }

    /// `g(k, r)`: cost of category `k` when its `r` most requested items are
    /// cached and the rest are offered `min(N, r)` cached items.
    pub fn category_cost(&self, k: usize, r: usize) -> f64 {
        let reqs = &self.categories[k];
        let mut ids: Vec<usize> = (0..reqs.len()).collect();
        ids.sort_by(|&a, &b| reqs[b].cmp(&reqs[a]).then(a.cmp(&b)));
        let p = self.accept[k][k];
        let miss = (1.0 - p).powi(r.min(self.rec_limit) as i32);
        let (cb, cs) = (self.cost_cache, self.cost_server);
        ids.iter()
            .enumerate()
            .map(|(rank, &j)| {
                let h = reqs[j] as f64;
                if rank < r {
                    (cs - cb) + cb * h
                } else {
                    (cb * (1.0 - miss) + cs * miss) * h
                }
            })
            .sum()
    }

    /// The equivalent general instance: one slot, unit sizes, complete
    /// relations inside each category and none across.
    pub fn to_instance(&self) -> Instance {
        let n: usize = self.categories.iter().map(Vec::len).sum();
        let mut relations = vec![Vec::new(); n];
        let mut requests = Vec::with_capacity(n);
        let mut offset = 0;
        for (k, reqs) in self.categories.iter().enumerate() {
            let p = self.accept[k][k];
            for a in 0..reqs.len() {
                requests.push(reqs[a]);
                if p > 0.0 {
                    for b in 0..reqs.len() {
                        if a != b {
                            relations[offset + a].push(Relation {
                                content: offset + b,
                                accept: vec![p],
                            });
                        }
                    }
                }
            }
            offset += reqs.len();
        }
        Instance {
            num_contents: n,
            num_slots: 1,
            sizes: vec![1; n],
            requests: vec![requests],
            aoi_limits: vec![0; n],
            aoi_cost: vec![vec![CostCurve::linear(0.0); n]],
            relations,
            cache_capacity: self.cache_size,
            backhaul_capacity: self.cache_size,
            cost_server: self.cost_server,
            cost_cache: self.cost_cache,
            rec_limit: self.rec_limit,
        }
    }

    /// Cache plan caching the `allocation[k]` most requested items of each
    /// category.
    pub fn plan(&self, allocation: &[usize]) -> CachePlan {
        let n: usize = self.categories.iter().map(Vec::len).sum();
        let mut plan = CachePlan::empty(1, n);
        for (k, &r) in allocation.iter().enumerate() {
            for id in self.ranked(k).into_iter().take(r) {
                plan.set(0, id, Some(0));
            }
        }
        plan
    }
}

/// `w(k, s') = min_r g(k, r) + w(k - 1, s' - r)`; ties pick the smaller `r`.
pub fn solve_copra_cat(cat: &CatInstance) -> CatSolution {
    let kk = cat.categories.len();
    let cap = cat.cache_size as usize;
    let g: Vec<Vec<f64>> = (0..kk)
        .map(|k| {
            (0..=cat.categories[k].len())
                .map(|r| cat.category_cost(k, r))
                .collect()
        })
        .collect();
    // w[k][s] over the first k categories
    let mut w = vec![vec![0.0; cap + 1]; kk + 1];
    let mut choice = vec![vec![0usize; cap + 1]; kk + 1];
    let mut table_fills = 0;
    for k in 1..=kk {
        for s in 0..=cap {
            let mut best = (f64::INFINITY, 0);
            for r in 0..=s.min(cat.categories[k - 1].len()) {
                table_fills += 1;
                let v = g[k - 1][r] + w[k - 1][s - r];
                if v < best.0 {
                    best = (v, r);
                }
            }
            w[k][s] = best.0;
            choice[k][s] = best.1;
        }
    }
    let mut allocation = vec![0; kk];
    let mut s = cap;
    for k in (1..=kk).rev() {
        allocation[k - 1] = choice[k][s];
        s -= choice[k][s];
    }
    CatSolution {
        cost: w[kk][cap],
        allocation,
        table_fills,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greedy::greedy_schedule;
    use crate::model::fixtures::{flat, relate};
    use crate::model::{check_feasibility, total_cost};

    #[test]
    fn caches_a_heavily_requested_item() {
        let mut inst = flat(1, 1);
        inst.sizes = vec![2];
        inst.requests = vec![vec![10]];
        inst.cache_capacity = 2;
        inst.backhaul_capacity = 2;
        let exact = solve_exact(&inst, &OracleLimits::default()).unwrap();
        assert_eq!(exact.solution.plan.aoi(0, 0), Some(0));
        // (2-1)*2 + 1*2*10 = 22 against 2*2*10 = 40
        assert_eq!(exact.cost, 22.0);
    }

    #[test]
    fn zero_cache_serves_everything_from_server() {
        let mut inst = flat(3, 2);
        relate(&mut inst, 0, 1, 0.9);
        inst.cache_capacity = 0;
        let exact = solve_exact(&inst, &OracleLimits::default()).unwrap();
        assert_eq!(exact.cost, inst.server_only_cost());
    }

    #[test]
    fn guard_refuses_large_instances() {
        let inst = flat(30, 3);
        assert!(matches!(
            solve_exact(&inst, &OracleLimits::default()),
            Err(OracleError::SearchSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn exact_beats_greedy_and_is_feasible() {
        let mut inst = flat(4, 3);
        inst.sizes = vec![2, 1, 3, 1];
        inst.requests = vec![vec![5, 1, 3, 2], vec![1, 6, 2, 2], vec![4, 4, 0, 1]];
        inst.cache_capacity = 4;
        inst.backhaul_capacity = 2;
        relate(&mut inst, 0, 1, 0.7);
        relate(&mut inst, 2, 0, 0.6);
        relate(&mut inst, 3, 2, 0.9);
        let exact = solve_exact(&inst, &OracleLimits::default()).unwrap();
        assert!(check_feasibility(&inst, &exact.solution).is_empty());
        assert!((total_cost(&inst, &exact.solution).unwrap() - exact.cost).abs() < 1e-9);
        let greedy = total_cost(&inst, &greedy_schedule(&inst)).unwrap();
        assert!(exact.cost <= greedy + 1e-9);
    }

    fn cat(categories: Vec<Vec<u64>>, p: &[f64], cache: u64) -> CatInstance {
        let k = categories.len();
        let mut accept = vec![vec![0.0; k]; k];
        for (c, &pc) in p.iter().enumerate() {
            accept[c][c] = pc;
        }
        CatInstance {
            categories,
            accept,
            cache_size: cache,
            cost_server: 2.0,
            cost_cache: 1.0,
            rec_limit: 2,
        }
    }

    #[test]
    fn cat_zero_capacity() {
        let c = cat(vec![vec![3, 1], vec![2, 2, 5]], &[0.7, 0.8], 0);
        let sol = solve_copra_cat(&c);
        assert_eq!(sol.cost, c.category_cost(0, 0) + c.category_cost(1, 0));
        assert_eq!(sol.allocation, vec![0, 0]);
    }

    #[test]
    fn cat_single_category_fills_capacity_when_caching_pays() {
        // every cached item serves many requests, so g decreases in r
        let c = cat(vec![vec![20, 15, 12, 9, 7]], &[0.6], 3);
        let sol = solve_copra_cat(&c);
        assert_eq!(sol.allocation, vec![3]);
        // with a tiny category the whole category is cached
        let c = cat(vec![vec![20, 15]], &[0.6], 3);
        assert_eq!(solve_copra_cat(&c).allocation, vec![2]);
    }

    #[test]
    fn cat_single_category_may_leave_capacity_unused() {
        // low demand: refreshing costs more than recommending
        let c = cat(vec![vec![1, 0, 0, 0]], &[0.9], 4);
        let sol = solve_copra_cat(&c);
        let best = (0..=4)
            .map(|r| c.category_cost(0, r))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(sol.cost, best);
        assert!(sol.allocation[0] < 4);
    }

    #[test]
    fn cat_two_categories_against_enumeration() {
        let c = cat(vec![vec![9, 4, 1], vec![6, 6, 2, 1]], &[0.5, 0.85], 3);
        let sol = solve_copra_cat(&c);
        let brute = (0..=3)
            .map(|r| c.category_cost(0, r) + c.category_cost(1, 3 - r))
            .fold(f64::INFINITY, f64::min);
        // w also allows leaving capacity unused
        let relaxed = (0..=3)
            .flat_map(|a| (0..=3 - a).map(move |b| (a, b)))
            .map(|(a, b)| c.category_cost(0, a) + c.category_cost(1, b))
            .fold(f64::INFINITY, f64::min);
        assert!(sol.cost <= brute + 1e-12);
        assert!((sol.cost - relaxed).abs() < 1e-12);
        let exact = solve_exact(&c.to_instance(), &OracleLimits::default()).unwrap();
        assert!((exact.cost - sol.cost).abs() < 1e-9);
    }

    #[test]
    fn cat_plan_realizes_the_cost() {
        let c = cat(vec![vec![9, 4, 1], vec![6, 6, 2, 1]], &[0.5, 0.85], 3);
        let sol = solve_copra_cat(&c);
        let inst = c.to_instance();
        let full = Solution::from_plan(&inst, c.plan(&sol.allocation));
        assert!(check_feasibility(&inst, &full).is_empty());
        assert!((total_cost(&inst, &full).unwrap() - sol.cost).abs() < 1e-9);
    }
}
