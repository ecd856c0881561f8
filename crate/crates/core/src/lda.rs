//! Lagrangian decomposition driver.
//!
//! The copies `x` (trajectories, one shortest path per content) and `x'`
//! (per-slot caching LP) are tied by multipliers `lambda`. Each iteration
//! solves both families of subproblems, records the dual value `L(lambda)`,
//! periodically rounds the slot LPs and repairs them into a feasible plan, and
//! takes a Polyak subgradient step along `d = x - x'`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::colgen::{ColgenConfig, ColgenError, SlotMaster, Sp2Result};
use crate::greedy::greedy_schedule;
use crate::model::{total_cost, CachePlan, Instance, ModelError, Multipliers, Solution};
use crate::oracle::{min_cost_plan, search_space, slot_cost, OracleLimits};
use crate::sp1::{solve_sp1, Sp1Solution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LdaError {
    #[error(transparent)]
    Colgen(#[from] ColgenError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LdaParams {
    /// Iteration limit `K`.
    pub max_iterations: usize,
    /// Stop when `||d||` falls to this.
    pub eps_subgradient: f64,
    /// Stop when a step moves `lambda` by at most this.
    pub eps_multiplier: f64,
    pub eta: f64,
    /// Halve `eta` after this many iterations without a better bound.
    pub eta_patience: usize,
    pub repair_every: usize,
    /// Weight of non-rounded contents in the repair objective; derived from
    /// the instance when absent.
    pub repair_eps: Option<f64>,
    /// Solve the repair exactly when the plan space is at most this large.
    pub exact_repair: Option<OracleLimits>,
    /// Drop pooled columns unused for this many consecutive slot solves.
    pub purge_idle: Option<usize>,
    pub colgen: ColgenConfig,
}

impl Default for LdaParams {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            eps_subgradient: 1e-4,
            eps_multiplier: 1e-4,
            eta: 1.0,
            eta_patience: 10,
            repair_every: 5,
            repair_eps: None,
            exact_repair: Some(OracleLimits { max_states: 1e6 }),
            purge_idle: Some(1),
            colgen: ColgenConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ZeroSubgradient,
    SmallStep,
    GapClosed,
    IterationLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub k: usize,
    pub lagrangian: f64,
    pub lbd: f64,
    pub w_bar: f64,
    pub step: f64,
    pub d_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LdaResult {
    pub incumbent: Option<Solution>,
    pub incumbent_cost: Option<f64>,
    pub lower_bound: f64,
    pub lambda: Multipliers,
    pub iterations: usize,
    pub repairs: usize,
    pub stop: StopReason,
    pub trace: Vec<TraceRow>,
}

/// `L(lambda)`: trajectory values plus slot LP bounds at the same `lambda`.
pub fn lagrangian_value(sp1: &[Sp1Solution], sp2: &[Sp2Result]) -> f64 {
    sp1.iter().map(|s| s.value).sum::<f64>() + sp2.iter().map(|s| s.lower_bound).sum::<f64>()
}

/// `d = x - x'` in the multiplier layout.
pub fn subgradient(
    inst: &Instance,
    lambda: &Multipliers,
    sp1: &[Sp1Solution],
    sp2: &[Sp2Result],
) -> Vec<f64> {
    let mut d = vec![0.0; lambda.values.len()];
    for t in 0..inst.num_slots {
        for i in 0..inst.num_contents {
            for a in 0..=inst.max_aoi(t, i) {
                let k = lambda.layout.index(t, i, a);
                let x = if sp1[i].aoi[t] == Some(a) { 1.0 } else { 0.0 };
                d[k] = x - sp2[t].x[i][a];
            }
        }
    }
    d
}

/// `lambda + t d` with `t = eta (w_bar - l) / ||d||^2`; returns the step size.
pub fn subgradient_step(
    lambda: &Multipliers,
    d: &[f64],
    w_bar: f64,
    l: f64,
    eta: f64,
) -> (Multipliers, f64) {
    let norm2: f64 = d.iter().map(|v| v * v).sum();
    if norm2 == 0.0 || eta == 0.0 {
        return (lambda.clone(), 0.0);
    }
    let step = eta * (w_bar - l) / norm2;
    let mut next = lambda.clone();
    for (v, g) in next.values.iter_mut().zip(d) {
        *v += step * g;
    }
    (next, step)
}

const INTEGRAL_TOL: f64 = 1e-9;

/// Whether fixing the set `on` to cached leaves slot `t` feasible: it must fit
/// the cache, and contents that can only be fresh must fit the backhaul.
fn fits(inst: &Instance, t: usize, on: &[bool]) -> bool {
    let mut cached = 0;
    let mut fresh = 0;
    for (i, &c) in on.iter().enumerate() {
        if c {
            cached += inst.sizes[i];
            if inst.max_aoi(t, i) == 0 {
                fresh += inst.sizes[i];
            }
        }
    }
    cached <= inst.cache_capacity && fresh <= inst.backhaul_capacity
}

/// Rounds the slot LP: pins the variables already at one, then the largest
/// fractional one to one if it still fits and to zero otherwise, re-solving
/// until integral. Returns the row and the number of re-solves.
pub fn round_sp2(
    inst: &Instance,
    master: &SlotMaster,
    solved: &Sp2Result,
    cfg: &ColgenConfig,
) -> Result<(Vec<bool>, usize), ColgenError> {
    let t = master.slot();
    let n = inst.num_contents;
    let cfg = ColgenConfig {
        certify: false,
        trace: false,
        ..*cfg
    };
    let mut m = master.clone();
    let mut y = solved.y.clone();
    let mut resolves = 0;
    loop {
        let frac: Vec<usize> = (0..n)
            .filter(|&i| m.fixed(i).is_none() && y[i] > INTEGRAL_TOL && y[i] < 1.0 - INTEGRAL_TOL)
            .collect();
        let Some(&j) = frac
            .iter()
            .max_by(|&&a, &&b| y[a].total_cmp(&y[b]).then(b.cmp(&a)))
        else {
            break;
        };
        let mut on: Vec<bool> = (0..n)
            .map(|i| m.fixed(i) == Some(true) || y[i] >= 1.0 - INTEGRAL_TOL)
            .collect();
        for i in 0..n {
            if on[i] {
                m.fix(i, true);
            }
        }
        on[j] = true;
        m.fix(j, fits(inst, t, &on));
        y = m.solve(inst, &cfg)?.y;
        resolves += 1;
    }
    Ok(((0..n).map(|i| y[i] >= 0.5).collect(), resolves))
}

/// Default repair weight: a thousandth of the smallest size times the
/// smallest positive demand.
pub fn default_repair_eps(inst: &Instance) -> f64 {
    let s = inst.sizes.iter().copied().min().unwrap_or(1).max(1) as f64;
    let h = inst
        .requests
        .iter()
        .flatten()
        .copied()
        .filter(|&h| h > 0)
        .min()
        .unwrap_or(1) as f64;
    1e-3 * s * h
}

fn repair_weights(inst: &Instance, y_hat: &[Vec<bool>], eps: f64) -> Vec<Vec<f64>> {
    (0..inst.num_slots)
        .map(|t| {
            (0..inst.num_contents)
                .map(|i| {
                    eps + if y_hat[t][i] {
                        inst.demand(t, i) * inst.size(i)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Objective of the repair problem for `plan`.
pub fn repair_objective(inst: &Instance, y_hat: &[Vec<bool>], eps: f64, plan: &CachePlan) -> f64 {
    let w = repair_weights(inst, y_hat, eps);
    let mut v = 0.0;
    for t in 0..inst.num_slots {
        for i in 0..inst.num_contents {
            if plan.is_cached(t, i) {
                v += w[t][i];
            }
        }
    }
    v
}

/// Slot-by-slot repair: contents by descending weight (ties to the lower id),
/// each kept from the previous slot when its AoI allows, else downloaded when
/// both capacities allow.
pub fn solve_repair_greedy(inst: &Instance, y_hat: &[Vec<bool>], eps: f64) -> CachePlan {
    let w = repair_weights(inst, y_hat, eps);
    let mut plan = CachePlan::empty(inst.num_slots, inst.num_contents);
    for t in 0..inst.num_slots {
        let mut order: Vec<usize> = (0..inst.num_contents).collect();
        order.sort_by(|&a, &b| w[t][b].total_cmp(&w[t][a]).then(a.cmp(&b)));
        let mut cache_left = inst.cache_capacity;
        let mut backhaul_left = inst.backhaul_capacity;
        for i in order {
            let s = inst.sizes[i];
            if s > cache_left {
                continue;
            }
            let prev = t.checked_sub(1).and_then(|p| plan.aoi(p, i));
            match prev {
                Some(a) if a < inst.max_aoi(t, i) => {
                    plan.set(t, i, Some(a + 1));
                    cache_left -= s;
                }
                _ if s <= backhaul_left => {
                    plan.set(t, i, Some(0));
                    cache_left -= s;
                    backhaul_left -= s;
                }
                _ => {}
            }
        }
    }
    plan
}

/// Exact repair by plan enumeration; `None` when the plan space exceeds
/// `limits`.
pub fn solve_repair_exact(
    inst: &Instance,
    y_hat: &[Vec<bool>],
    eps: f64,
    limits: &OracleLimits,
) -> Option<CachePlan> {
    let w = repair_weights(inst, y_hat, eps);
    // weight lost by every content left out, which is nonnegative
    let lost = |t: usize, state: &[Option<usize>]| -> f64 {
        state
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_none())
            .map(|(i, _)| w[t][i])
            .sum()
    };
    min_cost_plan(inst, limits, lost).ok().map(|(_, plan)| plan)
}

pub fn solve_repair(
    inst: &Instance,
    y_hat: &[Vec<bool>],
    eps: f64,
    exact: Option<&OracleLimits>,
) -> CachePlan {
    exact
        .filter(|l| search_space(inst) <= l.max_states)
        .and_then(|l| solve_repair_exact(inst, y_hat, eps, l))
        .unwrap_or_else(|| solve_repair_greedy(inst, y_hat, eps))
}

/// Drops cached runs, or their tails, while that lowers the total cost.
/// Removing a suffix of a run never breaks feasibility.
pub fn prune_plan(inst: &Instance, mut plan: CachePlan) -> CachePlan {
    let slot_total = |plan: &CachePlan, t: usize| slot_cost(inst, t, plan.slot(t));
    let mut costs: Vec<f64> = (0..inst.num_slots).map(|t| slot_total(&plan, t)).collect();
    loop {
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for i in 0..inst.num_contents {
            for t0 in 0..inst.num_slots {
                if !plan.is_cached(t0, i) {
                    continue;
                }
                let mut end = t0;
                while end + 1 < inst.num_slots && plan.aoi(end + 1, i).is_some_and(|a| a > 0) {
                    end += 1;
                }
                let mut trial = plan.clone();
                for t in t0..=end {
                    trial.set(t, i, None);
                }
                let delta: f64 = (t0..=end).map(|t| slot_total(&trial, t) - costs[t]).sum();
                if delta < -1e-9 && best.is_none_or(|b| delta < b.0) {
                    best = Some((delta, i, t0, end));
                }
            }
        }
        let Some((_, i, t0, end)) = best else {
            return plan;
        };
        for t in t0..=end {
            plan.set(t, i, None);
            costs[t] = slot_total(&plan, t);
        }
    }
}

/// Runs the decomposition. The incumbent comes from repairs only; the greedy
/// cost seeds the step target until a repair does better.
pub fn run_lda(inst: &Instance, params: &LdaParams) -> Result<LdaResult, LdaError> {
    let mut lambda = Multipliers::zeros(inst);
    let eps = params
        .repair_eps
        .unwrap_or_else(|| default_repair_eps(inst));
    let mut masters: Vec<SlotMaster> = (0..inst.num_slots)
        .map(|t| SlotMaster::new(inst, t, &lambda, params.colgen.simplex))
        .collect();
    let greedy_cost = total_cost(inst, &greedy_schedule(inst))?;
    let mut w_bar = greedy_cost;
    let mut lbd: f64 = 0.0;
    let mut incumbent: Option<(Solution, f64)> = None;
    let mut trace = Vec::new();
    let mut eta = params.eta;
    let mut stale = 0;
    let mut repairs = 0;
    let mut k = 0;
    let stop = loop {
        k += 1;
        let sp1 = solve_sp1(inst, &lambda);
        let sp2: Vec<Sp2Result> = masters
            .par_iter_mut()
            .map(|m| {
                if let Some(idle) = params.purge_idle {
                    m.purge(inst, idle);
                }
                m.set_prices(inst, &lambda);
                m.solve(inst, &params.colgen)
            })
            .collect::<Result<_, _>>()?;
        let l = lagrangian_value(&sp1, &sp2);
        if l > lbd + 1e-9 * lbd.abs().max(1.0) {
            stale = 0;
        } else {
            stale += 1;
            if stale >= params.eta_patience {
                eta /= 2.0;
                stale = 0;
            }
        }
        lbd = lbd.max(l);
        let last = k >= params.max_iterations;
        let d = subgradient(inst, &lambda, &sp1, &sp2);
        let d_norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut repaired = false;
        if k == 1 || k % params.repair_every.max(1) == 0 || last || d_norm <= params.eps_subgradient
        {
            let u = repair(inst, &masters, &sp2, params, eps, &mut incumbent)?;
            repairs += 1;
            repaired = true;
            w_bar = w_bar.min(u);
        }
        let (next, step) = subgradient_step(&lambda, &d, w_bar, l, eta);
        trace.push(TraceRow {
            k,
            lagrangian: l,
            lbd,
            w_bar,
            step,
            d_norm,
        });
        let moved = next
            .values
            .iter()
            .zip(&lambda.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let gap_closed = incumbent
            .as_ref()
            .is_some_and(|(_, c)| c - lbd <= 1e-9 * c.abs().max(1.0));
        let reason = if gap_closed {
            Some(StopReason::GapClosed)
        } else if d_norm <= params.eps_subgradient {
            Some(StopReason::ZeroSubgradient)
        } else if moved <= params.eps_multiplier {
            Some(StopReason::SmallStep)
        } else if last {
            Some(StopReason::IterationLimit)
        } else {
            None
        };
        if let Some(reason) = reason {
            if !repaired {
                let u = repair(inst, &masters, &sp2, params, eps, &mut incumbent)?;
                repairs += 1;
                w_bar = w_bar.min(u);
                trace.last_mut().unwrap().w_bar = w_bar;
            }
            break reason;
        }
        lambda = next;
    };
    let (incumbent, incumbent_cost) = match incumbent {
        Some((s, c)) => (Some(s), Some(c)),
        None => (None, None),
    };
    Ok(LdaResult {
        incumbent,
        incumbent_cost,
        lower_bound: lbd,
        lambda,
        iterations: k,
        repairs,
        stop,
        trace,
    })
}

fn repair(
    inst: &Instance,
    masters: &[SlotMaster],
    sp2: &[Sp2Result],
    params: &LdaParams,
    eps: f64,
    incumbent: &mut Option<(Solution, f64)>,
) -> Result<f64, LdaError> {
    let y_hat: Vec<Vec<bool>> = masters
        .par_iter()
        .zip(sp2)
        .map(|(m, s)| round_sp2(inst, m, s, &params.colgen).map(|(row, _)| row))
        .collect::<Result<_, _>>()?;
    let plan = prune_plan(
        inst,
        solve_repair(inst, &y_hat, eps, params.exact_repair.as_ref()),
    );
    let solution = Solution::from_plan(inst, plan);
    let u = total_cost(inst, &solution)?;
    if incumbent.as_ref().is_none_or(|(_, c)| u < *c) {
        *incumbent = Some((solution, u));
    }
    Ok(u)
}

/// The trace as CSV with a header row.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("trace rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_feasibility;
    use crate::model::fixtures::{flat, relate};
    use crate::oracle::solve_exact;

    #[test]
    fn step_formula() {
        let mut inst = flat(2, 1);
        inst.aoi_limits = vec![0, 0];
        let lambda = Multipliers::zeros(&inst);
        let (next, step) = subgradient_step(&lambda, &[1.0, -1.0], 10.0, 8.0, 1.0);
        assert_eq!(step, 1.0);
        assert_eq!(next.values, vec![1.0, -1.0]);
        assert_eq!(
            subgradient_step(&lambda, &[0.0, 0.0], 10.0, 8.0, 1.0).0,
            lambda
        );
        assert_eq!(
            subgradient_step(&next, &[1.0, -1.0], 10.0, 8.0, 0.0).0,
            next
        );
    }

    #[test]
    fn zero_demand_closes_at_once() {
        let mut inst = flat(3, 2);
        relate(&mut inst, 0, 1, 0.7);
        inst.requests = vec![vec![0; 3]; 2];
        let res = run_lda(&inst, &LdaParams::default()).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.lower_bound, 0.0);
        assert_eq!(res.incumbent_cost, Some(0.0));
        assert_eq!(res.stop, StopReason::GapClosed);
    }

    #[test]
    fn integral_slot_needs_no_resolve() {
        let inst = flat(2, 1);
        let lambda = Multipliers::zeros(&inst);
        let cfg = ColgenConfig::default();
        let mut m = SlotMaster::new(&inst, 0, &lambda, cfg.simplex);
        let res = m.solve(&inst, &cfg).unwrap();
        let (row, resolves) = round_sp2(&inst, &m, &res, &cfg).unwrap();
        assert_eq!(row, vec![true, true]);
        assert_eq!(resolves, 0);
    }

    // One unit of cache, contents of size 1 and 2: y_1 = 1 is cheaper per
    // unit but the LP splits the cache.
    fn fractional() -> (Instance, Multipliers) {
        let mut inst = flat(2, 1);
        inst.sizes = vec![2, 1];
        inst.cache_capacity = 2;
        inst.backhaul_capacity = 2;
        let mut lambda = Multipliers::zeros(&inst);
        lambda.set(0, 0, 0, 10.0);
        lambda.set(0, 1, 0, 3.0);
        (inst, lambda)
    }

    #[test]
    fn largest_fractional_is_fixed_to_one_when_it_fits() {
        let (inst, lambda) = fractional();
        let cfg = ColgenConfig::default();
        let mut m = SlotMaster::new(&inst, 0, &lambda, cfg.simplex);
        let res = m.solve(&inst, &cfg).unwrap();
        // ratio 5 per unit beats 3, so y_0 = 1 and y_1 = 0 already
        assert!((res.y[0] - 1.0).abs() < 1e-9);
        let mut lambda = lambda;
        lambda.set(0, 0, 0, 5.0);
        lambda.set(0, 1, 0, 4.0);
        m.set_prices(&inst, &lambda);
        let res = m.solve(&inst, &cfg).unwrap();
        // 4 per unit beats 2.5: y_1 = 1, y_0 = 0.5
        assert!((res.y[0] - 0.5).abs() < 1e-9 && (res.y[1] - 1.0).abs() < 1e-9);
        let (row, resolves) = round_sp2(&inst, &m, &res, &cfg).unwrap();
        // 1 + 2 exceeds the cache, so y_0 goes to zero
        assert_eq!(row, vec![false, true]);
        assert_eq!(resolves, 1);
        let mut roomy = inst.clone();
        roomy.cache_capacity = 3;
        roomy.backhaul_capacity = 3;
        let mut lambda = lambda;
        lambda.set(0, 1, 0, 6.0);
        let mut m = SlotMaster::new(&roomy, 0, &lambda, cfg.simplex);
        let res = m.solve(&roomy, &cfg).unwrap();
        let (row, _) = round_sp2(&roomy, &m, &res, &cfg).unwrap();
        assert_eq!(row, vec![true, true]);
    }

    #[test]
    fn repair_with_everything_rounded_caches_everything() {
        let inst = flat(3, 3);
        let y_hat = vec![vec![true; 3]; 3];
        let plan = solve_repair_greedy(&inst, &y_hat, 1e-3);
        assert!((0..3).all(|t| (0..3).all(|i| plan.is_cached(t, i))));
    }

    #[test]
    fn greedy_repair_tracks_exact_repair() {
        let mut inst = flat(4, 3);
        inst.sizes = vec![3, 2, 2, 1];
        inst.cache_capacity = 4;
        inst.backhaul_capacity = 3;
        inst.requests = vec![vec![5, 1, 4, 2], vec![2, 6, 1, 3], vec![4, 4, 4, 4]];
        let y_hat = vec![
            vec![true, false, true, false],
            vec![false, true, false, true],
            vec![true, true, false, false],
        ];
        let eps = default_repair_eps(&inst);
        let g = solve_repair_greedy(&inst, &y_hat, eps);
        let e = solve_repair_exact(&inst, &y_hat, eps, &OracleLimits::default()).unwrap();
        let sol = Solution::from_plan(&inst, g.clone());
        assert!(check_feasibility(&inst, &sol).is_empty());
        let (gv, ev) = (
            repair_objective(&inst, &y_hat, eps, &g),
            repair_objective(&inst, &y_hat, eps, &e),
        );
        assert!(gv <= ev + 1e-12);
        assert!(gv >= 0.8 * ev, "greedy {gv} exact {ev}");
    }

    #[test]
    fn sandwich_on_a_small_instance() {
        let mut inst = flat(4, 3);
        inst.sizes = vec![3, 2, 2, 1];
        inst.cache_capacity = 4;
        inst.backhaul_capacity = 3;
        inst.requests = vec![vec![5, 1, 4, 2], vec![2, 6, 1, 3], vec![4, 4, 4, 4]];
        relate(&mut inst, 1, 0, 0.8);
        relate(&mut inst, 2, 3, 0.6);
        relate(&mut inst, 3, 2, 0.9);
        let opt = solve_exact(&inst, &OracleLimits::default()).unwrap().cost;
        let res = run_lda(&inst, &LdaParams::default()).unwrap();
        assert!(res.lower_bound <= opt + 1e-6, "{} > {opt}", res.lower_bound);
        let inc = res.incumbent_cost.unwrap();
        assert!(inc >= opt - 1e-9);
        assert!(check_feasibility(&inst, res.incumbent.as_ref().unwrap()).is_empty());
        assert!(res
            .trace
            .windows(2)
            .all(|w| w[1].lbd >= w[0].lbd && w[1].w_bar <= w[0].w_bar));
        let csv = trace_csv(&res.trace);
        assert!(csv.starts_with("k,lagrangian,lbd,w_bar,step,d_norm\n"));
        assert_eq!(csv.lines().count(), res.trace.len() + 1);
    }

    #[test]
    fn pruning_drops_useless_downloads() {
        let mut inst = flat(2, 2);
        inst.requests = vec![vec![0, 3], vec![0, 3]];
        let plan = CachePlan::from_rows(vec![vec![Some(0), Some(0)], vec![Some(1), Some(0)]]);
        let pruned = prune_plan(&inst, plan);
        assert_eq!(pruned.rows(), &[vec![None, Some(0)], vec![None, Some(0)]]);
    }
}
