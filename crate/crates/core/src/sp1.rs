//! Per-content AoI trajectory under Lagrangian prices, solved as a shortest
//! path over a layered DAG.
//!
//! Slot `t` has one "not cached" node and one node per AoI `0..=min(A_i, t)`.
//! The graph is never built; the DP streams over slots keeping one distance
//! per node of the current layer.

use rayon::prelude::*;

use crate::model::{Instance, Multipliers};

/// Optimal trajectory of one content: its AoI per slot, `None` when not cached.
#[derive(Clone, Debug, PartialEq)]
pub struct Sp1Solution {
    pub content: usize,
    pub aoi: Vec<Option<usize>>,
    pub value: f64,
}

/// Weight of the arc entering the node "cached at AoI `a`" in slot `t`.
pub fn arc_weight(inst: &Instance, lambda: &Multipliers, t: usize, i: usize, a: usize) -> f64 {
    inst.holding_cost(t, i, a) + lambda.get(t, i, a)
}

/// Value of a trajectory under the same prices, for cross-checking.
pub fn trajectory_value(
    inst: &Instance,
    lambda: &Multipliers,
    i: usize,
    aoi: &[Option<usize>],
) -> f64 {
    aoi.iter()
        .enumerate()
        .filter_map(|(t, a)| a.map(|a| arc_weight(inst, lambda, t, i, a)))
        .sum()
}

pub fn solve_sp1_item(inst: &Instance, lambda: &Multipliers, i: usize) -> Sp1Solution {
    let horizon = inst.num_slots;
    if horizon == 0 {
        return Sp1Solution {
            content: i,
            aoi: Vec::new(),
            value: 0.0,
        };
    }
    // state 0 is "not cached", state a+1 is "cached at AoI a"
    let width = inst.aoi_limits[i] + 2;
    let mut pred = vec![0usize; horizon * width];
    let mut dist = vec![f64::INFINITY; width];
    let mut next = vec![f64::INFINITY; width];
    dist[0] = 0.0;
    dist[1] = arc_weight(inst, lambda, 0, i, 0);
    for t in 1..horizon {
        // best predecessor over all states, ties to the lowest state
        let (best_state, best) = argmin(&dist);
        next.iter_mut().for_each(|d| *d = f64::INFINITY);
        next[0] = best;
        pred[t * width] = best_state;
        next[1] = best + arc_weight(inst, lambda, t, i, 0);
        pred[t * width + 1] = best_state;
        for a in 1..=inst.max_aoi(t, i) {
            let from = dist[a];
            if from.is_finite() {
                next[a + 1] = from + arc_weight(inst, lambda, t, i, a);
                pred[t * width + a + 1] = a;
            }
        }
        std::mem::swap(&mut dist, &mut next);
    }
    let (mut state, value) = argmin(&dist);
    let mut aoi = vec![None; horizon];
    for t in (0..horizon).rev() {
        aoi[t] = state.checked_sub(1);
        if t > 0 {
            state = pred[t * width + state];
        }
    }
    Sp1Solution {
        content: i,
        aoi,
        value,
    }
}

/// Solves every content independently.
pub fn solve_sp1(inst: &Instance, lambda: &Multipliers) -> Vec<Sp1Solution> {
    (0..inst.num_contents)
        .into_par_iter()
        .map(|i| solve_sp1_item(inst, lambda, i))
        .collect()
}

fn argmin(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v < best.1 {
            best = (k, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::flat;

    #[test]
    fn arc_weight_examples() {
        let inst = flat(1, 2);
        let mut lambda = Multipliers::zeros(&inst);
        assert_eq!(arc_weight(&inst, &lambda, 0, 0, 0), 2.0);
        lambda.set(0, 0, 0, -10.0);
        assert_eq!(arc_weight(&inst, &lambda, 0, 0, 0), -8.0);
        let mut idle = flat(1, 2);
        idle.requests[1][0] = 0;
        let zero = Multipliers::zeros(&idle);
        assert_eq!(arc_weight(&idle, &zero, 1, 0, 1), 0.0);
    }

    #[test]
    fn zero_prices_never_cache() {
        let inst = flat(2, 3);
        let lambda = Multipliers::zeros(&inst);
        for sol in solve_sp1(&inst, &lambda) {
            assert_eq!(sol.value, 0.0);
            assert!(sol.aoi.iter().all(Option::is_none));
        }
    }

    #[test]
    fn single_slot_negative_price_caches() {
        let inst = flat(1, 1);
        let mut lambda = Multipliers::zeros(&inst);
        lambda.set(0, 0, 0, -10.0);
        let sol = solve_sp1_item(&inst, &lambda, 0);
        assert_eq!(sol.aoi, vec![Some(0)]);
        assert_eq!(sol.value, -8.0);
    }

    #[test]
    fn zero_cost_ties_prefer_not_cached() {
        let mut inst = flat(1, 2);
        inst.requests = vec![vec![0], vec![0]];
        let mut lambda = Multipliers::zeros(&inst);
        // caching in slot 0 costs exactly as much as staying out
        lambda.set(0, 0, 0, -1.0);
        let sol = solve_sp1_item(&inst, &lambda, 0);
        assert_eq!(sol.aoi, vec![None, None]);
        assert_eq!(sol.value, 0.0);
    }

    #[test]
    fn keeps_aging_when_refresh_is_expensive() {
        let mut inst = flat(1, 3);
        inst.aoi_limits = vec![2];
        inst.cost_server = 50.0;
        let mut lambda = Multipliers::zeros(&inst);
        lambda.set(0, 0, 0, -100.0);
        for t in 1..3 {
            for a in 0..=t {
                lambda.set(t, 0, a, -10.0);
            }
        }
        let sol = solve_sp1_item(&inst, &lambda, 0);
        assert_eq!(sol.aoi, vec![Some(0), Some(1), Some(2)]);
        assert!((sol.value - trajectory_value(&inst, &lambda, 0, &sol.aoi)).abs() < 1e-12);
    }
}
