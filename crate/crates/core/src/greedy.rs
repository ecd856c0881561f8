//! Slot-by-slot greedy baseline.
//!
//! Contents are ranked by requests they can serve per unit of size, downloaded
//! while both capacities allow, otherwise kept from the previous slot. Once
//! the cache is full the contents not yet ranked are offered recommendations.

use crate::model::{
    best_recommendation_column, CachePlan, Instance, RecommendationColumn, Solution,
};

/// Requests content `i` can serve per unit size in slot `t`: its own plus
/// those of every content that would accept it fresh.
pub fn greedy_score(inst: &Instance, t: usize, i: usize) -> f64 {
    let mut served = inst.demand(t, i);
    for j in 0..inst.num_contents {
        if j != i {
            if let Some(p) = inst.acceptance(j, i, 0) {
                served += p * inst.demand(t, j);
            }
        }
    }
    served / inst.size(i)
}

/// Processing order of slot `t`: descending score, ties to the lower id.
pub fn greedy_order(inst: &Instance, t: usize) -> Vec<usize> {
    let scores: Vec<f64> = (0..inst.num_contents)
        .map(|i| greedy_score(inst, t, i))
        .collect();
    let mut order: Vec<usize> = (0..inst.num_contents).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// The cache plan, plus per slot the contents never reached before the cache
/// filled up.
pub fn greedy_plan(inst: &Instance) -> (CachePlan, Vec<Vec<bool>>) {
    let mut plan = CachePlan::empty(inst.num_slots, inst.num_contents);
    let mut unreached = vec![vec![true; inst.num_contents]; inst.num_slots];
    for t in 0..inst.num_slots {
        let mut cache_left = inst.cache_capacity;
        let mut backhaul_left = inst.backhaul_capacity;
        for i in greedy_order(inst, t) {
            if cache_left == 0 {
                break;
            }
            unreached[t][i] = false;
            let s = inst.sizes[i];
            if s <= backhaul_left && s <= cache_left {
                backhaul_left -= s;
                cache_left -= s;
                plan.set(t, i, Some(0));
            } else if let Some(prev) = t.checked_sub(1).and_then(|p| plan.aoi(p, i)) {
                if s <= cache_left && prev < inst.aoi_limits[i] {
                    cache_left -= s;
                    plan.set(t, i, Some(prev + 1));
                }
            }
        }
    }
    (plan, unreached)
}

/// Contents reached but left out get the empty column; only unreached ones
/// are offered their most accepted cached related items.
pub fn greedy_schedule(inst: &Instance) -> Solution {
    let (plan, unreached) = greedy_plan(inst);
    let recs = (0..inst.num_slots)
        .map(|t| {
            (0..inst.num_contents)
                .map(|i| {
                    if plan.is_cached(t, i) {
                        None
                    } else if unreached[t][i] {
                        Some(best_recommendation_column(inst, t, i, plan.slot(t)))
                    } else {
                        Some(RecommendationColumn::empty(t, i))
                    }
                })
                .collect()
        })
        .collect();
    Solution { plan, recs }
}
