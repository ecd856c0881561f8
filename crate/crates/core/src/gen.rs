//! Seeded random instances with ZipF popularity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CostCurve, CurveFamily, Instance, Relation};

/// Acceptance probability lost per slot of AoI of the recommended content.
pub const ACCEPT_DECAY_PER_AOI: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub num_contents: usize,
    pub num_slots: usize,
    pub rec_limit: usize,
    pub zipf_gamma: f64,
    pub size_range: (u64, u64),
    pub cache_fraction: f64,
    pub rho: f64,
    pub prob_range: (f64, f64),
    pub max_aoi: usize,
    pub relation_density: f64,
    pub total_requests_per_slot: u64,
    pub alpha_range: (f64, f64),
    pub cost_server: f64,
    pub cost_cache: f64,
    /// Relate only contents whose sizes differ by at most this much.
    pub size_similarity: Option<u64>,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            num_contents: 20,
            num_slots: 6,
            rec_limit: 2,
            zipf_gamma: 0.56,
            size_range: (1, 10),
            cache_fraction: 0.5,
            rho: 0.3,
            prob_range: (0.6, 1.0),
            max_aoi: 2,
            relation_density: 0.3,
            total_requests_per_slot: 100,
            alpha_range: (0.1, 0.4),
            cost_server: 2.0,
            cost_cache: 1.0,
            size_similarity: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    Config(String),
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |msg: &str| Err(GenError::Config(msg.to_string()));
        if self.size_range.0 == 0 || self.size_range.0 > self.size_range.1 {
            return bad("size_range must satisfy 1 <= lo <= hi");
        }
        if !(self.zipf_gamma >= 0.0 && self.zipf_gamma.is_finite()) {
            return bad("zipf_gamma must be finite and non-negative");
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad("rho must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.cache_fraction) {
            return bad("cache_fraction must lie in [0, 1]");
        }
        let (plo, phi) = self.prob_range;
        if !(plo > 0.0 && plo <= phi && phi <= 1.0) {
            return bad("prob_range must satisfy 0 < lo <= hi <= 1");
        }
        let floor = plo * (1.0 - ACCEPT_DECAY_PER_AOI * self.max_aoi as f64);
        if floor <= 0.0 {
            return bad("max_aoi too large for the acceptance decay");
        }
        if !(0.0..=1.0).contains(&self.relation_density) {
            return bad("relation_density must lie in [0, 1]");
        }
        let (alo, ahi) = self.alpha_range;
        if !(alo >= 0.0 && alo <= ahi && ahi.is_finite()) {
            return bad("alpha_range must satisfy 0 <= lo <= hi");
        }
        if ahi * self.max_aoi as f64 >= 1.0 {
            return bad("alpha_range upper end times max_aoi must stay below 1 (reciprocal pole)");
        }
        if !(self.cost_server > self.cost_cache && self.cost_cache > 0.0) {
            return bad("costs must satisfy cost_server > cost_cache > 0");
        }
        Ok(())
    }
}

/// Normalized ZipF weights `i^-gamma` over ranks `1..=n`.
pub fn zipf_weights(n: usize, gamma: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-gamma)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Rounds `weights * total` to integers summing to `total`.
pub fn integerize(weights: &[f64], total: u64) -> Vec<u64> {
    let mut counts: Vec<u64> = weights
        .iter()
        .map(|w| (w * total as f64).round() as u64)
        .collect();
    let Some(top) =
        (0..weights.len()).max_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(b.cmp(&a)))
    else {
        return counts;
    };
    // the rounding leftover, either sign, goes to the most popular content
    let assigned: u64 = counts.iter().sum();
    if assigned <= total {
        counts[top] += total - assigned;
    } else {
        let mut excess = assigned - total;
        for k in std::iter::once(top).chain(0..weights.len()) {
            let take = excess.min(counts[k]);
            counts[k] -= take;
            excess -= take;
        }
    }
    counts
}

pub fn generate_instance(cfg: &GenConfig) -> Result<Instance, GenError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.num_contents;
    let sizes: Vec<u64> = (0..n)
        .map(|_| rng.gen_range(cfg.size_range.0..=cfg.size_range.1))
        .collect();
    let demand = integerize(
        &zipf_weights(n, cfg.zipf_gamma),
        cfg.total_requests_per_slot,
    );
    let requests = vec![demand; cfg.num_slots];
    let families = [
        CurveFamily::Linear,
        CurveFamily::Reciprocal,
        CurveFamily::Exp,
    ];
    let aoi_cost = (0..cfg.num_slots)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let family = families[rng.gen_range(0..families.len())];
                    let alpha = uniform(&mut rng, cfg.alpha_range);
                    CostCurve { family, alpha }
                })
                .collect()
        })
        .collect();
    let mut relations: Vec<Vec<Relation>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let related = rng.gen_bool(cfg.relation_density);
            let similar = cfg
                .size_similarity
                .is_none_or(|d| sizes[i].abs_diff(sizes[j]) <= d);
            if !(related && similar) {
                continue;
            }
            for (owner, other) in [(i, j), (j, i)] {
                let p0 = uniform(&mut rng, cfg.prob_range).min(1.0 - 1e-9);
                let accept = (0..=cfg.max_aoi)
                    .map(|a| p0 * (1.0 - ACCEPT_DECAY_PER_AOI * a as f64))
                    .collect();
                relations[owner].push(Relation {
                    content: other,
                    accept,
                });
            }
        }
    }
    for rel in &mut relations {
        rel.sort_by_key(|r| r.content);
    }
    let total: u64 = sizes.iter().sum();
    Ok(Instance {
        num_contents: n,
        num_slots: cfg.num_slots,
        sizes,
        requests,
        aoi_limits: vec![cfg.max_aoi; n],
        aoi_cost,
        relations,
        cache_capacity: (cfg.cache_fraction * total as f64).floor() as u64,
        backhaul_capacity: (cfg.rho * total as f64).floor() as u64,
        cost_server: cfg.cost_server,
        cost_cache: cfg.cost_cache,
        rec_limit: cfg.rec_limit,
    })
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}
