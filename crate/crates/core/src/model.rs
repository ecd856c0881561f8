//! Problem data, cache plans, recommendation columns and exact cost
//! evaluation.
//!
//! Slots are indexed from zero throughout the crate. A content cached in slot
//! `t` can therefore carry any AoI in `0..=min(A_i, t)`.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shape of the AoI cost curve `f_tia` of one (slot, content) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveFamily {
    /// `1 + alpha * a`
    Linear,
    /// `1 / (1 - alpha * a)`
    Reciprocal,
    /// `exp(alpha * a)`
    Exp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub family: CurveFamily,
    pub alpha: f64,
}

impl CostCurve {
    pub fn linear(alpha: f64) -> Self {
        Self {
            family: CurveFamily::Linear,
            alpha,
        }
    }

    pub fn reciprocal(alpha: f64) -> Self {
        Self {
            family: CurveFamily::Reciprocal,
            alpha,
        }
    }

    pub fn exp(alpha: f64) -> Self {
        Self {
            family: CurveFamily::Exp,
            alpha,
        }
    }

    /// Cost multiplier at AoI `aoi`. Every family evaluates to 1 at AoI 0.
    pub fn eval(&self, aoi: usize) -> f64 {
        let a = aoi as f64;
        match self.family {
            CurveFamily::Linear => 1.0 + self.alpha * a,
            CurveFamily::Reciprocal => 1.0 / (1.0 - self.alpha * a),
            CurveFamily::Exp => (self.alpha * a).exp(),
        }
    }
}

/// A content related to some owner, with the probability that a user asking
/// for the owner accepts it instead, indexed by the related content's AoI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub content: usize,
    pub accept: Vec<f64>,
}

impl Relation {
    pub fn probability(&self, aoi: usize) -> Option<f64> {
        self.accept.get(aoi).copied()
    }
}

/// Full problem data. Per-slot arrays are indexed `[slot][content]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub num_contents: usize,
    pub num_slots: usize,
    pub sizes: Vec<u64>,
    pub requests: Vec<Vec<u64>>,
    pub aoi_limits: Vec<usize>,
    pub aoi_cost: Vec<Vec<CostCurve>>,
    pub relations: Vec<Vec<Relation>>,
    pub cache_capacity: u64,
    pub backhaul_capacity: u64,
    pub cost_server: f64,
    pub cost_cache: f64,
    pub rec_limit: usize,
}

impl Instance {
    /// Largest AoI content `i` may carry in slot `t`.
    pub fn max_aoi(&self, t: usize, i: usize) -> usize {
        self.aoi_limits[i].min(t)
    }

    pub fn size(&self, i: usize) -> f64 {
        self.sizes[i] as f64
    }

    pub fn demand(&self, t: usize, i: usize) -> f64 {
        self.requests[t][i] as f64
    }

    pub fn aoi_factor(&self, t: usize, i: usize, aoi: usize) -> f64 {
        self.aoi_cost[t][i].eval(aoi)
    }

    /// Cost of one server-to-cache download unit, `c_s - c_b`.
    pub fn refresh_unit_cost(&self) -> f64 {
        self.cost_server - self.cost_cache
    }

    /// Probability that `related` at `aoi` is accepted in place of `owner`.
    pub fn acceptance(&self, owner: usize, related: usize, aoi: usize) -> Option<f64> {
        self.relations[owner]
            .iter()
            .find(|r| r.content == related)
            .and_then(|r| r.probability(aoi))
    }

    /// Cost of serving every request from the server.
    pub fn server_only_cost(&self) -> f64 {
        (0..self.num_slots)
            .flat_map(|t| (0..self.num_contents).map(move |i| (t, i)))
            .map(|(t, i)| self.cost_server * self.size(i) * self.demand(t, i))
            .sum()
    }

    pub fn total_size(&self) -> u64 {
        self.sizes.iter().sum()
    }

    /// Expected cost of serving the requests of `(t, i)` with a recommendation
    /// set whose miss probability is `miss_prob`.
    pub fn column_cost(&self, t: usize, i: usize, miss_prob: f64) -> f64 {
        (self.cost_cache * (1.0 - miss_prob) + self.cost_server * miss_prob)
            * self.size(i)
            * self.demand(t, i)
    }

    /// Download-side cost of holding `i` at AoI `aoi` in slot `t`.
    pub fn holding_cost(&self, t: usize, i: usize, aoi: usize) -> f64 {
        let refresh = if aoi == 0 {
            self.refresh_unit_cost() * self.size(i)
        } else {
            0.0
        };
        refresh + self.cost_cache * self.size(i) * self.demand(t, i) * self.aoi_factor(t, i, aoi)
    }

    /// A copy with the recommendation limit forced to zero.
    pub fn without_recommendation(&self) -> Instance {
        Instance {
            rec_limit: 0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Vec<InstanceIssue> {
        validate_instance(self)
    }
}

/// One violated instance invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum InstanceIssue {
    Shape {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    CostOrder {
        server: f64,
        cache: f64,
    },
    NonPositiveCacheCost {
        cache: f64,
    },
    ZeroSize {
        content: usize,
    },
    AcceptProbability {
        owner: usize,
        related: usize,
        aoi: usize,
        value: f64,
    },
    AcceptLength {
        owner: usize,
        related: usize,
        expected: usize,
        found: usize,
    },
    SelfRelation {
        content: usize,
    },
    UnknownRelated {
        owner: usize,
        related: usize,
    },
    DuplicateRelation {
        owner: usize,
        related: usize,
    },
    DecreasingCurve {
        slot: usize,
        content: usize,
        alpha: f64,
    },
    ReciprocalPole {
        slot: usize,
        content: usize,
        alpha: f64,
        limit: usize,
    },
}

impl fmt::Display for InstanceIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Shape { field, expected, found } => {
                write!(f, "`{field}` has length {found}, expected {expected}")
            }
            Self::CostOrder { server, cache } => {
                write!(f, "c_s > c_b violated (c_s = {server}, c_b = {cache})")
            }
            Self::NonPositiveCacheCost { cache } => write!(f, "c_b > 0 violated (c_b = {cache})"),
            Self::ZeroSize { content } => write!(f, "content {content} has zero size"),
            Self::AcceptProbability { owner, related, aoi, value } => write!(
                f,
                "acceptance probability of {related} at AoI {aoi} for {owner} is {value}, outside (0, 1)"
            ),
            Self::AcceptLength { owner, related, expected, found } => write!(
                f,
                "relation {owner} -> {related} lists {found} AoI probabilities, expected {expected}"
            ),
            Self::SelfRelation { content } => write!(f, "content {content} is related to itself"),
            Self::UnknownRelated { owner, related } => {
                write!(f, "content {owner} is related to unknown content {related}")
            }
            Self::DuplicateRelation { owner, related } => {
                write!(f, "content {owner} lists relation to {related} twice")
            }
            Self::DecreasingCurve { slot, content, alpha } => write!(
                f,
                "cost curve of content {content} in slot {slot} decreases in AoI (alpha = {alpha})"
            ),
            Self::ReciprocalPole { slot, content, alpha, limit } => write!(
                f,
                "pole inside AoI range: content {content} in slot {slot} has alpha {alpha} with AoI limit {limit}"
            ),
        }
    }
}

pub fn validate_instance(inst: &Instance) -> Vec<InstanceIssue> {
    let mut issues = Vec::new();
    let n = inst.num_contents;
    let shape = |issues: &mut Vec<InstanceIssue>, field, expected, found| {
        if expected != found {
            issues.push(InstanceIssue::Shape {
                field,
                expected,
                found,
            });
        }
    };
    shape(&mut issues, "sizes", n, inst.sizes.len());
    shape(&mut issues, "aoi_limits", n, inst.aoi_limits.len());
    shape(&mut issues, "relations", n, inst.relations.len());
    shape(&mut issues, "requests", inst.num_slots, inst.requests.len());
    shape(&mut issues, "aoi_cost", inst.num_slots, inst.aoi_cost.len());
    for row in &inst.requests {
        shape(&mut issues, "requests[slot]", n, row.len());
    }
    for row in &inst.aoi_cost {
        shape(&mut issues, "aoi_cost[slot]", n, row.len());
    }
    if !issues.is_empty() {
        return issues;
    }

    if !(inst.cost_server > inst.cost_cache) {
        issues.push(InstanceIssue::CostOrder {
            server: inst.cost_server,
            cache: inst.cost_cache,
        });
    }
    if !(inst.cost_cache > 0.0) {
        issues.push(InstanceIssue::NonPositiveCacheCost {
            cache: inst.cost_cache,
        });
    }
    for (i, &s) in inst.sizes.iter().enumerate() {
        if s == 0 {
            issues.push(InstanceIssue::ZeroSize { content: i });
        }
    }
    for (t, row) in inst.aoi_cost.iter().enumerate() {
        for (i, curve) in row.iter().enumerate() {
            if !(curve.alpha >= 0.0) || !curve.alpha.is_finite() {
                issues.push(InstanceIssue::DecreasingCurve {
                    slot: t,
                    content: i,
                    alpha: curve.alpha,
                });
            } else if curve.family == CurveFamily::Reciprocal
                && curve.alpha * inst.aoi_limits[i] as f64 >= 1.0
            {
                issues.push(InstanceIssue::ReciprocalPole {
                    slot: t,
                    content: i,
                    alpha: curve.alpha,
                    limit: inst.aoi_limits[i],
                });
            }
        }
    }
    for (i, rels) in inst.relations.iter().enumerate() {
        for (k, rel) in rels.iter().enumerate() {
            let j = rel.content;
            if j == i {
                issues.push(InstanceIssue::SelfRelation { content: i });
                continue;
            }
            if j >= n {
                issues.push(InstanceIssue::UnknownRelated {
                    owner: i,
                    related: j,
                });
                continue;
            }
            if rels[..k].iter().any(|r| r.content == j) {
                issues.push(InstanceIssue::DuplicateRelation {
                    owner: i,
                    related: j,
                });
            }
            let expected = inst.aoi_limits[j] + 1;
            if rel.accept.len() != expected {
                issues.push(InstanceIssue::AcceptLength {
                    owner: i,
                    related: j,
                    expected,
                    found: rel.accept.len(),
                });
            }
            for (a, &p) in rel.accept.iter().enumerate() {
                if !(p > 0.0 && p < 1.0) {
                    issues.push(InstanceIssue::AcceptProbability {
                        owner: i,
                        related: j,
                        aoi: a,
                        value: p,
                    });
                }
            }
        }
    }
    issues
}

/// Flat index over every `(slot, content, aoi)` triple with
/// `aoi <= min(A_i, t)`. Houses multipliers and AoI variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AoiLayout {
    num_contents: usize,
    starts: Vec<usize>,
}

impl AoiLayout {
    pub fn new(inst: &Instance) -> Self {
        let mut starts = Vec::with_capacity(inst.num_slots * inst.num_contents + 1);
        let mut next = 0;
        for t in 0..inst.num_slots {
            for i in 0..inst.num_contents {
                starts.push(next);
                next += inst.max_aoi(t, i) + 1;
            }
        }
        starts.push(next);
        Self {
            num_contents: inst.num_contents,
            starts,
        }
    }

    pub fn len(&self) -> usize {
        *self.starts.last().unwrap_or(&0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self, t: usize, i: usize) -> Range<usize> {
        let k = t * self.num_contents + i;
        self.starts[k]..self.starts[k + 1]
    }

    pub fn index(&self, t: usize, i: usize, aoi: usize) -> usize {
        let r = self.range(t, i);
        debug_assert!(aoi < r.len());
        r.start + aoi
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.len()]
    }
}

/// Lagrange multipliers, one per `(slot, content, aoi)` triple.
#[derive(Clone, Debug, PartialEq)]
pub struct Multipliers {
    pub layout: AoiLayout,
    pub values: Vec<f64>,
}

impl Multipliers {
    pub fn zeros(inst: &Instance) -> Self {
        let layout = AoiLayout::new(inst);
        let values = layout.zeros();
        Self { layout, values }
    }

    pub fn get(&self, t: usize, i: usize, aoi: usize) -> f64 {
        self.values[self.layout.index(t, i, aoi)]
    }

    pub fn set(&mut self, t: usize, i: usize, aoi: usize, value: f64) {
        let k = self.layout.index(t, i, aoi);
        self.values[k] = value;
    }
}

/// Which content is cached in which slot, and at what AoI.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CachePlan {
    aoi: Vec<Vec<Option<usize>>>,
}

impl CachePlan {
    pub fn empty(num_slots: usize, num_contents: usize) -> Self {
        Self {
            aoi: vec![vec![None; num_contents]; num_slots],
        }
    }

    pub fn from_rows(aoi: Vec<Vec<Option<usize>>>) -> Self {
        Self { aoi }
    }

    pub fn num_slots(&self) -> usize {
        self.aoi.len()
    }

    pub fn num_contents(&self) -> usize {
        self.aoi.first().map_or(0, Vec::len)
    }

    pub fn aoi(&self, t: usize, i: usize) -> Option<usize> {
        self.aoi[t][i]
    }

    pub fn is_cached(&self, t: usize, i: usize) -> bool {
        self.aoi[t][i].is_some()
    }

    pub fn set(&mut self, t: usize, i: usize, aoi: Option<usize>) {
        self.aoi[t][i] = aoi;
    }

    pub fn slot(&self, t: usize) -> &[Option<usize>] {
        &self.aoi[t]
    }

    pub fn rows(&self) -> &[Vec<Option<usize>>] {
        &self.aoi
    }

    pub fn cached_size(&self, inst: &Instance, t: usize) -> u64 {
        self.aoi[t]
            .iter()
            .zip(&inst.sizes)
            .filter(|(a, _)| a.is_some())
            .map(|(_, s)| s)
            .sum()
    }

    pub fn downloaded_size(&self, inst: &Instance, t: usize) -> u64 {
        self.aoi[t]
            .iter()
            .zip(&inst.sizes)
            .filter(|(a, _)| **a == Some(0))
            .map(|(_, s)| s)
            .sum()
    }

    fn check_shape(&self, inst: &Instance) -> Result<(), ModelError> {
        if self.aoi.len() != inst.num_slots {
            return Err(ModelError::Shape {
                what: "plan slots",
                expected: inst.num_slots,
                found: self.aoi.len(),
            });
        }
        for row in &self.aoi {
            if row.len() != inst.num_contents {
                return Err(ModelError::Shape {
                    what: "plan contents",
                    expected: inst.num_contents,
                    found: row.len(),
                });
            }
        }
        Ok(())
    }

    /// AoI range and AoI chain. Capacities are not part of this check.
    pub fn check_aoi(&self, inst: &Instance) -> Result<(), ModelError> {
        self.check_shape(inst)?;
        for t in 0..inst.num_slots {
            for i in 0..inst.num_contents {
                if let Some(a) = self.aoi[t][i] {
                    if a > inst.max_aoi(t, i) {
                        return Err(ModelError::AoiOutOfRange {
                            slot: t,
                            content: i,
                            aoi: a,
                        });
                    }
                    if a > 0 && self.aoi[t - 1][i] != Some(a - 1) {
                        return Err(ModelError::BrokenChain {
                            slot: t,
                            content: i,
                            aoi: a,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// A (content, AoI) pair offered in place of a missing content.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecItem {
    pub content: usize,
    pub aoi: usize,
}

/// One recommendation set for one (slot, content). Items are kept sorted by
/// content id, so two columns with the same set compare equal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendationColumn {
    pub owner: usize,
    pub slot: usize,
    pub items: Vec<RecItem>,
    pub miss_prob: f64,
}

impl RecommendationColumn {
    /// The "serve from server" column.
    pub fn empty(slot: usize, owner: usize) -> Self {
        Self {
            owner,
            slot,
            items: Vec::new(),
            miss_prob: 1.0,
        }
    }

    pub fn new(
        inst: &Instance,
        slot: usize,
        owner: usize,
        mut items: Vec<RecItem>,
    ) -> Result<Self, ModelError> {
        items.sort();
        if let Some(w) = items.windows(2).find(|w| w[0].content == w[1].content) {
            return Err(ModelError::DuplicateRecommendation {
                slot,
                content: owner,
                item: w[0].content,
            });
        }
        let mut probs = Vec::with_capacity(items.len());
        for it in &items {
            let p = inst.acceptance(owner, it.content, it.aoi).ok_or(
                ModelError::UnrelatedRecommendation {
                    slot,
                    content: owner,
                    item: it.content,
                    aoi: it.aoi,
                },
            )?;
            probs.push(p);
        }
        Ok(Self {
            owner,
            slot,
            items,
            miss_prob: miss_probability(&probs),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn same_set(&self, other: &Self) -> bool {
        self.owner == other.owner && self.items == other.items
    }
}

/// Probability that none of the offered items is accepted.
pub fn miss_probability(probs: &[f64]) -> f64 {
    probs.iter().map(|p| 1.0 - p).product()
}

/// A cache plan plus one recommendation column for every non-cached
/// (slot, content).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub plan: CachePlan,
    pub recs: Vec<Vec<Option<RecommendationColumn>>>,
}

impl Solution {
    /// Completes a plan with the cost-minimizing column for every miss.
    pub fn from_plan(inst: &Instance, plan: CachePlan) -> Self {
        let recs = (0..inst.num_slots)
            .map(|t| {
                (0..inst.num_contents)
                    .map(|i| {
                        if plan.is_cached(t, i) {
                            None
                        } else {
                            Some(best_recommendation_column(inst, t, i, plan.slot(t)))
                        }
                    })
                    .collect()
            })
            .collect();
        Self { plan, recs }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{what}: expected {expected} entries, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("content {content} in slot {slot} has AoI {aoi} outside its AoI range")]
    AoiOutOfRange {
        slot: usize,
        content: usize,
        aoi: usize,
    },
    #[error("content {content} has AoI {aoi} in slot {slot} without AoI {} in the previous slot", aoi - 1)]
    BrokenChain {
        slot: usize,
        content: usize,
        aoi: usize,
    },
    #[error(
        "content {content} in slot {slot} is neither cached nor given a recommendation column"
    )]
    MissingColumn { slot: usize, content: usize },
    #[error("content {content} in slot {slot} is cached but also has a recommendation column")]
    UnexpectedColumn { slot: usize, content: usize },
    #[error("column for {content} in slot {slot} offers {item} at AoI {aoi}, which is not cached that way")]
    RecommendedNotCached {
        slot: usize,
        content: usize,
        item: usize,
        aoi: usize,
    },
    #[error("column for {content} in slot {slot} offers {item} at AoI {aoi}, which is not a related pair")]
    UnrelatedRecommendation {
        slot: usize,
        content: usize,
        item: usize,
        aoi: usize,
    },
    #[error("column for {content} in slot {slot} offers {item} twice")]
    DuplicateRecommendation {
        slot: usize,
        content: usize,
        item: usize,
    },
    #[error("column for {content} in slot {slot} is labelled for ({found_slot}, {found_owner})")]
    MislabelledColumn {
        slot: usize,
        content: usize,
        found_slot: usize,
        found_owner: usize,
    },
}

/// Refresh plus cache-delivery cost of a plan.
pub fn download_cost(inst: &Instance, plan: &CachePlan) -> Result<f64, ModelError> {
    plan.check_aoi(inst)?;
    let mut cost = 0.0;
    for t in 0..inst.num_slots {
        for i in 0..inst.num_contents {
            if let Some(a) = plan.aoi(t, i) {
                cost += inst.holding_cost(t, i, a);
            }
        }
    }
    Ok(cost)
}

/// Expected cost of every request served through a recommendation column.
pub fn recommendation_cost(inst: &Instance, sol: &Solution) -> Result<f64, ModelError> {
    sol.plan.check_shape(inst)?;
    if sol.recs.len() != inst.num_slots {
        return Err(ModelError::Shape {
            what: "column slots",
            expected: inst.num_slots,
            found: sol.recs.len(),
        });
    }
    let mut cost = 0.0;
    for (t, row) in sol.recs.iter().enumerate() {
        if row.len() != inst.num_contents {
            return Err(ModelError::Shape {
                what: "column contents",
                expected: inst.num_contents,
                found: row.len(),
            });
        }
        for (i, col) in row.iter().enumerate() {
            let cached = sol.plan.is_cached(t, i);
            let col = match (cached, col) {
                (true, None) => continue,
                (true, Some(_)) => {
                    return Err(ModelError::UnexpectedColumn {
                        slot: t,
                        content: i,
                    })
                }
                (false, None) => {
                    return Err(ModelError::MissingColumn {
                        slot: t,
                        content: i,
                    })
                }
                (false, Some(c)) => c,
            };
            if col.slot != t || col.owner != i {
                return Err(ModelError::MislabelledColumn {
                    slot: t,
                    content: i,
                    found_slot: col.slot,
                    found_owner: col.owner,
                });
            }
            let mut miss = 1.0;
            for (k, it) in col.items.iter().enumerate() {
                if col.items[..k].iter().any(|o| o.content == it.content) {
                    return Err(ModelError::DuplicateRecommendation {
                        slot: t,
                        content: i,
                        item: it.content,
                    });
                }
                let p = inst.acceptance(i, it.content, it.aoi).ok_or(
                    ModelError::UnrelatedRecommendation {
                        slot: t,
                        content: i,
                        item: it.content,
                        aoi: it.aoi,
                    },
                )?;
                if sol.plan.aoi(t, it.content) != Some(it.aoi) {
                    return Err(ModelError::RecommendedNotCached {
                        slot: t,
                        content: i,
                        item: it.content,
                        aoi: it.aoi,
                    });
                }
                miss *= 1.0 - p;
            }
            cost += inst.column_cost(t, i, miss);
        }
    }
    Ok(cost)
}

pub fn total_cost(inst: &Instance, sol: &Solution) -> Result<f64, ModelError> {
    Ok(download_cost(inst, &sol.plan)? + recommendation_cost(inst, sol)?)
}

/// Constraint families a solution can break.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Constraint {
    Shape,
    AoiRange,
    AoiChain,
    Coverage,
    RecommendedNotCached,
    RecommendationNotRelated,
    RecommendationDuplicate,
    RecommendationLimit,
    CacheCapacity,
    BackhaulCapacity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub constraint: Constraint,
    pub slot: Option<usize>,
    pub content: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.constraint)?;
        if let Some(t) = self.slot {
            write!(f, " slot={t}")?;
        }
        if let Some(i) = self.content {
            write!(f, " content={i}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

/// Lists every violated constraint instance; empty means feasible.
pub fn check_feasibility(inst: &Instance, sol: &Solution) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |constraint, slot, content, detail: String| {
        out.push(Violation {
            constraint,
            slot,
            content,
            detail,
        });
    };
    if let Err(e) = sol.plan.check_shape(inst) {
        push(Constraint::Shape, None, None, e.to_string());
        return out;
    }
    if sol.recs.len() != inst.num_slots || sol.recs.iter().any(|r| r.len() != inst.num_contents) {
        push(
            Constraint::Shape,
            None,
            None,
            "column table does not match the instance".into(),
        );
        return out;
    }
    let plan = &sol.plan;
    for t in 0..inst.num_slots {
        for i in 0..inst.num_contents {
            if let Some(a) = plan.aoi(t, i) {
                if a > inst.max_aoi(t, i) {
                    push(
                        Constraint::AoiRange,
                        Some(t),
                        Some(i),
                        format!("AoI {a} exceeds min(A_i, t-1) = {}", inst.max_aoi(t, i)),
                    );
                } else if a > 0 && plan.aoi(t - 1, i) != Some(a - 1) {
                    push(
                        Constraint::AoiChain,
                        Some(t),
                        Some(i),
                        format!("AoI {a} without AoI {} in the previous slot", a - 1),
                    );
                }
            }
            match (plan.is_cached(t, i), &sol.recs[t][i]) {
                (true, Some(_)) => push(
                    Constraint::Coverage,
                    Some(t),
                    Some(i),
                    "cached and recommended".into(),
                ),
                (false, None) => push(
                    Constraint::Coverage,
                    Some(t),
                    Some(i),
                    "neither cached nor recommended".into(),
                ),
                (false, Some(col)) => {
                    if col.items.len() > inst.rec_limit {
                        push(
                            Constraint::RecommendationLimit,
                            Some(t),
                            Some(i),
                            format!("{} items exceed N = {}", col.items.len(), inst.rec_limit),
                        );
                    }
                    for (k, it) in col.items.iter().enumerate() {
                        if col.items[..k].iter().any(|o| o.content == it.content) {
                            push(
                                Constraint::RecommendationDuplicate,
                                Some(t),
                                Some(i),
                                format!("content {} offered twice", it.content),
                            );
                        }
                        if inst.acceptance(i, it.content, it.aoi).is_none() {
                            push(
                                Constraint::RecommendationNotRelated,
                                Some(t),
                                Some(i),
                                format!("({}, {}) is not related", it.content, it.aoi),
                            );
                        }
                        if it.content >= inst.num_contents
                            || plan.aoi(t, it.content) != Some(it.aoi)
                        {
                            push(
                                Constraint::RecommendedNotCached,
                                Some(t),
                                Some(i),
                                format!("({}, {}) is not cached", it.content, it.aoi),
                            );
                        }
                    }
                }
                (true, None) => {}
            }
        }
        let cached = plan.cached_size(inst, t);
        if cached > inst.cache_capacity {
            push(
                Constraint::CacheCapacity,
                Some(t),
                None,
                format!("cached size {cached} exceeds S = {}", inst.cache_capacity),
            );
        }
        let downloaded = plan.downloaded_size(inst, t);
        if downloaded > inst.backhaul_capacity {
            push(
                Constraint::BackhaulCapacity,
                Some(t),
                None,
                format!(
                    "downloaded size {downloaded} exceeds L = {}",
                    inst.backhaul_capacity
                ),
            );
        }
    }
    out
}

/// The cheapest column for a miss of `i` in slot `t`, given the AoI of every
/// content in that slot: the `N` cached related pairs with the highest
/// acceptance probability, ties to the lower content id.
pub fn best_recommendation_column(
    inst: &Instance,
    t: usize,
    i: usize,
    slot_state: &[Option<usize>],
) -> RecommendationColumn {
    let mut cands: Vec<(f64, RecItem)> = inst.relations[i]
        .iter()
        .filter_map(|rel| {
            let aoi = slot_state.get(rel.content).copied().flatten()?;
            let p = rel.probability(aoi)?;
            Some((
                p,
                RecItem {
                    content: rel.content,
                    aoi,
                },
            ))
        })
        .collect();
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.content.cmp(&b.1.content)));
    cands.truncate(inst.rec_limit);
    let miss_prob = cands.iter().map(|(p, _)| 1.0 - p).product();
    let mut items: Vec<RecItem> = cands.into_iter().map(|(_, it)| it).collect();
    items.sort();
    RecommendationColumn {
        owner: i,
        slot: t,
        items,
        miss_prob,
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn well_formed_instance_has_no_issues() {
        let mut inst = flat(3, 2);
        relate(&mut inst, 0, 1, 0.7);
        assert!(validate_instance(&inst).is_empty());
    }

    #[test]
    fn equal_unit_costs_are_reported() {
        let mut inst = flat(2, 1);
        inst.cost_cache = 2.0;
        let issues = validate_instance(&inst);
        assert_eq!(issues.len(), 1);
        assert!(matches!(issues[0], InstanceIssue::CostOrder { .. }));
        assert!(issues[0].to_string().contains("c_s > c_b"));
    }

    #[test]
    fn reciprocal_pole_is_reported() {
        let mut inst = flat(1, 1);
        inst.aoi_limits = vec![2];
        inst.aoi_cost[0][0] = CostCurve::reciprocal(0.6);
        let issues = validate_instance(&inst);
        assert_eq!(issues.len(), 1);
        assert!(issues[0].to_string().contains("pole inside AoI range"));
    }

    #[test]
    fn structural_relation_errors() {
        let mut inst = flat(2, 1);
        relate(&mut inst, 0, 0, 0.5);
        relate(&mut inst, 1, 0, 1.0);
        let issues = validate_instance(&inst);
        assert!(issues.contains(&InstanceIssue::SelfRelation { content: 0 }));
        assert!(issues
            .iter()
            .any(|i| matches!(i, InstanceIssue::AcceptProbability { owner: 1, .. })));
    }

    #[test]
    fn curves_start_at_one() {
        for c in [
            CostCurve::linear(0.3),
            CostCurve::reciprocal(0.3),
            CostCurve::exp(0.3),
        ] {
            assert_eq!(c.eval(0), 1.0);
            assert!(c.eval(1) < c.eval(2));
        }
    }

    #[test]
    fn miss_probability_examples() {
        assert_eq!(miss_probability(&[]), 1.0);
        assert!((miss_probability(&[0.6, 0.8]) - 0.08).abs() < 1e-15);
        assert!((miss_probability(&[0.9]) - 0.1).abs() < 1e-15);
    }

    fn one_item(num_slots: usize) -> Instance {
        let mut inst = flat(1, num_slots);
        inst.sizes = vec![2];
        inst.requests = vec![vec![3]];
        if num_slots > 1 {
            inst.requests.push(vec![2]);
        }
        inst.cache_capacity = 2;
        inst.backhaul_capacity = 2;
        inst
    }

    #[test]
    fn download_cost_examples() {
        let inst = one_item(1);
        assert_eq!(download_cost(&inst, &CachePlan::empty(1, 1)).unwrap(), 0.0);
        let plan = CachePlan::from_rows(vec![vec![Some(0)]]);
        assert_eq!(download_cost(&inst, &plan).unwrap(), 8.0);

        let inst = one_item(2);
        let plan = CachePlan::from_rows(vec![vec![Some(0)], vec![Some(1)]]);
        assert!((download_cost(&inst, &plan).unwrap() - 14.0).abs() < 1e-12);
    }

    #[test]
    fn download_cost_rejects_broken_chain() {
        let inst = one_item(2);
        let plan = CachePlan::from_rows(vec![vec![None], vec![Some(1)]]);
        assert!(matches!(
            download_cost(&inst, &plan),
            Err(ModelError::BrokenChain { slot: 1, .. })
        ));
        let plan = CachePlan::from_rows(vec![vec![Some(1)], vec![None]]);
        assert!(matches!(
            download_cost(&inst, &plan),
            Err(ModelError::AoiOutOfRange { slot: 0, .. })
        ));
    }

    /// Content 0 (s=2, h=3) is missing, content 1 is cached and accepted with
    /// probability 0.5.
    fn rec_example() -> Instance {
        let mut inst = flat(2, 1);
        inst.sizes = vec![2, 2];
        inst.requests = vec![vec![3, 3]];
        inst.aoi_limits = vec![0, 0];
        inst.cache_capacity = 2;
        inst.backhaul_capacity = 2;
        relate(&mut inst, 0, 1, 0.5);
        inst
    }

    #[test]
    fn recommendation_cost_examples() {
        let inst = rec_example();
        let plan = CachePlan::from_rows(vec![vec![None, Some(0)]]);
        let col =
            RecommendationColumn::new(&inst, 0, 0, vec![RecItem { content: 1, aoi: 0 }]).unwrap();
        let sol = Solution {
            plan: plan.clone(),
            recs: vec![vec![Some(col), None]],
        };
        assert!((recommendation_cost(&inst, &sol).unwrap() - 9.0).abs() < 1e-12);
        // content 1 contributes 8, as in the download example
        assert!((total_cost(&inst, &sol).unwrap() - 17.0).abs() < 1e-12);

        let sol = Solution {
            plan,
            recs: vec![vec![Some(RecommendationColumn::empty(0, 0)), None]],
        };
        assert!((recommendation_cost(&inst, &sol).unwrap() - 12.0).abs() < 1e-12);

        let all = Solution {
            plan: CachePlan::from_rows(vec![vec![Some(0), Some(0)]]),
            recs: vec![vec![None, None]],
        };
        assert_eq!(recommendation_cost(&inst, &all).unwrap(), 0.0);
    }

    #[test]
    fn recommendation_cost_rejects_uncached_items() {
        let inst = rec_example();
        let col =
            RecommendationColumn::new(&inst, 0, 0, vec![RecItem { content: 1, aoi: 0 }]).unwrap();
        let sol = Solution {
            plan: CachePlan::empty(1, 2),
            recs: vec![vec![Some(col), Some(RecommendationColumn::empty(0, 1))]],
        };
        assert!(matches!(
            recommendation_cost(&inst, &sol),
            Err(ModelError::RecommendedNotCached { .. })
        ));
    }

    #[test]
    fn server_only_cost_when_nothing_cached() {
        let mut inst = flat(3, 2);
        inst.requests = vec![vec![1, 2, 3], vec![4, 5, 6]];
        inst.sizes = vec![1, 2, 3];
        let sol = Solution::from_plan(&inst, CachePlan::empty(2, 3));
        let expected = 2.0 * (1.0 + 4.0 + 2.0 * (2.0 + 5.0) + 3.0 * (3.0 + 6.0));
        assert_eq!(total_cost(&inst, &sol).unwrap(), expected);
        assert_eq!(inst.server_only_cost(), expected);
    }

    #[test]
    fn feasibility_flags_aoi_and_capacity() {
        let inst = flat(2, 1);
        let plan = CachePlan::from_rows(vec![vec![Some(1), None]]);
        let sol = Solution::from_plan(&inst, plan);
        let v = check_feasibility(&inst, &sol);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].constraint, Constraint::AoiRange);
        assert!(v[0].detail.contains("exceeds min(A_i, t-1)"));

        let mut inst = flat(2, 1);
        inst.backhaul_capacity = 1;
        let sol = Solution::from_plan(&inst, CachePlan::from_rows(vec![vec![Some(0), Some(0)]]));
        let v = check_feasibility(&inst, &sol);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].constraint, Constraint::BackhaulCapacity);
        assert_eq!(v[0].slot, Some(0));
    }

    #[test]
    fn feasibility_flags_coverage() {
        let inst = flat(1, 1);
        let sol = Solution {
            plan: CachePlan::empty(1, 1),
            recs: vec![vec![None]],
        };
        let v = check_feasibility(&inst, &sol);
        assert_eq!(v[0].constraint, Constraint::Coverage);
    }

    fn two_related(n: usize) -> (Instance, Vec<Option<usize>>) {
        let mut inst = flat(3, 1);
        inst.rec_limit = n;
        relate(&mut inst, 0, 1, 0.7);
        relate(&mut inst, 0, 2, 0.9);
        (inst, vec![None, Some(0), Some(0)])
    }

    #[test]
    fn best_column_examples() {
        let (inst, _) = two_related(1);
        assert!(best_recommendation_column(&inst, 0, 0, &[None, None, None]).is_empty());

        let (inst, state) = two_related(1);
        let col = best_recommendation_column(&inst, 0, 0, &state);
        assert_eq!(col.items, vec![RecItem { content: 2, aoi: 0 }]);

        let (inst, state) = two_related(2);
        let col = best_recommendation_column(&inst, 0, 0, &state);
        assert_eq!(col.items.len(), 2);
        assert!((col.miss_prob - 0.03).abs() < 1e-12);
    }

    #[test]
    fn best_column_ties_prefer_lower_id() {
        let mut inst = flat(3, 1);
        inst.rec_limit = 1;
        relate(&mut inst, 0, 2, 0.5);
        relate(&mut inst, 0, 1, 0.5);
        let col = best_recommendation_column(&inst, 0, 0, &[None, Some(0), Some(0)]);
        assert_eq!(col.items, vec![RecItem { content: 1, aoi: 0 }]);
    }

    /// Every subset of at most N cached related pairs.
    fn enumerate_columns(inst: &Instance, i: usize, state: &[Option<usize>]) -> Vec<f64> {
        let pairs: Vec<f64> = inst.relations[i]
            .iter()
            .filter_map(|r| state[r.content].and_then(|a| r.probability(a)))
            .collect();
        (0u32..(1 << pairs.len()))
            .filter(|m| m.count_ones() as usize <= inst.rec_limit)
            .map(|m| {
                (0..pairs.len())
                    .filter(|k| m & (1 << k) != 0)
                    .map(|k| 1.0 - pairs[k])
                    .product()
            })
            .collect()
    }

    fn arb_rec_case() -> impl Strategy<Value = (Instance, Vec<Option<usize>>)> {
        (
            proptest::collection::vec(0.01f64..0.99, 1..=6),
            proptest::collection::vec(proptest::option::of(0usize..2), 6),
            0usize..4,
        )
            .prop_map(|(probs, state, n)| {
                let mut inst = flat(7, 1);
                inst.rec_limit = n;
                inst.aoi_limits = vec![1; 7];
                for (k, p) in probs.iter().enumerate() {
                    let len = 2;
                    inst.relations[0].push(Relation {
                        content: k + 1,
                        accept: vec![*p, p * 0.5][..len].to_vec(),
                    });
                }
                let mut full = vec![None];
                full.extend(state.into_iter().map(|s| s.map(|_| 0)));
                (inst, full)
            })
    }

    proptest! {
        #[test]
        fn best_column_minimizes_miss_probability((inst, state) in arb_rec_case()) {
            let col = best_recommendation_column(&inst, 0, 0, &state);
            let best = enumerate_columns(&inst, 0, &state).into_iter().fold(1.0f64, f64::min);
            prop_assert!((col.miss_prob - best).abs() <= 1e-12);
        }

        #[test]
        fn column_cost_matches_outcome_enumeration(
            probs in proptest::collection::vec(0.01f64..0.99, 0..6),
            s in 1u64..5, h in 0u64..7,
        ) {
            let mut inst = flat(1, 1);
            inst.sizes = vec![s];
            inst.requests = vec![vec![h]];
            let analytic = inst.column_cost(0, 0, miss_probability(&probs));
            let mut expected = 0.0;
            for outcome in 0u32..(1 << probs.len()) {
                let mut weight = 1.0;
                for (k, p) in probs.iter().enumerate() {
                    weight *= if outcome & (1 << k) != 0 { *p } else { 1.0 - p };
                }
                let unit = if outcome != 0 { inst.cost_cache } else { inst.cost_server };
                expected += weight * unit * (s * h) as f64;
            }
            prop_assert!((analytic - expected).abs() <= 1e-9 * expected.max(1.0));
        }
    }

    #[test]
    fn aoi_layout_indexes_every_triple_once() {
        let mut inst = flat(2, 3);
        inst.aoi_limits = vec![2, 0];
        let layout = AoiLayout::new(&inst);
        // slot 0: 1 + 1, slot 1: 2 + 1, slot 2: 3 + 1
        assert_eq!(layout.len(), 9);
        assert_eq!(layout.index(2, 0, 2), 7);
        assert_eq!(layout.range(2, 1), 8..9);
    }
}
