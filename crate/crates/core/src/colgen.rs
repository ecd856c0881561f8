//! Per-slot caching and recommendation LP solved by column generation.
//!
//! The restricted master of slot `t` has variables `y_i` (cached),
//! `x_ia` (cached at AoI `a`) and one `v_ic` per pooled recommendation column.
//! Rows:
//!
//! * link: `sum_a x_ia - y_i = 0`
//! * cover: `sum_c v_ic + y_i = 1`, dual `pi_i`
//! * offer: `sum_{c owns (j,a)} v_ic - x_ja <= 0`, price `beta_ija = -dual >= 0`
//! * cache: `sum_i s_i y_i <= S`
//! * backhaul: `sum_i s_i x_i0 <= L`
//!
//! Offer rows are created the first time a pooled column uses the pair; an
//! absent row has price zero. Pools and the tableau persist across calls, so a
//! change of multipliers only updates objective coefficients.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::model::{Instance, Multipliers, RecItem, RecommendationColumn};
use crate::simplex::{Basis, ColKind, LpStatus, RowKind, SimplexConfig, SimplexError, Tableau};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ColgenError {
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error("restricted master of slot {slot} is {status:?}")]
    Master { slot: usize, status: LpStatus },
    #[error("pricing for content {content} in slot {slot} returned a pooled column")]
    ColumnGenerationStall { slot: usize, content: usize },
    #[error("column generation in slot {slot} exceeded {rounds} rounds")]
    RoundLimit { slot: usize, rounds: usize },
}

/// How quantized weights are rounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rounding {
    Nearest,
    /// Rounds up; the DP then under-estimates every miss probability, which
    /// makes its minimum a valid lower bound.
    Up,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pricing {
    /// Quantized covering-knapsack DP with scale `m`.
    Dp { m: u32 },
    /// Every column with at most `N` items, for small relation sets.
    Enumerate,
    /// Enumeration when a content has at most `limit` columns, else the DP.
    Auto { m: u32, limit: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColgenConfig {
    pub pricing: Pricing,
    /// Columns are added only below this reduced cost.
    pub accept_tol: f64,
    pub max_rounds: usize,
    /// Improving columns added per content and round when enumerating.
    pub columns_per_round: usize,
    /// Compute a certified lower bound on the full master at termination.
    pub certify: bool,
    pub trace: bool,
    pub simplex: SimplexConfig,
}

impl Default for ColgenConfig {
    fn default() -> Self {
        Self {
            pricing: Pricing::Auto {
                m: 10_000,
                limit: 5_000,
            },
            accept_tol: 1e-6,
            max_rounds: 10_000,
            columns_per_round: 1,
            certify: true,
            trace: false,
            simplex: SimplexConfig::default(),
        }
    }
}

/// Dual values of the cover rows and prices of the offer rows, the latter
/// indexed `[owner][position in relations[owner]][aoi]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualPrices {
    pub pi: Vec<f64>,
    pub beta: Vec<Vec<Vec<f64>>>,
}

impl DualPrices {
    pub fn zeros(inst: &Instance, t: usize) -> Self {
        let beta = (0..inst.num_contents)
            .map(|i| {
                inst.relations[i]
                    .iter()
                    .map(|r| vec![0.0; inst.max_aoi(t, r.content) + 1])
                    .collect()
            })
            .collect();
        Self {
            pi: vec![0.0; inst.num_contents],
            beta,
        }
    }

    pub fn beta_of(&self, inst: &Instance, owner: usize, content: usize, aoi: usize) -> f64 {
        inst.relations[owner]
            .iter()
            .position(|r| r.content == content)
            .and_then(|k| self.beta[owner][k].get(aoi).copied())
            .unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PricedColumn {
    pub column: RecommendationColumn,
    pub reduced_cost: f64,
}

/// `s h (c_s - c_b) P + c_b s h - pi_i + sum of member prices`.
pub fn reduced_cost(
    inst: &Instance,
    t: usize,
    i: usize,
    column: &RecommendationColumn,
    duals: &DualPrices,
) -> f64 {
    let beta: f64 = column
        .items
        .iter()
        .map(|it| duals.beta_of(inst, i, it.content, it.aoi))
        .sum();
    inst.column_cost(t, i, column.miss_prob) - duals.pi[i] + beta
}

/// Related pairs usable by `i` in slot `t`: relation position, content and
/// per-AoI acceptance.
fn candidates(inst: &Instance, t: usize, i: usize) -> Vec<(usize, usize, Vec<f64>)> {
    inst.relations[i]
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let top = inst
                .max_aoi(t, r.content)
                .min(r.accept.len().saturating_sub(1));
            (k, r.content, r.accept[..=top].to_vec())
        })
        .collect()
}

struct Cover {
    /// `best[w]`: least price of a set of at most `N` items with weight >= w.
    best: Vec<f64>,
    choice: Vec<u8>,
    weights: Vec<Vec<usize>>,
    width: usize,
    n_max: usize,
}

impl Cover {
    fn choice_at(&self, item: usize, n: usize, w: usize) -> u8 {
        self.choice[(item * (self.n_max + 1) + n) * self.width + w]
    }
}

fn quantize(p: f64, m: u32, rounding: Rounding) -> usize {
    let q = -(m as f64) * (1.0 - p).log10();
    match rounding {
        Rounding::Nearest => q.round() as usize,
        Rounding::Up => q.ceil() as usize,
    }
}

fn cover_dp(weights: Vec<Vec<usize>>, prices: &[Vec<f64>], n_max: usize) -> Cover {
    // the largest weight any admissible set reaches
    let mut tops: Vec<usize> = weights
        .iter()
        .map(|w| w.iter().copied().max().unwrap_or(0))
        .collect();
    tops.sort_unstable_by(|a, b| b.cmp(a));
    let cap: usize = tops.iter().take(n_max).sum();
    let width = cap + 1;
    let mut dp = vec![vec![f64::INFINITY; width]; n_max + 1];
    for row in dp.iter_mut() {
        row[0] = 0.0;
    }
    let mut choice = vec![0u8; weights.len() * (n_max + 1) * width];
    for (item, (ws, ps)) in weights.iter().zip(prices).enumerate() {
        for n in (1..=n_max).rev() {
            let (lower, upper) = dp.split_at_mut(n);
            let prev = &lower[n - 1];
            let cur = &mut upper[0];
            let base = (item * (n_max + 1) + n) * width;
            for w in 0..width {
                let mut best = cur[w];
                let mut ch = 0u8;
                for (a, (&q, &b)) in ws.iter().zip(ps).enumerate() {
                    let cand = b + prev[w.saturating_sub(q)];
                    if cand < best {
                        best = cand;
                        ch = a as u8 + 1;
                    }
                }
                cur[w] = best;
                choice[base + w] = ch;
            }
        }
    }
    let best = dp.pop().unwrap();
    Cover {
        best,
        choice,
        weights,
        width,
        n_max,
    }
}

/// Result of one pricing DP: the candidate column with its exact reduced
/// cost, and the minimum of the quantized objective.
#[derive(Clone, Debug, PartialEq)]
pub struct PricingOutcome {
    pub priced: PricedColumn,
    pub quantized_min: f64,
}

/// Quantized pricing DP for content `i` in slot `t`.
pub fn price_column_dp(
    inst: &Instance,
    t: usize,
    i: usize,
    duals: &DualPrices,
    m: u32,
    rounding: Rounding,
) -> PricingOutcome {
    let shh = inst.size(i) * inst.demand(t, i);
    let k = shh * inst.refresh_unit_cost();
    let constant = inst.cost_cache * shh - duals.pi[i];
    let empty = RecommendationColumn::empty(t, i);
    let cands = candidates(inst, t, i);
    if k <= 0.0 || inst.rec_limit == 0 || cands.is_empty() {
        let rc = reduced_cost(inst, t, i, &empty, duals);
        return PricingOutcome {
            priced: PricedColumn {
                column: empty,
                reduced_cost: rc,
            },
            quantized_min: k + constant,
        };
    }
    let weights: Vec<Vec<usize>> = cands
        .iter()
        .map(|(_, _, ps)| ps.iter().map(|&p| quantize(p, m, rounding)).collect())
        .collect();
    let prices: Vec<Vec<f64>> = cands
        .iter()
        .map(|(pos, _, ps)| {
            (0..ps.len())
                .map(|a| duals.beta[i][*pos].get(a).copied().unwrap_or(0.0).max(0.0))
                .collect()
        })
        .collect();
    let n_max = inst.rec_limit.min(cands.len());
    let cover = cover_dp(weights, &prices, n_max);
    let mut best = (f64::INFINITY, 0usize);
    for w in 0..cover.width {
        let b = cover.best[w];
        if !b.is_finite() {
            break;
        }
        let v = k * 10f64.powf(-(w as f64) / m as f64) + b;
        if v < best.0 {
            best = (v, w);
        }
    }
    // backtrack the set behind the best capacity
    let mut items = Vec::new();
    let (mut n, mut w) = (n_max, best.1);
    for item in (0..cands.len()).rev() {
        if n == 0 {
            break;
        }
        let ch = cover.choice_at(item, n, w);
        if ch > 0 {
            let a = ch as usize - 1;
            items.push(RecItem {
                content: cands[item].1,
                aoi: a,
            });
            w = w.saturating_sub(cover.weights[item][a]);
            n -= 1;
        }
    }
    let column =
        RecommendationColumn::new(inst, t, i, items).expect("pricing builds related items");
    let rc = reduced_cost(inst, t, i, &column, duals);
    PricingOutcome {
        priced: PricedColumn {
            column,
            reduced_cost: rc,
        },
        quantized_min: best.0 + constant,
    }
}

/// Every column of `(t, i)` with at most `N` items, the empty one first.
pub fn enumerate_columns(inst: &Instance, t: usize, i: usize) -> Vec<RecommendationColumn> {
    let cands = candidates(inst, t, i);
    let mut out = Vec::new();
    let mut cur: Vec<RecItem> = Vec::new();
    fn rec(
        inst: &Instance,
        t: usize,
        i: usize,
        cands: &[(usize, usize, Vec<f64>)],
        from: usize,
        cur: &mut Vec<RecItem>,
        out: &mut Vec<RecommendationColumn>,
    ) {
        out.push(RecommendationColumn::new(inst, t, i, cur.clone()).expect("related items"));
        if cur.len() == inst.rec_limit {
            return;
        }
        for k in from..cands.len() {
            for a in 0..cands[k].2.len() {
                cur.push(RecItem {
                    content: cands[k].1,
                    aoi: a,
                });
                rec(inst, t, i, cands, k + 1, cur, out);
                cur.pop();
            }
        }
    }
    rec(inst, t, i, &cands, 0, &mut cur, &mut out);
    out
}

/// Number of columns of `(t, i)`, saturating at `usize::MAX`.
pub fn column_count(inst: &Instance, t: usize, i: usize) -> usize {
    // sets of exactly n items, one AoI option per item
    let mut by_size = vec![0usize; inst.rec_limit + 1];
    by_size[0] = 1;
    for (_, _, ps) in candidates(inst, t, i) {
        for n in (1..by_size.len()).rev() {
            by_size[n] = by_size[n].saturating_add(by_size[n - 1].saturating_mul(ps.len()));
        }
    }
    by_size.iter().fold(0usize, |a, &b| a.saturating_add(b))
}

/// Exact pricing by enumeration in the order of [`enumerate_columns`]; ties
/// keep the earlier column.
pub fn price_column_enumerate(
    inst: &Instance,
    t: usize,
    i: usize,
    duals: &DualPrices,
) -> PricedColumn {
    price_columns_enumerate(inst, t, i, duals, 1).remove(0)
}

/// The `count` columns of least reduced cost, best first.
pub fn price_columns_enumerate(
    inst: &Instance,
    t: usize,
    i: usize,
    duals: &DualPrices,
    count: usize,
) -> Vec<PricedColumn> {
    let cands = candidates(inst, t, i);
    let k = inst.size(i) * inst.demand(t, i) * inst.refresh_unit_cost();
    let prices: Vec<Vec<f64>> = cands
        .iter()
        .map(|(pos, _, ps)| {
            (0..ps.len())
                .map(|a| duals.beta[i][*pos].get(a).copied().unwrap_or(0.0))
                .collect()
        })
        .collect();
    struct Walk<'a> {
        cands: &'a [(usize, usize, Vec<f64>)],
        prices: &'a [Vec<f64>],
        limit: usize,
        k: f64,
        keep: usize,
        cur: Vec<(usize, usize)>,
        // ascending by value; equal values keep enumeration order
        best: Vec<(f64, Vec<(usize, usize)>)>,
    }
    impl Walk<'_> {
        fn rec(&mut self, from: usize, miss: f64, beta: f64) {
            let v = self.k * miss + beta;
            if self.best.len() < self.keep || v < self.best.last().unwrap().0 {
                let at = self.best.partition_point(|b| b.0 <= v);
                self.best.insert(at, (v, self.cur.clone()));
                self.best.truncate(self.keep);
            }
            if self.cur.len() == self.limit {
                return;
            }
            for item in from..self.cands.len() {
                for a in 0..self.cands[item].2.len() {
                    self.cur.push((item, a));
                    self.rec(
                        item + 1,
                        miss * (1.0 - self.cands[item].2[a]),
                        beta + self.prices[item][a],
                    );
                    self.cur.pop();
                }
            }
        }
    }
    let mut walk = Walk {
        cands: &cands,
        prices: &prices,
        limit: inst.rec_limit,
        k,
        keep: count.max(1),
        cur: Vec::new(),
        best: Vec::new(),
    };
    walk.rec(0, 1.0, 0.0);
    walk.best
        .into_iter()
        .map(|(_, chosen)| {
            let items = chosen
                .iter()
                .map(|&(item, a)| RecItem {
                    content: cands[item].1,
                    aoi: a,
                })
                .collect();
            let column = RecommendationColumn::new(inst, t, i, items).expect("related items");
            let reduced_cost = reduced_cost(inst, t, i, &column, duals);
            PricedColumn {
                column,
                reduced_cost,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColgenTraceEntry {
    pub round: usize,
    pub objective: f64,
    pub columns_added: usize,
    pub pool_sizes: Vec<usize>,
    pub duals: DualPrices,
}

/// Solution of one slot LP.
#[derive(Clone, Debug, PartialEq)]
pub struct Sp2Result {
    pub slot: usize,
    pub objective: f64,
    /// Certified lower bound on the full master; equals `objective` when
    /// certification is off.
    pub lower_bound: f64,
    pub y: Vec<f64>,
    /// `x[i][a]`
    pub x: Vec<Vec<f64>>,
    /// `v[i][k]` for the `k`-th pooled column of `i`
    pub v: Vec<Vec<f64>>,
    pub duals: DualPrices,
    pub rounds: usize,
    pub columns_added: usize,
    pub trace: Vec<ColgenTraceEntry>,
}

#[derive(Clone, Debug)]
struct Pooled {
    column: RecommendationColumn,
    var: usize,
    /// Consecutive solves that ended with this column at zero.
    idle: usize,
}

/// Restricted master of one slot, kept alive across multiplier updates.
#[derive(Clone, Debug)]
pub struct SlotMaster {
    slot: usize,
    tab: Tableau,
    y_var: Vec<usize>,
    x_var: Vec<Vec<usize>>,
    cover_row: Vec<usize>,
    offer_row: HashMap<(usize, usize, usize), usize>,
    pools: Vec<Vec<Pooled>>,
    fixed: Vec<Option<bool>>,
}

impl SlotMaster {
    pub fn new(inst: &Instance, t: usize, lambda: &Multipliers, simplex: SimplexConfig) -> Self {
        let n = inst.num_contents;
        let mut tab = Tableau::new(simplex);
        let y_var: Vec<usize> = (0..n)
            .map(|_| tab.add_column(0.0, &[], f64::INFINITY))
            .collect();
        let x_var: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                (0..=inst.max_aoi(t, i))
                    .map(|a| tab.add_column(-lambda.get(t, i, a), &[], f64::INFINITY))
                    .collect()
            })
            .collect();
        for i in 0..n {
            let mut entries: Vec<(usize, f64)> = x_var[i].iter().map(|&v| (v, 1.0)).collect();
            entries.push((y_var[i], -1.0));
            tab.add_row(&entries, RowKind::Eq, 0.0);
        }
        let cover_row: Vec<usize> = (0..n)
            .map(|i| tab.add_row(&[(y_var[i], 1.0)], RowKind::Eq, 1.0))
            .collect();
        let cache: Vec<(usize, f64)> = (0..n).map(|i| (y_var[i], inst.size(i))).collect();
        tab.add_row(&cache, RowKind::Le, inst.cache_capacity as f64);
        let backhaul: Vec<(usize, f64)> = (0..n).map(|i| (x_var[i][0], inst.size(i))).collect();
        tab.add_row(&backhaul, RowKind::Le, inst.backhaul_capacity as f64);
        let mut master = Self {
            slot: t,
            tab,
            y_var,
            x_var,
            cover_row,
            offer_row: HashMap::new(),
            pools: vec![Vec::new(); n],
            fixed: vec![None; n],
        };
        for i in 0..n {
            master.add_column(inst, RecommendationColumn::empty(t, i));
        }
        master
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn pool(&self, i: usize) -> impl Iterator<Item = &RecommendationColumn> {
        self.pools[i].iter().map(|p| &p.column)
    }

    pub fn pool_sizes(&self) -> Vec<usize> {
        self.pools.iter().map(Vec::len).collect()
    }

    pub fn set_prices(&mut self, inst: &Instance, lambda: &Multipliers) {
        let t = self.slot;
        for i in 0..inst.num_contents {
            for (a, &var) in self.x_var[i].iter().enumerate() {
                self.tab.set_cost(var, -lambda.get(t, i, a));
            }
        }
    }

    fn contains(&self, column: &RecommendationColumn) -> bool {
        self.pools[column.owner]
            .iter()
            .any(|p| p.column.same_set(column))
    }

    fn add_column(&mut self, inst: &Instance, column: RecommendationColumn) {
        let i = column.owner;
        let mut entries = vec![(self.cover_row[i], 1.0)];
        for it in &column.items {
            let key = (i, it.content, it.aoi);
            let row = match self.offer_row.get(&key) {
                Some(&r) => r,
                None => {
                    let r = self.tab.add_row(
                        &[(self.x_var[it.content][it.aoi], -1.0)],
                        RowKind::Le,
                        0.0,
                    );
                    self.offer_row.insert(key, r);
                    r
                }
            };
            entries.push((row, 1.0));
        }
        let cost = inst.column_cost(self.slot, i, column.miss_prob);
        let var = self.tab.add_column(cost, &entries, f64::INFINITY);
        self.pools[i].push(Pooled {
            column,
            var,
            idle: 0,
        });
    }

    /// Drops non-empty columns that ended the last `max_idle` solves at zero
    /// and rebuilds the LP, restarting from the current basis. Pricing can
    /// regenerate any dropped column. Returns the number dropped; masters
    /// with fixed contents are left alone.
    pub fn purge(&mut self, inst: &Instance, max_idle: usize) -> usize {
        let stale = |p: &Pooled| !p.column.is_empty() && p.idle >= max_idle;
        let dropped = self.pools.iter().flatten().filter(|p| stale(p)).count();
        if dropped == 0 || self.fixed.iter().any(Option::is_some) {
            return 0;
        }
        let t = self.slot;
        let mut fresh = SlotMaster::new(inst, t, &Multipliers::zeros(inst), self.tab.config());
        for (old, new) in self
            .x_var
            .iter()
            .flatten()
            .zip(fresh.x_var.iter().flatten())
        {
            fresh.tab.set_cost(*new, self.tab.cost(*old));
        }
        // y, x and the empty columns come first in both masters
        let mut var_map: HashMap<usize, usize> = HashMap::new();
        for (old, new) in self
            .y_var
            .iter()
            .chain(self.x_var.iter().flatten())
            .zip(fresh.y_var.iter().chain(fresh.x_var.iter().flatten()))
        {
            var_map.insert(*old, *new);
        }
        for i in 0..inst.num_contents {
            var_map.insert(self.pools[i][0].var, fresh.pools[i][0].var);
        }
        for i in 0..inst.num_contents {
            for p in &self.pools[i][1..] {
                if !stale(p) {
                    fresh.add_column(inst, p.column.clone());
                    let kept = fresh.pools[i].last_mut().unwrap();
                    kept.idle = p.idle;
                    var_map.insert(p.var, kept.var);
                }
            }
        }
        // structural rows keep their indices; offer rows are matched by key
        let fixed_rows = 2 * inst.num_contents + 2;
        let mut row_map: HashMap<usize, usize> = (0..fixed_rows).map(|r| (r, r)).collect();
        for (key, &r) in &self.offer_row {
            if let Some(&nr) = fresh.offer_row.get(key) {
                row_map.insert(r, nr);
            }
        }
        let basis: Vec<ColKind> = self
            .tab
            .basis()
            .0
            .into_iter()
            .filter_map(|kind| match kind {
                ColKind::Structural(j) => var_map.get(&j).map(|&j| ColKind::Structural(j)),
                ColKind::Slack(r) => row_map.get(&r).map(|&r| ColKind::Slack(r)),
                ColKind::Surplus(r) => row_map.get(&r).map(|&r| ColKind::Surplus(r)),
                ColKind::Artificial(r) => row_map.get(&r).map(|&r| ColKind::Artificial(r)),
            })
            .collect();
        fresh.tab.warm_start(Basis(basis));
        *self = fresh;
        dropped
    }

    /// Pins `y_i` to one or zero for the rest of this master's life.
    pub fn fix(&mut self, i: usize, cached: bool) {
        if self.fixed[i].is_some() {
            return;
        }
        if cached {
            self.tab
                .add_row(&[(self.y_var[i], -1.0)], RowKind::Le, -1.0);
        } else {
            self.tab.add_row(&[(self.y_var[i], 1.0)], RowKind::Le, 0.0);
        }
        self.fixed[i] = Some(cached);
    }

    pub fn fixed(&self, i: usize) -> Option<bool> {
        self.fixed[i]
    }

    fn duals(&self, inst: &Instance) -> DualPrices {
        let raw = self.tab.duals();
        let mut duals = DualPrices::zeros(inst, self.slot);
        for i in 0..inst.num_contents {
            duals.pi[i] = raw[self.cover_row[i]];
            for (k, rel) in inst.relations[i].iter().enumerate() {
                for a in 0..duals.beta[i][k].len() {
                    if let Some(&r) = self.offer_row.get(&(i, rel.content, a)) {
                        duals.beta[i][k][a] = (-raw[r]).max(0.0);
                    }
                }
            }
        }
        duals
    }

    /// Best column first.
    fn price(
        &self,
        inst: &Instance,
        i: usize,
        duals: &DualPrices,
        cfg: &ColgenConfig,
    ) -> Vec<PricedColumn> {
        match self.resolve(inst, i, cfg.pricing) {
            Pricing::Dp { m } => {
                vec![price_column_dp(inst, self.slot, i, duals, m, Rounding::Nearest).priced]
            }
            Pricing::Enumerate => {
                price_columns_enumerate(inst, self.slot, i, duals, cfg.columns_per_round)
            }
            Pricing::Auto { .. } => unreachable!("resolved above"),
        }
    }

    /// Lower bound on the least reduced cost of any column of `i`.
    fn reduced_cost_bound(
        &self,
        inst: &Instance,
        i: usize,
        duals: &DualPrices,
        pricing: Pricing,
    ) -> f64 {
        match self.resolve(inst, i, pricing) {
            Pricing::Dp { m } => {
                let q = price_column_dp(inst, self.slot, i, duals, m, Rounding::Up);
                // quantized minimum is below every exact value up to float noise
                q.quantized_min.min(q.priced.reduced_cost) - 1e-9 * (1.0 + q.quantized_min.abs())
            }
            Pricing::Enumerate => price_column_enumerate(inst, self.slot, i, duals).reduced_cost,
            Pricing::Auto { .. } => unreachable!("resolved above"),
        }
    }

    fn resolve(&self, inst: &Instance, i: usize, pricing: Pricing) -> Pricing {
        match pricing {
            Pricing::Auto { m, limit } if column_count(inst, self.slot, i) > limit => {
                Pricing::Dp { m }
            }
            Pricing::Auto { .. } => Pricing::Enumerate,
            other => other,
        }
    }

    /// Column generation to optimality of the master LP.
    pub fn solve(&mut self, inst: &Instance, cfg: &ColgenConfig) -> Result<Sp2Result, ColgenError> {
        let t = self.slot;
        let mut rounds = 0;
        let mut added_total = 0;
        let mut trace = Vec::new();
        loop {
            let status = self.tab.solve()?;
            if status != LpStatus::Optimal {
                return Err(ColgenError::Master { slot: t, status });
            }
            rounds += 1;
            let duals = self.duals(inst);
            let mut added = Vec::new();
            for i in 0..inst.num_contents {
                if self.fixed[i] == Some(true) {
                    continue;
                }
                let priced = self.price(inst, i, &duals, cfg);
                if priced[0].reduced_cost < -cfg.accept_tol && self.contains(&priced[0].column) {
                    return Err(ColgenError::ColumnGenerationStall {
                        slot: t,
                        content: i,
                    });
                }
                for p in priced {
                    if p.reduced_cost < -cfg.accept_tol && !self.contains(&p.column) {
                        added.push(p.column);
                    }
                }
            }
            if cfg.trace {
                trace.push(ColgenTraceEntry {
                    round: rounds,
                    objective: self.tab.objective(),
                    columns_added: added.len(),
                    pool_sizes: self.pool_sizes(),
                    duals: duals.clone(),
                });
            }
            if added.is_empty() {
                let objective = self.tab.objective();
                let mut lower_bound = objective;
                if cfg.certify {
                    for i in 0..inst.num_contents {
                        if self.fixed[i] == Some(true) {
                            continue;
                        }
                        lower_bound += self
                            .reduced_cost_bound(inst, i, &duals, cfg.pricing)
                            .min(0.0);
                    }
                }
                let result = self.result(
                    inst,
                    objective,
                    lower_bound,
                    duals,
                    rounds,
                    added_total,
                    trace,
                );
                for (pool, values) in self.pools.iter_mut().zip(&result.v) {
                    for (p, &value) in pool.iter_mut().zip(values) {
                        p.idle = if value > 1e-12 { 0 } else { p.idle + 1 };
                    }
                }
                return Ok(result);
            }
            if rounds >= cfg.max_rounds {
                return Err(ColgenError::RoundLimit { slot: t, rounds });
            }
            added_total += added.len();
            for column in added {
                self.add_column(inst, column);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn result(
        &self,
        inst: &Instance,
        objective: f64,
        lower_bound: f64,
        duals: DualPrices,
        rounds: usize,
        columns_added: usize,
        trace: Vec<ColgenTraceEntry>,
    ) -> Sp2Result {
        let x_all = self.tab.primal_values();
        let y = self.y_var.iter().map(|&v| x_all[v]).collect();
        let x = self
            .x_var
            .iter()
            .map(|vars| vars.iter().map(|&v| x_all[v]).collect())
            .collect();
        let v = self
            .pools
            .iter()
            .map(|pool| pool.iter().map(|p| x_all[p.var]).collect())
            .collect();
        let _ = inst;
        Sp2Result {
            slot: self.slot,
            objective,
            lower_bound,
            y,
            x,
            v,
            duals,
            rounds,
            columns_added,
            trace,
        }
    }
}

/// Solves the slot LP of `master` at multipliers `lambda`.
pub fn solve_sp2_slot(
    inst: &Instance,
    lambda: &Multipliers,
    master: &mut SlotMaster,
    cfg: &ColgenConfig,
) -> Result<Sp2Result, ColgenError> {
    master.set_prices(inst, lambda);
    master.solve(inst, cfg)
}
