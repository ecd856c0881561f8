//! Dense two-phase primal simplex with dual values.
//!
//! [`solve_lp`] is the one-shot entry point. [`Tableau`] keeps the factorized
//! tableau alive so that columns, rows and cost changes can be applied to a
//! solved LP and re-optimized from the previous basis; column generation
//! relies on this.
//!
//! Dual sign convention for a minimization LP: duals of `<=` rows are
//! non-positive, of `>=` rows non-negative, of `=` rows free.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpRow {
    pub coeffs: Vec<f64>,
    pub kind: RowKind,
    pub rhs: f64,
}

/// `min c.x` subject to the rows and `0 <= x <= upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub costs: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
}

impl LinearProgram {
    pub fn new(costs: Vec<f64>) -> Self {
        let upper = vec![f64::INFINITY; costs.len()];
        Self {
            costs,
            upper,
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, kind: RowKind, rhs: f64) -> &mut Self {
        self.rows.push(LpRow { coeffs, kind, rhs });
        self
    }

    pub fn validate(&self) -> Result<(), SimplexError> {
        let n = self.costs.len();
        if self.upper.len() != n {
            return Err(SimplexError::Dimension {
                what: "upper bounds",
                expected: n,
                found: self.upper.len(),
            });
        }
        for row in &self.rows {
            if row.coeffs.len() != n {
                return Err(SimplexError::Dimension {
                    what: "row",
                    expected: n,
                    found: row.coeffs.len(),
                });
            }
        }
        let finite = self.costs.iter().chain(
            self.rows
                .iter()
                .flat_map(|r| r.coeffs.iter().chain([&r.rhs])),
        );
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(SimplexError::NonFinite);
        }
        if self.upper.iter().any(|u| u.is_nan() || *u < 0.0) {
            return Err(SimplexError::NonFinite);
        }
        Ok(())
    }

    /// CPLEX LP text rendering, for cross-checking with external solvers.
    pub fn to_lp_format(&self) -> String {
        let term = |out: &mut String, first: bool, c: f64, j: usize| {
            let sign = if c < 0.0 {
                " -"
            } else if first {
                ""
            } else {
                " +"
            };
            let _ = write!(out, "{sign} {} x{j}", c.abs());
        };
        let mut out = String::from("\\ copra linear program\nMinimize\n obj:");
        let mut first = true;
        for (j, &c) in self.costs.iter().enumerate() {
            if c != 0.0 {
                term(&mut out, first, c, j);
                first = false;
            }
        }
        if first {
            out.push_str(" 0 x0");
        }
        out.push_str("\nSubject To\n");
        for (r, row) in self.rows.iter().enumerate() {
            let _ = write!(out, " c{r}:");
            let mut first = true;
            for (j, &c) in row.coeffs.iter().enumerate() {
                if c != 0.0 {
                    term(&mut out, first, c, j);
                    first = false;
                }
            }
            if first {
                out.push_str(" 0 x0");
            }
            let op = match row.kind {
                RowKind::Le => "<=",
                RowKind::Ge => ">=",
                RowKind::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", row.rhs);
        }
        out.push_str("Bounds\n");
        for (j, &u) in self.upper.iter().enumerate() {
            if u.is_finite() {
                let _ = writeln!(out, " 0 <= x{j} <= {u}");
            } else {
                let _ = writeln!(out, " x{j} >= 0");
            }
        }
        out.push_str("End\n");
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Internal column identity, stable under column and row additions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ColKind {
    Structural(usize),
    Slack(usize),
    Surplus(usize),
    Artificial(usize),
}

/// Basic column per internal row.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Basis(pub Vec<ColKind>);

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub duals: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub basis: Basis,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimplexError {
    #[error("simplex exceeded {0} pivots")]
    IterationLimit(usize),
    #[error("{what}: expected {expected} entries, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("linear program contains non-finite data")]
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexConfig {
    pub pivot_tol: f64,
    pub max_iterations: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    /// Pivots after which the tableau is rebuilt from the original data.
    pub refactor_every: usize,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-9,
            max_iterations: 100_000,
            bland_after: 50,
            refactor_every: 2_000,
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, SimplexError> {
    solve_lp_with(lp, SimplexConfig::default(), None)
}

/// Solves `lp`, optionally starting from a previously optimal basis.
pub fn solve_lp_with(
    lp: &LinearProgram,
    config: SimplexConfig,
    warm: Option<&Basis>,
) -> Result<LpSolution, SimplexError> {
    lp.validate()?;
    let mut tab = Tableau::new(config);
    for (j, &c) in lp.costs.iter().enumerate() {
        tab.add_column(c, &[], lp.upper[j]);
    }
    for row in &lp.rows {
        let entries: Vec<(usize, f64)> = row
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, c)| (j, *c))
            .collect();
        tab.add_row(&entries, row.kind, row.rhs);
    }
    if let Some(b) = warm {
        tab.warm_start(b.clone());
    }
    let status = tab.solve()?;
    Ok(LpSolution {
        status,
        primal: tab.primal_values(),
        duals: if status == LpStatus::Optimal {
            tab.duals()
        } else {
            vec![0.0; lp.rows.len()]
        },
        objective: tab.objective(),
        iterations: tab.iterations(),
        basis: tab.basis(),
    })
}

#[derive(Clone, Debug)]
struct SourceRow {
    entries: Vec<(usize, f64)>,
    kind: RowKind,
    rhs: f64,
}

const PERTURBATION: f64 = 1e-7;
const HARRIS_SLACK: f64 = 1e-9;
const FEASIBILITY_NOISE: f64 = 1e-7;

/// Incrementally modifiable LP with a persistent dense tableau.
#[derive(Clone, Debug)]
pub struct Tableau {
    config: SimplexConfig,
    // source data
    costs: Vec<f64>,
    source: Vec<SourceRow>,
    user_rows: Vec<usize>,
    // dense state
    built: bool,
    warm: Option<Basis>,
    t: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    cols: Vec<ColKind>,
    col_cost: Vec<f64>,
    barred: Vec<bool>,
    basis: Vec<usize>,
    unit: Vec<usize>,
    sign: Vec<f64>,
    struct_col: Vec<usize>,
    obj: Vec<f64>,
    needs_phase1: bool,
    pivots_since_build: usize,
    iterations: usize,
    status: Option<LpStatus>,
}

impl Tableau {
    pub fn new(config: SimplexConfig) -> Self {
        Self {
            config,
            costs: Vec::new(),
            source: Vec::new(),
            user_rows: Vec::new(),
            built: false,
            warm: None,
            t: Vec::new(),
            rhs: Vec::new(),
            cols: Vec::new(),
            col_cost: Vec::new(),
            barred: Vec::new(),
            basis: Vec::new(),
            unit: Vec::new(),
            sign: Vec::new(),
            struct_col: Vec::new(),
            obj: Vec::new(),
            needs_phase1: false,
            pivots_since_build: 0,
            iterations: 0,
            status: None,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn num_rows(&self) -> usize {
        self.user_rows.len()
    }

    /// Adds a structural column with entries `(user row, coefficient)`.
    pub fn add_column(&mut self, cost: f64, entries: &[(usize, f64)], upper: f64) -> usize {
        let j = self.costs.len();
        self.costs.push(cost);
        for &(r, a) in entries {
            let internal = self.user_rows[r];
            self.source[internal].entries.push((j, a));
        }
        if self.built {
            let col: Vec<f64> = (0..self.t.len())
                .map(|k| {
                    entries.iter().fold(0.0, |acc, &(r, a)| {
                        let internal = self.user_rows[r];
                        acc + self.t[k][self.unit[internal]] * self.sign[internal] * a
                    })
                })
                .collect();
            self.push_column(ColKind::Structural(j), cost, &col);
            self.struct_col.push(self.cols.len() - 1);
        }
        if upper.is_finite() {
            self.push_source_row(vec![(j, 1.0)], RowKind::Le, upper, None);
        }
        self.status = None;
        j
    }

    /// Adds a row over structural columns; returns its user row index.
    pub fn add_row(&mut self, entries: &[(usize, f64)], kind: RowKind, rhs: f64) -> usize {
        let r = self.user_rows.len();
        self.push_source_row(entries.to_vec(), kind, rhs, Some(r));
        r
    }

    pub fn set_cost(&mut self, j: usize, cost: f64) {
        self.costs[j] = cost;
        if self.built {
            self.col_cost[self.struct_col[j]] = cost;
        }
        self.status = None;
    }

    pub fn cost(&self, j: usize) -> f64 {
        self.costs[j]
    }

    /// Requests a restart from `basis` on the next solve.
    pub fn warm_start(&mut self, basis: Basis) {
        self.warm = Some(basis);
        self.built = false;
    }

    pub fn config(&self) -> SimplexConfig {
        self.config
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn status(&self) -> Option<LpStatus> {
        self.status
    }

    fn push_source_row(
        &mut self,
        entries: Vec<(usize, f64)>,
        kind: RowKind,
        rhs: f64,
        user: Option<usize>,
    ) {
        let internal = self.source.len();
        self.source.push(SourceRow { entries, kind, rhs });
        if let Some(r) = user {
            debug_assert_eq!(r, self.user_rows.len());
            self.user_rows.push(internal);
        }
        self.status = None;
        if !self.built {
            return;
        }
        if kind == RowKind::Eq {
            // equality rows need an artificial; rebuild from the current basis
            self.warm = Some(self.basis());
            self.built = false;
            return;
        }
        let sign = if kind == RowKind::Ge { -1.0 } else { 1.0 };
        let ncols = self.cols.len();
        let mut row = vec![0.0; ncols];
        for &(j, a) in &self.source[internal].entries {
            row[self.struct_col[j]] += sign * a;
        }
        let mut b = sign * rhs;
        for k in 0..self.t.len() {
            let f = row[self.basis[k]];
            if f != 0.0 {
                axpy(&mut row, -f, &self.t[k]);
                b -= f * self.rhs[k];
            }
        }
        for k in 0..self.t.len() {
            self.t[k].push(0.0);
        }
        row.push(1.0);
        self.cols.push(ColKind::Slack(internal));
        self.col_cost.push(0.0);
        self.barred.push(false);
        self.obj.push(0.0);
        self.t.push(row);
        self.rhs.push(b);
        self.basis.push(ncols);
        self.unit.push(ncols);
        self.sign.push(sign);
    }

    fn push_column(&mut self, kind: ColKind, cost: f64, col: &[f64]) {
        for (k, row) in self.t.iter_mut().enumerate() {
            row.push(col[k]);
        }
        self.cols.push(kind);
        self.col_cost.push(cost);
        self.barred.push(matches!(kind, ColKind::Artificial(_)));
        self.obj.push(0.0);
    }

    fn build(&mut self) {
        let warm = self.warm.take();
        self.build_cold();
        if let Some(basis) = warm {
            self.crash(&basis);
            if self.rhs.iter().any(|&b| b < -self.config.pivot_tol) {
                self.build_cold();
            }
        }
    }

    fn build_cold(&mut self) {
        let m = self.source.len();
        let n = self.costs.len();
        self.cols = (0..n).map(ColKind::Structural).collect();
        self.col_cost = self.costs.clone();
        self.struct_col = (0..n).collect();
        self.sign = vec![1.0; m];
        let mut kinds = Vec::with_capacity(m);
        for (r, row) in self.source.iter().enumerate() {
            let mut kind = row.kind;
            if row.rhs < 0.0 {
                self.sign[r] = -1.0;
                kind = match kind {
                    RowKind::Le => RowKind::Ge,
                    RowKind::Ge => RowKind::Le,
                    RowKind::Eq => RowKind::Eq,
                };
            }
            kinds.push(kind);
        }
        for (r, kind) in kinds.iter().enumerate() {
            match kind {
                RowKind::Le => self.cols.push(ColKind::Slack(r)),
                RowKind::Ge => {
                    self.cols.push(ColKind::Surplus(r));
                    self.cols.push(ColKind::Artificial(r));
                }
                RowKind::Eq => self.cols.push(ColKind::Artificial(r)),
            }
        }
        let ncols = self.cols.len();
        self.col_cost.resize(ncols, 0.0);
        self.barred = vec![false; ncols];
        self.t = vec![vec![0.0; ncols]; m];
        self.rhs = vec![0.0; m];
        self.basis = vec![0; m];
        self.unit = vec![0; m];
        self.needs_phase1 = false;
        for (r, row) in self.source.iter().enumerate() {
            for &(j, a) in &row.entries {
                self.t[r][j] += self.sign[r] * a;
            }
            self.rhs[r] = self.sign[r] * row.rhs;
        }
        for (c, kind) in self.cols.iter().enumerate().skip(n) {
            match *kind {
                ColKind::Slack(r) => {
                    self.t[r][c] = 1.0;
                    self.basis[r] = c;
                    self.unit[r] = c;
                }
                ColKind::Surplus(r) => self.t[r][c] = -1.0,
                ColKind::Artificial(r) => {
                    self.t[r][c] = 1.0;
                    self.basis[r] = c;
                    self.unit[r] = c;
                    self.needs_phase1 = true;
                }
                ColKind::Structural(_) => unreachable!(),
            }
        }
        self.obj = vec![0.0; ncols];
        self.pivots_since_build = 0;
        self.built = true;
    }

    /// Pivots the columns of `basis` into the fresh tableau where possible.
    fn crash(&mut self, basis: &Basis) {
        let wanted: Vec<usize> = basis
            .0
            .iter()
            .filter_map(|kind| self.cols.iter().position(|c| c == kind))
            .collect();
        let mut is_wanted = vec![false; self.cols.len()];
        for &c in &wanted {
            is_wanted[c] = true;
        }
        for &c in &wanted {
            if self.basis.contains(&c) {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for k in 0..self.t.len() {
                if is_wanted[self.basis[k]] {
                    continue;
                }
                let v = self.t[k][c].abs();
                if v > 1e-7 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((k, v));
                }
            }
            if let Some((k, _)) = best {
                self.pivot(k, c);
            }
        }
        let tol = self.config.pivot_tol;
        let artificial_live = (0..self.t.len()).any(|k| {
            matches!(self.cols[self.basis[k]], ColKind::Artificial(_)) && self.rhs[k] > tol
        });
        self.needs_phase1 = artificial_live;
        if !artificial_live {
            self.drive_out_artificials();
            for (c, kind) in self.cols.iter().enumerate() {
                if matches!(kind, ColKind::Artificial(_)) {
                    self.barred[c] = true;
                }
            }
        }
        self.pivots_since_build = 0;
    }

    pub fn solve(&mut self) -> Result<LpStatus, SimplexError> {
        self.iterations = 0;
        if self.built && self.pivots_since_build > self.config.refactor_every {
            self.warm = Some(self.basis());
            self.built = false;
        }
        if !self.built {
            self.build();
        }
        let tol = self.config.pivot_tol;
        if self.needs_phase1 && !self.phase1()? {
            self.status = Some(LpStatus::Infeasible);
            return Ok(LpStatus::Infeasible);
        }
        if self.rhs.iter().any(|&b| b < -tol) {
            self.load_objective(false);
            let dual_feasible =
                (0..self.cols.len()).all(|c| self.barred[c] || self.obj[c] >= -1e-7);
            if !dual_feasible {
                self.warm = Some(self.basis());
                self.built = false;
                self.build();
                if self.needs_phase1 && !self.phase1()? {
                    self.status = Some(LpStatus::Infeasible);
                    return Ok(LpStatus::Infeasible);
                }
            } else if !self.dual_simplex()? {
                self.status = Some(LpStatus::Infeasible);
                return Ok(LpStatus::Infeasible);
            }
        }
        self.load_objective(false);
        // shifted bounds make every step strictly improving; the true values are
        // restored below and any resulting infeasibility fixed by dual pivots
        self.perturb();
        let bounded = self.primal_simplex()?;
        self.restore_rhs();
        let mut status = if bounded {
            LpStatus::Optimal
        } else {
            LpStatus::Unbounded
        };
        if bounded && self.rhs.iter().any(|&b| b < -tol) {
            if !self.dual_simplex()? {
                status = LpStatus::Infeasible;
            } else if !self.primal_simplex()? {
                status = LpStatus::Unbounded;
            }
        }
        self.status = Some(status);
        Ok(status)
    }

    fn perturb(&mut self) {
        let scale = self.rhs.iter().fold(1.0f64, |m, b| m.max(b.abs()));
        for (k, b) in self.rhs.iter_mut().enumerate() {
            // deterministic spread so ties between rows are broken
            let spread = 1.0 + ((k * 7919) % 101) as f64 / 101.0;
            *b = b.max(0.0) + PERTURBATION * scale * spread;
        }
    }

    /// Recomputes the basic values from the unperturbed right-hand sides.
    fn restore_rhs(&mut self) {
        let b: Vec<f64> = self
            .source
            .iter()
            .enumerate()
            .map(|(r, row)| self.sign[r] * row.rhs)
            .collect();
        for k in 0..self.t.len() {
            let row = &self.t[k];
            let v: f64 = (0..b.len())
                .filter(|&r| b[r] != 0.0)
                .map(|r| row[self.unit[r]] * b[r])
                .sum();
            self.rhs[k] = if v.abs() < 1e-12 { 0.0 } else { v };
        }
    }

    fn load_objective(&mut self, phase1: bool) {
        let ncols = self.cols.len();
        let cost = |c: usize| -> f64 {
            if phase1 {
                if matches!(self.cols[c], ColKind::Artificial(_)) {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.col_cost[c]
            }
        };
        let mut obj: Vec<f64> = (0..ncols).map(cost).collect();
        for k in 0..self.t.len() {
            let cb = cost(self.basis[k]);
            if cb != 0.0 {
                axpy(&mut obj, -cb, &self.t[k]);
            }
        }
        self.obj = obj;
    }

    /// Returns false when the LP is infeasible.
    fn phase1(&mut self) -> Result<bool, SimplexError> {
        self.load_objective(true);
        self.primal_simplex()?;
        let infeasibility: f64 = (0..self.t.len())
            .filter(|&k| matches!(self.cols[self.basis[k]], ColKind::Artificial(_)))
            .map(|k| self.rhs[k])
            .sum();
        let scale = self.rhs.iter().fold(1.0f64, |m, b| m.max(b.abs()));
        if infeasibility > 1e-7 * scale {
            return Ok(false);
        }
        self.drive_out_artificials();
        for (c, kind) in self.cols.iter().enumerate() {
            if matches!(kind, ColKind::Artificial(_)) {
                self.barred[c] = true;
            }
        }
        self.needs_phase1 = false;
        Ok(true)
    }

    /// Pivots zero-level artificials out of the basis where possible; a basic
    /// artificial could otherwise grow and break its equality row.
    fn drive_out_artificials(&mut self) {
        for k in 0..self.t.len() {
            if !matches!(self.cols[self.basis[k]], ColKind::Artificial(_)) {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for c in 0..self.cols.len() {
                if matches!(self.cols[c], ColKind::Artificial(_)) {
                    continue;
                }
                let v = self.t[k][c].abs();
                if v > 1e-7 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((c, v));
                }
            }
            if let Some((c, _)) = best {
                self.pivot(k, c);
            }
            self.rhs[k] = self.rhs[k].max(0.0);
        }
    }

    /// Primal simplex on the loaded objective row. Returns false if unbounded.
    fn primal_simplex(&mut self) -> Result<bool, SimplexError> {
        let tol = self.config.pivot_tol;
        let mut bland = false;
        let mut degenerate = 0usize;
        loop {
            let entering = if bland {
                (0..self.cols.len()).find(|&c| !self.barred[c] && self.obj[c] < -tol)
            } else {
                let mut best: Option<(usize, f64)> = None;
                for c in 0..self.cols.len() {
                    if !self.barred[c]
                        && self.obj[c] < -tol
                        && best.is_none_or(|(_, v)| self.obj[c] < v)
                    {
                        best = Some((c, self.obj[c]));
                    }
                }
                best.map(|(c, _)| c)
            };
            let Some(c) = entering else { return Ok(true) };
            let leave = if bland {
                self.ratio_bland(c)
            } else {
                self.ratio_harris(c)
            };
            let Some((r, ratio)) = leave else {
                return Ok(false);
            };
            self.count_iteration()?;
            if ratio <= tol {
                degenerate += 1;
                if degenerate >= self.config.bland_after {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
        }
    }

    /// Minimum ratio, ties to the lowest basic column.
    fn ratio_bland(&self, c: usize) -> Option<(usize, f64)> {
        let tol = self.config.pivot_tol;
        let mut leave: Option<(usize, f64)> = None;
        for k in 0..self.t.len() {
            let a = self.t[k][c];
            if a > tol {
                let ratio = self.rhs[k].max(0.0) / a;
                let better = match leave {
                    None => true,
                    Some((l, best)) => {
                        ratio < best - 1e-12
                            || (ratio <= best + 1e-12 && self.basis[k] < self.basis[l])
                    }
                };
                if better {
                    leave = Some((k, ratio));
                }
            }
        }
        leave
    }

    /// Two-pass ratio test: the largest pivot among rows whose ratio is within
    /// a small relaxation of the minimum.
    fn ratio_harris(&self, c: usize) -> Option<(usize, f64)> {
        let tol = self.config.pivot_tol;
        let mut bound = f64::INFINITY;
        for k in 0..self.t.len() {
            let a = self.t[k][c];
            if a > tol {
                bound = bound.min((self.rhs[k].max(0.0) + HARRIS_SLACK) / a);
            }
        }
        let mut leave: Option<(usize, f64, f64)> = None;
        for k in 0..self.t.len() {
            let a = self.t[k][c];
            if a > tol {
                let ratio = self.rhs[k].max(0.0) / a;
                if ratio <= bound && leave.is_none_or(|(_, _, best)| a > best) {
                    leave = Some((k, ratio, a));
                }
            }
        }
        leave.map(|(k, ratio, _)| (k, ratio))
    }

    /// Dual simplex from a dual-feasible basis. Returns false if infeasible.
    fn dual_simplex(&mut self) -> Result<bool, SimplexError> {
        let tol = self.config.pivot_tol;
        loop {
            let mut leave: Option<(usize, f64)> = None;
            for k in 0..self.t.len() {
                if self.rhs[k] < -tol && leave.is_none_or(|(_, v)| self.rhs[k] < v) {
                    leave = Some((k, self.rhs[k]));
                }
            }
            let Some((r, _)) = leave else { return Ok(true) };
            let mut enter: Option<(usize, f64)> = None;
            for c in 0..self.cols.len() {
                let a = self.t[r][c];
                if self.barred[c] || a >= -tol {
                    continue;
                }
                let ratio = self.obj[c].max(0.0) / -a;
                let better = match enter {
                    None => true,
                    Some((e, best)) => {
                        ratio < best - 1e-12 || (ratio <= best + 1e-12 && -a > -self.t[r][e])
                    }
                };
                if better {
                    enter = Some((c, ratio));
                }
            }
            let Some((c, _)) = enter else {
                // a row that cannot move is infeasible unless its violation is noise
                if self.rhs[r] > -FEASIBILITY_NOISE * self.rhs_scale() {
                    self.rhs[r] = 0.0;
                    continue;
                }
                return Ok(false);
            };
            self.count_iteration()?;
            self.pivot(r, c);
        }
    }

    fn rhs_scale(&self) -> f64 {
        self.rhs.iter().fold(1.0f64, |m, b| m.max(b.abs()))
    }

    fn count_iteration(&mut self) -> Result<(), SimplexError> {
        self.iterations += 1;
        if self.iterations > self.config.max_iterations {
            return Err(SimplexError::IterationLimit(self.config.max_iterations));
        }
        Ok(())
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let inv = 1.0 / self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v *= inv;
        }
        self.t[r][c] = 1.0;
        self.rhs[r] *= inv;
        let pivot_row = std::mem::take(&mut self.t[r]);
        let nz: Vec<usize> = (0..pivot_row.len())
            .filter(|&j| pivot_row[j] != 0.0)
            .collect();
        let pivot_rhs = self.rhs[r];
        let dense = 4 * nz.len() > pivot_row.len();
        for k in 0..self.t.len() {
            if k == r {
                continue;
            }
            let f = self.t[k][c];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[k];
            if dense {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v = flush(*v - f * p);
                }
            } else {
                for &j in &nz {
                    row[j] = flush(row[j] - f * pivot_row[j]);
                }
            }
            row[c] = 0.0;
            self.rhs[k] -= f * pivot_rhs;
        }
        let f = self.obj[c];
        if f != 0.0 {
            for &j in &nz {
                self.obj[j] -= f * pivot_row[j];
            }
            self.obj[c] = 0.0;
        }
        self.t[r] = pivot_row;
        self.basis[r] = c;
        self.pivots_since_build += 1;
    }

    pub fn primal(&self, j: usize) -> f64 {
        if !self.built {
            return 0.0;
        }
        let c = self.struct_col[j];
        self.basis
            .iter()
            .position(|&b| b == c)
            .map_or(0.0, |k| self.rhs[k].max(0.0))
    }

    pub fn primal_values(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.costs.len()];
        if !self.built {
            return x;
        }
        for (k, &b) in self.basis.iter().enumerate() {
            if let ColKind::Structural(j) = self.cols[b] {
                x[j] = self.rhs[k].max(0.0);
            }
        }
        x
    }

    /// Duals of the user rows under the documented sign convention.
    pub fn duals(&self) -> Vec<f64> {
        let cb: Vec<f64> = self.basis.iter().map(|&b| self.col_cost[b]).collect();
        self.user_rows
            .iter()
            .map(|&internal| {
                let u = self.unit[internal];
                let y: f64 = (0..self.t.len()).map(|k| cb[k] * self.t[k][u]).sum();
                self.sign[internal] * y
            })
            .collect()
    }

    pub fn objective(&self) -> f64 {
        self.primal_values()
            .iter()
            .zip(&self.costs)
            .map(|(x, c)| x * c)
            .sum()
    }

    pub fn basis(&self) -> Basis {
        Basis(self.basis.iter().map(|&c| self.cols[c]).collect())
    }

    /// Largest violation of any source row by the current primal point.
    pub fn primal_residual(&self) -> f64 {
        let x = self.primal_values();
        self.source
            .iter()
            .map(|row| {
                let lhs: f64 = row.entries.iter().map(|&(j, a)| a * x[j]).sum();
                match row.kind {
                    RowKind::Le => (lhs - row.rhs).max(0.0),
                    RowKind::Ge => (row.rhs - lhs).max(0.0),
                    RowKind::Eq => (lhs - row.rhs).abs(),
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Drops cancellation noise so the tableau stays sparse.
#[inline]
fn flush(v: f64) -> f64 {
    if v.abs() < 1e-13 {
        0.0
    } else {
        v
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        if *xi != 0.0 {
            *yi += a * xi;
        }
    }
}
