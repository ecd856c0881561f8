use copra_core::simplex::{solve_lp, LinearProgram, LpStatus, RowKind};
use proptest::prelude::*;

// Every constraint as (coeffs, rhs, kind) including bounds; a vertex is a
// feasible point where n linearly independent constraints are tight.
fn constraints(lp: &LinearProgram) -> Vec<(Vec<f64>, f64, RowKind)> {
    let n = lp.num_vars();
    let mut out: Vec<_> = lp
        .rows
        .iter()
        .map(|r| (r.coeffs.clone(), r.rhs, r.kind))
        .collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        out.push((e.clone(), 0.0, RowKind::Ge));
        if lp.upper[j].is_finite() {
            out.push((e, lp.upper[j], RowKind::Le));
        }
    }
    out
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[p][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn vertex_optimum(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let cons = constraints(lp);
    let m = cons.len();
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; n];
    fn rec(
        k: usize,
        start: usize,
        pick: &mut Vec<usize>,
        cons: &[(Vec<f64>, f64, RowKind)],
        lp: &LinearProgram,
        best: &mut Option<f64>,
        m: usize,
    ) {
        let n = pick.len();
        if k == n {
            let a = pick.iter().map(|&i| cons[i].0.clone()).collect();
            let b = pick.iter().map(|&i| cons[i].1).collect();
            if let Some(x) = solve_square(a, b) {
                let ok = cons.iter().all(|(c, r, kind)| {
                    let lhs: f64 = c.iter().zip(&x).map(|(a, x)| a * x).sum();
                    match kind {
                        RowKind::Le => lhs <= r + 1e-7,
                        RowKind::Ge => lhs >= r - 1e-7,
                        RowKind::Eq => (lhs - r).abs() <= 1e-7,
                    }
                });
                if ok {
                    let z: f64 = lp.costs.iter().zip(&x).map(|(c, x)| c * x).sum();
                    if best.is_none_or(|b| z < b) {
                        *best = Some(z);
                    }
                }
            }
            return;
        }
        for i in start..m {
            pick[k] = i;
            rec(k + 1, i + 1, pick, cons, lp, best, m);
        }
    }
    rec(0, 0, &mut pick, &cons, lp, &mut best, m);
    best
}

fn arb_lp() -> impl Strategy<Value = LinearProgram> {
    (1usize..=3, 1usize..=3).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-5i32..=5, n),
            prop::collection::vec((prop::collection::vec(-3i32..=4, n), 0u8..3, -4i32..=8), m),
            prop::collection::vec(1i32..=6, n),
        )
            .prop_map(move |(costs, rows, upper)| {
                let mut lp = LinearProgram::new(costs.iter().map(|&c| c as f64).collect());
                lp.upper = upper.iter().map(|&u| u as f64).collect();
                for (coeffs, kind, rhs) in rows {
                    let kind = [RowKind::Le, RowKind::Ge, RowKind::Eq][kind as usize];
                    lp.add_row(coeffs.iter().map(|&c| c as f64).collect(), kind, rhs as f64);
                }
                lp
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn matches_vertex_enumeration(lp in arb_lp()) {
        let sol = solve_lp(&lp).unwrap();
        match vertex_optimum(&lp) {
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
            Some(z) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.objective - z).abs() < 1e-6, "simplex {} vertex {}", sol.objective, z);
            }
        }
    }

    #[test]
    fn strong_duality_without_bounds(lp in arb_lp()) {
        let mut lp = lp;
        let n = lp.num_vars();
        lp.upper = vec![f64::INFINITY; n];
        lp.add_row(vec![1.0; n], RowKind::Le, 10.0);
        let sol = solve_lp(&lp).unwrap();
        if sol.status == LpStatus::Optimal {
            let dual_obj: f64 = lp.rows.iter().zip(&sol.duals).map(|(r, y)| r.rhs * y).sum();
            prop_assert!((dual_obj - sol.objective).abs() < 1e-6);
            for (r, y) in lp.rows.iter().zip(&sol.duals) {
                match r.kind {
                    RowKind::Le => prop_assert!(*y <= 1e-9),
                    RowKind::Ge => prop_assert!(*y >= -1e-9),
                    RowKind::Eq => {}
                }
            }
            // dual feasibility: c - A^T y >= 0
            for j in 0..n {
                let d = lp.costs[j] - lp.rows.iter().zip(&sol.duals).map(|(r, y)| r.coeffs[j] * y).sum::<f64>();
                prop_assert!(d >= -1e-7);
            }
        }
    }
}
