use copra_core::colgen::{
    column_count, enumerate_columns, price_column_dp, price_column_enumerate, ColgenConfig,
    DualPrices, Pricing, Rounding, SlotMaster,
};
use copra_core::simplex::{solve_lp, LinearProgram, LpStatus, RowKind};
use copra_core::{generate_instance, GenConfig, Instance, Multipliers};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, contents: usize, slots: usize, rec_limit: usize) -> Instance {
    let cfg = GenConfig {
        num_contents: contents,
        num_slots: slots,
        rec_limit,
        relation_density: 0.6,
        seed,
        ..GenConfig::default()
    };
    generate_instance(&cfg).unwrap()
}

fn random_lambda(inst: &Instance, seed: u64) -> Multipliers {
    let mut lambda = Multipliers::zeros(inst);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut lambda.values {
        *v = rng.gen_range(-5.0..40.0);
    }
    lambda
}

// The slot LP with every column present.
fn full_lp(inst: &Instance, t: usize, lambda: &Multipliers) -> f64 {
    let n = inst.num_contents;
    let mut costs = Vec::new();
    let y: Vec<usize> = (0..n).map(|_| push(&mut costs, 0.0)).collect();
    let x: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..=inst.max_aoi(t, i))
                .map(|a| push(&mut costs, -lambda.get(t, i, a)))
                .collect()
        })
        .collect();
    let columns: Vec<Vec<_>> = (0..n).map(|i| enumerate_columns(inst, t, i)).collect();
    let v: Vec<Vec<usize>> = columns
        .iter()
        .enumerate()
        .map(|(i, cols)| {
            cols.iter()
                .map(|c| push(&mut costs, inst.column_cost(t, i, c.miss_prob)))
                .collect()
        })
        .collect();
    let nv = costs.len();
    let mut lp = LinearProgram::new(costs);
    for i in 0..n {
        let mut r = vec![0.0; nv];
        for &xv in &x[i] {
            r[xv] = 1.0;
        }
        r[y[i]] = -1.0;
        lp.add_row(r, RowKind::Eq, 0.0);
        let mut r = vec![0.0; nv];
        for &vv in &v[i] {
            r[vv] = 1.0;
        }
        r[y[i]] = 1.0;
        lp.add_row(r, RowKind::Eq, 1.0);
        for rel in &inst.relations[i] {
            for a in 0..=inst.max_aoi(t, rel.content) {
                let mut r = vec![0.0; nv];
                r[x[rel.content][a]] = -1.0;
                for (k, c) in columns[i].iter().enumerate() {
                    if c.items
                        .iter()
                        .any(|it| it.content == rel.content && it.aoi == a)
                    {
                        r[v[i][k]] = 1.0;
                    }
                }
                lp.add_row(r, RowKind::Le, 0.0);
            }
        }
    }
    let mut r = vec![0.0; nv];
    for i in 0..n {
        r[y[i]] = inst.size(i);
    }
    lp.add_row(r, RowKind::Le, inst.cache_capacity as f64);
    let mut r = vec![0.0; nv];
    for i in 0..n {
        r[x[i][0]] = inst.size(i);
    }
    lp.add_row(r, RowKind::Le, inst.backhaul_capacity as f64);
    let sol = solve_lp(&lp).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    sol.objective
}

fn push(costs: &mut Vec<f64>, c: f64) -> usize {
    costs.push(c);
    costs.len() - 1
}

fn random_duals(inst: &Instance, t: usize, i: usize, rng: &mut ChaCha8Rng) -> DualPrices {
    let mut duals = DualPrices::zeros(inst, t);
    duals.pi[i] = rng.gen_range(0.0..2.0) * inst.column_cost(t, i, 1.0);
    for b in duals.beta[i].iter_mut().flatten() {
        if rng.gen_bool(0.5) {
            *b = rng.gen_range(0.0..0.5) * inst.column_cost(t, i, 1.0);
        }
    }
    duals
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn column_generation_reaches_the_full_lp(seed in any::<u64>(), contents in 2usize..=5, rec_limit in 1usize..=2, dp in any::<bool>()) {
        let inst = instance(seed, contents, 3, rec_limit);
        let pricing = if dp { Pricing::Dp { m: 10_000 } } else { Pricing::Enumerate };
        let cfg = ColgenConfig { pricing, ..ColgenConfig::default() };
        for t in 0..inst.num_slots {
            let lambda = random_lambda(&inst, seed.wrapping_add(t as u64));
            let mut master = SlotMaster::new(&inst, t, &lambda, cfg.simplex);
            let res = master.solve(&inst, &cfg).unwrap();
            let full = full_lp(&inst, t, &lambda);
            prop_assert!((res.objective - full).abs() <= 1e-6, "cg {} full {}", res.objective, full);
            prop_assert!(res.lower_bound <= full + 1e-9);
            // pools stay useful after a multiplier change
            master.purge(&inst, 1);
            let moved = random_lambda(&inst, !seed);
            master.set_prices(&inst, &moved);
            let res = master.solve(&inst, &cfg).unwrap();
            let full = full_lp(&inst, t, &moved);
            prop_assert!((res.objective - full).abs() <= 1e-6, "warm cg {} full {}", res.objective, full);
        }
    }

    #[test]
    fn dp_pricing_is_near_exact(seed in any::<u64>(), rec_limit in 1usize..=3) {
        let inst = instance(seed, 9, 2, rec_limit);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = rng.gen_range(0..inst.num_slots);
        let i = rng.gen_range(0..inst.num_contents);
        let duals = random_duals(&inst, t, i, &mut rng);
        let exact = price_column_enumerate(&inst, t, i, &duals).reduced_cost;
        let dp = price_column_dp(&inst, t, i, &duals, 10_000, Rounding::Nearest).priced.reduced_cost;
        prop_assert!(dp >= exact - 1e-9);
        prop_assert!(dp - exact <= 1e-3 * exact.abs().max(1.0), "dp {} exact {}", dp, exact);
        let bound = price_column_dp(&inst, t, i, &duals, 10_000, Rounding::Up).quantized_min;
        prop_assert!(bound <= exact + 1e-9);
        prop_assert!(enumerate_columns(&inst, t, i).len() == column_count(&inst, t, i));
    }
}

#[test]
fn enumeration_pricing_agrees_with_dp_master() {
    let inst = instance(11, 5, 2, 2);
    let lambda = random_lambda(&inst, 3);
    let dp_cfg = ColgenConfig {
        pricing: Pricing::Dp { m: 10_000 },
        ..ColgenConfig::default()
    };
    let en_cfg = ColgenConfig {
        pricing: Pricing::Enumerate,
        ..ColgenConfig::default()
    };
    for t in 0..inst.num_slots {
        let a = SlotMaster::new(&inst, t, &lambda, dp_cfg.simplex)
            .solve(&inst, &dp_cfg)
            .unwrap();
        let b = SlotMaster::new(&inst, t, &lambda, en_cfg.simplex)
            .solve(&inst, &en_cfg)
            .unwrap();
        assert!((a.objective - b.objective).abs() < 1e-6);
        assert!((b.lower_bound - b.objective).abs() < 1e-9);
    }
}
