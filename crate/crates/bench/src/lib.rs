//! Benchmark fixtures and the solver benchmark group.

use copra_core::colgen::{
    price_column_dp, price_column_enumerate, ColgenConfig, DualPrices, Rounding, SlotMaster,
};
use copra_core::greedy::greedy_schedule;
use copra_core::lda::{run_lda, LdaParams};
use copra_core::simplex::{solve_lp, LinearProgram, RowKind};
use copra_core::sp1::solve_sp1;
use copra_core::{generate_instance, GenConfig, Instance, Multipliers};
use criterion::{black_box, Criterion};

pub fn instance(num_contents: usize, num_slots: usize, seed: u64) -> Instance {
    generate_instance(&GenConfig {
        num_contents,
        num_slots,
        seed,
        ..GenConfig::default()
    })
    .expect("valid config")
}

/// Deterministic multipliers in `[-10, 30)`.
pub fn multipliers(inst: &Instance) -> Multipliers {
    let mut lambda = Multipliers::zeros(inst);
    for (k, v) in lambda.values.iter_mut().enumerate() {
        *v = ((k * 37) % 40) as f64 - 10.0;
    }
    lambda
}

/// Dense bounded LP with `m` mixed rows over `n` columns.
pub fn dense_lp(m: usize, n: usize) -> LinearProgram {
    let mut lp = LinearProgram::new((0..n).map(|j| ((j * 7) % 11) as f64 - 5.0).collect());
    for r in 0..m {
        let coeffs = (0..n)
            .map(|j| ((r * 13 + j * 5) % 9) as f64 - 2.0)
            .collect();
        let kind = [RowKind::Le, RowKind::Ge, RowKind::Le][r % 3];
        lp.add_row(coeffs, kind, (r % 5) as f64 + 1.0);
    }
    lp.add_row(vec![1.0; n], RowKind::Le, 20.0);
    lp
}

pub fn benchmarks(c: &mut Criterion) {
    let lp = dense_lp(30, 60);
    c.bench_function("simplex 31x60", |b| {
        b.iter(|| solve_lp(black_box(&lp)).unwrap())
    });

    let inst = instance(20, 6, 1);
    let lambda = multipliers(&inst);
    c.bench_function("sp1 I=20 T=6", |b| {
        b.iter(|| solve_sp1(black_box(&inst), &lambda))
    });

    let mut duals = DualPrices::zeros(&inst, 3);
    duals.pi[0] = inst.column_cost(3, 0, 1.0);
    c.bench_function("pricing dp M=1e4", |b| {
        b.iter(|| price_column_dp(&inst, 3, 0, black_box(&duals), 10_000, Rounding::Nearest))
    });
    c.bench_function("pricing enumeration", |b| {
        b.iter(|| price_column_enumerate(&inst, 3, 0, black_box(&duals)))
    });

    let cfg = ColgenConfig::default();
    c.bench_function("sp2 slot cold I=20", |b| {
        b.iter(|| {
            SlotMaster::new(&inst, 3, &lambda, cfg.simplex)
                .solve(&inst, &cfg)
                .unwrap()
        })
    });

    c.bench_function("greedy I=20 T=6", |b| {
        b.iter(|| greedy_schedule(black_box(&inst)))
    });

    let small = instance(8, 3, 2);
    let params = LdaParams {
        max_iterations: 10,
        ..LdaParams::default()
    };
    c.bench_function("lda 10 iterations I=8 T=3", |b| {
        b.iter(|| run_lda(black_box(&small), &params).unwrap())
    });
}
