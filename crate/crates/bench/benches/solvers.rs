use criterion::{criterion_group, criterion_main, Criterion};
use flex_bench::{gaussian, network, set, system};
use flex_core::solver::{solve_lp, solve_qp, LinearRow, LpProblem, QpProblem};
use flex_core::{build_system, flexibility_index, rank_constraints, stochastic_flexibility, FlexConfig};
use std::hint::black_box;

fn index(c: &mut Criterion) {
    let cfg = FlexConfig::default();
    let a = system("designA.json");
    for name in ["box", "ellip", "cvar"] {
        let s = set(&format!("{name}.json"));
        c.bench_function(&format!("index/designA/{name}"), |b| {
            b.iter(|| flexibility_index(black_box(&a), &s, &cfg).unwrap())
        });
    }
    let net = build_system(&network("three_node/design3.json")).unwrap();
    let s = set("three_node/ellip_ac_b50.json");
    c.bench_function("index/three_node/design3", |b| {
        b.iter(|| flexibility_index(black_box(&net), &s, &cfg).unwrap())
    });
}

fn rank(c: &mut Criterion) {
    let cfg = FlexConfig::default();
    let a = system("designA.json");
    let s = set("ellip.json");
    c.bench_function("rank/designA/ellip", |b| b.iter(|| rank_constraints(black_box(&a), &s, 4, &cfg).unwrap()));
}

fn sampling(c: &mut Criterion) {
    let a = system("designA.json");
    let dist = gaussian("gauss.json");
    c.bench_function("sf/designA/100k", |b| {
        b.iter(|| stochastic_flexibility(black_box(&a), &dist, 100_000, 0).unwrap())
    });
    let net = build_system(&network("three_node/design1.json")).unwrap();
    let dist = gaussian("three_node/gauss_ac_b50.json");
    c.bench_function("sf/three_node/10k", |b| {
        b.iter(|| stochastic_flexibility(black_box(&net), &dist, 10_000, 0).unwrap())
    });
}

fn kernels(c: &mut Criterion) {
    let n = 20;
    let mut lp = LpProblem::new(n);
    lp.objective = (0..n).map(|j| -1.0 - (j % 3) as f64).collect();
    for i in 0..n {
        let row: Vec<f64> = (0..n).map(|j| 1.0 + ((i * 7 + j * 3) % 5) as f64).collect();
        lp.add_row(LinearRow::le(row, 50.0 + i as f64));
    }
    for j in 0..n {
        lp.set_bounds(j, 0.0, 10.0);
    }
    c.bench_function("lp/dense20", |b| b.iter(|| solve_lp(black_box(&lp)).unwrap()));

    let mut qp = QpProblem::new(n);
    for i in 0..n {
        qp.quadratic[i][i] = 2.0 + (i % 4) as f64;
        if i + 1 < n {
            qp.quadratic[i][i + 1] = 0.5;
            qp.quadratic[i + 1][i] = 0.5;
        }
        qp.linear[i] = -10.0;
    }
    qp.rows = lp.rows.clone();
    qp.lower = lp.lower.clone();
    qp.upper = lp.upper.clone();
    c.bench_function("qp/dense20", |b| b.iter(|| solve_qp(black_box(&qp)).unwrap()));
}

criterion_group!(benches, index, rank, sampling, kernels);
criterion_main!(benches);
