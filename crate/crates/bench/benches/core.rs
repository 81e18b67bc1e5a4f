use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hcbm_core::data::{crins_ar, crins_srr};
use hcbm_core::intervals::{analyze, AnalysisConfig, MethodSelection};
use hcbm_core::pivot::{pivot_quantile, PivotContext};
use hcbm_core::{bm_tau2, BmConfig, QuadratureConfig};

fn pivot(c: &mut Criterion) {
    let ds = crins_ar();
    let cfg = QuadratureConfig::default();
    for tau2 in [0.0, 0.16, 0.38] {
        let ctx = PivotContext::from_dataset(&ds, tau2).unwrap();
        c.bench_function(&format!("pivot_quantile/ar/tau2={tau2}"), |b| {
            b.iter(|| pivot_quantile(black_box(&ctx), 0.025, &cfg).unwrap())
        });
    }
}

fn bm(c: &mut Criterion) {
    let cfg = BmConfig::default();
    for (name, ds) in [("ar", crins_ar()), ("srr", crins_srr())] {
        c.bench_function(&format!("bm_tau2/{name}"), |b| b.iter(|| bm_tau2(black_box(&ds), &cfg).unwrap()));
    }
}

fn full(c: &mut Criterion) {
    let ds = crins_ar();
    let sel = MethodSelection::all(0.95).unwrap();
    let cfg = AnalysisConfig::default();
    c.bench_function("analyze/ar/all", |b| b.iter(|| analyze(black_box(&ds), &sel, &cfg).unwrap()));
}

criterion_group!(benches, pivot, bm, full);
criterion_main!(benches);
