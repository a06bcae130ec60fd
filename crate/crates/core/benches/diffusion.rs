//! Sequential versus rayon execution of the hot kernels.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ctxdiff::data::gaussian_blobs;
use ctxdiff::diffusion::{init_labels, warm_start};
use ctxdiff::diffusivity::{gaussian_diffusivity, local_match_weights, smooth_weights};
use ctxdiff::graph::knn_graph_with;
use ctxdiff::laplacian::apply_isotropic;
use ctxdiff::Execution;

const N: usize = 1500;
const K: usize = 10;
const CLASSES: usize = 10;

fn strategies() -> [(&'static str, Execution); 2] {
    [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ]
}

fn kernels(c: &mut Criterion) {
    let ds = gaussian_blobs(N, CLASSES, 3.0, 10, 1).unwrap();
    let dist = ds.source.distances();
    let labels: Vec<(usize, usize)> = (0..50).map(|i| (i, ds.truth[i])).collect();
    let state = init_labels(&labels, N, CLASSES).unwrap();

    let mut group = c.benchmark_group("kernels");
    group.sample_size(10);
    for (name, exec) in strategies() {
        group.bench_function(BenchmarkId::new("knn_graph", name), |b| {
            b.iter(|| knn_graph_with(exec, black_box(&dist), K).unwrap())
        });
        let g = knn_graph_with(exec, &dist, K).unwrap();
        let f = warm_start(&g, state.f(), 20, 1.0).unwrap();
        let q = gaussian_diffusivity(&g, f.view(), 0.2).unwrap();
        group.bench_function(BenchmarkId::new("laplacian", name), |b| {
            b.iter(|| apply_isotropic(&g, black_box(f.view())).unwrap())
        });
        group.bench_function(BenchmarkId::new("diffusivity", name), |b| {
            b.iter(|| gaussian_diffusivity(&g, black_box(f.view()), 0.2).unwrap())
        });
        group.bench_function(BenchmarkId::new("smooth", name), |b| {
            b.iter(|| smooth_weights(&g, black_box(&q)).unwrap())
        });
        group.bench_function(BenchmarkId::new("local_match", name), |b| {
            b.iter(|| local_match_weights(&g, black_box(&q), f.view(), 0.2).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
