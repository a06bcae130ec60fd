//! Diffusion runs, grid search and benchmark reports.

mod common;

use ctxdiff::data::{gaussian_blobs, split_labels, two_moons};
use ctxdiff::diffusion::{
    decode_labels, init_labels, run_diffusion, warm_start, DiffusionConfig, Mode, Variant,
};
use ctxdiff::eval::{benchmark, error_rate, grid_search, BenchmarkReport, GridSpec, Method};
use ctxdiff::graph::knn_graph;

#[test]
fn grid_search_agrees_with_exhaustive_runs() {
    let ds = gaussian_blobs(60, 2, 2.5, 2, 3).unwrap();
    let split = split_labels(&ds, 4, 5).unwrap();
    let grid = GridSpec {
        k_values: vec![4, 8],
        t_values: vec![2, 15],
        sigma_f_values: vec![0.05, 0.5],
        ..GridSpec::new(Method::LocalMatch)
    };
    let found = grid_search(&grid, &ds, &split).unwrap();
    assert_eq!(found.cells.len(), 8);

    let labels = split.train_labels(&ds.truth);
    let mut best: Option<(f64, usize, usize, f64)> = None;
    for &k in &grid.k_values {
        let g = knn_graph(&ds.source.distances(), k).unwrap();
        for &t in &grid.t_values {
            for &s in &grid.sigma_f_values {
                let cfg = DiffusionConfig {
                    k,
                    sigma_f: s,
                    steps: t,
                    variant: Variant::LocalMatch,
                    mode: Mode::Nonlinear,
                    ..Default::default()
                };
                let state = init_labels(&labels, ds.n(), ds.classes).unwrap();
                let out = run_diffusion(&cfg, &g, &state).unwrap();
                let err =
                    error_rate(&decode_labels(out.f.view()), &ds.truth, &split.validation).unwrap();
                let cell = found
                    .cells
                    .iter()
                    .find(|c| c.k == k && c.steps == Some(t) && c.sigma_f == Some(s))
                    .unwrap();
                assert_eq!(cell.validation_error, err, "K={k} T={t} sigma_f={s}");
                let key = (err, t, k, s);
                let better = best.is_none_or(|b| {
                    key.0
                        .total_cmp(&b.0)
                        .then(key.1.cmp(&b.1))
                        .then(key.2.cmp(&b.2))
                        .then(key.3.total_cmp(&b.3))
                        .is_lt()
                });
                if better {
                    best = Some(key);
                }
            }
        }
    }
    let (err, t, k, s) = best.unwrap();
    assert_eq!(found.best.validation_error, err);
    assert_eq!(
        (found.best.k, found.best.steps, found.best.sigma_f),
        (k, Some(t), Some(s))
    );
}

#[test]
fn failing_cells_score_one_hundred_and_do_not_abort() {
    let ds = gaussian_blobs(20, 2, 5.0, 2, 1).unwrap();
    let split = split_labels(&ds, 2, 0).unwrap();
    let grid = GridSpec {
        k_values: vec![3, 50],
        t_values: vec![5],
        sigma_f_values: vec![0.2],
        ..GridSpec::new(Method::Isotropic)
    };
    let found = grid_search(&grid, &ds, &split).unwrap();
    let failed = found.cells.iter().find(|c| c.k == 50).unwrap();
    assert_eq!(failed.validation_error, 100.0);
    assert!(failed.failure.is_some());
    assert_eq!(found.best.k, 3);
}

#[test]
fn linear_and_nonlinear_agree_after_one_step() {
    let ds = two_moons(120, 0.1, 2).unwrap();
    let g = knn_graph(&ds.source.distances(), 6).unwrap();
    let state = init_labels(&[(0, 0), (70, 1)], 120, 2).unwrap();
    for variant in [Variant::Plain, Variant::Smooth, Variant::LocalMatch] {
        let cfg = |mode| DiffusionConfig {
            k: 6,
            steps: 1,
            variant,
            mode,
            ..Default::default()
        };
        let a = run_diffusion(&cfg(Mode::Linear), &g, &state).unwrap();
        let b = run_diffusion(&cfg(Mode::Nonlinear), &g, &state).unwrap();
        assert_eq!(a.f, b.f, "{variant}");
        let c = run_diffusion(
            &DiffusionConfig {
                steps: 4,
                ..cfg(Mode::Linear)
            },
            &g,
            &state,
        )
        .unwrap();
        let d = run_diffusion(
            &DiffusionConfig {
                steps: 4,
                ..cfg(Mode::Nonlinear)
            },
            &g,
            &state,
        )
        .unwrap();
        assert_ne!(c.f, d.f, "{variant}");
    }
}

#[test]
fn plain_diffusion_becomes_isotropic_as_sigma_f_grows() {
    let ds = two_moons(100, 0.1, 3).unwrap();
    let g = knn_graph(&ds.source.distances(), 8).unwrap();
    let state = init_labels(&[(3, 0), (60, 1)], 100, 2).unwrap();
    let cfg = DiffusionConfig {
        k: 8,
        sigma_f: 1e8,
        steps: 30,
        variant: Variant::Plain,
        ..Default::default()
    };
    let plain = run_diffusion(&cfg, &g, &state).unwrap();
    let iso = warm_start(&g, state.f(), 50, 1.0).unwrap();
    assert!(common::max_abs_diff(&plain.f, &iso) <= 1e-12);
}

#[test]
fn energy_trace_has_one_entry_per_visited_state() {
    let ds = two_moons(80, 0.1, 4).unwrap();
    let g = knn_graph(&ds.source.distances(), 6).unwrap();
    let state = init_labels(&[(0, 0), (50, 1)], 80, 2).unwrap();
    let cfg = DiffusionConfig {
        k: 6,
        steps: 12,
        delta: 0.4,
        mode: Mode::Linear,
        ..Default::default()
    };
    let out = run_diffusion(&cfg, &g, &state).unwrap();
    assert_eq!(out.energy.len(), 13);
    // Frozen weights and a small step: the energy never rises.
    assert!(out.energy.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn clamping_keeps_training_rows_one_hot() {
    let ds = two_moons(60, 0.1, 5).unwrap();
    let g = knn_graph(&ds.source.distances(), 6).unwrap();
    let state = init_labels(&[(1, 0), (40, 1)], 60, 2).unwrap();
    let cfg = DiffusionConfig {
        k: 6,
        steps: 7,
        clamp_labels: true,
        ..Default::default()
    };
    let out = run_diffusion(&cfg, &g, &state).unwrap();
    assert_eq!(out.f.row(1).to_vec(), vec![1.0, 0.0]);
    assert_eq!(out.f.row(40).to_vec(), vec![0.0, 1.0]);
}

#[test]
fn benchmark_report_round_trips_and_repeats() {
    let ds = gaussian_blobs(80, 2, 3.0, 2, 9).unwrap();
    let grid = GridSpec {
        k_values: vec![5, 8],
        t_values: vec![5, 20],
        sigma_f_values: vec![0.1, 1.0],
        ..GridSpec::new(Method::Isotropic)
    };
    let methods = [Method::Isotropic, Method::LocalMatch, Method::Grf];
    let a = benchmark(&ds, &methods, &[0, 1, 2], &grid, 4).unwrap();
    let b = benchmark(&ds, &methods, &[0, 1, 2], &grid, 4).unwrap();
    assert_eq!(a.to_kv(), b.to_kv());
    assert_eq!(a.to_table(), b.to_table());
    assert_eq!(a.rows.len(), 3);
    let grf = a.row(Method::Grf).unwrap();
    assert!(grf
        .selections
        .iter()
        .all(|s| s.steps.is_none() && s.sigma_f.is_none()));

    let mut back = BenchmarkReport::from_kv(&a.to_kv()).unwrap();
    for r in back.rows.iter_mut() {
        r.seconds = a.row(r.method).unwrap().seconds;
    }
    assert_eq!(back, a);
}
