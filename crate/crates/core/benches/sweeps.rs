use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use holoweb::branches::kingman_estimate;
use holoweb::cycles::find_periodic;
use holoweb::family::presets;
use holoweb::measures::pullback_measure_seeded;
use holoweb::motion::build_web;
use holoweb::stability::{harmonicity_grid, GridOptions};
use holoweb::ParamMesh;
use num_complex::Complex64;
use rayon::{ThreadPool, ThreadPoolBuilder};

fn pools() -> Vec<(&'static str, ThreadPool)> {
    vec![
        ("sequential", ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn compare<F: Fn() + Sync>(c: &mut Criterion, name: &str, f: F) {
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(label), |b| b.iter(|| pool.install(&f)));
    }
    group.finish();
}

fn sweeps(c: &mut Criterion) {
    let quad = presets::quadratic();
    let origin = [Complex64::new(0.0, 0.0)];
    let mesh = ParamMesh::polydisk(&origin, 0.2, 9).unwrap();
    let mut opts = GridOptions::new(1);
    opts.lyap.depth = 10;
    compare(c, "grid_quadratic_9x9", || {
        harmonicity_grid(&quad, &mesh, &opts).unwrap();
    });
    compare(c, "pullback_depth12", || {
        pullback_measure_seeded(&quad, &origin, 12, 1).unwrap();
    });
    let product = presets::product_map_p2();
    compare(c, "cycles_p2_period3", || {
        find_periodic(&product, &[], 3).unwrap();
    });
    let small = ParamMesh::polydisk(&origin, 0.2, 5).unwrap();
    compare(c, "web_period6", || {
        build_web(&quad, &small, 6).unwrap();
    });
    compare(c, "kingman_16_orbits", || {
        kingman_estimate(&quad, &small, 1, 16, 30, 3).unwrap();
    });
}

criterion_group!(benches, sweeps);
criterion_main!(benches);
