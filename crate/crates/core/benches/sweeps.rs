use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fullsum::landscape::{sweep, Grid, Landscape, LandscapeLoss};
use fullsum::training::{ratio_sweep, RatioMode};
use fullsum::verify::{run_suite, Suite, VerifyOptions};
use fullsum::{Exec, TrainConfig};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn landscape(c: &mut Criterion) {
    let mut g = c.benchmark_group("landscape_sweep");
    g.sample_size(10);
    let l = Landscape::single_label(LandscapeLoss::Ctc, 4).unwrap();
    let grid = Grid::new(-6.0, 6.0, 0.2).unwrap();
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| sweep(&l, grid, exec)));
    }
    g.finish();
}

fn ratio(c: &mut Criterion) {
    let mut g = c.benchmark_group("ratio_sweep");
    g.sample_size(10);
    let exact: Vec<usize> = (6..=120).collect();
    let proxy = [5, 10, 20, 30, 40, 60];
    let config = TrainConfig { max_steps: 500, ..TrainConfig::default() };
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new("uniform_exact", name), |b| {
            b.iter(|| ratio_sweep(&["a", "b", "c"], "B", &exact, RatioMode::UniformExact, &config, exec).unwrap())
        });
        g.bench_function(BenchmarkId::new("memory_proxy", name), |b| {
            b.iter(|| ratio_sweep(&["a", "b", "c"], "B", &proxy, RatioMode::MemoryProxy, &config, exec).unwrap())
        });
    }
    g.finish();
}

fn gradcheck(c: &mut Criterion) {
    let mut g = c.benchmark_group("gradcheck");
    g.sample_size(10);
    for (name, exec) in MODES {
        let options = VerifyOptions { draws: 10, exec, ..VerifyOptions::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_suite(Suite::Gradcheck, &options).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, landscape, ratio, gradcheck);
criterion_main!(benches);
