use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use htc_core::lindblad::{DensityMatrix, Lindbladian, Workspace};
use htc_core::sweep::{staircase_sweep, SweepPlan};
use htc_core::{default_initial_state, Execution, ModelParameters};
use num_complex::Complex64;

fn sweep_cells(c: &mut Criterion) {
    let mut plan = SweepPlan::staircase(ModelParameters::coherent_reference(0.0), 0.1, 0.5, 8);
    plan.horizon_periods = 100.0;
    plan.heatmap_bins = 0;
    let mut g = c.benchmark_group("staircase_8_cells");
    g.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        g.bench_function(name, |b| b.iter(|| staircase_sweep(&plan, exec).unwrap()));
    }
    g.finish();
}

/// Inner loops split across threads only with the `parallel` feature; run
/// once with and once without `--no-default-features` to compare.
fn lindbladian_apply(c: &mut Criterion) {
    let mode = if cfg!(feature = "parallel") { "parallel" } else { "sequential" };
    let mut g = c.benchmark_group(format!("lindbladian_apply_{mode}"));
    for n in [10, 20, 30] {
        let p = ModelParameters::coherent_reference(0.15).with_n(n);
        let l = Lindbladian::new(&p).unwrap();
        let rho = DensityMatrix::coherent(n, &default_initial_state()).unwrap();
        let mut out = vec![Complex64::new(0.0, 0.0); rho.as_slice().len()];
        let mut ws = Workspace::default();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| l.apply_hermitian(rho.as_slice(), &mut out, &mut ws).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sweep_cells, lindbladian_apply);
criterion_main!(benches);
