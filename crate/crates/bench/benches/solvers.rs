use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use wavecool_bench::{dam_desk_spectrum, nls_config, nls_field};
use wavecool_core::dam::{step_rosenbrock, DamOperator, DamState};
use wavecool_core::kernel::{kernel_s, region_scan, Region};
use wavecool_core::nls::{dealiased_cubic, extract_spectrum, Stepper};
use wavecool_core::Quartet;

fn dam(c: &mut Criterion) {
    let s = dam_desk_spectrum();
    let op = DamOperator::new(s.grid());
    let n = s.values().to_vec();
    let (mut k, mut rhs) = (vec![0.0; n.len()], vec![0.0; n.len()]);
    c.bench_function("dam_rhs_1200", |b| {
        b.iter(|| op.rhs_into(black_box(&n), &mut k, &mut rhs))
    });
    let state = DamState::new(s.clone(), 1e-3);
    let floor = 1e-300;
    c.bench_function("dam_rosenbrock_step_1200", |b| {
        b.iter(|| step_rosenbrock(black_box(&state), floor).unwrap())
    });
}

fn nls(c: &mut Criterion) {
    let mut g = c.benchmark_group("nls");
    g.sample_size(10);
    for n in [64usize, 128, 256] {
        let field = nls_field(n);
        g.bench_with_input(BenchmarkId::new("dealiased_cubic", n), &field, |b, f| {
            b.iter(|| dealiased_cubic(black_box(f)).unwrap())
        });
        let mut st = Stepper::new(&nls_config(n)).unwrap();
        let mut data = field.data().to_vec();
        g.bench_with_input(BenchmarkId::new("etdrk4_step", n), &n, |b, _| {
            b.iter(|| st.step(black_box(&mut data)))
        });
    }
    let cfg = nls_config(256);
    let grid = std::sync::Arc::new(cfg.spectrum_grid().unwrap());
    let fields = vec![nls_field(256); 4];
    g.bench_function("extract_spectrum_256x4", |b| {
        b.iter(|| extract_spectrum(black_box(&fields), grid.clone(), 0.0).unwrap())
    });
    g.finish();
}

fn kernel(c: &mut Criterion) {
    let q = Quartet::new(1.0, 2.3, 1.7).unwrap();
    c.bench_function("kernel_s", |b| b.iter(|| kernel_s(black_box(&q)).unwrap()));
    let scales = Region::E.default_scales();
    c.bench_function("region_scan_e", |b| {
        b.iter(|| region_scan(black_box(0.75), Region::E, scales).unwrap())
    });
}

criterion_group!(benches, dam, nls, kernel);
criterion_main!(benches);
