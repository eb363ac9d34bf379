use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nlsdecay_bench::{cubic_history, gaussian};
use nlsdecay_core::duhamel::{duhamel_integral, DUHAMEL_SIGN};
use nlsdecay_core::propagate::strang_step;
use nlsdecay_core::spectral::{Transform, Workspace};
use nlsdecay_core::{EquationSpec, Integrator};

fn fft(c: &mut Criterion) {
    let mut group = c.benchmark_group("fft_forward_inverse");
    for (d, n) in [(2, 256), (3, 64)] {
        let f = gaussian(d, n);
        let t = Transform::new(f.grid());
        let mut work = Workspace::default();
        let mut data = f.values().to_vec();
        group.bench_with_input(BenchmarkId::from_parameter(format!("{d}d_{n}")), &(), |b, _| {
            b.iter(|| {
                t.forward_raw(&mut data, &mut work);
                t.inverse_raw(&mut data, &mut work);
            })
        });
    }
    group.finish();
}

fn strang(c: &mut Criterion) {
    let mut group = c.benchmark_group("strang_step");
    for (d, n, q) in [(2, 256, 5), (3, 64, 5), (3, 64, 3)] {
        let f = gaussian(d, n);
        let eq = EquationSpec::new(d, q).unwrap();
        group.bench_with_input(BenchmarkId::new("field", format!("{d}d_{n}_q{q}")), &(), |b, _| {
            b.iter(|| strang_step(&f, 1e-3, &eq))
        });
        let mut integ = Integrator::new(&f, eq, 1e-3, false);
        group.bench_with_input(BenchmarkId::new("integrator", format!("{d}d_{n}_q{q}")), &(), |b, _| {
            b.iter(|| integ.advance())
        });
    }
    group.finish();
}

fn duhamel(c: &mut Criterion) {
    let h = cubic_history(2, 64, 20);
    let t = h.end_time();
    c.bench_function("duhamel_integral_2d_64_20_nodes", |b| {
        b.iter(|| duhamel_integral(&h, t, (0.0, t), DUHAMEL_SIGN).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = fft, strang, duhamel
}
criterion_main!(benches);
