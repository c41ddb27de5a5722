use criterion::{criterion_group, criterion_main, Criterion};

use satiqc_bench::config;
use satiqc_core::config::Outcome;
use satiqc_core::iqc::{j_spectral_factorize, make_popov_multiplier, make_zames_falb_multiplier, to_triangular, default_zf_filter, FactorOptions};
use satiqc_core::nalgebra::DMatrix;
use satiqc_core::sim::simulate;
use satiqc_core::ss::{solve_are, AreOptions};

fn are(c: &mut Criterion) {
    let n = 6;
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { -1.0 } else { 0.3 * ((i * 7 + j * 3) as f64).sin() });
    let b = DMatrix::from_fn(n, 2, |i, j| ((i + 2 * j) as f64).cos());
    let cm = DMatrix::zeros(2, n);
    let d = DMatrix::identity(2, 2);
    c.bench_function("are_n6", |bch| bch.iter(|| solve_are(&a, &b, &cm, &d, &AreOptions::default()).unwrap()));
}

fn factorize(c: &mut Criterion) {
    let popov = make_popov_multiplier(1.0, 0.01).unwrap();
    c.bench_function("factorize_popov", |bch| {
        bch.iter(|| to_triangular(&j_spectral_factorize(&popov, &FactorOptions::default()).unwrap()).unwrap())
    });
    let zf = make_zames_falb_multiplier(1.0, 0.01, &default_zf_filter()).unwrap();
    c.bench_function("factorize_zames_falb", |bch| bch.iter(|| j_spectral_factorize(&zf, &FactorOptions::default()).unwrap()));
}

fn synthesis(c: &mut Criterion) {
    let cfg = config("second_order");
    let mut g = c.benchmark_group("synthesis");
    g.sample_size(10);
    g.bench_function("second_order", |bch| bch.iter(|| cfg.run().unwrap()));
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let cfg = config("second_order");
    let Outcome::Iqc { closed_loop, .. } = cfg.run().unwrap() else { panic!("iqc design expected") };
    let sc = cfg.scenario("windowed_sine").unwrap().clone();
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    g.bench_function("second_order_windowed_sine", |bch| bch.iter(|| simulate(&closed_loop, &sc).unwrap()));
    g.finish();
}

criterion_group!(benches, are, factorize, synthesis, simulation);
criterion_main!(benches);
