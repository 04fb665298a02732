use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use probsr_bench::{inference_fixture, poisson_system};
use probsr_core::autodiff::{conv2d, Tensor4};
use probsr_core::downnet::{forward, loglik_gradients};
use probsr_core::fem::{solve, DEFAULT_TOL};
use probsr_core::langevin::{ChainState, Posterior};

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv3x3_16ch");
    for n in [32, 64] {
        let x = Tensor4::filled([1, 16, n, n], 0.5);
        let w: Vec<f64> = (0..16 * 16 * 9).map(|k| ((k % 5) as f64 - 2.0) * 0.1).collect();
        let bias = vec![0.01; 16];
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| conv2d(&x, &w, &bias, 16).unwrap())
        });
    }
    group.finish();
}

fn cg(c: &mut Criterion) {
    let mut group = c.benchmark_group("cg_solve");
    group.sample_size(20);
    for n in [64, 128] {
        let (a, b) = poisson_system(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| solve(&a, &b, DEFAULT_TOL).unwrap())
        });
    }
    group.finish();
}

fn network(c: &mut Criterion) {
    let fx = inference_fixture(64);
    c.bench_function("network_forward_64", |b| b.iter(|| forward(&fx.net, &fx.hr).unwrap()));
    c.bench_function("loglik_grad_hr_64", |b| {
        b.iter(|| loglik_gradients(&fx.net, &fx.hr, &fx.lr, 1e-2, false).unwrap())
    });
    c.bench_function("loglik_grad_params_64", |b| {
        b.iter(|| loglik_gradients(&fx.net, &fx.hr, &fx.lr, 1e-2, true).unwrap())
    });
}

fn langevin(c: &mut Criterion) {
    let fx = inference_fixture(64);
    let posterior = Posterior::new(&fx.prior, &fx.net, &fx.lr, 1e-2);
    let n = fx.hr.len();
    let (mut scratch, mut grad) = (vec![0.0; n], vec![0.0; n]);
    let mut state = ChainState::new(fx.hr.clone(), 1);
    c.bench_function("langevin_step_64", |b| {
        b.iter(|| {
            posterior.grad_into(state.position(), &mut scratch, &mut grad).unwrap();
            state.step(&grad, 1e-6).unwrap();
        })
    });
}

criterion_group!(benches, conv, cg, network, langevin);
criterion_main!(benches);
