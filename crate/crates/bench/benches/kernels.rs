use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ncs_core::bmi_stab::{certify_gain, CertifyOptions};
use ncs_core::linalg::{expm, sym_eig};
use ncs_core::lmi::{search_lyapunov, LmiOptions};
use ncs_core::lqr::{solve_dare, LqrWeights};
use ncs_core::plant::{closed_loop_phi, discretize_zoh, ContinuousPlant};
use ncs_core::sim::simulate_once;
use ncs_core::Matrix;

fn kernels(c: &mut Criterion) {
    let plant = ContinuousPlant::servo_example();
    let d = discretize_zoh(&plant, 0.3).unwrap();
    let k = Matrix::row(&[0.99994, 3.73058]);
    let cl = closed_loop_phi(&d, &k, 0.7).unwrap();
    let w = LqrWeights::new(vec![11.87689, 14.33702], 10.58286).unwrap();

    c.bench_function("expm_2x2", |b| {
        b.iter(|| expm(black_box(&plant.a), 0.3).unwrap())
    });
    c.bench_function("discretize_zoh", |b| {
        b.iter(|| discretize_zoh(black_box(&plant), 0.3).unwrap())
    });
    let gram = &cl.phi1.transpose() * &cl.phi1;
    c.bench_function("sym_eig_4x4", |b| {
        b.iter(|| sym_eig(black_box(&gram)).unwrap())
    });
    c.bench_function("solve_dare", |b| {
        b.iter(|| solve_dare(black_box(&d), &w).unwrap())
    });
    c.bench_function("lmi_search", |b| {
        let opts = LmiOptions::default();
        b.iter(|| search_lyapunov(black_box(&cl), 1.0655, 0.86331, &opts))
    });
    c.bench_function("simulate_100", |b| {
        b.iter(|| simulate_once(&d, black_box(&k), 0.7, 1.0, 100, 42).unwrap())
    });
    c.bench_function("certify_gain", |b| {
        b.iter(|| certify_gain(&d, black_box(&k), 0.7, &CertifyOptions::new(50, 1)).unwrap())
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);
