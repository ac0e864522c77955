use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use darkqubit_core::atomic::LevelScheme;
use darkqubit_core::dynamics::{evolve_lindblad, evolve_noisy, evolve_unitary, NoiseProcess, NoisyOptions, RkOptions};
use darkqubit_core::gates::dark_pair;
use darkqubit_core::hamiltonian::{compact_construction, Construction};
use darkqubit_core::linalg::{eigh, linspace};
use darkqubit_core::subspace::find_protected_subspace;

fn ca40() -> Construction {
    compact_construction(&LevelScheme::ca40_like(1e4, 0.5), 0.75, 1.0).unwrap()
}

fn kernels(c: &mut Criterion) {
    let con = ca40();
    let hip = con.ip_hamiltonian().unwrap();
    let jz = con.jz();
    let dim = hip.nrows();

    c.bench_function("eigh", |b| b.iter(|| eigh(black_box(&hip))));
    c.bench_function("interaction_picture", |b| b.iter(|| black_box(&con).interaction_picture().unwrap()));
    c.bench_function("protected_subspace", |b| b.iter(|| find_protected_subspace(black_box(&hip), &jz, 2).unwrap()));

    let h = con.interaction_picture().unwrap().hamiltonian;
    let psi = dark_pair(&con).unwrap().remove(0);
    let times = linspace(0.0, 20.0, 41);
    c.bench_function("evolve_unitary", |b| {
        b.iter(|| evolve_unitary(&h, black_box(&psi), &times, &RkOptions::default()).unwrap())
    });

    let collapse = con.scheme.collapse_operators().unwrap();
    let rho = &psi * psi.adjoint();

    let n = con.scheme.zeeman_noise_operator(1.0);
    assert_eq!(n.nrows(), dim);
    let noise = NoiseProcess::ornstein_uhlenbeck(1e-3, 5.0, 7);
    let opts = NoisyOptions { dt: Some(0.5), ..Default::default() };
    let mut g = c.benchmark_group("slow");
    g.sample_size(10);
    g.bench_function("evolve_lindblad", |b| {
        b.iter(|| evolve_lindblad(&h, black_box(&rho), &collapse, &times, &RkOptions::default()).unwrap())
    });
    g.bench_function("noisy_chunk16", |b| {
        b.iter(|| evolve_noisy(&h, black_box(&psi), &n, &noise, 16, &times, &opts).unwrap())
    });
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
