use darkqubit_core::atomic::LevelScheme;
use darkqubit_core::dynamics::{
    evolve_lindblad, evolve_noisy, evolve_unitary, fit_decay, DecayModel, NoiseProcess, NoisyOptions, RkOptions,
};
use darkqubit_core::gates::dark_pair;
use darkqubit_core::hamiltonian::{compact_construction, ideal_construction, Frame, TimeDependentHamiltonian};
use darkqubit_core::linalg::{basis_vector, c, diag_real, linspace, re, CMat};
use darkqubit_core::subspace::bright_states;

fn two_level(hx: f64, hz: f64) -> CMat {
    let mut h = CMat::zeros(2, 2);
    h[(0, 1)] = re(hx);
    h[(1, 0)] = re(hx);
    h[(0, 0)] = re(-hz);
    h[(1, 1)] = re(hz);
    h
}

#[test]
fn dark_state_populations_stay_constant() {
    let con = ideal_construction(&LevelScheme::d32_p12(1e4, 0.0), 10.0, 1.0).unwrap();
    let h = con.interaction_picture().unwrap().hamiltonian;
    let d = dark_pair(&con).unwrap();
    let times = linspace(0.0, 50.0, 51);
    let tr = evolve_unitary(&h, &d[0], &times, &RkOptions::default()).unwrap();
    for p in tr.overlap(&d[0]) {
        assert!((p - 1.0).abs() < 1e-10);
    }
    assert!(tr.diagnostics.max_norm_drift < 1e-10);
}

#[test]
fn bright_state_rabi_period_is_pi_over_omega() {
    let con = ideal_construction(&LevelScheme::d32_p12(1e4, 0.0), 10.0, 1.0).unwrap();
    let hip = con.ip_hamiltonian().unwrap();
    let s = &con.scheme;
    let p_lo = s.idx("P1/2", -0.5).unwrap();
    let b1 = bright_states(&hip, &[p_lo]).remove(0);
    let h = TimeDependentHamiltonian::new_static(hip, Frame::Lab);
    let times = linspace(0.0, std::f64::consts::PI, 201);
    let tr = evolve_unitary(&h, &b1, &times, &RkOptions::default()).unwrap();
    let pe = tr.population_of(&[p_lo]);
    for (t, p) in times.iter().zip(&pe) {
        assert!((p - t.sin().powi(2)).abs() < 1e-9, "t = {t}: {p}");
    }
}

#[test]
fn lindblad_without_decay_matches_unitary() {
    let h = TimeDependentHamiltonian::new_static(two_level(0.4, 0.3), Frame::Lab);
    let psi = basis_vector(2, 0);
    let rho = &psi * psi.adjoint();
    let times = linspace(0.0, 10.0, 21);
    let a = evolve_lindblad(&h, &rho, &[], &times, &RkOptions::default()).unwrap();
    let b = evolve_unitary(&h, &psi, &times, &RkOptions::default()).unwrap();
    for (x, y) in a.populations.iter().zip(&b.populations) {
        assert!((x[0] - y[0]).abs() < 1e-9);
    }
}

#[test]
fn damped_rabi_frequency_matches_two_level_oracle() {
    // H = (W/2) sigma_x, decay |e> -> |g> at rate G
    let (w, g): (f64, f64) = (1.0, 0.5);
    let h = TimeDependentHamiltonian::new_static(two_level(w / 2.0, 0.0), Frame::Lab);
    let mut l = CMat::zeros(2, 2);
    l[(0, 1)] = re(g.sqrt());
    let psi = basis_vector(2, 0);
    let times = linspace(0.0, 30.0, 601);
    let tr = evolve_lindblad(&h, &(&psi * psi.adjoint()), &[l], &times, &RkOptions::default()).unwrap();
    let pe: Vec<f64> = tr.populations.iter().map(|p| p[1]).collect();
    let f = fit_decay(&times, &pe, DecayModel::DampedCosine).unwrap();
    let oracle = (w * w - g * g / 16.0).sqrt();
    let rel = (f.frequency().unwrap() - oracle).abs() / oracle;
    assert!(rel < 0.01, "fit {} oracle {oracle}", f.frequency().unwrap());
}

#[test]
fn quasi_static_dephasing_is_gaussian() {
    let sigma = 0.2;
    let h = TimeDependentHamiltonian::new_static(CMat::zeros(2, 2), Frame::Lab);
    let psi = (basis_vector(2, 0) + basis_vector(2, 1)) / re(2f64.sqrt());
    let nop = diag_real(&[0.0, 1.0]);
    let t2s = 2f64.sqrt() / sigma;
    let times = linspace(0.0, 3.0 * t2s, 61);
    let tr =
        evolve_noisy(&h, &psi, &nop, &NoiseProcess::quasi_static(sigma, 11), 4096, &times, &NoisyOptions::default())
            .unwrap();
    let coh: Vec<f64> = tr.rhos.iter().map(|r| 2.0 * r[(0, 1)].re).collect();
    for (t, x) in times.iter().zip(&coh) {
        let oracle = (-sigma * sigma * t * t / 2.0).exp();
        assert!((x - oracle).abs() < 0.02, "t = {t}: {x} vs {oracle}");
    }
    let f = fit_decay(&times, &coh, DecayModel::Gaussian).unwrap();
    assert!((f.time_constant() / t2s - 1.0).abs() < 0.02);
}

#[test]
fn drive_amplitude_noise_leaves_dark_pair_untouched() {
    let con = ideal_construction(&LevelScheme::d32_p12(1e4, 0.0), 10.0, 1.0).unwrap();
    let hip = con.ip_hamiltonian().unwrap();
    let d = dark_pair(&con).unwrap();
    let h = TimeDependentHamiltonian::new_static(hip.clone(), Frame::Lab);
    let psi = (&d[0] + &d[1]) / re(2f64.sqrt());
    let times = linspace(0.0, 1e3, 11);
    // global amplitude fluctuation a(t) multiplies the whole drive Hamiltonian
    let noise = NoiseProcess::ornstein_uhlenbeck(0.05, 10.0, 5);
    let tr = evolve_noisy(&h, &psi, &hip, &noise, 16, &times, &NoisyOptions { dt: Some(0.5), ..Default::default() })
        .unwrap();
    for (p1, (p2, z)) in tr.overlap(&d[0]).iter().zip(tr.overlap(&d[1]).iter().zip(tr.coherence(&d[0], &d[1]))) {
        assert!((p1 - 0.5).abs() < 1e-6);
        assert!((p2 - 0.5).abs() < 1e-6);
        assert!((z - c(0.5, 0.0)).norm() < 1e-6);
    }
}

#[test]
fn golden_rule_relaxation_follows_spectral_density() {
    // H = (W/2) sigma_x + (b(t)/2) sigma_z; <sigma_x> relaxes at S(W)/2
    let w = 1.0;
    let h = TimeDependentHamiltonian::new_static(two_level(w / 2.0, 0.0), Frame::Lab);
    let nop = diag_real(&[-0.5, 0.5]);
    let plus = (basis_vector(2, 0) + basis_vector(2, 1)) / re(2f64.sqrt());
    let sx = two_level(1.0, 0.0);
    for (tau, sigma) in [(0.1, 0.2), (1.0, 0.1), (10.0, 0.1)] {
        let noise = NoiseProcess::ornstein_uhlenbeck(sigma, tau, 21);
        let rate = noise.spectral_density(w) / 2.0;
        let times = linspace(0.0, 1.5 / rate, 31);
        let tr = evolve_noisy(&h, &plus, &nop, &noise, 256, &times, &NoisyOptions::default()).unwrap();
        let x = tr.expectation(&sx);
        let f = fit_decay(&times, &x, DecayModel::Exponential).unwrap();
        let measured = 1.0 / f.time_constant();
        assert!((measured / rate - 1.0).abs() < 0.3, "tau {tau}: {measured} vs {rate}");
    }
}

#[test]
fn protected_pair_outlives_bare_pair_under_slow_noise() {
    let sigma = 5e-4;
    let con = compact_construction(&LevelScheme::d32_p12(1e4, 0.0), 0.75, 1.0).unwrap();
    let nop = con.noise_operator();
    let d = dark_pair(&con).unwrap();
    let h = TimeDependentHamiltonian::new_static(con.ip_hamiltonian().unwrap(), Frame::Lab);
    let t2s = 2f64.sqrt() / sigma;
    let psi = (&d[0] + &d[1]) / re(2f64.sqrt());
    let times = vec![0.0, 100.0 * t2s];
    let noise = NoiseProcess::ornstein_uhlenbeck(sigma, 1e6, 9);
    let tr = evolve_noisy(&h, &psi, &nop, &noise, 16, &times, &NoisyOptions { dt: Some(1.0), ..Default::default() })
        .unwrap();
    let coh = 2.0 * tr.coherence(&d[0], &d[1])[1].norm();
    assert!(coh > (-1f64).exp(), "coherence {coh} at 100 T2*");
}
