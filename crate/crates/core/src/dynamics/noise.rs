//! Stochastic common-mode magnetic noise and trajectory averaging.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::TimeDependentHamiltonian;
use crate::linalg::{eigh, frobenius, propagator_from_eigen, CMat, CVec, C64};

use super::propagate::{integrate, propagate_columns, schrodinger_rhs, RkOptions};
use super::SimulationTrace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseKind {
    OrnsteinUhlenbeck { tau_c: f64 },
    QuasiStaticGaussian,
}

/// Scalar noise b(t) multiplying a fixed operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseProcess {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseProcess {
    pub fn ornstein_uhlenbeck(sigma: f64, tau_c: f64, seed: u64) -> Self {
        NoiseProcess { kind: NoiseKind::OrnsteinUhlenbeck { tau_c }, sigma, seed }
    }

    pub fn quasi_static(sigma: f64, seed: u64) -> Self {
        NoiseProcess { kind: NoiseKind::QuasiStaticGaussian, sigma, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sigma".into(),
                reason: format!("must be finite and non-negative, got {}", self.sigma),
            });
        }
        if let NoiseKind::OrnsteinUhlenbeck { tau_c } = self.kind {
            if !(tau_c > 0.0) || !tau_c.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "tau_c".into(),
                    reason: format!("must be positive, got {tau_c}"),
                });
            }
        }
        Ok(())
    }

    pub fn tau_c(&self) -> Option<f64> {
        match self.kind {
            NoiseKind::OrnsteinUhlenbeck { tau_c } => Some(tau_c),
            NoiseKind::QuasiStaticGaussian => None,
        }
    }

    /// Two-sided power spectral density of b(t), S(w) = int <b(t)b(0)> e^{iwt} dt.
    /// Quasi-static noise is reported as sigma^2 in the w = 0 band and zero elsewhere.
    pub fn spectral_density(&self, omega: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        match self.kind {
            NoiseKind::OrnsteinUhlenbeck { tau_c } => 2.0 * s2 * tau_c / (1.0 + omega * omega * tau_c * tau_c),
            NoiseKind::QuasiStaticGaussian => {
                if omega == 0.0 {
                    s2
                } else {
                    0.0
                }
            }
        }
    }

    /// Piecewise-constant sample path on a uniform grid of `n` steps of length `dt`.
    pub fn sample_path(&self, rng: &mut ChaCha8Rng, dt: f64, n: usize) -> Vec<f64> {
        match self.kind {
            NoiseKind::QuasiStaticGaussian => {
                let b = self.sigma * gauss(rng);
                vec![b; n]
            }
            NoiseKind::OrnsteinUhlenbeck { tau_c } => {
                let mut p = OuPath::stationary(self.sigma, tau_c, rng);
                (0..n)
                    .map(|_| {
                        let b = p.value;
                        p.advance(dt, rng);
                        b
                    })
                    .collect()
            }
        }
    }
}

/// Ornstein-Uhlenbeck process with the exact discrete update.
#[derive(Clone, Debug)]
pub struct OuPath {
    pub sigma: f64,
    pub tau_c: f64,
    pub value: f64,
}

impl OuPath {
    pub fn stationary(sigma: f64, tau_c: f64, rng: &mut ChaCha8Rng) -> Self {
        let x: f64 = StandardNormal.sample(rng);
        OuPath { sigma, tau_c, value: sigma * x }
    }

    pub fn advance(&mut self, dt: f64, rng: &mut ChaCha8Rng) -> f64 {
        let a = (-dt / self.tau_c).exp();
        let x: f64 = StandardNormal.sample(rng);
        self.value = self.value * a + self.sigma * (1.0 - a * a).max(0.0).sqrt() * x;
        self.value
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Independent stream `stream` of the generator seeded by `master`.
pub fn rng_for(master: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(master);
    r.set_stream(stream);
    r
}

#[derive(Clone, Debug)]
pub struct NoisyOptions {
    /// Internal noise step; default min(tau_c, 1/scale)/10.
    pub dt: Option<f64>,
    pub rk: RkOptions,
    /// Trajectories per reduction chunk; the sum order depends only on this.
    pub chunk: usize,
}

impl Default for NoisyOptions {
    fn default() -> Self {
        NoisyOptions { dt: None, rk: RkOptions::default(), chunk: 16 }
    }
}

struct Splitting {
    dt: f64,
    half: CMat,
    noise_vals: Vec<f64>,
    noise_vecs: CMat,
    noise_vecs_h: CMat,
}

fn internal_grid(times: &[f64], dt_max: f64) -> Vec<usize> {
    times.windows(2).map(|w| (((w[1] - w[0]) / dt_max).ceil() as usize).max(1)).collect()
}

/// Trajectory-averaged evolution under H(t) + b(t) N.
pub fn evolve_noisy(
    h: &TimeDependentHamiltonian,
    psi0: &CVec,
    noise_op: &CMat,
    noise: &NoiseProcess,
    n_traj: usize,
    times: &[f64],
    opts: &NoisyOptions,
) -> Result<SimulationTrace> {
    noise.validate()?;
    if n_traj == 0 {
        return Err(Error::InvalidParameter { name: "n_traj".into(), reason: "must be at least 1".into() });
    }
    let n = h.dim();
    if noise_op.shape() != (n, n) || psi0.len() != n {
        return Err(Error::InvalidParameter { name: "noise_op".into(), reason: "dimension mismatch".into() });
    }
    let nrm = psi0.norm();
    if (nrm - 1.0).abs() > 1e-9 {
        return Err(Error::NonPhysicalState(format!("initial state has norm {nrm}")));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter { name: "times".into(), reason: "must be ascending".into() });
    }
    let scale = frobenius(&h.static_part).max(h.frequency_scale()).max(noise.sigma * frobenius(noise_op));
    let dt_max = opts.dt.unwrap_or_else(|| {
        let base = if scale > 0.0 { 1.0 / scale } else { f64::INFINITY };
        let t = noise.tau_c().unwrap_or(f64::INFINITY).min(base);
        if t.is_finite() {
            t / 10.0
        } else {
            times.last().copied().unwrap_or(1.0) - times.first().copied().unwrap_or(0.0)
        }
    });
    let substeps = internal_grid(times, dt_max.max(f64::MIN_POSITIVE));
    let (nv, nw) = eigh(noise_op);
    let static_eig = if h.is_static() { Some(eigh(&h.static_part)) } else { None };
    // splitting operators for the distinct step lengths on the grid
    let mut splits: Vec<Splitting> = Vec::new();
    if let (Some((hv, hw)), NoiseKind::OrnsteinUhlenbeck { .. }) = (&static_eig, &noise.kind) {
        for (w, &m) in times.windows(2).zip(&substeps) {
            let dt = (w[1] - w[0]) / m as f64;
            if !splits.iter().any(|s| s.dt == dt) {
                splits.push(Splitting {
                    dt,
                    half: propagator_from_eigen(hv, hw, dt / 2.0),
                    noise_vals: nv.clone(),
                    noise_vecs: nw.clone(),
                    noise_vecs_h: nw.adjoint(),
                });
            }
        }
    }

    let run_one = |k: usize| -> Result<Vec<CVec>> {
        let mut rng = rng_for(noise.seed, k as u64);
        match (&noise.kind, &static_eig) {
            (NoiseKind::QuasiStaticGaussian, Some(_)) => {
                let b = noise.sigma * gauss(&mut rng);
                let hb = &h.static_part + noise_op * C64::new(b, 0.0);
                let (v, w) = eigh(&hb);
                let t0 = times[0];
                Ok(times.iter().map(|&t| propagator_from_eigen(&v, &w, t - t0) * psi0).collect())
            }
            (NoiseKind::QuasiStaticGaussian, None) => {
                let b = noise.sigma * gauss(&mut rng);
                let mut hb = h.clone();
                hb.add_static(&(noise_op * C64::new(b, 0.0)));
                let y0 = CMat::from_column_slice(n, 1, psi0.as_slice());
                let cols = propagate_columns(&hb, &y0, times, &opts.rk)?;
                Ok(cols.into_iter().map(|c| c.column(0).into_owned()).collect())
            }
            (NoiseKind::OrnsteinUhlenbeck { tau_c }, Some(_)) => {
                let mut path = OuPath::stationary(noise.sigma, *tau_c, &mut rng);
                let mut psi = psi0.clone();
                let mut buf = CVec::zeros(n);
                let mut out = Vec::with_capacity(times.len());
                out.push(psi.clone());
                for (w, &m) in times.windows(2).zip(&substeps) {
                    let dt = (w[1] - w[0]) / m as f64;
                    let sp = splits.iter().find(|s| s.dt == dt).unwrap();
                    for _ in 0..m {
                        let b = path.value;
                        buf.gemv(C64::new(1.0, 0.0), &sp.half, &psi, C64::default());
                        psi.gemv(C64::new(1.0, 0.0), &sp.noise_vecs_h, &buf, C64::default());
                        for (i, x) in psi.iter_mut().enumerate() {
                            *x *= C64::from_polar(1.0, -b * sp.noise_vals[i] * dt);
                        }
                        buf.gemv(C64::new(1.0, 0.0), &sp.noise_vecs, &psi, C64::default());
                        psi.gemv(C64::new(1.0, 0.0), &sp.half, &buf, C64::default());
                        path.advance(dt, &mut rng);
                    }
                    out.push(psi.clone());
                }
                Ok(out)
            }
            (NoiseKind::OrnsteinUhlenbeck { .. }, None) => {
                // piecewise-constant path on the internal grid, integrated segment by segment
                let mut psi = CMat::from_column_slice(n, 1, psi0.as_slice());
                let mut out = Vec::with_capacity(times.len());
                out.push(psi0.clone());
                let tau = noise.tau_c().unwrap();
                let mut path = OuPath::stationary(noise.sigma, tau, &mut rng);
                let rhs = schrodinger_rhs(h);
                for (w, &m) in times.windows(2).zip(&substeps) {
                    let dt = (w[1] - w[0]) / m as f64;
                    for s in 0..m {
                        let b = path.value;
                        let nb = noise_op * C64::new(b, 0.0);
                        let f = |t: f64, y: &CMat, o: &mut CMat| {
                            rhs(t, y, o);
                            o.gemm(C64::new(0.0, -1.0), &nb, y, C64::new(1.0, 0.0));
                        };
                        let ta = w[0] + s as f64 * dt;
                        let mut r = integrate(f, &psi, &[ta, ta + dt], &opts.rk)?;
                        psi = r.pop().unwrap();
                        path.advance(dt, &mut rng);
                    }
                    out.push(psi.column(0).into_owned());
                }
                Ok(out)
            }
        }
    };

    let chunk = opts.chunk.max(1);
    let n_chunks = n_traj.div_ceil(chunk);
    let partial: Vec<Result<Vec<CMat>>> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let mut acc = vec![CMat::zeros(n, n); times.len()];
            for k in ci * chunk..((ci + 1) * chunk).min(n_traj) {
                let states = run_one(k)?;
                for (a, s) in acc.iter_mut().zip(&states) {
                    a.gerc(C64::new(1.0, 0.0), s, s, C64::new(1.0, 0.0));
                }
            }
            Ok(acc)
        })
        .collect();
    // fixed-order reduction
    let mut total = vec![CMat::zeros(n, n); times.len()];
    for p in partial {
        let p = p?;
        for (a, b) in total.iter_mut().zip(&p) {
            *a += b;
        }
    }
    let inv = C64::new(1.0 / n_traj as f64, 0.0);
    let rhos: Vec<CMat> = total.into_iter().map(|r| r * inv).collect();
    Ok(SimulationTrace::from_density(times.to_vec(), rhos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Frame;
    use crate::linalg::re;
    use rand::Rng;

    #[test]
    fn ou_lorentzian_peak_and_tail() {
        let p = NoiseProcess::ornstein_uhlenbeck(0.3, 2.0, 1);
        assert_eq!(p.spectral_density(0.0), 2.0 * 0.09 * 2.0);
        let w = 1e4;
        let ratio = p.spectral_density(w) * w * w / (2.0 * 0.09 / 2.0);
        assert!((ratio - 1.0).abs() < 1e-6);
    }

    #[test]
    fn same_seed_same_stream() {
        let a: f64 = rng_for(5, 3).random();
        let b: f64 = rng_for(5, 3).random();
        let c: f64 = rng_for(5, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn ou_stationary_variance() {
        let mut rng = rng_for(9, 0);
        let mut p = OuPath::stationary(1.5, 0.2, &mut rng);
        let mut s2 = 0.0;
        let n = 200_000;
        for _ in 0..n {
            s2 += p.advance(0.05, &mut rng).powi(2);
        }
        assert!((s2 / n as f64 / 2.25 - 1.0).abs() < 0.03);
    }

    #[test]
    fn zero_sigma_gives_no_decay() {
        let h = TimeDependentHamiltonian::new_static(CMat::zeros(2, 2), Frame::Lab);
        let psi = CVec::from_vec(vec![re(0.5f64.sqrt()), re(0.5f64.sqrt())]);
        let mut nop = CMat::zeros(2, 2);
        nop[(0, 0)] = re(-0.5);
        nop[(1, 1)] = re(0.5);
        for noise in [NoiseProcess::quasi_static(0.0, 1), NoiseProcess::ornstein_uhlenbeck(0.0, 1.0, 1)] {
            let tr = evolve_noisy(&h, &psi, &nop, &noise, 8, &[0.0, 1.0, 5.0], &NoisyOptions::default()).unwrap();
            for r in &tr.rhos {
                assert!((r[(0, 1)].re - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(NoiseProcess::quasi_static(-1.0, 0).validate().is_err());
        assert!(NoiseProcess::ornstein_uhlenbeck(1.0, 0.0, 0).validate().is_err());
    }
}
