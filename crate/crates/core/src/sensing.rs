//! AC magnetometry with the protected qubit.
//!
//! Sensitivity convention: eta = C / (gamma_eff sqrt(T2)) with C = 1 and
//! gamma_eff the extracted qubit rotation rate per unit signal amplitude.
//! Absolute eta values depend on this convention; ratios between arms do not.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::atomic::{clebsch_gordan, HalfInt};
use crate::dynamics::{evolve_noisy, evolve_unitary, rng_for, NoiseProcess, NoisyOptions, RkOptions, SimulationTrace};
use crate::error::{Error, Result};
use crate::errors::ser_limit;
use crate::gates::{dark_pair, extract_effective_hamiltonian, microwave_field, sigma_y};
use crate::hamiltonian::{Construction, DriveField, Frame, TimeDependentHamiltonian};
use crate::linalg::{basis_vector, linspace, logspace, re, CMat, CVec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensingScheme {
    OpticalD32,
    Hyperfine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhasePolicy {
    Locked { phase: f64 },
    RandomAveraged { draws: usize, seed: u64 },
}

/// Qubit axis measured at readout.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutBasis {
    X,
    Y,
    #[default]
    Z,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingProtocol {
    pub scheme: SensingScheme,
    /// Signal angular frequency; `None` puts it on the qubit resonance.
    pub signal_freq: Option<f64>,
    pub signal_rabi: f64,
    pub phase_policy: PhasePolicy,
    pub interrogation_time: f64,
    #[serde(default)]
    pub readout_basis: ReadoutBasis,
}

impl SensingProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.interrogation_time > 0.0) || !self.interrogation_time.is_finite() {
            return Err(Error::InvalidParameter {
                name: "interrogation_time".into(),
                reason: "must be positive".into(),
            });
        }
        if !(self.signal_rabi >= 0.0) || !self.signal_rabi.is_finite() {
            return Err(Error::InvalidParameter { name: "signal_rabi".into(), reason: "must be >= 0".into() });
        }
        if let PhasePolicy::RandomAveraged { draws, .. } = self.phase_policy {
            if draws == 0 {
                return Err(Error::InvalidParameter { name: "draws".into(), reason: "must be at least 1".into() });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SensitivityReport {
    /// Locked-phase rotation rate |<D2|H_eff|D1>|.
    pub locked_rabi: f64,
    /// locked_rabi times the attenuation factor.
    pub effective_rabi: f64,
    /// Phase-averaged short-time transition probability relative to the
    /// locked case, <(rate(phi)/rate_locked)^2>.
    pub attenuation_factor: f64,
    /// <|rate(phi)|> / rate_locked.
    pub mean_abs_ratio: f64,
    #[serde(serialize_with = "ser_limit")]
    pub t2_used: f64,
    #[serde(serialize_with = "ser_limit")]
    pub sensitivity: f64,
    /// Largest D1 -> D2 transfer over the interrogation time (locked phase).
    pub max_transfer: f64,
    pub readout_basis: ReadoutBasis,
    /// Spread max - min of the readout-axis expectation over the locked trace.
    pub readout_contrast: f64,
    pub detuning: f64,
    /// The signal is detuned beyond the rotation linewidth.
    pub zero_rotation_regime: bool,
    pub convention: String,
    pub warnings: Vec<String>,
}

/// C / (gamma sqrt(T2)), infinite when the qubit does not respond.
pub fn sensitivity(rate_per_signal: f64, t2: f64) -> f64 {
    if rate_per_signal <= 0.0 || t2 <= 0.0 {
        f64::INFINITY
    } else if t2.is_infinite() {
        0.0
    } else {
        1.0 / (rate_per_signal * t2.sqrt())
    }
}

/// Stratified phases in [0, 2 pi).
pub fn stratified_phases(draws: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, 0);
    (0..draws).map(|k| std::f64::consts::TAU * (k as f64 + rng.random::<f64>()) / draws as f64).collect()
}

/// Component of a 2x2 generator along sigma_y, <sigma_y, H>/2.
fn sigma_y_component(h: &CMat) -> f64 {
    (sigma_y().adjoint() * h).trace().re / 2.0
}

fn max_transfer(h: &TimeDependentHamiltonian, from: &CVec, to: &CVec, t_end: f64) -> Result<(f64, SimulationTrace)> {
    let times = linspace(0.0, t_end, 401);
    let tr = evolve_unitary(h, from, &times, &RkOptions::default())?;
    let p = tr.overlap(to);
    Ok((p.into_iter().fold(0.0, f64::max), tr))
}

fn readout_contrast(trace: &SimulationTrace, dark: &[CVec], basis: ReadoutBasis) -> f64 {
    let pauli = match basis {
        ReadoutBasis::X => crate::gates::sigma_x(),
        ReadoutBasis::Y => sigma_y(),
        ReadoutBasis::Z => crate::gates::sigma_z(),
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for rho in &trace.rhos {
        let mut v = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                v += (pauli[(i, j)] * (dark[j].adjoint() * rho * &dark[i])[(0, 0)]).re;
            }
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// Warning text when a physical signal frequency falls outside the window.
pub fn window_check(signal_freq: f64, window: &FrequencyWindow) -> Option<String> {
    if signal_freq < window.lower || signal_freq > window.upper {
        Some(format!(
            "signal frequency {signal_freq:e} rad/s outside the validated window [{:e}, {:e}] rad/s",
            window.lower, window.upper
        ))
    } else {
        None
    }
}

/// Optical scheme: a J_y signal on the qubit manifold. Returns the report and
/// the locked-phase trace of |D1> over the interrogation time.
pub fn run_ac_sensing(
    protocol: &SensingProtocol,
    construction: &Construction,
    t2: Option<f64>,
) -> Result<(SensitivityReport, SimulationTrace)> {
    protocol.validate()?;
    if protocol.scheme == SensingScheme::Hyperfine {
        return Err(Error::InvalidParameter {
            name: "scheme".into(),
            reason: "use run_hyperfine_sensing for the hyperfine scheme".into(),
        });
    }
    let og = protocol.signal_rabi;
    let (field, w0) = microwave_field(construction, og)?;
    let freq = protocol.signal_freq.unwrap_or(w0);
    let detuning = freq - w0;
    let dark = dark_pair(construction)?;
    let mut warnings = Vec::new();
    let build = |phase: f64| -> Result<TimeDependentHamiltonian> {
        let mut f = field.clone().with_phase(phase);
        f.frequency = freq;
        let c = construction.with_extra_drives(vec![f], Some(w0))?;
        Ok(c.interaction_picture()?.hamiltonian)
    };
    let locked_phase = match protocol.phase_policy {
        PhasePolicy::Locked { phase } => phase,
        PhasePolicy::RandomAveraged { .. } => 0.0,
    };
    let h_locked = build(locked_phase)?;
    let linewidth = (0.75 * og).max(1.0 / protocol.interrogation_time);
    let zero_rotation = detuning.abs() > 2.0 * linewidth;
    let (locked, probe_ok) = if og > 0.0 && h_locked.is_static() {
        let t_probe = std::f64::consts::PI / (4.0 * 0.75 * og);
        let op = extract_effective_hamiltonian(&h_locked, &dark, t_probe, &RkOptions::default())?;
        (op.rate, true)
    } else {
        (0.0, false)
    };
    let (transfer, trace) = max_transfer(&h_locked, &dark[0], &dark[1], protocol.interrogation_time)?;
    let contrast = readout_contrast(&trace, &dark, protocol.readout_basis);
    let (atten, mean_abs) = match protocol.phase_policy {
        PhasePolicy::Locked { .. } => (1.0, 1.0),
        PhasePolicy::RandomAveraged { draws, seed } => {
            if !probe_ok || locked == 0.0 {
                (0.0, 0.0)
            } else {
                let t_probe = std::f64::consts::PI / (4.0 * locked);
                let ref_y = {
                    let op = extract_effective_hamiltonian(&build(0.0)?, &dark, t_probe, &RkOptions::default())?;
                    sigma_y_component(&op.matrix)
                };
                let mut s2 = 0.0;
                let mut s1 = 0.0;
                for phi in stratified_phases(draws, seed) {
                    let op = extract_effective_hamiltonian(&build(phi)?, &dark, t_probe, &RkOptions::default())?;
                    let r = sigma_y_component(&op.matrix) / ref_y;
                    s2 += r * r;
                    s1 += r.abs();
                }
                (s2 / draws as f64, s1 / draws as f64)
            }
        }
    };
    if zero_rotation {
        warnings.push(format!("signal detuned by {detuning:e} rad/s, beyond the rotation linewidth"));
    }
    let t2u = t2.unwrap_or(f64::INFINITY);
    let eff = locked * atten;
    let eta = if og > 0.0 && !zero_rotation { sensitivity(eff / og, t2u) } else { f64::INFINITY };
    Ok((
        SensitivityReport {
            locked_rabi: locked,
            effective_rabi: eff,
            attenuation_factor: atten,
            mean_abs_ratio: mean_abs,
            t2_used: t2u,
            sensitivity: eta,
            max_transfer: transfer,
            readout_basis: protocol.readout_basis,
            readout_contrast: contrast,
            detuning,
            zero_rotation_regime: zero_rotation,
            convention: "eta = 1/(gamma_eff sqrt(T2)), gamma_eff = effective_rabi / signal_rabi".into(),
            warnings,
        },
        trace,
    ))
}

// ---------------------------------------------------------------- window

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowOptions {
    pub t1_target: f64,
    /// S(gap) T1_target must stay below this.
    pub threshold: f64,
    pub min_gap: f64,
    pub max_gap: f64,
}

impl Default for WindowOptions {
    fn default() -> Self {
        WindowOptions { t1_target: 0.1, threshold: 0.1, min_gap: 0.0, max_gap: std::f64::consts::TAU * 100e6 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FrequencyWindow {
    pub lower: f64,
    pub upper: f64,
    pub lower_rationale: String,
    pub upper_rationale: String,
}

/// Range of Zeeman gaps (signal frequencies) usable with the given noise.
pub fn frequency_window(noise: &NoiseProcess, opts: &WindowOptions) -> Result<FrequencyWindow> {
    noise.validate()?;
    let ok = |w: f64| noise.spectral_density(w) * opts.t1_target < opts.threshold;
    let floor = opts.min_gap.max(0.0);
    let lower = if ok(floor) || (floor == 0.0 && ok(f64::MIN_POSITIVE)) {
        floor
    } else {
        // scan up in decades, then bisect
        let mut hi = floor.max(1e-3);
        while !ok(hi) {
            hi *= 10.0;
            if hi > 1e30 {
                return Err(Error::Numerical("noise spectrum never falls below the threshold".into()));
            }
        }
        let mut lo = hi / 10.0;
        if lo < floor {
            lo = floor;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    Ok(FrequencyWindow {
        lower,
        upper: opts.max_gap,
        lower_rationale: format!(
            "smallest gap with S_BB(gap) * T1_target < {} (T1_target = {} s)",
            opts.threshold, opts.t1_target
        ),
        upper_rationale: "largest Zeeman splitting the static field can provide (configured)".into(),
    })
}

// ---------------------------------------------------------------- hyperfine

/// Delta m = +-1 coupling between the two hyperfine manifolds:
/// element (F_hi m', F_lo m) = <F_lo m; 1 -1|F_hi m'> - <F_lo m; 1 +1|F_hi m'>,
/// scaled so the element between the lowest levels of both manifolds is 1.
pub fn hyperfine_signal_operator(construction: &Construction) -> Result<CMat> {
    let s = &construction.scheme;
    let ms = s.manifolds();
    if ms.len() != 2 {
        return Err(Error::InvalidParameter { name: "scheme".into(), reason: "need two hyperfine manifolds".into() });
    }
    let (lo, hi) = if ms[0].j.0 <= ms[1].j.0 { (&ms[0], &ms[1]) } else { (&ms[1], &ms[0]) };
    let rl = s.range(&lo.name)?;
    let rh = s.range(&hi.name)?;
    let (jl, jh) = (lo.j, hi.j);
    let one = HalfInt::integer(1);
    let mut op = CMat::zeros(s.dim(), s.dim());
    for a in rh.clone() {
        let mp = s.states()[a].m;
        for b in rl.clone() {
            let m = s.states()[b].m;
            let v =
                clebsch_gordan(jl, m, one, HalfInt::integer(-1), jh, mp)? - clebsch_gordan(jl, m, one, one, jh, mp)?;
            op[(a, b)] = re(v);
            op[(b, a)] = re(v);
        }
    }
    let norm = op[(rh.start, rl.start)].re;
    if norm == 0.0 {
        return Err(Error::SelectionRule("lowest levels are not coupled".into()));
    }
    Ok(op / re(norm))
}

#[derive(Clone, Debug, Serialize)]
pub struct HyperfineSensingReport {
    /// |<D2|H_eff|D1>| on resonance.
    pub coupling: f64,
    /// sqrt(3) Omega_g / 8
    pub nominal_coupling: f64,
    pub ratio: f64,
    pub signal_freq: f64,
    pub max_transfer_resonant: f64,
    pub detuning: f64,
    pub max_transfer_detuned: f64,
    /// max_transfer_resonant / max_transfer_detuned
    pub suppression: f64,
    /// |<D_i|F_z|D_j>| over the pair.
    pub fz_residual: f64,
}

/// Hyperfine signal resonant with the lowest-level pair; the detuned run is
/// offset by `detuning_factor` times the resonant Rabi frequency 2 |coupling|.
pub fn run_hyperfine_sensing(
    construction: &Construction,
    omega_g: f64,
    detuning_factor: f64,
) -> Result<HyperfineSensingReport> {
    if !(omega_g >= 0.0) {
        return Err(Error::InvalidParameter { name: "omega_g".into(), reason: "must be >= 0".into() });
    }
    let s = &construction.scheme;
    let sop = hyperfine_signal_operator(construction)?;
    let ms = s.manifolds();
    let (lo, hi) = if ms[0].j.0 <= ms[1].j.0 { (&ms[0], &ms[1]) } else { (&ms[1], &ms[0]) };
    let a = s.range(&hi.name)?.start;
    let b = s.range(&lo.name)?.start;
    let f = &construction.frame.generator;
    let w_res = f[a] - f[b];
    let dark = dark_pair(construction)?;
    let jz = construction.jz();
    let mut fz: f64 = 0.0;
    for x in &dark {
        for y in &dark {
            fz = fz.max((x.adjoint() * &jz * y)[(0, 0)].norm());
        }
    }
    let nominal = 3f64.sqrt() * omega_g / 8.0;
    if omega_g == 0.0 {
        return Ok(HyperfineSensingReport {
            coupling: 0.0,
            nominal_coupling: 0.0,
            ratio: f64::NAN,
            signal_freq: w_res,
            max_transfer_resonant: 0.0,
            detuning: 0.0,
            max_transfer_detuned: 0.0,
            suppression: f64::NAN,
            fz_residual: fz,
        });
    }
    let h_at = |freq: f64| -> Result<TimeDependentHamiltonian> {
        let c = construction.with_extra_drives(vec![DriveField::custom(sop.clone(), freq, omega_g)], None)?;
        Ok(c.interaction_picture()?.hamiltonian)
    };
    let h_res = h_at(w_res)?;
    let t_probe = std::f64::consts::PI / (4.0 * nominal.max(1e-300));
    let op = extract_effective_hamiltonian(&h_res, &dark, t_probe, &RkOptions::default())?;
    let coupling = op.rate;
    let (d1, d2) = transfer_pair(&dark, &op.matrix);
    let t_end = 2.0 * std::f64::consts::PI / coupling;
    let (p_res, _) = max_transfer(&h_res, &d1, &d2, t_end)?;
    let detuning = detuning_factor * 2.0 * coupling;
    let h_det = h_at(w_res + detuning)?;
    let (p_det, _) = max_transfer(&h_det, &d1, &d2, t_end)?;
    Ok(HyperfineSensingReport {
        coupling,
        nominal_coupling: nominal,
        ratio: coupling / nominal,
        signal_freq: w_res,
        max_transfer_resonant: p_res,
        detuning,
        max_transfer_detuned: p_det,
        suppression: p_res / p_det.max(f64::MIN_POSITIVE),
        fz_residual: fz,
    })
}

/// The dark pair itself; the coupling generator is off-diagonal, so full
/// transfer is from one pair state to the other.
fn transfer_pair(dark: &[CVec], _h: &CMat) -> (CVec, CVec) {
    (dark[0].clone(), dark[1].clone())
}

// ---------------------------------------------------------------- comparison

#[derive(Clone, Debug, Serialize)]
pub struct SensitivityComparison {
    pub t2_bare: f64,
    pub t2_protected: f64,
    pub coherence_gain_orders: f64,
    /// 0.5 log10(T2_protected / T2_bare)
    pub gain_orders: f64,
}

pub fn sensitivity_compare(t2_bare: f64, t2_protected: f64) -> Result<SensitivityComparison> {
    if !(t2_bare > 0.0) || !(t2_protected > 0.0) {
        return Err(Error::InvalidParameter { name: "T2".into(), reason: "coherence times must be positive".into() });
    }
    let c = (t2_protected / t2_bare).log10();
    Ok(SensitivityComparison { t2_bare, t2_protected, coherence_gain_orders: c, gain_orders: 0.5 * c })
}

/// First time |c(t)| falls to c(0)/e, interpolated linearly.
pub fn one_over_e_time(times: &[f64], coherence: &[f64]) -> Option<f64> {
    let target = coherence.first()? / std::f64::consts::E;
    for k in 1..times.len() {
        if coherence[k] <= target {
            let (t0, t1) = (times[k - 1], times[k]);
            let (c0, c1) = (coherence[k - 1], coherence[k]);
            if c0 == c1 {
                return Some(t1);
            }
            return Some(t0 + (c0 - target) / (c0 - c1) * (t1 - t0));
        }
    }
    None
}

#[derive(Clone, Debug, Serialize)]
pub struct CoherenceComparison {
    pub sigma: f64,
    pub n_traj: usize,
    pub t2_star_bare: f64,
    pub t2_star_bare_analytic: f64,
    pub t2_protected: f64,
    pub comparison: SensitivityComparison,
}

/// Bare pair (adjacent qubit-manifold levels around m = 0, undriven) against
/// the protected pair, both under the same common-mode noise. T2 is the 1/e
/// time of the pair coherence.
pub fn coherence_comparison(
    construction: &Construction,
    noise: &NoiseProcess,
    n_traj: usize,
    t_max_protected: f64,
) -> Result<CoherenceComparison> {
    noise.validate()?;
    if noise.sigma == 0.0 {
        return Err(Error::InvalidParameter { name: "sigma".into(), reason: "needs nonzero noise".into() });
    }
    let s = &construction.scheme;
    let nop = construction.noise_operator();
    let n = s.dim();
    let r = s.range(&construction.lower)?;
    let mid = r.start + (r.len() - 1) / 2;
    let (a, b) = (mid, mid + 1);
    let da = (nop[(b, b)] - nop[(a, a)]).re.abs();
    let analytic = 2f64.sqrt() / (noise.sigma * da);
    let bare_h = TimeDependentHamiltonian::new_static(CMat::zeros(n, n), Frame::Lab);
    let psi = (basis_vector(n, a) + basis_vector(n, b)) / re(2f64.sqrt());
    let times_b = linspace(0.0, 4.0 * analytic, 401);
    let opts = NoisyOptions::default();
    let tb = evolve_noisy(&bare_h, &psi, &nop, noise, n_traj, &times_b, &opts)?;
    let cb: Vec<f64> = tb.rhos.iter().map(|r| 2.0 * r[(a, b)].norm()).collect();
    let t2b = one_over_e_time(&times_b, &cb)
        .ok_or_else(|| Error::Numerical("bare coherence did not decay within the window".into()))?;

    let dark = dark_pair(construction)?;
    let hp = TimeDependentHamiltonian::new_static(construction.ip_hamiltonian()?, Frame::Lab);
    let psi_p = (&dark[0] + &dark[1]) / re(2f64.sqrt());
    let mut times_p = vec![0.0];
    times_p.extend(logspace(analytic / 10.0, t_max_protected, 600));
    let tp = evolve_noisy(&hp, &psi_p, &nop, noise, n_traj, &times_p, &opts)?;
    let cp: Vec<f64> = tp.coherence(&dark[0], &dark[1]).iter().map(|z| 2.0 * z.norm()).collect();
    let t2p = one_over_e_time(&times_p, &cp).unwrap_or(f64::INFINITY);
    if t2p.is_infinite() {
        return Err(Error::Numerical(format!(
            "protected coherence stayed above 1/e up to t = {t_max_protected:e}; extend the window"
        )));
    }
    Ok(CoherenceComparison {
        sigma: noise.sigma,
        n_traj,
        t2_star_bare: t2b,
        t2_star_bare_analytic: analytic,
        t2_protected: t2p,
        comparison: sensitivity_compare(t2b, t2p)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::LevelScheme;
    use crate::hamiltonian::{hyperfine_construction, ideal_construction};

    #[test]
    fn zero_signal_gives_infinite_sensitivity() {
        let c = ideal_construction(&LevelScheme::d32_p12(1e4, 0.0), 10.0, 1.0).unwrap();
        let p = SensingProtocol {
            scheme: SensingScheme::OpticalD32,
            signal_freq: None,
            signal_rabi: 0.0,
            phase_policy: PhasePolicy::Locked { phase: 0.0 },
            interrogation_time: 10.0,
            readout_basis: ReadoutBasis::Z,
        };
        let (r, _) = run_ac_sensing(&p, &c, Some(1.0)).unwrap();
        assert_eq!(r.locked_rabi, 0.0);
        assert!(r.sensitivity.is_infinite());
        assert!(r.max_transfer < 1e-20);
    }

    #[test]
    fn window_without_noise_is_floor() {
        let w = frequency_window(
            &NoiseProcess::ornstein_uhlenbeck(0.0, 1e-3, 0),
            &WindowOptions { min_gap: 5.0, ..Default::default() },
        )
        .unwrap();
        assert_eq!(w.lower, 5.0);
    }

    #[test]
    fn identical_arms_have_zero_gain() {
        assert_eq!(sensitivity_compare(2.0, 2.0).unwrap().gain_orders, 0.0);
    }

    #[test]
    fn signal_operator_normalization() {
        let c = hyperfine_construction(&LevelScheme::hyperfine_f1_f2(1000.0, 1.0), 40.0, 1.0).unwrap();
        let s = hyperfine_signal_operator(&c).unwrap();
        let a = c.scheme.idx("F=2", -2.0).unwrap();
        let b = c.scheme.idx("F=1", -1.0).unwrap();
        assert_eq!(s[(a, b)].re, 1.0);
        assert!(crate::linalg::is_hermitian(&s, 0.0));
    }

    #[test]
    fn one_over_e_interpolates() {
        let t = [0.0, 1.0, 2.0];
        let c = [1.0, 0.5, 0.25];
        let x = one_over_e_time(&t, &c).unwrap();
        assert!(x > 1.0 && x < 2.0);
    }
}
