//! Adaptive Dormand-Prince 5(4) integration and unitary propagation.

use crate::error::{Error, Result};
use crate::hamiltonian::TimeDependentHamiltonian;
use crate::linalg::{eigh, propagator_from_eigen, re, CMat, CVec, C64};

use super::SimulationTrace;

#[derive(Clone, Debug)]
pub struct RkOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step; `None` lets the controller decide.
    pub max_step: Option<f64>,
    pub min_step_rel: f64,
    pub max_steps: usize,
}

impl Default for RkOptions {
    fn default() -> Self {
        RkOptions { rtol: 1e-11, atol: 1e-13, max_step: None, min_step_rel: 1e-15, max_steps: 200_000_000 }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = B1 - 5179.0 / 57600.0;
const E3: f64 = B3 - 7571.0 / 16695.0;
const E4: f64 = B4 - 393.0 / 640.0;
const E5: f64 = B5 - -92097.0 / 339200.0;
const E6: f64 = B6 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

fn axpy_into(out: &mut CMat, y: &CMat, terms: &[(f64, &CMat)], h: f64) {
    out.copy_from(y);
    for (a, k) in terms {
        if *a != 0.0 {
            out.zip_apply(*k, |o, kv| *o += kv * (a * h));
        }
    }
}

/// Integrate dy/dt = f(t, y) and return y at each requested time.
/// `f(t, y, out)` writes the derivative into `out`. Times must be ascending;
/// the first entry is the initial time.
pub fn integrate<F>(f: F, y0: &CMat, times: &[f64], opts: &RkOptions) -> Result<Vec<CMat>>
where
    F: Fn(f64, &CMat, &mut CMat),
{
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter { name: "times".into(), reason: "must be ascending".into() });
    }
    let mut out = Vec::with_capacity(times.len());
    if times.is_empty() {
        return Ok(out);
    }
    let (r, c) = y0.shape();
    let mut y = y0.clone();
    let mut t = times[0];
    out.push(y.clone());
    let span = (times[times.len() - 1] - t).abs().max(f64::MIN_POSITIVE);
    let mut k1 = CMat::zeros(r, c);
    let mut k2 = CMat::zeros(r, c);
    let mut k3 = CMat::zeros(r, c);
    let mut k4 = CMat::zeros(r, c);
    let mut k5 = CMat::zeros(r, c);
    let mut k6 = CMat::zeros(r, c);
    let mut k7 = CMat::zeros(r, c);
    let mut tmp = CMat::zeros(r, c);
    let mut ynew = CMat::zeros(r, c);
    f(t, &y, &mut k1);
    // initial step from the derivative scale
    let d0 = y.iter().map(|z| z.norm()).fold(0.0, f64::max).max(opts.atol);
    let d1 = k1.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut h = if d1 > 0.0 { 0.01 * d0 / d1 } else { span * 1e-3 };
    if let Some(m) = opts.max_step {
        h = h.min(m);
    }
    let mut steps = 0usize;
    for &target in &times[1..] {
        while t < target {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Numerical(format!("exceeded {} integrator steps", opts.max_steps)));
            }
            let mut hh = h.min(target - t);
            if let Some(m) = opts.max_step {
                hh = hh.min(m);
            }
            let last = hh >= target - t;
            axpy_into(&mut tmp, &y, &[(A21, &k1)], hh);
            f(t + C2 * hh, &tmp, &mut k2);
            axpy_into(&mut tmp, &y, &[(A31, &k1), (A32, &k2)], hh);
            f(t + C3 * hh, &tmp, &mut k3);
            axpy_into(&mut tmp, &y, &[(A41, &k1), (A42, &k2), (A43, &k3)], hh);
            f(t + C4 * hh, &tmp, &mut k4);
            axpy_into(&mut tmp, &y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], hh);
            f(t + C5 * hh, &tmp, &mut k5);
            axpy_into(&mut tmp, &y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], hh);
            f(t + hh, &tmp, &mut k6);
            axpy_into(&mut ynew, &y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], hh);
            let tn = if last { target } else { t + hh };
            f(tn, &ynew, &mut k7);
            let mut err: f64 = 0.0;
            for idx in 0..r * c {
                let e = (k1[idx] * E1 + k3[idx] * E3 + k4[idx] * E4 + k5[idx] * E5 + k6[idx] * E6 + k7[idx] * E7) * hh;
                let sc = opts.atol + opts.rtol * y[idx].norm().max(ynew[idx].norm());
                err = err.max(e.norm() / sc);
            }
            if err <= 1.0 {
                t = tn;
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h = hh * fac;
                } else {
                    h = h.max(hh * fac.min(1.0));
                }
            } else {
                let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
                h = hh * fac;
                if h < opts.min_step_rel * span.max(t.abs()) {
                    return Err(Error::StepSize { t, step: h, worst_error: err });
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Schrödinger right-hand side -i H(t) y.
pub fn schrodinger_rhs(h: &TimeDependentHamiltonian) -> impl Fn(f64, &CMat, &mut CMat) + '_ {
    move |t, y, out| {
        let ht = h.at(t);
        out.gemm(C64::new(0.0, -1.0), &ht, y, C64::default());
    }
}

/// Step bound that resolves the fastest harmonic.
fn harmonic_max_step(h: &TimeDependentHamiltonian) -> Option<f64> {
    let wmax = h.harmonics.iter().map(|t| t.frequency.abs()).fold(0.0, f64::max);
    if wmax > 0.0 {
        Some(0.5 / wmax * std::f64::consts::PI)
    } else {
        None
    }
}

/// Propagate several state columns at once.
pub fn propagate_columns(
    h: &TimeDependentHamiltonian,
    y0: &CMat,
    times: &[f64],
    opts: &RkOptions,
) -> Result<Vec<CMat>> {
    if h.is_static() {
        let (vals, vecs) = eigh(&h.static_part);
        let t0 = times.first().copied().unwrap_or(0.0);
        return Ok(times.iter().map(|&t| propagator_from_eigen(&vals, &vecs, t - t0) * y0).collect());
    }
    let mut o = opts.clone();
    if o.max_step.is_none() {
        o.max_step = harmonic_max_step(h);
    }
    integrate(schrodinger_rhs(h), y0, times, &o)
}

/// U(t1, t0).
pub fn propagator(h: &TimeDependentHamiltonian, t0: f64, t1: f64, opts: &RkOptions) -> Result<CMat> {
    let n = h.dim();
    let mut v = propagate_columns(h, &CMat::identity(n, n), &[t0, t1], opts)?;
    Ok(v.pop().unwrap())
}

/// Unitary evolution of a pure state; populations are in the scheme basis.
pub fn evolve_unitary(
    h: &TimeDependentHamiltonian,
    psi0: &CVec,
    times: &[f64],
    opts: &RkOptions,
) -> Result<SimulationTrace> {
    let nrm = psi0.norm();
    if (nrm - 1.0).abs() > 1e-9 {
        return Err(Error::NonPhysicalState(format!("initial state has norm {nrm}")));
    }
    let n = h.dim();
    let y0 = CMat::from_column_slice(n, 1, psi0.as_slice());
    let states = propagate_columns(h, &y0, times, opts)?;
    let mut drift: f64 = 0.0;
    let rhos: Vec<CMat> = states
        .iter()
        .map(|s| {
            drift = drift.max((s.norm() - 1.0).abs());
            s * s.adjoint()
        })
        .collect();
    let mut tr = SimulationTrace::from_density(times.to_vec(), rhos);
    tr.diagnostics.max_norm_drift = drift;
    Ok(tr)
}

/// Normalize and return a state vector.
pub fn normalized(v: &CVec) -> CVec {
    v / re(v.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{Frame, HarmonicTerm};
    use crate::linalg::{c, expm_hermitian, max_abs};

    #[test]
    fn exponential_growth_accuracy() {
        let y0 = CMat::from_element(1, 1, re(1.0));
        let f = |_t: f64, y: &CMat, out: &mut CMat| out.copy_from(&(y * c(0.0, -2.0)));
        let ys = integrate(f, &y0, &[0.0, 1.0, 3.0], &RkOptions::default()).unwrap();
        let want = C64::from_polar(1.0, -6.0);
        assert!((ys[2][(0, 0)] - want).norm() < 1e-9);
    }

    #[test]
    fn harmonic_matches_rotating_solution() {
        // H = w/2 sz + g (e^{-iwt} s+ + h.c.): exact via frame change
        let w = 5.0;
        let g = 0.3;
        let mut sz = CMat::zeros(2, 2);
        sz[(0, 0)] = re(-0.5);
        sz[(1, 1)] = re(0.5);
        let mut sp = CMat::zeros(2, 2);
        sp[(1, 0)] = re(g);
        let h = TimeDependentHamiltonian {
            static_part: &sz * re(w),
            harmonics: vec![HarmonicTerm { op: sp.clone(), frequency: w, phase: 0.0 }],
            frame: Frame::Lab,
        };
        let t = 7.3;
        let u = propagator(&h, 0.0, t, &RkOptions::default()).unwrap();
        let hr = &sp + sp.adjoint();
        let u0 = expm_hermitian(&(&sz * re(w)), t);
        let exact = u0 * expm_hermitian(&hr, t);
        assert!(max_abs(&(u - exact)) < 1e-8);
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let h = TimeDependentHamiltonian::new_static(CMat::zeros(3, 3), Frame::Lab);
        let psi = crate::linalg::basis_vector(3, 1);
        let tr = evolve_unitary(&h, &psi, &[0.0, 1.0, 10.0], &RkOptions::default()).unwrap();
        for p in &tr.populations {
            assert_eq!(p[1], 1.0);
        }
    }

    #[test]
    fn unnormalized_initial_state_rejected() {
        let h = TimeDependentHamiltonian::new_static(CMat::zeros(2, 2), Frame::Lab);
        let psi = CVec::from_element(2, re(1.0));
        assert!(evolve_unitary(&h, &psi, &[0.0, 1.0], &RkOptions::default()).is_err());
    }
}
