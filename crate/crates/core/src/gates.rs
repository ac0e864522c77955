//! Single-qubit operations on the protected pair: a resonant microwave
//! (J_y) drive, a far-detuned Raman pair, and extraction of the effective
//! 2x2 generator from full propagators.

use serde::{Serialize, Serializer};

use crate::atomic::{Multipole, Polarization};
use crate::dynamics::{propagate_columns, propagator, RkOptions};
use crate::error::{Error, Result};
use crate::hamiltonian::{default_rwa_cutoff, Construction, DriveField, TimeDependentHamiltonian};
use crate::linalg::{c, columns, frobenius, linspace, log_unitary_2x2, polar_unitary, re, CMat, CVec, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpKind {
    Hamiltonian,
    Propagator,
}

fn ser_mat2<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<[f64; 2]>> =
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect();
    rows.serialize(s)
}

/// Effective operator on (|D1>, |D2>).
#[derive(Clone, Debug, Serialize)]
pub struct EffectiveQubitOp {
    pub kind: OpKind,
    #[serde(serialize_with = "ser_mat2")]
    pub matrix: CMat,
    /// |<D2|H_eff|D1>|
    pub rate: f64,
    /// Largest population outside span(D1, D2) seen during the probe.
    pub leakage: f64,
    /// Alignment of the off-diagonal part with the target Pauli axis, in [0, 1].
    pub fidelity: f64,
    pub t_probe: f64,
    pub nominal_rate: Option<f64>,
    pub nominal_ratio: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn sigma_x() -> CMat {
    CMat::from_row_slice(2, 2, &[re(0.0), re(1.0), re(1.0), re(0.0)])
}

pub fn sigma_y() -> CMat {
    CMat::from_row_slice(2, 2, &[re(0.0), c(0.0, -1.0), c(0.0, 1.0), re(0.0)])
}

pub fn sigma_z() -> CMat {
    CMat::from_row_slice(2, 2, &[re(1.0), re(0.0), re(0.0), re(-1.0)])
}

/// |<target, H>| / (|H| |target|) for the traceless part of H.
fn axis_alignment(h: &CMat, target: &CMat) -> f64 {
    let tr = (h[(0, 0)] + h[(1, 1)]) * 0.5;
    let t = h - CMat::identity(2, 2) * tr;
    let n = frobenius(&t) * frobenius(target);
    if n == 0.0 {
        return 0.0;
    }
    (target.adjoint() * &t).trace().norm() / n
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    D1,
    D2,
    /// a |D1> + b |D2>, normalized on return
    Superposition(C64, C64),
}

/// The protected pair of a construction, canonical order.
pub fn dark_pair(construction: &Construction) -> Result<Vec<CVec>> {
    Ok(construction.protected_subspace()?.dark_states)
}

/// Ideal preparation of a state in the protected pair.
pub fn prepare_initial_state(construction: &Construction, target: &InitialState) -> Result<CVec> {
    let d = dark_pair(construction)?;
    let (a, b) = match target {
        InitialState::D1 => (re(1.0), re(0.0)),
        InitialState::D2 => (re(0.0), re(1.0)),
        InitialState::Superposition(a, b) => (*a, *b),
    };
    let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::InvalidParameter {
            name: "superposition".into(),
            reason: "amplitudes must not both vanish".into(),
        });
    }
    Ok((&d[0] * a + &d[1] * b) / re(n))
}

/// Largest population outside span(subspace) along the evolution of each
/// subspace state over `times`.
pub fn leakage_along(h: &TimeDependentHamiltonian, subspace: &[CVec], times: &[f64], opts: &RkOptions) -> Result<f64> {
    let n = h.dim();
    let s = columns(subspace, n);
    let states = propagate_columns(h, &s, times, opts)?;
    let mut worst: f64 = 0.0;
    for u in &states {
        let inside = s.adjoint() * u;
        for j in 0..u.ncols() {
            let tot = u.column(j).norm_squared();
            let kept = inside.column(j).norm_squared();
            worst = worst.max(tot - kept);
        }
    }
    Ok(worst.clamp(0.0, 1.0))
}

/// Generator of the subspace-projected propagator U(t_probe, 0): polar
/// decomposition of the projected block, then the branch of the logarithm
/// nearest zero.
pub fn extract_effective_hamiltonian(
    h: &TimeDependentHamiltonian,
    subspace: &[CVec],
    t_probe: f64,
    opts: &RkOptions,
) -> Result<EffectiveQubitOp> {
    if subspace.len() != 2 {
        return Err(Error::InvalidParameter {
            name: "subspace".into(),
            reason: format!("need two states, got {}", subspace.len()),
        });
    }
    if !(t_probe > 0.0) {
        return Err(Error::InvalidParameter { name: "t_probe".into(), reason: "must be positive".into() });
    }
    let n = h.dim();
    let s = columns(subspace, n);
    let u = propagator(h, 0.0, t_probe, opts)?;
    let us = &u * &s;
    let m = s.adjoint() * &us;
    let mut defect: f64 = 0.0;
    for j in 0..2 {
        defect = defect.max(us.column(j).norm_squared() - m.column(j).norm_squared());
    }
    if defect > 0.05 {
        return Err(Error::SubspaceNotPreserved { defect, limit: 0.05 });
    }
    let w = polar_unitary(&m);
    let g = log_unitary_2x2(&w, t_probe);
    let g = (&g + g.adjoint()) * re(0.5);
    Ok(EffectiveQubitOp {
        kind: OpKind::Hamiltonian,
        rate: g[(1, 0)].norm(),
        leakage: defect.max(0.0),
        fidelity: 0.0,
        t_probe,
        nominal_rate: None,
        nominal_ratio: None,
        warnings: Vec::new(),
        matrix: g,
    })
}

/// Zeeman splitting between adjacent qubit-manifold levels in the frame.
fn qubit_zeeman(construction: &Construction) -> Result<f64> {
    let r = construction.scheme.range(&construction.lower)?;
    if r.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "lower".into(),
            reason: "qubit manifold has a single level".into(),
        });
    }
    let f = &construction.frame.generator;
    Ok((f[r.start + 1] - f[r.start]).abs())
}

fn dark_gap(construction: &Construction) -> Result<f64> {
    Ok(construction.protected_subspace()?.gap)
}

/// Microwave field Omega_g cos(w t) J_y on the qubit manifold, resonant with
/// its Zeeman splitting. In the interaction picture it adds (Omega_g/2) J_y.
pub fn microwave_field(construction: &Construction, omega_g: f64) -> Result<(DriveField, f64)> {
    let w = qubit_zeeman(construction)?;
    if w == 0.0 {
        return Err(Error::InvalidParameter {
            name: "b".into(),
            reason: "microwave gate needs a nonzero Zeeman splitting".into(),
        });
    }
    let jy = construction.scheme.angular_ops(&construction.lower)?.jy;
    Ok((DriveField::custom(jy, w, omega_g), w))
}

pub fn microwave_sigma_y(construction: &Construction, omega_g: f64) -> Result<EffectiveQubitOp> {
    let mut warnings = Vec::new();
    if omega_g > 0.1 * construction.omega {
        warnings.push(format!("Omega_g/Omega = {:.3} is above 0.1", omega_g / construction.omega));
    }
    let (field, w) = microwave_field(construction, omega_g)?;
    let dark = dark_pair(construction)?;
    let nu = dark_gap(construction)?;
    // the counter-rotating J_y part sits at twice the splitting
    let full = construction.with_extra_drives(vec![field], Some(w))?;
    let rot = full.interaction_picture()?;
    warnings.extend(rot.warnings.iter().cloned());
    let h = rot.hamiltonian;
    let expected = 0.75 * omega_g;
    let t_probe = if expected > 0.0 { (std::f64::consts::PI / (4.0 * expected)).max(10.0 / nu) } else { 10.0 / nu };
    let opts = RkOptions::default();
    let mut op = extract_effective_hamiltonian(&h, &dark, t_probe, &opts)?;
    op.leakage = op.leakage.max(leakage_along(&h, &dark, &linspace(0.0, t_probe, 200), &opts)?);
    op.fidelity = axis_alignment(&op.matrix, &sigma_y());
    op.nominal_rate = Some(1.5 * omega_g);
    op.nominal_ratio = if omega_g > 0.0 { Some(op.rate / (1.5 * omega_g)) } else { None };
    op.warnings = warnings;
    Ok(op)
}

/// Two single-transition fields d(-1/2) -> p(+1/2) (sigma+) and
/// d(+1/2) -> p(+1/2) (pi), each with interaction-picture coupling Omega_g and
/// one-photon detuning delta_r.
pub fn raman_fields(construction: &Construction, omega_g: f64, delta_r: f64) -> Result<Vec<DriveField>> {
    let s = &construction.scheme;
    let upper = construction.upper.clone().ok_or_else(|| Error::InvalidParameter {
        name: "construction".into(),
        reason: "Raman gate needs an excited manifold".into(),
    })?;
    let lower = construction.lower.clone();
    let p1 = s.idx(&upper, 0.5)?;
    let f = &construction.frame.generator;
    let mut out = Vec::new();
    for (m, pol) in [(-0.5, Polarization::SigmaPlus), (0.5, Polarization::Pi)] {
        let d = s.idx(&lower, m)?;
        let cg = s.dipole_coupling_op(&lower, &upper, pol, Multipole::E1)?[(p1, d)].re;
        if cg == 0.0 {
            return Err(Error::SelectionRule(format!("{} -> {} has no {pol:?} coupling", s.label(d), s.label(p1))));
        }
        let rabi = 2.0 * omega_g / cg.abs();
        let phase = if cg < 0.0 { std::f64::consts::PI } else { 0.0 };
        out.push(
            DriveField::transition(&lower, &upper, pol, f[p1] - f[d] - delta_r, rabi).with_phase(phase).only(d, p1),
        );
    }
    Ok(out)
}

pub fn raman_sigma_x(
    construction: &Construction,
    omega_g: f64,
    delta_r: f64,
    probe_periods: usize,
) -> Result<EffectiveQubitOp> {
    if !(delta_r > 0.0) {
        return Err(Error::InvalidParameter { name: "delta_r".into(), reason: "must be positive".into() });
    }
    let om = construction.omega;
    let mut warnings = Vec::new();
    if delta_r < 5.0 * om {
        warnings.push(format!("delta_R/Omega = {:.2} is below 5", delta_r / om));
    }
    if omega_g > 0.0 && om < 5.0 * omega_g {
        warnings.push(format!("Omega/Omega_g = {:.2} is below 5", om / omega_g));
    }
    let fields = raman_fields(construction, omega_g, delta_r)?;
    let dark = dark_pair(construction)?;
    let cutoff = 2.0 * delta_r + default_rwa_cutoff(&construction.scheme, construction.b, om);
    let full = construction.with_extra_drives(fields, Some(cutoff))?;
    let rot = full.interaction_picture()?;
    warnings.extend(rot.warnings.iter().cloned());
    let h = rot.hamiltonian;
    let period = 2.0 * std::f64::consts::PI / delta_r;
    let opts = RkOptions::default();
    let mut op = extract_effective_hamiltonian(&h, &dark, period, &opts)?;
    let probe = period * probe_periods.max(1) as f64;
    let times = linspace(0.0, probe, 40 * probe_periods.max(1) + 1);
    op.leakage = op.leakage.max(leakage_along(&h, &dark, &times, &opts)?);
    op.fidelity = axis_alignment(&op.matrix, &sigma_x());
    let nominal = 0.75 * omega_g * omega_g / delta_r;
    op.nominal_rate = Some(nominal);
    op.nominal_ratio = if nominal > 0.0 { Some(op.rate / nominal) } else { None };
    op.warnings = warnings;
    Ok(op)
}

/// Projected 2x2 propagator of the protected pair after time t.
pub fn projected_propagator(h: &TimeDependentHamiltonian, subspace: &[CVec], t: f64) -> Result<CMat> {
    let s = columns(subspace, h.dim());
    let u = propagator(h, 0.0, t, &RkOptions::default())?;
    Ok(s.adjoint() * u * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::LevelScheme;
    use crate::hamiltonian::ideal_construction;
    use crate::linalg::max_abs;

    fn setup() -> Construction {
        ideal_construction(&LevelScheme::d32_p12(1.0e4, 0.0), 10.0, 1.0).unwrap()
    }

    #[test]
    fn jy_element_between_dark_states() {
        let k = setup();
        let d = dark_pair(&k).unwrap();
        let jy = k.scheme.angular_ops("D3/2").unwrap().jy;
        let el = (d[1].adjoint() * &jy * &d[0])[(0, 0)];
        assert!((el - c(0.0, -1.5)).norm() < 1e-12);
    }

    #[test]
    fn microwave_rate_is_three_quarters() {
        let k = setup();
        let op = microwave_sigma_y(&k, 0.01).unwrap();
        assert!((op.rate / 0.0075 - 1.0).abs() < 1e-3, "rate {}", op.rate);
        assert!(op.fidelity > 0.999);
        assert!((op.nominal_ratio.unwrap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn zero_drive_gives_zero_operator() {
        let k = setup();
        let op = microwave_sigma_y(&k, 0.0).unwrap();
        assert!(max_abs(&op.matrix) < 1e-9);
        let d = dark_pair(&k).unwrap();
        let h = k.interaction_picture().unwrap().hamiltonian;
        let e = extract_effective_hamiltonian(&h, &d, 5.0, &RkOptions::default()).unwrap();
        assert!(max_abs(&e.matrix) < 1e-12);
    }

    #[test]
    fn prepared_superposition_is_normalized() {
        let k = setup();
        let v = prepare_initial_state(&k, &InitialState::Superposition(re(1.0), re(1.0))).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-14);
        let p = k.scheme.range("P1/2").unwrap();
        assert!(p.map(|i| v[i].norm()).fold(0.0, f64::max) < 1e-15);
    }
}
