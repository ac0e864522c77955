//! Driven Hamiltonians in closed harmonic form, rotating frames and the RWA.
//!
//! A harmonic term `(A, w, phi)` contributes `A e^{-i(w t + phi)} + h.c.`, so
//! a lab drive `rabi cos(w t + phi) (V + V^dag)` is stored with
//! `A = rabi/2 (V + V^dag)`.

use serde::Serialize;

use crate::atomic::{LevelScheme, Multipole, Polarization};
use crate::error::{Error, Result};
use crate::linalg::{hermiticity_defect, is_hermitian, max_abs, re, CMat, C64};

#[derive(Clone, Debug)]
pub enum DriveTarget {
    /// Transition operator between two manifolds. `only` restricts the
    /// field to one (lower state, upper state) pair, as for a frequency- and
    /// polarization-selective beam.
    Transition {
        lower: String,
        upper: String,
        polarization: Polarization,
        multipole: Multipole,
        only: Option<(usize, usize)>,
    },
    /// Arbitrary Hermitian operator; the field is `rabi cos(w t + phi) op`.
    Custom(CMat),
}

#[derive(Clone, Debug)]
pub struct DriveField {
    pub target: DriveTarget,
    /// Angular frequency, rad/s.
    pub frequency: f64,
    /// Rabi amplitude, rad/s.
    pub rabi: f64,
    pub phase: f64,
    /// Relative amplitude error; the field amplitude is rabi (1 + amp_error).
    pub amp_error: f64,
    /// Fraction of the amplitude carried by the opposite circular polarization.
    pub pol_leak: f64,
}

impl DriveField {
    pub fn transition(lower: &str, upper: &str, pol: Polarization, frequency: f64, rabi: f64) -> Self {
        DriveField {
            target: DriveTarget::Transition {
                lower: lower.to_string(),
                upper: upper.to_string(),
                polarization: pol,
                multipole: Multipole::E1,
                only: None,
            },
            frequency,
            rabi,
            phase: 0.0,
            amp_error: 0.0,
            pol_leak: 0.0,
        }
    }

    pub fn custom(op: CMat, frequency: f64, rabi: f64) -> Self {
        DriveField { target: DriveTarget::Custom(op), frequency, rabi, phase: 0.0, amp_error: 0.0, pol_leak: 0.0 }
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_amp_error(mut self, eps: f64) -> Self {
        self.amp_error = eps;
        self
    }

    pub fn with_pol_leak(mut self, eps: f64) -> Self {
        self.pol_leak = eps;
        self
    }

    pub fn with_multipole(mut self, kind: Multipole) -> Self {
        if let DriveTarget::Transition { multipole, .. } = &mut self.target {
            *multipole = kind;
        }
        self
    }

    pub fn only(mut self, lower_state: usize, upper_state: usize) -> Self {
        if let DriveTarget::Transition { only, .. } = &mut self.target {
            *only = Some((lower_state, upper_state));
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| {
            Err(Error::InvalidParameter { name: name.to_string(), reason: reason.to_string() })
        };
        if !(self.rabi >= 0.0) || !self.rabi.is_finite() {
            return bad("rabi", "must be finite and >= 0");
        }
        if !self.frequency.is_finite() || !self.phase.is_finite() {
            return bad("frequency", "must be finite");
        }
        if !(0.0..1.0).contains(&self.pol_leak) {
            return bad("pol_leak", "must satisfy 0 <= pol_leak < 1");
        }
        if !(self.amp_error > -1.0) || !self.amp_error.is_finite() {
            return bad("amp_error", "must be > -1");
        }
        Ok(())
    }

    /// Hermitian operator A with lab contribution A e^{-i(wt+phi)} + h.c.
    fn harmonic_operator(&self, scheme: &LevelScheme) -> Result<CMat> {
        self.validate()?;
        let amp = self.rabi * (1.0 + self.amp_error);
        match &self.target {
            DriveTarget::Custom(op) => {
                if op.shape() != (scheme.dim(), scheme.dim()) || !is_hermitian(op, 1e-12 * max_abs(op).max(1.0)) {
                    return Err(Error::InvalidParameter {
                        name: "custom drive".into(),
                        reason: "operator must be Hermitian over the scheme basis".into(),
                    });
                }
                if self.pol_leak != 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "pol_leak".into(),
                        reason: "polarization leakage needs a transition drive".into(),
                    });
                }
                Ok(op * re(0.5 * amp))
            }
            DriveTarget::Transition { lower, upper, polarization, multipole, only } => {
                let mut v = scheme.dipole_coupling_op(lower, upper, *polarization, *multipole)?;
                if let Some((l, u)) = *only {
                    if self.pol_leak != 0.0 {
                        return Err(Error::InvalidParameter {
                            name: "pol_leak".into(),
                            reason: "leakage is undefined for a single-transition field".into(),
                        });
                    }
                    let keep = v.get((u, l)).copied().unwrap_or_default();
                    if keep == C64::default() {
                        return Err(Error::SelectionRule(format!(
                            "{polarization} does not connect {} to {}",
                            scheme.label(l),
                            scheme.label(u)
                        )));
                    }
                    v.fill(C64::default());
                    v[(u, l)] = keep;
                }
                if self.pol_leak > 0.0 {
                    if *polarization == Polarization::Pi {
                        return Err(Error::InvalidParameter {
                            name: "pol_leak".into(),
                            reason: "leakage is defined between sigma+ and sigma-".into(),
                        });
                    }
                    let w = scheme.dipole_coupling_op(lower, upper, polarization.opposite(), *multipole)?;
                    v = v * re(1.0 - self.pol_leak) + w * re(self.pol_leak);
                }
                Ok((&v + v.adjoint()) * re(0.5 * amp))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HarmonicTerm {
    #[serde(skip)]
    pub op: CMat,
    pub frequency: f64,
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameSpec {
    /// Diagonal of the frame generator H0, rad/s.
    pub generator: Vec<f64>,
    pub description: String,
}

impl FrameSpec {
    pub fn new(generator: Vec<f64>, description: &str) -> Self {
        FrameSpec { generator, description: description.to_string() }
    }

    /// Frame from a matrix that must be diagonal.
    pub fn from_matrix(h0: &CMat, description: &str) -> Result<Self> {
        let n = h0.nrows();
        for i in 0..n {
            for j in 0..n {
                let z = h0[(i, j)];
                if (i != j && z.norm() > 0.0) || (i == j && z.im != 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "frame".into(),
                        reason: "generator must be real and diagonal in the scheme basis".into(),
                    });
                }
            }
        }
        Ok(FrameSpec::new((0..n).map(|i| h0[(i, i)].re).collect(), description))
    }
}

#[derive(Clone, Debug, Serialize)]
pub enum Frame {
    Lab,
    Rotating(FrameSpec),
}

#[derive(Clone, Debug, Serialize)]
pub struct TimeDependentHamiltonian {
    #[serde(skip)]
    pub static_part: CMat,
    pub harmonics: Vec<HarmonicTerm>,
    pub frame: Frame,
}

impl TimeDependentHamiltonian {
    pub fn new_static(h: CMat, frame: Frame) -> Self {
        TimeDependentHamiltonian { static_part: h, harmonics: Vec::new(), frame }
    }

    pub fn dim(&self) -> usize {
        self.static_part.nrows()
    }

    pub fn is_static(&self) -> bool {
        self.harmonics.is_empty()
    }

    /// H(t) as a dense matrix.
    pub fn at(&self, t: f64) -> CMat {
        let mut h = self.static_part.clone();
        self.add_harmonics_at(t, &mut h);
        h
    }

    pub fn add_harmonics_at(&self, t: f64, h: &mut CMat) {
        for term in &self.harmonics {
            let ph = C64::from_polar(1.0, -(term.frequency * t + term.phase));
            let n = h.nrows();
            for j in 0..n {
                for i in 0..n {
                    let a = term.op[(i, j)];
                    if a != C64::default() {
                        let z = a * ph;
                        h[(i, j)] += z;
                        h[(j, i)] += z.conj();
                    }
                }
            }
        }
    }

    /// Largest angular frequency present (harmonic frequencies and the
    /// spread of the static spectrum bound), used to pick step sizes.
    pub fn frequency_scale(&self) -> f64 {
        let hs = crate::linalg::frobenius(&self.static_part);
        let hh = self
            .harmonics
            .iter()
            .map(|t| t.frequency.abs() + 2.0 * crate::linalg::frobenius(&t.op))
            .fold(0.0, f64::max);
        hs.max(hh)
    }

    pub fn add_static(&mut self, extra: &CMat) {
        self.static_part += extra;
    }
}

/// One element-level term removed by the RWA: `amplitude e^{-i w t} |row><col|`
/// plus its Hermitian partner.
#[derive(Clone, Debug, Serialize)]
pub struct DroppedTerm {
    pub row: usize,
    pub col: usize,
    pub amplitude_re: f64,
    pub amplitude_im: f64,
    pub frequency: f64,
}

impl DroppedTerm {
    pub fn amplitude(&self) -> C64 {
        C64::new(self.amplitude_re, self.amplitude_im)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RotatingFrameResult {
    pub hamiltonian: TimeDependentHamiltonian,
    pub dropped: Vec<DroppedTerm>,
    pub warnings: Vec<String>,
}

impl RotatingFrameResult {
    /// Static part, failing if any harmonic survived the RWA.
    pub fn static_hamiltonian(&self) -> Result<CMat> {
        if !self.hamiltonian.is_static() {
            return Err(Error::InvalidParameter {
                name: "hamiltonian".into(),
                reason: format!("{} harmonic terms remain after the RWA", self.hamiltonian.harmonics.len()),
            });
        }
        Ok(self.hamiltonian.static_part.clone())
    }

    /// Second-order effective Hamiltonian of the dropped terms,
    /// sum over frequencies of [h^dag, h] / w (Bloch-Siegert-type shifts).
    pub fn counter_rotating_correction(&self) -> CMat {
        let n = self.hamiltonian.dim();
        let mut out = CMat::zeros(n, n);
        for (freq, h) in group_by_frequency(&self.dropped, n) {
            let hd = h.adjoint();
            out += (&hd * &h - &h * &hd) / re(freq);
        }
        out
    }
}

fn group_by_frequency(terms: &[DroppedTerm], n: usize) -> Vec<(f64, CMat)> {
    let mut sorted: Vec<&DroppedTerm> = terms.iter().collect();
    sorted.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    let mut out: Vec<(f64, CMat)> = Vec::new();
    for t in sorted {
        let tol = 1e-12 * t.frequency.abs().max(1.0);
        match out.last_mut() {
            Some((f, m)) if (t.frequency - *f).abs() <= tol => m[(t.row, t.col)] += t.amplitude(),
            _ => {
                let mut m = CMat::zeros(n, n);
                m[(t.row, t.col)] = t.amplitude();
                out.push((t.frequency, m));
            }
        }
    }
    out
}

/// Lab-frame Hamiltonian of a level scheme in field B (mu_B B, rad/s) under
/// the given drives.
pub fn build_lab_hamiltonian(scheme: &LevelScheme, b: f64, drives: &[DriveField]) -> Result<TimeDependentHamiltonian> {
    let mut harmonics = Vec::with_capacity(drives.len());
    for d in drives {
        let op = d.harmonic_operator(scheme)?;
        harmonics.push(HarmonicTerm { op, frequency: d.frequency, phase: d.phase });
    }
    Ok(TimeDependentHamiltonian { static_part: scheme.zeeman_hamiltonian(b), harmonics, frame: Frame::Lab })
}

/// Move to the frame U = exp(-i H0 t): H' = U^dag H U - H0. Element terms
/// whose residual frequency exceeds `rwa_cutoff` are dropped and recorded.
pub fn to_rotating_frame(
    h: &TimeDependentHamiltonian,
    frame: &FrameSpec,
    rwa_cutoff: f64,
) -> Result<RotatingFrameResult> {
    let n = h.dim();
    if frame.generator.len() != n {
        return Err(Error::InvalidParameter {
            name: "frame".into(),
            reason: format!("generator has {} entries for a {n}-level system", frame.generator.len()),
        });
    }
    if !(rwa_cutoff > 0.0) {
        return Err(Error::InvalidParameter { name: "rwa_cutoff".into(), reason: "must be positive".into() });
    }
    let f = &frame.generator;
    let mut scale: f64 = 1.0;
    for x in f {
        scale = scale.max(x.abs());
    }
    for t in &h.harmonics {
        scale = scale.max(t.frequency.abs());
    }
    let merge_tol = 1e-12 * scale;

    // (row, col, amplitude, residual frequency), complete: H = sum a e^{-i r t}
    let mut elems: Vec<(usize, usize, C64, f64)> = Vec::new();
    for j in 0..n {
        for k in 0..n {
            let a = h.static_part[(j, k)];
            if a != C64::default() {
                elems.push((j, k, a, -(f[j] - f[k])));
            }
        }
    }
    for term in &h.harmonics {
        let ph = C64::from_polar(1.0, -term.phase);
        for j in 0..n {
            for k in 0..n {
                let a = term.op[(j, k)];
                if a != C64::default() {
                    elems.push((j, k, a * ph, term.frequency - (f[j] - f[k])));
                    elems.push((k, j, (a * ph).conj(), -term.frequency - (f[k] - f[j])));
                }
            }
        }
    }

    let mut static_part = CMat::zeros(n, n);
    let mut kept: Vec<DroppedTerm> = Vec::new();
    let mut dropped: Vec<DroppedTerm> = Vec::new();
    let mut warnings = Vec::new();
    for (j, k, a, r) in elems {
        if r.abs() <= merge_tol {
            static_part[(j, k)] += a;
        } else if r > 0.0 {
            let term = DroppedTerm { row: j, col: k, amplitude_re: a.re, amplitude_im: a.im, frequency: r };
            if r > rwa_cutoff {
                if a.norm() / r > 0.05 {
                    warnings.push(format!(
                        "dropped term {}<-{} has |a|/w = {:.3} > 0.05; RWA is questionable",
                        k,
                        j,
                        a.norm() / r
                    ));
                }
                dropped.push(term);
            } else {
                kept.push(term);
            }
        }
    }
    for i in 0..n {
        static_part[(i, i)] -= re(f[i]);
    }
    // symmetrize rounding
    let sp = (&static_part + static_part.adjoint()) * re(0.5);
    debug_assert!(hermiticity_defect(&sp) == 0.0);

    let harmonics = group_by_frequency(&kept, n)
        .into_iter()
        .map(|(freq, op)| HarmonicTerm { op, frequency: freq, phase: 0.0 })
        .collect();

    let generator = match &h.frame {
        Frame::Lab => frame.clone(),
        Frame::Rotating(prev) => FrameSpec {
            generator: prev.generator.iter().zip(f).map(|(a, b)| a + b).collect(),
            description: format!("{} then {}", prev.description, frame.description),
        },
    };
    Ok(RotatingFrameResult {
        hamiltonian: TimeDependentHamiltonian { static_part: sp, harmonics, frame: Frame::Rotating(generator) },
        dropped,
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ConstructionKind {
    Ideal,
    Compact,
    Hyperfine,
    Custom,
}

/// Optional imperfections of the two-field construction.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompactOptions {
    /// Relative amplitude error of the sigma+ field.
    pub amp_error_plus: f64,
    /// Relative amplitude error of the sigma- field.
    pub amp_error_minus: f64,
    /// Polarization leakage of both fields.
    pub pol_leak: f64,
}

/// A driven scheme together with the frame in which it is analysed.
#[derive(Clone, Debug)]
pub struct Construction {
    pub kind: ConstructionKind,
    pub scheme: LevelScheme,
    pub b: f64,
    pub omega: f64,
    pub lower: String,
    pub upper: Option<String>,
    pub drives: Vec<DriveField>,
    pub lab: TimeDependentHamiltonian,
    pub frame: FrameSpec,
    pub rwa_cutoff: f64,
}

impl Construction {
    pub fn interaction_picture(&self) -> Result<RotatingFrameResult> {
        to_rotating_frame(&self.lab, &self.frame, self.rwa_cutoff)
    }

    /// Static interaction-picture Hamiltonian.
    pub fn ip_hamiltonian(&self) -> Result<CMat> {
        self.interaction_picture()?.static_hamiltonian()
    }

    /// Rebuild with extra drives appended and, optionally, a new cutoff.
    pub fn with_extra_drives(&self, extra: Vec<DriveField>, rwa_cutoff: Option<f64>) -> Result<Self> {
        let mut drives = self.drives.clone();
        drives.extend(extra);
        let lab = build_lab_hamiltonian(&self.scheme, self.b, &drives)?;
        Ok(Construction { drives, lab, rwa_cutoff: rwa_cutoff.unwrap_or(self.rwa_cutoff), ..self.clone() })
    }

    /// Basis states of the driven manifolds; undriven spectators are left out.
    pub fn driven_indices(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.scheme.range(&self.lower).map(|r| r.collect()).unwrap_or_default();
        match &self.upper {
            Some(u) => out.extend(self.scheme.range(u).into_iter().flatten()),
            None => return (0..self.scheme.dim()).collect(),
        }
        out.sort_unstable();
        out
    }

    /// Protected pair of the interaction-picture Hamiltonian within the
    /// driven manifolds.
    pub fn protected_subspace(&self) -> Result<crate::subspace::SubspaceReport> {
        let h = self.ip_hamiltonian()?;
        crate::subspace::find_protected_subspace_in(&h, &self.jz(), 2, &self.driven_indices())
    }

    /// Total Jz over the scheme basis.
    pub fn jz(&self) -> CMat {
        self.scheme.jz_total()
    }

    /// Landé factor of the qubit manifold.
    pub fn qubit_g(&self) -> f64 {
        self.scheme.manifold(&self.lower).map(|m| m.g).unwrap_or(1.0)
    }

    /// Common-mode magnetic noise operator: a scalar b(t) times this is the
    /// Zeeman perturbation, with b in units of the qubit-manifold splitting
    /// per unit m.
    pub fn noise_operator(&self) -> CMat {
        let g = self.qubit_g();
        if g == 0.0 {
            self.scheme.zeeman_noise_operator(1.0)
        } else {
            self.scheme.zeeman_noise_operator(g)
        }
    }
}

/// 10 max(Omega, largest adjacent-level Zeeman splitting).
pub fn default_rwa_cutoff(scheme: &LevelScheme, b: f64, omega: f64) -> f64 {
    let z = scheme.manifolds().iter().map(|m| (m.g * b).abs()).fold(0.0, f64::max);
    10.0 * omega.abs().max(z).max(f64::MIN_POSITIVE)
}

fn lambda_pairs(scheme: &LevelScheme, lower: &str, upper: &str) -> Result<Vec<(usize, usize, Polarization)>> {
    let mut out = Vec::new();
    for pol in [Polarization::SigmaPlus, Polarization::SigmaMinus] {
        let v = scheme.dipole_coupling_op(lower, upper, pol, Multipole::E1)?;
        for u in scheme.range(upper)? {
            for l in scheme.range(lower)? {
                if v[(u, l)] != C64::default() {
                    out.push((l, u, pol));
                }
            }
        }
    }
    Ok(out)
}

/// Separate resonant field for every sigma transition between `lower` and
/// `upper`, each with Rabi amplitude `omega`, so the interaction picture
/// couplings are omega/2 times the normalized coefficients.
pub fn ideal_construction_between(
    scheme: &LevelScheme,
    lower: &str,
    upper: &str,
    b: f64,
    omega: f64,
) -> Result<Construction> {
    let e = scheme.zeeman_diagonal(b);
    let mut drives = Vec::new();
    for (l, u, pol) in lambda_pairs(scheme, lower, upper)? {
        drives.push(DriveField::transition(lower, upper, pol, e[u] - e[l], omega).only(l, u));
    }
    let lab = build_lab_hamiltonian(scheme, b, &drives)?;
    Ok(Construction {
        kind: ConstructionKind::Ideal,
        scheme: scheme.clone(),
        b,
        omega,
        lower: lower.to_string(),
        upper: Some(upper.to_string()),
        drives,
        lab,
        frame: FrameSpec::new(e, "bare energies"),
        rwa_cutoff: default_rwa_cutoff(scheme, b, omega),
    })
}

/// Four-field construction on D3/2 <-> P1/2.
pub fn ideal_construction(scheme: &LevelScheme, b: f64, omega: f64) -> Result<Construction> {
    ideal_construction_between(scheme, "D3/2", "P1/2", b, omega)
}

/// Two fields, sigma+ at w0 + g_l B and sigma- at w0 - g_l B, each driving a
/// whole family of transitions. The frame puts the upper states at
/// offset_u + g_l B m, leaving a residual one-photon detuning (g_u - g_l) B m.
pub fn compact_construction_between(
    scheme: &LevelScheme,
    lower: &str,
    upper: &str,
    b: f64,
    omega: f64,
    opts: CompactOptions,
) -> Result<Construction> {
    let ml = scheme.manifold(lower)?.clone();
    let mu = scheme.manifold(upper)?.clone();
    let w0 = mu.offset - ml.offset;
    let drives = vec![
        DriveField::transition(lower, upper, Polarization::SigmaPlus, w0 + ml.g * b, omega)
            .with_amp_error(opts.amp_error_plus)
            .with_pol_leak(opts.pol_leak),
        DriveField::transition(lower, upper, Polarization::SigmaMinus, w0 - ml.g * b, omega)
            .with_amp_error(opts.amp_error_minus)
            .with_pol_leak(opts.pol_leak),
    ];
    let lab = build_lab_hamiltonian(scheme, b, &drives)?;
    let mut gen = scheme.zeeman_diagonal(b);
    for i in scheme.range(upper)? {
        gen[i] = mu.offset + ml.g * b * scheme.states()[i].m.value();
    }
    Ok(Construction {
        kind: ConstructionKind::Compact,
        scheme: scheme.clone(),
        b,
        omega,
        lower: lower.to_string(),
        upper: Some(upper.to_string()),
        drives,
        lab,
        frame: FrameSpec::new(gen, "lower bare energies; upper states shifted by the lower g-factor"),
        rwa_cutoff: default_rwa_cutoff(scheme, b, omega),
    })
}

/// Two-field construction on D3/2 <-> P1/2 (residual detuning B/15).
pub fn compact_construction(scheme: &LevelScheme, b: f64, omega: f64) -> Result<Construction> {
    compact_construction_between(scheme, "D3/2", "P1/2", b, omega, CompactOptions::default())
}

/// One field at the Zeeman frequency polarized along x. For F=i, F=i+1 with
/// g_{i+1} = -g_i the interaction picture Hamiltonian is
/// Omega (F_x^{i+1} - F_x^{i}); with an F=0 level the field acts on F=1 only.
pub fn hyperfine_construction(scheme: &LevelScheme, b: f64, omega: f64) -> Result<Construction> {
    let ms = scheme.manifolds();
    if ms.len() != 2 {
        return Err(Error::InvalidParameter {
            name: "scheme".into(),
            reason: "hyperfine construction needs exactly two manifolds".into(),
        });
    }
    let (lo, hi) = (&ms[0], &ms[1]);
    let (op, freq, lower) = if lo.j.0 == 0 || hi.j.0 == 0 {
        let f1 = if lo.j.0 == 0 { hi } else { lo };
        let fx = scheme.angular_ops(&f1.name)?.jx;
        (fx * re(2.0), f1.g * b, f1.name.clone())
    } else {
        if (lo.g.abs() - hi.g.abs()).abs() > 1e-12 * lo.g.abs().max(hi.g.abs()) || lo.g == 0.0 {
            return Err(Error::InvalidParameter {
                name: "g-factors".into(),
                reason: format!(
                    "|g| of {} ({}) and {} ({}) differ; one field cannot be resonant with both",
                    lo.name, lo.g, hi.name, hi.g
                ),
            });
        }
        let fx_hi = scheme.angular_ops(&hi.name)?.jx;
        let fx_lo = scheme.angular_ops(&lo.name)?.jx;
        ((fx_hi - fx_lo) * re(2.0), hi.g * b, hi.name.clone())
    };
    let drives = vec![DriveField::custom(op, freq, omega)];
    let lab = build_lab_hamiltonian(scheme, b, &drives)?;
    let zee = scheme.manifolds().iter().map(|m| (m.g * b).abs()).fold(0.0, f64::max);
    Ok(Construction {
        kind: ConstructionKind::Hyperfine,
        scheme: scheme.clone(),
        b,
        omega,
        lower,
        upper: None,
        drives,
        lab,
        frame: FrameSpec::new(scheme.zeeman_diagonal(b), "bare energies"),
        rwa_cutoff: 0.5 * zee,
    })
}

/// Arbitrary drives in a user-supplied frame.
pub fn custom_construction(
    scheme: &LevelScheme,
    b: f64,
    drives: Vec<DriveField>,
    frame: FrameSpec,
    qubit_manifold: &str,
    rwa_cutoff: Option<f64>,
) -> Result<Construction> {
    scheme.manifold(qubit_manifold)?;
    let omega = drives.iter().map(|d| d.rabi).fold(0.0, f64::max);
    let lab = build_lab_hamiltonian(scheme, b, &drives)?;
    Ok(Construction {
        kind: ConstructionKind::Custom,
        scheme: scheme.clone(),
        b,
        omega,
        lower: qubit_manifold.to_string(),
        upper: None,
        drives,
        lab,
        frame,
        rwa_cutoff: rwa_cutoff.unwrap_or_else(|| default_rwa_cutoff(scheme, b, omega)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigh, max_abs};

    const GAP: f64 = 1000.0;

    fn d32() -> LevelScheme {
        LevelScheme::d32_p12(GAP, 0.0)
    }

    #[test]
    fn zero_drives_is_zeeman() {
        let s = d32();
        let h = build_lab_hamiltonian(&s, 0.3, &[]).unwrap();
        assert!(h.is_static());
        assert!(max_abs(&(h.at(1.7) - s.zeeman_hamiltonian(0.3))) == 0.0);
    }

    #[test]
    fn lab_hamiltonian_is_hermitian_at_random_times() {
        let s = d32();
        let c = compact_construction(&s, 0.15, 1.0).unwrap();
        let mut t = 0.123;
        for _ in 0..100 {
            t = (t * 7.77 + 0.31) % 50.0;
            assert!(hermiticity_defect(&c.lab.at(t)) < 1e-13);
        }
    }

    #[test]
    fn ideal_fields_are_resonant() {
        let s = d32();
        let b = 0.3;
        let c = ideal_construction(&s, b, 1.0).unwrap();
        let mut f: Vec<f64> = c.drives.iter().map(|d| d.frequency - GAP).collect();
        f.sort_by(f64::total_cmp);
        let mut want = vec![11.0 * b / 15.0, -13.0 * b / 15.0, 13.0 * b / 15.0, -11.0 * b / 15.0];
        want.sort_by(f64::total_cmp);
        for (a, w) in f.iter().zip(&want) {
            assert!((a - w).abs() < 1e-12);
        }
        let ip = c.interaction_picture().unwrap();
        assert!(ip.hamiltonian.is_static());
        // no residual detuning
        for i in 0..6 {
            assert!(ip.hamiltonian.static_part[(i, i)].norm() < 1e-12);
        }
    }

    #[test]
    fn ideal_spectrum() {
        let c = ideal_construction(&d32(), 0.2, 1.0).unwrap();
        let (vals, _) = eigh(&c.ip_hamiltonian().unwrap());
        let want = [-1.0, -1.0, 0.0, 0.0, 1.0, 1.0];
        for (a, w) in vals.iter().zip(want) {
            assert!((a - w).abs() < 1e-12);
        }
    }

    #[test]
    fn compact_has_eight_couplings_in_root_three_ratio() {
        let s = d32();
        let b = 0.15;
        let c = compact_construction(&s, b, 1.0).unwrap();
        let h = c.ip_hamiltonian().unwrap();
        let mut mags: Vec<f64> = Vec::new();
        for u in 4..6 {
            for l in 0..4 {
                if h[(u, l)].norm() > 1e-14 {
                    mags.push(h[(u, l)].norm());
                    mags.push(h[(l, u)].norm());
                }
            }
        }
        assert_eq!(mags.len(), 8);
        let lo = mags.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = mags.iter().cloned().fold(0.0, f64::max);
        assert!((lo - 0.5).abs() < 1e-12);
        assert!((hi / lo - 3f64.sqrt()).abs() < 1e-12);
        let delta = b / 15.0;
        let p0 = s.idx("P1/2", -0.5).unwrap();
        let p1 = s.idx("P1/2", 0.5).unwrap();
        assert!((h[(p0, p0)].re - delta).abs() < 1e-12);
        assert!((h[(p1, p1)].re + delta).abs() < 1e-12);
    }

    #[test]
    fn compact_at_zero_field_equals_ideal() {
        let s = d32();
        let a = compact_construction(&s, 0.0, 1.0).unwrap().ip_hamiltonian().unwrap();
        let b = ideal_construction(&s, 0.0, 1.0).unwrap().ip_hamiltonian().unwrap();
        assert!(max_abs(&(a - b)) < 1e-12);
    }

    #[test]
    fn self_frame_of_static_is_zero() {
        let s = d32();
        let h = build_lab_hamiltonian(&s, 0.4, &[]).unwrap();
        let f = FrameSpec::from_matrix(&h.static_part, "self").unwrap();
        let r = to_rotating_frame(&h, &f, 1.0).unwrap();
        assert!(max_abs(&r.hamiltonian.static_part) == 0.0);
        assert!(r.hamiltonian.harmonics.is_empty());
    }

    #[test]
    fn non_diagonal_frame_rejected() {
        let mut m = CMat::zeros(2, 2);
        m[(0, 1)] = re(1.0);
        m[(1, 0)] = re(1.0);
        assert!(FrameSpec::from_matrix(&m, "x").is_err());
    }

    #[test]
    fn strong_dropped_term_warns() {
        let s = LevelScheme::d32_p12(3.0, 0.0);
        let c = compact_construction(&s, 0.0, 1.0).unwrap();
        let r = to_rotating_frame(&c.lab, &c.frame, 1.0).unwrap();
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn hyperfine_spectrum() {
        let s = LevelScheme::hyperfine_f1_f2(1000.0, 0.5);
        let c = hyperfine_construction(&s, 80.0, 1.0).unwrap();
        let h = c.ip_hamiltonian().unwrap();
        let (vals, _) = eigh(&h);
        let want = [-2.0, -1.0, -1.0, 0.0, 0.0, 1.0, 1.0, 2.0];
        for (a, w) in vals.iter().zip(want) {
            assert!((a - w).abs() < 1e-12, "{vals:?}");
        }
    }

    #[test]
    fn hyperfine_mismatched_g_rejected() {
        let s = LevelScheme::new(
            vec![
                crate::atomic::Manifold::new("F=1", 1.0, None, -0.5, 0.0),
                crate::atomic::Manifold::new("F=2", 2.0, None, 0.6, 100.0),
            ],
            vec![],
        )
        .unwrap();
        assert!(hyperfine_construction(&s, 10.0, 1.0).is_err());
    }

    #[test]
    fn invalid_drive_parameters() {
        let d = DriveField::transition("D3/2", "P1/2", Polarization::SigmaPlus, 1.0, -1.0);
        assert!(d.validate().is_err());
        let d = DriveField::transition("D3/2", "P1/2", Polarization::SigmaPlus, 1.0, 1.0).with_pol_leak(1.0);
        assert!(d.validate().is_err());
        let d = DriveField::transition("D3/2", "P1/2", Polarization::SigmaPlus, 1.0, 1.0).with_amp_error(-1.0);
        assert!(d.validate().is_err());
    }

    #[test]
    fn spectators_do_not_enter_the_protected_pair() {
        let s = LevelScheme::ca40_like(1e4, 0.0);
        let c = compact_construction(&s, 0.3, 1.0).unwrap();
        let rep = c.protected_subspace().unwrap();
        let d = s.range("D3/2").unwrap();
        for v in &rep.dark_states {
            let inside: f64 = d.clone().map(|i| v[i].norm_sqr()).sum();
            assert!((inside - 1.0).abs() < 1e-12);
        }
    }
}
