//! Level schemes: labeled bases, Zeeman operators and transition operators.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::angular::{angular_momentum_ops, AngularMomentumOps, HalfInt};
use super::cg::clebsch_gordan;
use crate::error::{Error, Result};
use crate::linalg::{re, CMat};

/// Spherical polarization component; `q` is the change in m on absorption.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    #[serde(rename = "sigma+")]
    SigmaPlus,
    #[serde(rename = "sigma-")]
    SigmaMinus,
    #[serde(rename = "pi")]
    Pi,
}

impl Polarization {
    pub fn q(self) -> i32 {
        match self {
            Polarization::SigmaPlus => 1,
            Polarization::SigmaMinus => -1,
            Polarization::Pi => 0,
        }
    }

    /// The polarization a leak mixes in: sigma+ <-> sigma-, pi stays pi.
    pub fn opposite(self) -> Self {
        match self {
            Polarization::SigmaPlus => Polarization::SigmaMinus,
            Polarization::SigmaMinus => Polarization::SigmaPlus,
            Polarization::Pi => Polarization::Pi,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarization::SigmaPlus => "sigma+",
            Polarization::SigmaMinus => "sigma-",
            Polarization::Pi => "pi",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Multipole {
    #[default]
    E1,
    M1,
    E2,
}

impl Multipole {
    pub fn rank(self) -> i32 {
        match self {
            Multipole::E1 | Multipole::M1 => 1,
            Multipole::E2 => 2,
        }
    }
}

/// One fine- or hyperfine-structure level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifold {
    pub name: String,
    /// Total angular momentum J (or F).
    pub j: HalfInt,
    /// Orbital quantum number, used for parity selection rules. `None` for
    /// hyperfine levels of a single orbital.
    pub orbital_l: Option<u32>,
    /// Landé factor.
    pub g: f64,
    /// Zero-field energy in rad/s.
    pub offset: f64,
}

impl Manifold {
    pub fn new(name: &str, j: f64, orbital_l: Option<u32>, g: f64, offset: f64) -> Self {
        Manifold {
            name: name.to_string(),
            j: HalfInt::from_f64(j).expect("j must be a multiple of 1/2"),
            orbital_l,
            g,
            offset,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayChannel {
    pub upper: String,
    pub lower: String,
    /// Partial decay rate in 1/s.
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantumLabel {
    pub manifold: String,
    pub m: HalfInt,
}

impl fmt::Display for QuantumLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{};m={}", self.manifold, self.m)
    }
}

/// Ordered basis: manifolds in the order given, m ascending within each.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelScheme {
    manifolds: Vec<Manifold>,
    decays: Vec<DecayChannel>,
    #[serde(skip)]
    states: Vec<QuantumLabel>,
    #[serde(skip)]
    owner: Vec<usize>,
}

impl<'de> Deserialize<'de> for LevelScheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            manifolds: Vec<Manifold>,
            #[serde(default)]
            decays: Vec<DecayChannel>,
        }
        let raw = Raw::deserialize(d)?;
        LevelScheme::new(raw.manifolds, raw.decays).map_err(serde::de::Error::custom)
    }
}

impl LevelScheme {
    pub fn new(manifolds: Vec<Manifold>, decays: Vec<DecayChannel>) -> Result<Self> {
        let mut seen = HashSet::new();
        for m in &manifolds {
            if !seen.insert(m.name.clone()) {
                return Err(Error::InvalidParameter {
                    name: "manifolds".into(),
                    reason: format!("duplicate manifold {}", m.name),
                });
            }
            if m.j.0 < 0 {
                return Err(Error::InvalidQuantumNumber(format!("{}: negative J", m.name)));
            }
            if !m.g.is_finite() || !m.offset.is_finite() {
                return Err(Error::InvalidParameter {
                    name: m.name.clone(),
                    reason: "g-factor and offset must be finite".into(),
                });
            }
        }
        for d in &decays {
            for end in [&d.upper, &d.lower] {
                if !seen.contains(end) {
                    return Err(Error::UnknownManifold(end.clone()));
                }
            }
            if !(d.rate >= 0.0) || !d.rate.is_finite() {
                return Err(Error::InvalidParameter {
                    name: format!("decay {}->{}", d.upper, d.lower),
                    reason: "rate must be finite and non-negative".into(),
                });
            }
        }
        let mut states = Vec::new();
        let mut owner = Vec::new();
        for (k, m) in manifolds.iter().enumerate() {
            for mj in m.j.projections() {
                states.push(QuantumLabel { manifold: m.name.clone(), m: mj });
                owner.push(k);
            }
        }
        Ok(LevelScheme { manifolds, decays, states, owner })
    }

    /// Calcium-like fine structure. `optical_gap` is the D3/2 <-> P1/2
    /// transition frequency; the other offsets keep the calcium ratios.
    /// P levels decay with total rate `gamma`, mostly to S1/2.
    pub fn ca40_like(optical_gap: f64, gamma: f64) -> Self {
        let g = optical_gap;
        LevelScheme::new(
            vec![
                Manifold::new("S1/2", 0.5, Some(0), 2.0, 0.0),
                Manifold::new("D3/2", 1.5, Some(2), 0.8, 1.182 * g),
                Manifold::new("D5/2", 2.5, Some(2), 1.2, 1.188 * g),
                Manifold::new("P1/2", 0.5, Some(1), 2.0 / 3.0, 2.182 * g),
                Manifold::new("P3/2", 1.5, Some(1), 4.0 / 3.0, 2.200 * g),
            ],
            vec![
                DecayChannel { upper: "P1/2".into(), lower: "S1/2".into(), rate: 0.94 * gamma },
                DecayChannel { upper: "P1/2".into(), lower: "D3/2".into(), rate: 0.06 * gamma },
                DecayChannel { upper: "P3/2".into(), lower: "S1/2".into(), rate: 0.94 * gamma },
                DecayChannel { upper: "P3/2".into(), lower: "D5/2".into(), rate: 0.06 * gamma },
            ],
        )
        .expect("preset is valid")
    }

    /// The closed six-level D3/2 + P1/2 system of the optical construction.
    pub fn d32_p12(optical_gap: f64, gamma: f64) -> Self {
        LevelScheme::new(
            vec![
                Manifold::new("D3/2", 1.5, Some(2), 0.8, 0.0),
                Manifold::new("P1/2", 0.5, Some(1), 2.0 / 3.0, optical_gap),
            ],
            vec![DecayChannel { upper: "P1/2".into(), lower: "D3/2".into(), rate: gamma }],
        )
        .expect("preset is valid")
    }

    /// The ten-level D5/2 + P3/2 system.
    pub fn d52_p32(optical_gap: f64, gamma: f64) -> Self {
        LevelScheme::new(
            vec![
                Manifold::new("D5/2", 2.5, Some(2), 1.2, 0.0),
                Manifold::new("P3/2", 1.5, Some(1), 4.0 / 3.0, optical_gap),
            ],
            vec![DecayChannel { upper: "P3/2".into(), lower: "D5/2".into(), rate: gamma }],
        )
        .expect("preset is valid")
    }

    /// Ground-state hyperfine pair F=1, F=2 with g_{F=2} = -g_{F=1} = g.
    pub fn hyperfine_f1_f2(hf_splitting: f64, g: f64) -> Self {
        LevelScheme::new(
            vec![Manifold::new("F=1", 1.0, None, -g, 0.0), Manifold::new("F=2", 2.0, None, g, hf_splitting)],
            vec![],
        )
        .expect("preset is valid")
    }

    /// Ground-state hyperfine pair F=0, F=1.
    pub fn hyperfine_f0_f1(hf_splitting: f64, g: f64) -> Self {
        LevelScheme::new(
            vec![Manifold::new("F=0", 0.0, None, 0.0, 0.0), Manifold::new("F=1", 1.0, None, g, hf_splitting)],
            vec![],
        )
        .expect("preset is valid")
    }

    /// Single spin-j manifold named "J" with unit g-factor; a bare test system.
    pub fn single_spin(j: f64) -> Self {
        LevelScheme::new(vec![Manifold::new("J", j, None, 1.0, 0.0)], vec![]).expect("preset is valid")
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[QuantumLabel] {
        &self.states
    }

    pub fn manifolds(&self) -> &[Manifold] {
        &self.manifolds
    }

    pub fn decays(&self) -> &[DecayChannel] {
        &self.decays
    }

    pub fn manifold(&self, name: &str) -> Result<&Manifold> {
        self.manifolds.iter().find(|m| m.name == name).ok_or_else(|| Error::UnknownManifold(name.to_string()))
    }

    fn manifold_index(&self, name: &str) -> Result<usize> {
        self.manifolds.iter().position(|m| m.name == name).ok_or_else(|| Error::UnknownManifold(name.to_string()))
    }

    /// Index of the manifold a basis state belongs to.
    pub fn manifold_of(&self, state: usize) -> &Manifold {
        &self.manifolds[self.owner[state]]
    }

    pub fn manifold_ordinal(&self, state: usize) -> usize {
        self.owner[state]
    }

    pub fn range(&self, name: &str) -> Result<Range<usize>> {
        let k = self.manifold_index(name)?;
        let start = self.owner.iter().position(|&o| o == k).unwrap_or(0);
        Ok(start..start + self.manifolds[k].j.multiplicity())
    }

    pub fn index_of(&self, manifold: &str, m: HalfInt) -> Result<usize> {
        let r = self.range(manifold)?;
        let j = self.manifold(manifold)?.j;
        if m.0.abs() > j.0 || (j.0 - m.0) % 2 != 0 {
            return Err(Error::InvalidQuantumNumber(format!("m = {m} not allowed in {manifold} (J = {j})")));
        }
        Ok(r.start + ((m.0 + j.0) / 2) as usize)
    }

    /// Convenience: index from a float m.
    pub fn idx(&self, manifold: &str, m: f64) -> Result<usize> {
        self.index_of(manifold, HalfInt::from_f64(m)?)
    }

    pub fn label(&self, state: usize) -> String {
        self.states[state].to_string()
    }

    pub fn m_values(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.m.value()).collect()
    }

    /// Diagonal of Zeeman + offsets, B given as mu_B B in rad/s.
    pub fn zeeman_diagonal(&self, b: f64) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let man = self.manifold_of(i);
                man.offset + man.g * b * self.states[i].m.value()
            })
            .collect()
    }

    pub fn zeeman_hamiltonian(&self, b: f64) -> CMat {
        crate::linalg::diag_real(&self.zeeman_diagonal(b))
    }

    /// Field-dependent part only: sum of g m per state, scaled by 1/g_ref, so
    /// a scalar b multiplying it is the Zeeman shift per unit m on a manifold
    /// with g = g_ref.
    pub fn zeeman_noise_operator(&self, g_ref: f64) -> CMat {
        let d: Vec<f64> = (0..self.dim()).map(|i| self.manifold_of(i).g * self.states[i].m.value() / g_ref).collect();
        crate::linalg::diag_real(&d)
    }

    /// Total Jz over all manifolds.
    pub fn jz_total(&self) -> CMat {
        crate::linalg::diag_real(&self.m_values())
    }

    /// Embed a manifold-local operator into the full basis.
    pub fn embed(&self, manifold: &str, op: &CMat) -> Result<CMat> {
        let r = self.range(manifold)?;
        if op.nrows() != r.len() || op.ncols() != r.len() {
            return Err(Error::InvalidParameter {
                name: "op".into(),
                reason: format!("shape {:?} does not match {manifold}", op.shape()),
            });
        }
        let mut out = CMat::zeros(self.dim(), self.dim());
        out.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(op);
        Ok(out)
    }

    /// Spin matrices of one manifold embedded in the full basis.
    pub fn angular_ops(&self, manifold: &str) -> Result<AngularMomentumOps> {
        let j = self.manifold(manifold)?.j;
        let local = angular_momentum_ops(j)?;
        Ok(AngularMomentumOps {
            j,
            jz: self.embed(manifold, &local.jz)?,
            jx: self.embed(manifold, &local.jx)?,
            jy: self.embed(manifold, &local.jy)?,
            j_plus: self.embed(manifold, &local.j_plus)?,
            j_minus: self.embed(manifold, &local.j_minus)?,
        })
    }

    pub fn projector(&self, manifold: &str) -> Result<CMat> {
        let r = self.range(manifold)?;
        let mut p = CMat::zeros(self.dim(), self.dim());
        for i in r {
            p[(i, i)] = re(1.0);
        }
        Ok(p)
    }

    fn check_selection(&self, lower: &Manifold, upper: &Manifold, kind: Multipole) -> Result<()> {
        let dj = (upper.j.0 - lower.j.0).abs();
        let k2 = 2 * kind.rank();
        let rule = |msg: String| Err(Error::SelectionRule(msg));
        if lower.j.0 + upper.j.0 < k2 || dj > k2 {
            return rule(format!(
                "{kind:?} needs |J - J'| <= {} <= J + J' ({} <-> {})",
                kind.rank(),
                lower.name,
                upper.name
            ));
        }
        if (lower.j.0 + upper.j.0) % 2 != 0 {
            return rule(format!("{} and {} mix integer and half-integer J", lower.name, upper.name));
        }
        if let (Some(l1), Some(l2)) = (lower.orbital_l, upper.orbital_l) {
            let dl = (l1 as i32 - l2 as i32).abs();
            let ok = match kind {
                Multipole::E1 => dl == 1,
                Multipole::M1 => dl == 0,
                Multipole::E2 => dl == 0 || dl == 2,
            };
            if !ok {
                return rule(format!("{kind:?} forbids Delta L = {dl} between {} and {}", lower.name, upper.name));
            }
        }
        Ok(())
    }

    /// Raw coefficient <j_l m_l; k q | j_u m_u> for one pair of states.
    fn raw_coefficient(&self, lower: usize, upper: usize, rank: i32) -> Result<f64> {
        let (sl, su) = (&self.states[lower], &self.states[upper]);
        let (jl, ju) = (self.manifold_of(lower).j, self.manifold_of(upper).j);
        let q = su.m.0 - sl.m.0;
        if q.abs() > 2 * rank {
            return Ok(0.0);
        }
        clebsch_gordan(jl, sl.m, HalfInt(2 * rank), HalfInt(q), ju, su.m)
    }

    /// Transition operator from `lower` up to `upper` for one polarization.
    ///
    /// Entry (u, l) holds <j_l m_l; k q | j_u m_u> with q = m_u - m_l, divided
    /// by the smallest nonzero |coefficient| over the q = -1, 0, +1 families of
    /// the manifold pair. For D3/2 <-> P1/2 the entries become 1, sqrt(3) and
    /// -sqrt(2). Only the raising block is filled; add the adjoint for a
    /// Hermitian coupling.
    pub fn dipole_coupling_op(&self, lower: &str, upper: &str, pol: Polarization, kind: Multipole) -> Result<CMat> {
        let ml = self.manifold(lower)?.clone();
        let mu = self.manifold(upper)?.clone();
        if lower == upper {
            return Err(Error::SelectionRule(format!(
                "transition operator needs two distinct manifolds, got {lower} twice"
            )));
        }
        self.check_selection(&ml, &mu, kind)?;
        let (rl, ru) = (self.range(lower)?, self.range(upper)?);
        let mut smallest = f64::INFINITY;
        for l in rl.clone() {
            for u in ru.clone() {
                let q = self.states[u].m.0 - self.states[l].m.0;
                if q.abs() <= 2 {
                    let v = self.raw_coefficient(l, u, kind.rank())?.abs();
                    if v > 1e-14 {
                        smallest = smallest.min(v);
                    }
                }
            }
        }
        let mut op = CMat::zeros(self.dim(), self.dim());
        let mut any = false;
        for l in rl {
            for u in ru.clone() {
                if self.states[u].m.0 - self.states[l].m.0 != 2 * pol.q() {
                    continue;
                }
                let v = self.raw_coefficient(l, u, kind.rank())?;
                if v.abs() > 1e-14 {
                    op[(u, l)] = re(v / smallest);
                    any = true;
                }
            }
        }
        if !any {
            return Err(Error::SelectionRule(format!("no {pol} component connects {lower} and {upper}")));
        }
        Ok(op)
    }

    /// Lindblad jump operators: for each decay channel and each q, sum of
    /// sqrt(rate) * CG |lower><upper|. The squared coefficients out of each
    /// upper state sum to one.
    pub fn collapse_operators(&self) -> Result<Vec<CMat>> {
        let mut out = Vec::new();
        for d in &self.decays {
            if d.rate == 0.0 {
                continue;
            }
            let (rl, ru) = (self.range(&d.lower)?, self.range(&d.upper)?);
            for q in -1..=1 {
                let mut op = CMat::zeros(self.dim(), self.dim());
                let mut any = false;
                for l in rl.clone() {
                    for u in ru.clone() {
                        if self.states[u].m.0 - self.states[l].m.0 != 2 * q {
                            continue;
                        }
                        let v = self.raw_coefficient(l, u, 1)?;
                        if v != 0.0 {
                            op[(l, u)] = re(d.rate.sqrt() * v);
                            any = true;
                        }
                    }
                }
                if any {
                    out.push(op);
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    fn scheme() -> LevelScheme {
        LevelScheme::d32_p12(1000.0, 1.0)
    }

    #[test]
    fn ordering_is_documented() {
        let s = scheme();
        assert_eq!(s.dim(), 6);
        assert_eq!(s.idx("D3/2", -1.5).unwrap(), 0);
        assert_eq!(s.idx("D3/2", 1.5).unwrap(), 3);
        assert_eq!(s.idx("P1/2", 0.5).unwrap(), 5);
        assert!(s.idx("D3/2", 2.5).is_err());
        assert!(s.idx("X", 0.5).is_err());
    }

    #[test]
    fn zeeman_shifts() {
        let s = scheme();
        let b = 1.0;
        let z = s.zeeman_diagonal(b);
        assert!((z[3] - 1.2).abs() < 1e-15);
        assert!((z[1] + 0.4).abs() < 1e-15);
        assert!((z[3] - z[1] - 1.6).abs() < 1e-15);
        let zero = s.zeeman_diagonal(0.0);
        assert_eq!(zero, vec![0.0, 0.0, 0.0, 0.0, 1000.0, 1000.0]);
    }

    #[test]
    fn sigma_ratio_root_three() {
        let s = scheme();
        let v = s.dipole_coupling_op("D3/2", "P1/2", Polarization::SigmaMinus, Multipole::E1).unwrap();
        let p1 = s.idx("P1/2", 0.5).unwrap();
        let d3 = s.idx("D3/2", 1.5).unwrap();
        let w = s.dipole_coupling_op("D3/2", "P1/2", Polarization::SigmaPlus, Multipole::E1).unwrap();
        let d1 = s.idx("D3/2", -0.5).unwrap();
        assert!((v[(p1, d3)].re / w[(p1, d1)].re - 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn pi_has_no_delta_m() {
        let s = scheme();
        let v = s.dipole_coupling_op("D3/2", "P1/2", Polarization::Pi, Multipole::E1).unwrap();
        for u in 4..6 {
            for l in 0..4 {
                if s.states()[u].m != s.states()[l].m {
                    assert_eq!(v[(u, l)], re(0.0));
                }
            }
        }
    }

    #[test]
    fn forbidden_pairs_are_rejected() {
        let s = LevelScheme::ca40_like(1.0, 0.1);
        let e = s.dipole_coupling_op("S1/2", "D3/2", Polarization::SigmaPlus, Multipole::E1);
        assert!(matches!(e, Err(Error::SelectionRule(_))));
        assert!(s.dipole_coupling_op("S1/2", "D5/2", Polarization::SigmaPlus, Multipole::E2).is_ok());
        let e = s.dipole_coupling_op("P1/2", "D5/2", Polarization::SigmaPlus, Multipole::E1);
        assert!(matches!(e, Err(Error::SelectionRule(_))));
    }

    #[test]
    fn branching_sums_to_rate() {
        let s = LevelScheme::d32_p12(10.0, 0.7);
        let ops = s.collapse_operators().unwrap();
        let mut acc = CMat::zeros(6, 6);
        for l in &ops {
            acc += l.adjoint() * l;
        }
        let expect = s.projector("P1/2").unwrap() * re(0.7);
        assert!(max_abs(&(acc - expect)) < 1e-14);
    }

    #[test]
    fn zeeman_commutes_with_jz() {
        let s = LevelScheme::ca40_like(5.0, 1.0);
        let z = s.zeeman_hamiltonian(0.3);
        for m in s.manifolds() {
            let jz = s.angular_ops(&m.name).unwrap().jz;
            assert!(max_abs(&(&z * &jz - &jz * &z)) < 1e-15);
        }
    }
}
