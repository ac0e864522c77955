//! Protected qubit subspaces: degenerate, Jz-dark eigenspaces of a static
//! interaction-picture Hamiltonian, with the gap to everything else.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    columns, diag_real, eigh, fix_phase, frobenius, hermitian_function, max_abs, orthonormalize, re, CMat, CVec, C64,
};

/// Amplitudes as (re, im) pairs for serialization.
pub fn amplitudes(v: &CVec) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn ser_states<S: serde::Serializer>(v: &[CVec], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&amplitudes(x))?;
    }
    seq.end()
}

fn ser_state<S: serde::Serializer>(v: &CVec, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&amplitudes(v), s)
}

#[derive(Clone, Debug, Serialize)]
pub struct DressedLevel {
    pub energy: f64,
    #[serde(serialize_with = "ser_state")]
    pub state: CVec,
}

#[derive(Clone, Debug, Serialize)]
pub struct SubspaceReport {
    #[serde(serialize_with = "ser_states")]
    pub dark_states: Vec<CVec>,
    pub dark_eigenvalue: f64,
    /// Smallest |lambda - lambda_D| over the complement spectrum.
    pub gap: f64,
    /// max |<D_i|Jz|D_j>|
    pub jz_residual: f64,
    /// max |lambda_i - lambda_D| within the subspace.
    pub degeneracy_residual: f64,
    pub dressed_complement: Vec<DressedLevel>,
    /// Both conditions hold and the gap is nonzero.
    pub protected: bool,
}

#[derive(Clone, Debug)]
pub struct SubspaceOptions {
    /// Eigenvalues closer than this times ||H|| are treated as degenerate.
    pub degeneracy_rel_tol: f64,
    /// Absolute tolerance on <D_i|Jz|D_j>.
    pub jz_tol: f64,
    /// Extra Hermitian keys used, after Jz, to pick a canonical basis inside
    /// the subspace (for example a manifold-ordinal operator).
    pub extra_keys: Vec<CMat>,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        SubspaceOptions { degeneracy_rel_tol: 1e-9, jz_tol: 1e-10, extra_keys: Vec::new() }
    }
}

struct Cluster {
    value: f64,
    vecs: Vec<CVec>,
}

fn clusters(h: &CMat, tol_rel: f64) -> (Vec<f64>, CMat, Vec<Cluster>, f64) {
    let (vals, vecs) = eigh(h);
    let scale = frobenius(h);
    let tol = tol_rel * scale.max(f64::MIN_POSITIVE);
    let mut out: Vec<Cluster> = Vec::new();
    let mut start = 0;
    for k in 0..=vals.len() {
        if k == vals.len() || (k > start && vals[k] - vals[k - 1] > tol) {
            if k > start {
                let members: Vec<CVec> = (start..k).map(|i| vecs.column(i).into_owned()).collect();
                let value = vals[start..k].iter().sum::<f64>() / (k - start) as f64;
                out.push(Cluster { value, vecs: members });
            }
            start = k;
        }
    }
    (vals, vecs, out, tol)
}

/// Orthonormal basis of a maximal subspace of span(q) on which the compressed
/// `jz` vanishes identically.
fn isotropic_basis(q: &[CVec], jz: &CMat, tol: f64) -> Vec<CVec> {
    let n = jz.nrows();
    let qm = columns(q, n);
    let m = qm.adjoint() * jz * &qm;
    let (mu, w) = eigh(&m);
    let lift = |k: usize| -> CVec { &qm * w.column(k) };
    let mut out = Vec::new();
    let mut neg = Vec::new();
    let mut pos = Vec::new();
    for (k, &x) in mu.iter().enumerate() {
        if x.abs() <= tol {
            out.push(lift(k));
        } else if x < 0.0 {
            neg.push(k);
        } else {
            pos.push(k);
        }
    }
    // pair the most negative with the most positive
    pos.reverse();
    for (&a, &b) in neg.iter().zip(pos.iter()) {
        let (na, pb) = (-mu[a], mu[b]);
        let v = lift(b) * re(na.sqrt()) + lift(a) * re(pb.sqrt());
        out.push(v / re((na + pb).sqrt()));
    }
    orthonormalize(&out, 1e-10)
}

/// Deterministic basis of span(q): successive compressions of the keys split
/// the subspace; each vector gets its largest amplitude real and positive.
pub fn canonical_basis(q: &[CVec], keys: &[CMat]) -> Vec<CVec> {
    if q.is_empty() {
        return Vec::new();
    }
    if q.len() == 1 || keys.is_empty() {
        return q.iter().map(fix_phase).collect();
    }
    let n = q[0].len();
    let qm = columns(q, n);
    let m = qm.adjoint() * &keys[0] * &qm;
    let (vals, w) = eigh(&m);
    let tol = 1e-9 * vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut out = Vec::new();
    let mut start = 0;
    for k in 0..=vals.len() {
        if k == vals.len() || (k > start && vals[k] - vals[k - 1] > tol) {
            let group: Vec<CVec> = (start..k).map(|i| &qm * w.column(i)).collect();
            out.extend(canonical_basis(&group, &keys[1..]));
            start = k;
        }
    }
    out
}

fn default_keys(jz: &CMat, extra: &[CMat]) -> Vec<CMat> {
    let n = jz.nrows();
    let mut keys = vec![jz.clone()];
    keys.extend(extra.iter().cloned());
    keys.push(hermitian_function(jz, |x| (std::f64::consts::PI * x).sin()));
    keys.push(hermitian_function(jz, |x| (std::f64::consts::PI * x).cos()));
    keys.push(diag_real(&(0..n).map(|i| i as f64).collect::<Vec<_>>()));
    keys.push(diag_real(&(0..n).map(|i| (i * i) as f64).collect::<Vec<_>>()));
    keys
}

fn residuals(states: &[CVec], h: &CMat, jz: &CMat, lambda: f64) -> (f64, f64) {
    let mut jr: f64 = 0.0;
    for a in states {
        for b in states {
            jr = jr.max(a.dotc(&(jz * b)).norm());
        }
    }
    let n = h.nrows();
    let q = columns(states, n);
    let hc = q.adjoint() * h * &q;
    let (vals, _) = eigh(&hc);
    let dr = vals.iter().fold(0.0f64, |a, v| a.max((v - lambda).abs()));
    (jr, dr)
}

fn build_report(
    h: &CMat,
    jz: &CMat,
    all: &[Cluster],
    chosen: usize,
    states: Vec<CVec>,
    opts: &SubspaceOptions,
    deg_tol: f64,
) -> SubspaceReport {
    let lambda = all[chosen].value;
    let (jr, dr) = residuals(&states, h, jz, lambda);
    let mut complement = Vec::new();
    for (k, c) in all.iter().enumerate() {
        if k == chosen {
            // remainder of the chosen cluster orthogonal to the picked states
            let mut basis = states.clone();
            basis.extend(c.vecs.iter().cloned());
            let ortho = orthonormalize(&basis, 1e-8);
            for v in ortho.into_iter().skip(states.len()) {
                complement.push(DressedLevel { energy: c.value, state: fix_phase(&v) });
            }
        } else {
            for v in &c.vecs {
                complement.push(DressedLevel { energy: c.value, state: fix_phase(v) });
            }
        }
    }
    complement.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    let gap = complement.iter().map(|l| (l.energy - lambda).abs()).fold(f64::INFINITY, f64::min);
    let gap = if gap.is_finite() { gap } else { 0.0 };
    let protected = jr <= opts.jz_tol && dr <= deg_tol.max(1e-12) && gap > deg_tol;
    SubspaceReport {
        dark_states: states,
        dark_eigenvalue: lambda,
        gap,
        jz_residual: jr,
        degeneracy_residual: dr,
        dressed_complement: complement,
        protected,
    }
}

/// Search every degenerate eigenspace of `h` for a `dim`-dimensional subspace
/// with vanishing compressed Jz. Among qualifying eigenspaces the one with the
/// largest gap wins, ties going to the eigenvalue closest to zero.
pub fn find_protected_subspace_with(h: &CMat, jz: &CMat, dim: usize, opts: &SubspaceOptions) -> Result<SubspaceReport> {
    if h.shape() != jz.shape() || !h.is_square() {
        return Err(Error::InvalidParameter {
            name: "h/jz".into(),
            reason: "Hamiltonian and Jz must be square and of equal size".into(),
        });
    }
    if crate::linalg::hermiticity_defect(h) > 1e-12 * max_abs(h).max(1.0) {
        return Err(Error::InvalidParameter { name: "h".into(), reason: "Hamiltonian is not Hermitian".into() });
    }
    let (_, _, all, deg_tol) = clusters(h, opts.degeneracy_rel_tol);
    let keys = default_keys(jz, &opts.extra_keys);
    let mut best: Option<SubspaceReport> = None;
    for (k, c) in all.iter().enumerate() {
        if c.vecs.len() < dim {
            continue;
        }
        let iso = isotropic_basis(&c.vecs, jz, opts.jz_tol);
        if iso.len() < dim {
            continue;
        }
        let states: Vec<CVec> = canonical_basis(&iso, &keys).into_iter().take(dim).collect();
        let rep = build_report(h, jz, &all, k, states, opts, deg_tol);
        let better = match &best {
            None => true,
            Some(b) => {
                let tie = (rep.gap - b.gap).abs() <= deg_tol;
                (!tie && rep.gap > b.gap) || (tie && rep.dark_eigenvalue.abs() < b.dark_eigenvalue.abs())
            }
        };
        if better {
            best = Some(rep);
        }
    }
    if let Some(b) = best {
        return Ok(b);
    }
    // structured failure: the largest eigenspace, closest to zero
    let pick = all
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.vecs.len().cmp(&b.vecs.len()).then(b.value.abs().total_cmp(&a.value.abs())))
        .map(|(k, _)| k);
    let best = pick.map(|k| {
        let states: Vec<CVec> = canonical_basis(&all[k].vecs, &keys).into_iter().take(dim).collect();
        Box::new(build_report(h, jz, &all, k, states, opts, deg_tol))
    });
    Err(Error::NoProtectedSubspace {
        dim,
        reason: "no degenerate eigenspace holds a Jz-dark subspace of that size".into(),
        best,
    })
}

pub fn find_protected_subspace(h: &CMat, jz: &CMat, dim: usize) -> Result<SubspaceReport> {
    find_protected_subspace_with(h, jz, dim, &SubspaceOptions::default())
}

/// Search restricted to the basis states in `indices`; the report's states
/// are embedded back into the full basis.
pub fn find_protected_subspace_in(h: &CMat, jz: &CMat, dim: usize, indices: &[usize]) -> Result<SubspaceReport> {
    let n = h.nrows();
    if indices.len() == n {
        return find_protected_subspace(h, jz, dim);
    }
    if indices.iter().any(|&i| i >= n) {
        return Err(Error::InvalidParameter { name: "indices".into(), reason: "out of range".into() });
    }
    let block = |m: &CMat| CMat::from_fn(indices.len(), indices.len(), |a, b| m[(indices[a], indices[b])]);
    let lift = |v: &CVec| {
        let mut out = CVec::zeros(n);
        for (a, &i) in indices.iter().enumerate() {
            out[i] = v[a];
        }
        out
    };
    let mut rep = find_protected_subspace(&block(h), &block(jz), dim)?;
    rep.dark_states = rep.dark_states.iter().map(lift).collect();
    for d in &mut rep.dressed_complement {
        d.state = lift(&d.state);
    }
    Ok(rep)
}

/// Full spectrum sorted by energy, phases fixed.
pub fn dressed_decomposition(h: &CMat) -> Vec<DressedLevel> {
    let (vals, vecs) = eigh(h);
    vals.iter()
        .enumerate()
        .map(|(k, &e)| DressedLevel { energy: e, state: fix_phase(&vecs.column(k).into_owned()) })
        .collect()
}

/// Bright state of each excited level: the normalized ground-state vector
/// H|e> projected off the excited levels. Levels without ground coupling give
/// no entry.
pub fn bright_states(h: &CMat, excited: &[usize]) -> Vec<CVec> {
    let mut out = Vec::new();
    for &e in excited {
        let mut v = h.column(e).into_owned();
        for &x in excited {
            v[x] = C64::default();
        }
        let nrm = v.norm();
        if nrm > 1e-14 * frobenius(h).max(f64::MIN_POSITIVE) {
            out.push(fix_phase(&(v / re(nrm))));
        }
    }
    out
}

/// For each reference state, the normalized projection onto the eigenspace
/// of `h` it overlaps most, phased so that <ref|state> is real positive.
/// Returns (state, eigenvalue) pairs.
pub fn follow_states(h: &CMat, references: &[CVec], degeneracy_rel_tol: f64) -> Vec<(CVec, f64)> {
    let (_, _, all, _) = clusters(h, degeneracy_rel_tol);
    references
        .iter()
        .map(|r| {
            let mut best = (CVec::zeros(r.len()), 0.0, -1.0);
            for c in &all {
                let mut p = CVec::zeros(r.len());
                for v in &c.vecs {
                    p += v * v.dotc(r);
                }
                let w = p.norm();
                if w > best.2 {
                    best = (p, c.value, w);
                }
            }
            let (mut p, e, w) = best;
            p /= re(w);
            let ov = p.dotc(r);
            if ov.norm() > 0.0 {
                p *= ov / ov.norm();
            }
            (p, e)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::LevelScheme;
    use crate::hamiltonian::{compact_construction, ideal_construction};

    fn s3() -> f64 {
        3f64.sqrt()
    }

    #[test]
    fn ideal_dark_pair() {
        let s = LevelScheme::d32_p12(1000.0, 0.0);
        let c = ideal_construction(&s, 0.1, 1.0).unwrap();
        let h = c.ip_hamiltonian().unwrap();
        let rep = find_protected_subspace(&h, &s.jz_total(), 2).unwrap();
        assert!(rep.protected);
        assert!(rep.dark_eigenvalue.abs() < 1e-12);
        assert!((rep.gap - 1.0).abs() < 1e-12);
        let d1 = &rep.dark_states[0];
        assert!((d1[1].re - s3() / 2.0).abs() < 1e-12);
        assert!((d1[3].re + 0.5).abs() < 1e-12);
        let d2 = &rep.dark_states[1];
        assert!((d2[2].re - s3() / 2.0).abs() < 1e-12);
        assert!((d2[0].re + 0.5).abs() < 1e-12);
        assert!(rep.jz_residual < 1e-13);
    }

    #[test]
    fn zero_hamiltonian_is_unprotected() {
        let s = LevelScheme::d32_p12(1000.0, 0.0);
        let h = CMat::zeros(6, 6);
        let rep = find_protected_subspace(&h, &s.jz_total(), 2).unwrap();
        assert_eq!(rep.gap, 0.0);
        assert!(!rep.protected);
        assert!(rep.jz_residual < 1e-12);
    }

    #[test]
    fn failure_carries_best_candidate() {
        let s = LevelScheme::d32_p12(1000.0, 0.0);
        let h = s.zeeman_hamiltonian(1.0);
        match find_protected_subspace(&h, &s.jz_total(), 2) {
            Err(Error::NoProtectedSubspace { best: Some(b), .. }) => assert!(b.jz_residual > 0.1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn compact_gap_and_dark_states() {
        let s = LevelScheme::d32_p12(1000.0, 0.0);
        let b = 0.6;
        let c = compact_construction(&s, b, 1.0).unwrap();
        let rep = find_protected_subspace(&c.ip_hamiltonian().unwrap(), &s.jz_total(), 2).unwrap();
        let delta = b / 15.0;
        let nu = (1.0 + delta * delta / 4.0).sqrt() - delta / 2.0;
        assert!((rep.gap - nu).abs() < 1e-12);
    }

    #[test]
    fn bright_state_of_single_lambda() {
        let s = LevelScheme::d32_p12(1000.0, 0.0);
        let h = ideal_construction(&s, 0.0, 1.0).unwrap().ip_hamiltonian().unwrap();
        let br = bright_states(&h, &[5]);
        let b1 = &br[0];
        assert!((b1[1].re - 0.5).abs() < 1e-12 && (b1[3].re - s3() / 2.0).abs() < 1e-12);
    }
}
