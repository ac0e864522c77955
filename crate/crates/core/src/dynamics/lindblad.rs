//! Lindblad master equation.

use crate::error::{Error, Result};
use crate::hamiltonian::TimeDependentHamiltonian;
use crate::linalg::{eigh, hermiticity_defect, unvec, vec_of, CMat, C64};

use super::propagate::{integrate, RkOptions};
use super::SimulationTrace;

/// Check that rho is Hermitian, unit trace and positive semidefinite.
pub fn validate_density_matrix(rho: &CMat) -> Result<()> {
    if !rho.is_square() {
        return Err(Error::NonPhysicalState("density matrix not square".into()));
    }
    let herm = hermiticity_defect(rho);
    if herm > 1e-10 {
        return Err(Error::NonPhysicalState(format!("not Hermitian (defect {herm:e})")));
    }
    let tr = rho.trace().re;
    if (tr - 1.0).abs() > 1e-9 {
        return Err(Error::NonPhysicalState(format!("trace {tr}")));
    }
    let (vals, _) = eigh(rho);
    if vals[0] < -1e-10 {
        return Err(Error::NonPhysicalState(format!("negative eigenvalue {:e}", vals[0])));
    }
    Ok(())
}

/// Column-stacked Liouvillian of a static Hamiltonian with collapse operators.
pub fn liouvillian(h: &CMat, collapse: &[CMat]) -> CMat {
    let n = h.nrows();
    let id = CMat::identity(n, n);
    let mi = C64::new(0.0, -1.0);
    let mut l = (id.kronecker(h) - h.transpose().kronecker(&id)) * mi;
    for c in collapse {
        let cdc = c.adjoint() * c;
        l += c.conjugate().kronecker(c);
        l -= id.kronecker(&cdc) * C64::new(0.5, 0.0);
        l -= cdc.transpose().kronecker(&id) * C64::new(0.5, 0.0);
    }
    l
}

fn dissipator_into(rho: &CMat, collapse: &[(CMat, CMat)], out: &mut CMat) {
    for (c, cdc) in collapse {
        *out += c * rho * c.adjoint();
        *out -= (cdc * rho + rho * cdc) * C64::new(0.5, 0.0);
    }
}

/// Evolve rho under H(t) and the given collapse operators.
pub fn evolve_lindblad(
    h: &TimeDependentHamiltonian,
    rho0: &CMat,
    collapse: &[CMat],
    times: &[f64],
    opts: &RkOptions,
) -> Result<SimulationTrace> {
    validate_density_matrix(rho0)?;
    let n = h.dim();
    if rho0.nrows() != n || collapse.iter().any(|c| c.shape() != (n, n)) {
        return Err(Error::InvalidParameter { name: "collapse".into(), reason: "dimension mismatch".into() });
    }
    let rhos = if h.is_static() {
        let l = liouvillian(&h.static_part, collapse);
        let mut v = vec_of(rho0);
        let mut out = vec![rho0.clone()];
        let mut cache: Option<(f64, CMat)> = None;
        for w in times.windows(2) {
            let dt = w[1] - w[0];
            let prop = match &cache {
                Some((d, p)) if (d - dt).abs() <= 1e-14 * dt.abs().max(1.0) => p.clone(),
                _ => {
                    let p = (&l * C64::new(dt, 0.0)).exp();
                    cache = Some((dt, p.clone()));
                    p
                }
            };
            v = prop * v;
            let r = unvec(&v, n);
            out.push((&r + r.adjoint()) * C64::new(0.5, 0.0));
        }
        out
    } else {
        let ops: Vec<(CMat, CMat)> = collapse.iter().map(|c| (c.clone(), c.adjoint() * c)).collect();
        let f = |t: f64, rho: &CMat, out: &mut CMat| {
            let ht = h.at(t);
            let comm = &ht * rho - rho * &ht;
            out.copy_from(&(comm * C64::new(0.0, -1.0)));
            dissipator_into(rho, &ops, out);
        };
        let mut o = opts.clone();
        if o.max_step.is_none() {
            let w = h.harmonics.iter().map(|t| t.frequency.abs()).fold(0.0, f64::max);
            if w > 0.0 {
                o.max_step = Some(std::f64::consts::PI / (2.0 * w));
            }
        }
        integrate(f, rho0, times, &o)?
    };
    let mut min_eig = f64::INFINITY;
    for r in &rhos {
        let (vals, _) = eigh(r);
        min_eig = min_eig.min(vals[0]);
    }
    if min_eig < -1e-6 {
        return Err(Error::NonPhysicalState(format!("density matrix lost positivity (eigenvalue {min_eig:e})")));
    }
    let mut tr = SimulationTrace::from_density(times.to_vec(), rhos);
    tr.diagnostics.min_eigenvalue = min_eig;
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Frame;
    use crate::linalg::re;

    #[test]
    fn spontaneous_decay_is_exponential() {
        let gamma: f64 = 0.7;
        let mut l = CMat::zeros(2, 2);
        l[(0, 1)] = re(gamma.sqrt());
        let h = TimeDependentHamiltonian::new_static(CMat::zeros(2, 2), Frame::Lab);
        let mut rho = CMat::zeros(2, 2);
        rho[(1, 1)] = re(1.0);
        let times = crate::linalg::linspace(0.0, 5.0, 11);
        let tr = evolve_lindblad(&h, &rho, &[l], &times, &RkOptions::default()).unwrap();
        for (t, p) in times.iter().zip(&tr.populations) {
            assert!((p[1] - (-gamma * t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn static_and_integrated_paths_agree() {
        let mut h = CMat::zeros(2, 2);
        h[(0, 1)] = re(0.5);
        h[(1, 0)] = re(0.5);
        let mut l = CMat::zeros(2, 2);
        l[(0, 1)] = re(0.3);
        let mut rho = CMat::zeros(2, 2);
        rho[(0, 0)] = re(1.0);
        let times = crate::linalg::linspace(0.0, 4.0, 5);
        let hs = TimeDependentHamiltonian::new_static(h.clone(), Frame::Lab);
        let a = evolve_lindblad(&hs, &rho, &[l.clone()], &times, &RkOptions::default()).unwrap();
        let ops = vec![(l.clone(), l.adjoint() * &l)];
        let f = |_t: f64, r: &CMat, out: &mut CMat| {
            out.copy_from(&((&h * r - r * &h) * C64::new(0.0, -1.0)));
            dissipator_into(r, &ops, out);
        };
        let b = integrate(f, &rho, &times, &RkOptions::default()).unwrap();
        for (x, y) in a.rhos.iter().zip(&b) {
            assert!(crate::linalg::max_abs(&(x - y)) < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_density_matrix() {
        let mut rho = CMat::zeros(2, 2);
        rho[(0, 0)] = re(1.5);
        rho[(1, 1)] = re(-0.5);
        assert!(validate_density_matrix(&rho).is_err());
    }
}
