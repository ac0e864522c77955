//! Small dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn basis_vector(n: usize, k: usize) -> CVec {
    let mut v = CVec::zeros(n);
    v[k] = re(1.0);
    v
}

pub fn diag_real(d: &[f64]) -> CMat {
    let n = d.len();
    let mut m = zeros(n);
    for (i, &x) in d.iter().enumerate() {
        m[(i, i)] = re(x);
    }
    m
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Largest absolute entry.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Spectral-norm upper bound that is cheap to evaluate (Frobenius).
pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    m.is_square() && hermiticity_defect(m) <= tol
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending.
/// Columns of the returned matrix are the matching orthonormal eigenvectors.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), zeros(0));
    }
    // symmetrize so tiny asymmetries from accumulation do not leak in
    let h = (m + m.adjoint()) * re(0.5);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = zeros(n);
    for (j, &k) in order.iter().enumerate() {
        vecs.set_column(j, &eig.eigenvectors.column(k));
    }
    (values, vecs)
}

/// exp(-i H t) for Hermitian H.
pub fn expm_hermitian(h: &CMat, t: f64) -> CMat {
    let (vals, vecs) = eigh(h);
    propagator_from_eigen(&vals, &vecs, t)
}

pub fn propagator_from_eigen(vals: &[f64], vecs: &CMat, t: f64) -> CMat {
    let n = vals.len();
    let mut scaled = vecs.clone();
    for j in 0..n {
        let ph = C64::from_polar(1.0, -vals[j] * t);
        for i in 0..n {
            scaled[(i, j)] *= ph;
        }
    }
    scaled * vecs.adjoint()
}

/// Apply f to the spectrum of a Hermitian positive semidefinite matrix.
pub fn hermitian_function(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(m);
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let s = f(v);
        for i in 0..m.nrows() {
            scaled[(i, j)] *= s;
        }
    }
    scaled * vecs.adjoint()
}

/// Unitary factor W of the polar decomposition M = W P.
pub fn polar_unitary(m: &CMat) -> CMat {
    let mhm = m.adjoint() * m;
    let inv_sqrt = hermitian_function(&mhm, |x| if x > 1e-300 { 1.0 / x.sqrt() } else { 0.0 });
    m * inv_sqrt
}

/// Hermitian generator H with exp(-i H t) = U for a 2x2 unitary U, using the
/// branch with the smallest generator norm.
pub fn log_unitary_2x2(u: &CMat, t: f64) -> CMat {
    assert_eq!(u.shape(), (2, 2));
    let det = u[(0, 0)] * u[(1, 1)] - u[(0, 1)] * u[(1, 0)];
    let alpha0 = 0.5 * det.arg();
    let mut best: Option<(f64, CMat)> = None;
    for k in [-1.0, 0.0, 1.0] {
        let alpha = alpha0 + k * std::f64::consts::PI;
        // V = e^{-i alpha} U lies in SU(2): V = cos(th) - i sin(th) n.sigma
        let v = u * C64::from_polar(1.0, -alpha);
        let cos_th = (0.5 * (v[(0, 0)] + v[(1, 1)]).re).clamp(-1.0, 1.0);
        let th = cos_th.acos();
        let s = th.sin();
        let (nx, ny, nz) = if s.abs() < 1e-300 {
            (0.0, 0.0, 0.0)
        } else {
            // v00 = cos - i s nz, v01 = -i s (nx - i ny)
            let nz = -(v[(0, 0)] - v[(1, 1)]).im / (2.0 * s);
            let w = v[(0, 1)] * I / s; // = nx - i ny
            let w2 = v[(1, 0)] * I / s; // = nx + i ny
            let nx = 0.5 * (w.re + w2.re);
            let ny = 0.5 * (w2.im - w.im);
            (nx, ny, nz)
        };
        // exp(-iHt) = e^{i alpha} (cos th - i sin th n.sigma)
        // => H t = -alpha + th n.sigma
        let cost = alpha * alpha + th * th;
        let mut h = zeros(2);
        h[(0, 0)] = re(-alpha + th * nz);
        h[(1, 1)] = re(-alpha - th * nz);
        h[(0, 1)] = c(th * nx, -th * ny);
        h[(1, 0)] = c(th * nx, th * ny);
        let h = h / re(t);
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, h));
        }
    }
    best.unwrap().1
}

/// Column-stacking vectorization: vec(A X B) = (B^T kron A) vec(X).
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn unvec(v: &CVec, n: usize) -> CMat {
    CMat::from_column_slice(n, n, v.as_slice())
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Gram-Schmidt orthonormalization of the given columns (drops near-dependent ones).
pub fn orthonormalize(cols: &[CVec], tol: f64) -> Vec<CVec> {
    let mut out: Vec<CVec> = Vec::new();
    for v in cols {
        let mut w = v.clone();
        for _ in 0..2 {
            for u in &out {
                let p = u.dotc(&w);
                w -= u * p;
            }
        }
        let nrm = w.norm();
        if nrm > tol {
            out.push(w / re(nrm));
        }
    }
    out
}

/// Multiply so the entry of largest modulus becomes real and positive.
pub fn fix_phase(v: &CVec) -> CVec {
    let mut k = 0;
    let mut best = -1.0;
    for (i, z) in v.iter().enumerate() {
        // small slack keeps the choice stable under rounding
        if z.norm() > best * (1.0 + 1e-9) {
            best = z.norm();
            k = i;
        }
    }
    if best <= 0.0 {
        return v.clone();
    }
    let ph = v[k].conj() / v[k].norm();
    v * ph
}

/// Matrix with the given vectors as columns.
pub fn columns(cols: &[CVec], n: usize) -> CMat {
    let mut m = CMat::zeros(n, cols.len());
    for (j, v) in cols.iter().enumerate() {
        m.set_column(j, v);
    }
    m
}

/// Least-squares slope of log|y| against log|x|.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.abs().ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    linear_fit(&lx, &ly).0
}

/// Ordinary least squares y = a x + b, returns (a, b).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let a = sxy / sxx;
    (a, my - a * mx)
}

pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> CMat {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let mut m = zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let z = if i == j { re(next()) } else { c(next(), next()) };
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    #[test]
    fn eigh_reconstructs() {
        let h = random_hermitian(6, 3);
        let (vals, vecs) = eigh(&h);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let d = diag_real(&vals);
        let back = &vecs * d * vecs.adjoint();
        assert!(max_abs(&(back - &h)) < 1e-12);
    }

    #[test]
    fn expm_matches_pade() {
        let h = random_hermitian(5, 9);
        let a = expm_hermitian(&h, 0.7);
        let b = (h * c(0.0, -0.7)).exp();
        assert!(max_abs(&(a - b)) < 1e-12);
    }

    #[test]
    fn log_unitary_round_trip() {
        let h = random_hermitian(2, 17) * re(0.8);
        let u = expm_hermitian(&h, 1.3);
        let g = log_unitary_2x2(&u, 1.3);
        assert!(max_abs(&(g - h)) < 1e-10);
    }

    #[test]
    fn polar_of_scaled_unitary() {
        let u = expm_hermitian(&random_hermitian(3, 5), 1.0);
        let w = polar_unitary(&(&u * re(0.9)));
        assert!(max_abs(&(w - u)) < 1e-12);
    }

    #[test]
    fn fix_phase_makes_largest_real() {
        let v = CVec::from_vec(vec![c(0.1, 0.2), c(0.0, -0.9)]);
        let w = fix_phase(&v);
        assert!(w[1].im.abs() < 1e-15 && w[1].re > 0.0);
    }
}
