//! Clebsch-Gordan coefficients via the Racah closed form in exact arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::angular::HalfInt;
use crate::error::{Error, Result};

/// A coefficient represented exactly as sign * sqrt(square).
#[derive(Clone, Debug, PartialEq)]
pub struct ExactCoefficient {
    pub sign: i8,
    pub square: BigRational,
}

impl ExactCoefficient {
    pub fn zero() -> Self {
        ExactCoefficient { sign: 0, square: BigRational::zero() }
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    pub fn to_f64(&self) -> f64 {
        if self.sign == 0 {
            return 0.0;
        }
        self.sign as f64 * self.square.to_f64().unwrap_or(f64::NAN).sqrt()
    }

    /// Exact value of (self / other)^2, with the sign of the ratio.
    pub fn ratio_squared(&self, other: &ExactCoefficient) -> Option<(i8, BigRational)> {
        if other.is_zero() {
            return None;
        }
        Some((self.sign * other.sign, &self.square / &other.square))
    }
}

fn fact(n: i64) -> BigInt {
    let mut acc = BigInt::one();
    for k in 2..=n {
        acc *= k;
    }
    acc
}

fn check(j: HalfInt, m: HalfInt, what: &str) -> Result<()> {
    if j.0 < 0 {
        return Err(Error::InvalidQuantumNumber(format!("{what}: j = {j} < 0")));
    }
    if (j.0 - m.0).rem_euclid(2) != 0 {
        return Err(Error::InvalidQuantumNumber(format!("{what}: m = {m} is not of the same integrality as j = {j}")));
    }
    if m.0.abs() > j.0 {
        return Err(Error::InvalidQuantumNumber(format!("{what}: |m| = |{m}| exceeds j = {j}")));
    }
    Ok(())
}

/// Exact <j1 m1; j2 m2 | J M>.
pub fn clebsch_gordan_exact(
    j1: HalfInt,
    m1: HalfInt,
    j2: HalfInt,
    m2: HalfInt,
    jj: HalfInt,
    mm: HalfInt,
) -> Result<ExactCoefficient> {
    check(j1, m1, "first")?;
    check(j2, m2, "second")?;
    check(jj, mm, "coupled")?;
    if m1.0 + m2.0 != mm.0 {
        return Ok(ExactCoefficient::zero());
    }
    if jj.0 > j1.0 + j2.0 || jj.0 < (j1.0 - j2.0).abs() || (j1.0 + j2.0 + jj.0) % 2 != 0 {
        return Ok(ExactCoefficient::zero());
    }
    // all combinations below are integers once the triangle rule holds
    let h = |twice: i32| -> i64 { (twice / 2) as i64 };
    let (a, b, cc) = (j1.0, j2.0, jj.0);
    let (ma, mb, mc) = (m1.0, m2.0, mm.0);
    let pre = BigRational::new(
        BigInt::from(cc + 1) * fact(h(cc + a - b)) * fact(h(cc - a + b)) * fact(h(a + b - cc)),
        fact(h(a + b + cc) + 1),
    );
    let proj = BigRational::from_integer(
        fact(h(cc + mc)) * fact(h(cc - mc)) * fact(h(a - ma)) * fact(h(a + ma)) * fact(h(b - mb)) * fact(h(b + mb)),
    );
    let mut sum = BigRational::zero();
    let kmin = 0.max(h(b - cc - ma)).max(h(a + mb - cc));
    let kmax = h(a + b - cc).min(h(a - ma)).min(h(b + mb));
    for k in kmin..=kmax {
        let den = fact(k)
            * fact(h(a + b - cc) - k)
            * fact(h(a - ma) - k)
            * fact(h(b + mb) - k)
            * fact(h(cc - b + ma) + k)
            * fact(h(cc - a - mb) + k);
        let term = BigRational::new(BigInt::one(), den);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if sum.is_zero() {
        return Ok(ExactCoefficient::zero());
    }
    let sign = if sum.is_negative() { -1 } else { 1 };
    let square = &sum * &sum * pre * proj;
    Ok(ExactCoefficient { sign, square })
}

/// <j1 m1; j2 m2 | J M> as a double.
pub fn clebsch_gordan(j1: HalfInt, m1: HalfInt, j2: HalfInt, m2: HalfInt, jj: HalfInt, mm: HalfInt) -> Result<f64> {
    Ok(clebsch_gordan_exact(j1, m1, j2, m2, jj, mm)?.to_f64())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hi(x: f64) -> HalfInt {
        HalfInt::from_f64(x).unwrap()
    }

    /// Brute-force floating point evaluation of the Racah sum, sharing no
    /// code with the exact path.
    fn cg_float(j1: f64, m1: f64, j2: f64, m2: f64, j: f64, m: f64) -> f64 {
        if (m1 + m2 - m).abs() > 1e-9 {
            return 0.0;
        }
        let f = |x: f64| -> f64 { (1..=(x.round() as i64)).map(|k| k as f64).product() };
        let pre = ((2.0 * j + 1.0) * f(j + j1 - j2) * f(j - j1 + j2) * f(j1 + j2 - j) / f(j1 + j2 + j + 1.0)).sqrt();
        let proj = (f(j + m) * f(j - m) * f(j1 - m1) * f(j1 + m1) * f(j2 - m2) * f(j2 + m2)).sqrt();
        let mut s = 0.0;
        for k in 0..40 {
            let k = k as f64;
            let args = [k, j1 + j2 - j - k, j1 - m1 - k, j2 + m2 - k, j - j2 + m1 + k, j - j1 - m2 + k];
            if args.iter().any(|&a| a < -1e-9) {
                continue;
            }
            let d: f64 = args.iter().map(|&a| f(a)).product();
            s += if (k as i64) % 2 == 0 { 1.0 } else { -1.0 } / d;
        }
        pre * proj * s
    }

    #[test]
    fn selection_rule_gives_zero() {
        let v = clebsch_gordan(hi(1.5), hi(0.5), hi(1.0), hi(1.0), hi(0.5), hi(0.5)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn invalid_projection_rejected() {
        assert!(clebsch_gordan(hi(1.5), hi(1.0), hi(1.0), hi(0.0), hi(1.5), hi(1.0)).is_err());
        assert!(clebsch_gordan(hi(0.5), hi(1.5), hi(1.0), hi(0.0), hi(0.5), hi(1.5)).is_err());
    }

    #[test]
    fn table_three_halves_times_one_matches_oracle() {
        let j1 = 1.5;
        let j2 = 1.0;
        for jt in [0.5, 1.5, 2.5] {
            for m1 in hi(j1).projections() {
                for m2 in hi(j2).projections() {
                    for m in hi(jt).projections() {
                        let a = clebsch_gordan(hi(j1), m1, hi(j2), m2, hi(jt), m).unwrap();
                        let b = cg_float(j1, m1.value(), j2, m2.value(), jt, m.value());
                        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn orthonormality_sums() {
        for (j1, j2) in [(1.5, 1.0), (2.5, 1.0), (1.0, 1.0), (2.5, 2.0)] {
            let mut jt = f64::abs(j1 - j2);
            while jt <= j1 + j2 + 1e-9 {
                for m in hi(jt).projections() {
                    let mut s = 0.0;
                    for m1 in hi(j1).projections() {
                        for m2 in hi(j2).projections() {
                            s += clebsch_gordan(hi(j1), m1, hi(j2), m2, hi(jt), m).unwrap().powi(2);
                        }
                    }
                    assert!((s - 1.0).abs() < 1e-13);
                }
                jt += 1.0;
            }
        }
    }

    #[test]
    fn exact_ratio_is_three() {
        // <3/2 3/2; 1 -1 | 1/2 1/2> over <3/2 -1/2; 1 1 | 1/2 1/2>
        let a = clebsch_gordan_exact(hi(1.5), hi(1.5), hi(1.0), hi(-1.0), hi(0.5), hi(0.5)).unwrap();
        let b = clebsch_gordan_exact(hi(1.5), hi(-0.5), hi(1.0), hi(1.0), hi(0.5), hi(0.5)).unwrap();
        let (sign, r2) = a.ratio_squared(&b).unwrap();
        assert_eq!(sign, 1);
        assert_eq!(r2, BigRational::from_integer(BigInt::from(3)));
    }
}
