//! Half-integer quantum numbers and spin matrices.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, re, CMat};

/// A half-integer stored as twice its value, so 3/2 is `HalfInt(3)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HalfInt(pub i32);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);

    pub fn from_twice(twice: i32) -> Self {
        HalfInt(twice)
    }

    pub fn integer(n: i32) -> Self {
        HalfInt(2 * n)
    }

    /// Parse from a float that must be an exact multiple of 1/2.
    pub fn from_f64(x: f64) -> Result<Self> {
        let t = 2.0 * x;
        if (t - t.round()).abs() > 1e-9 || !t.is_finite() {
            return Err(Error::InvalidQuantumNumber(format!("{x} is not a multiple of 1/2")));
        }
        Ok(HalfInt(t.round() as i32))
    }

    pub fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    /// Allowed projections -j, -j+1, ..., j in ascending order.
    pub fn projections(self) -> Vec<HalfInt> {
        (0..=self.0).map(|k| HalfInt(-self.0 + 2 * k)).collect()
    }

    pub fn multiplicity(self) -> usize {
        (self.0 + 1) as usize
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, o: HalfInt) -> HalfInt {
        HalfInt(self.0 + o.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, o: HalfInt) -> HalfInt {
        HalfInt(self.0 - o.0)
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

/// Spin matrices of one angular momentum j in the ascending-m basis.
#[derive(Clone, Debug)]
pub struct AngularMomentumOps {
    pub j: HalfInt,
    pub jz: CMat,
    pub jx: CMat,
    pub jy: CMat,
    pub j_plus: CMat,
    pub j_minus: CMat,
}

impl AngularMomentumOps {
    pub fn dim(&self) -> usize {
        self.j.multiplicity()
    }

    /// J² = j(j+1) on the whole multiplet.
    pub fn casimir(&self) -> CMat {
        &self.jx * &self.jx + &self.jy * &self.jy + &self.jz * &self.jz
    }
}

pub fn angular_momentum_ops(j: HalfInt) -> Result<AngularMomentumOps> {
    if j.0 < 0 {
        return Err(Error::InvalidQuantumNumber(format!("j = {j} is negative")));
    }
    let n = j.multiplicity();
    let jv = j.value();
    let ms: Vec<f64> = j.projections().iter().map(|m| m.value()).collect();
    let mut jz = CMat::zeros(n, n);
    let mut jp = CMat::zeros(n, n);
    for k in 0..n {
        jz[(k, k)] = re(ms[k]);
        if k + 1 < n {
            let m = ms[k];
            jp[(k + 1, k)] = re((jv * (jv + 1.0) - m * (m + 1.0)).sqrt());
        }
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm) * re(0.5);
    let jy = (&jp - &jm) * c(0.0, -0.5);
    Ok(AngularMomentumOps { j, jz, jx, jy, j_plus: jp, j_minus: jm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator, max_abs, I};

    #[test]
    fn spin_half_is_pauli_over_two() {
        let ops = angular_momentum_ops(HalfInt(1)).unwrap();
        assert_eq!(ops.jz[(0, 0)], re(-0.5));
        assert_eq!(ops.jz[(1, 1)], re(0.5));
        assert!((ops.jx[(0, 1)] - re(0.5)).norm() < 1e-15);
    }

    #[test]
    fn raising_element_for_three_halves() {
        let ops = angular_momentum_ops(HalfInt(3)).unwrap();
        // <1/2| J+ |-1/2>
        let oracle = (1.5f64 * 2.5 - (-0.5) * 0.5).sqrt();
        assert!((ops.j_plus[(2, 1)].re - 2.0).abs() < 1e-14);
        assert!((ops.j_plus[(2, 1)].re - oracle).abs() < 1e-14);
    }

    #[test]
    fn su2_algebra_holds() {
        for tw in 0..8 {
            let ops = angular_momentum_ops(HalfInt(tw)).unwrap();
            let r = commutator(&ops.jx, &ops.jy) - &ops.jz * I;
            assert!(max_abs(&r) < 1e-14, "j = {tw}/2");
            let jj = tw as f64 / 2.0;
            let cas = ops.casimir() - CMat::identity(ops.dim(), ops.dim()) * re(jj * (jj + 1.0));
            assert!(max_abs(&cas) < 1e-13);
        }
    }

    #[test]
    fn half_int_parsing() {
        assert_eq!(HalfInt::from_f64(1.5).unwrap(), HalfInt(3));
        assert!(HalfInt::from_f64(0.3).is_err());
        assert_eq!(HalfInt(3).to_string(), "3/2");
        assert_eq!(HalfInt(4).to_string(), "2");
    }
}
